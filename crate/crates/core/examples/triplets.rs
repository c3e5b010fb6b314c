//! Characteristic triplets: cumulants, convolution, linear images and the
//! 2πZ atom scan with an admissible rescaling.

use mixfield::idlaw::{find_admissible_scale, scan_atoms_2pi, Atom, CharTriplet, GammaLevy, LevyMeasure};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use std::sync::Arc;

fn main() -> mixfield::Result<()> {
    let gauss = CharTriplet::gaussian(DMatrix::from_element(1, 1, 2.0))?;
    let poisson = CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 0.5)])?;
    let gamma = CharTriplet::scalar(0.0, 0.0, LevyMeasure::Parametric(Arc::new(GammaLevy::new(2.0, 1.0)?)))?;

    for (name, z) in [("gaussian", &gauss), ("poisson", &poisson), ("gamma", &gamma)] {
        let psi = z.cumulant(&[0.7])?;
        println!("{name:<8} psi(0.7) = {psi:.6}  phi(0.7) = {:.6}", z.charfn(&[0.7])?);
    }

    let sum = gauss.convolve(&poisson)?;
    let lhs = sum.cumulant(&[0.3])?;
    let rhs = gauss.cumulant(&[0.3])? + poisson.cumulant(&[0.3])?;
    println!("convolution additivity |diff| = {:.2e}", (lhs - rhs).norm());

    let map = DMatrix::from_row_slice(2, 1, &[1.0, -2.0]);
    let image = poisson.linear_map(&map)?;
    println!("image of the poisson law on R^2: gamma = {:?}", image.gamma().as_slice());

    let lattice = LevyMeasure::atomic(2, vec![Atom::new(vec![2.0 * PI, 1.0], 1.0), Atom::new(vec![0.5, 0.7], 2.0)])?;
    let scan = scan_atoms_2pi(&lattice);
    println!("atoms on 2piZ lines before scaling: {}", scan.offending.len());
    let a = find_admissible_scale(&lattice, 7)?;
    let scaled = CharTriplet::new(DVector::zeros(2), DMatrix::zeros(2, 2), lattice)?
        .linear_map(&DMatrix::from_diagonal(&DVector::from_column_slice(&a)))?;
    println!(
        "scale {:?} leaves {} offending atoms",
        a,
        scan_atoms_2pi(scaled.levy()).offending.len()
    );
    Ok(())
}
