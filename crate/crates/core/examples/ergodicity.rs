//! Density-one sets, Cesàro averages of atomic Fourier transforms, weak
//! mixing along a filtered sequence and empirical time averages.

use mixfield::ergodiag::{
    cesaro_atom_bound, cesaro_average, cells_for_frequency, density_of_set, ergodic_time_average, filter_sequence,
    fourier_of_atoms, time_average_grid, weak_mixing_check, DensityOneSet,
};
use mixfield::field::{ConstantField, IdField};
use mixfield::idlaw::{Atom, CharTriplet};
use mixfield::kernel::{Kernel, Shape};
use mixfield::levybasis::GeneratingQuadruple;
use mixfield::mmafield::MmaModel;
use mixfield::realization::SimulationSpec;
use mixfield::sequence::SequenceSpec;
use nalgebra::DMatrix;
use num_complex::Complex64;

fn main() -> mixfield::Result<()> {
    let set = DensityOneSet::exemplar(1);
    let dens = density_of_set(&set, &[10.0, 100.0, 1000.0])?;
    for (t, v, closed) in &dens.values {
        println!("density over (-{t}, {t}]: {v:.6} (closed form {closed:?})");
    }

    let atoms = vec![Atom::new(vec![0.0], 0.3), Atom::new(vec![0.8], 1.0), Atom::new(vec![-2.5], 0.5)];
    for t in [10.0, 100.0] {
        let avg = cesaro_average(fourier_of_atoms(&atoms), t, 1, cells_for_frequency(t, 2.5))?;
        println!(
            "T = {t}: |Cesaro average - mass at 0| = {:.3e} <= bound {:.3e}",
            (avg.value - 0.3).norm(),
            cesaro_atom_bound(&atoms, t)
        );
    }

    let ou = MmaModel::new(
        Kernel::scalar(Shape::Exponential { rates: vec![1.0] }, 1)?,
        GeneratingQuadruple::homogeneous(CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0))?, 1)?,
    )?;
    let seq = filter_sequence(&SequenceSpec::axis(1, 0.0, 1.3, 20)?, &set)?;
    let wm = weak_mixing_check(&ou, &set, &seq)?;
    println!("weak mixing along {} filtered points: {}", seq.count, wm.verdict);

    let g = |x: &[f64]| Complex64::new(x[0].cos(), x[0].sin());
    let constant = ConstantField::new(CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 1.0)])?, 1)?;
    for (name, field) in [("ou", &ou as &dyn IdField), ("constant", &constant as &dyn IdField)] {
        let grid = time_average_grid(50.0, 1, field.decay_length());
        let long = field.simulate(&grid, &SimulationSpec::new(8, 0.05, 11))?;
        let ensemble = field.simulate(&[vec![0.0]], &SimulationSpec::new(2000, 0.05, 12))?;
        let rep = ergodic_time_average(&long, &ensemble, &g, field.decay_length())?;
        println!("{name}: gap {:.4}, stderr {:.4}, verdict {:?}", rep.gap, rep.stderr, rep.verdict);
    }
    Ok(())
}
