//! Gaussian OU moving average: integrability, exact marginal and
//! covariance, and a Monte Carlo check of a simulation.

use mixfield::field::IdField;
use mixfield::idlaw::CharTriplet;
use mixfield::kernel::{Kernel, Shape};
use mixfield::levybasis::GeneratingQuadruple;
use mixfield::mmafield::MmaModel;
use mixfield::realization::SimulationSpec;
use nalgebra::DMatrix;

fn main() -> mixfield::Result<()> {
    let lambda = 1.0;
    let kernel = Kernel::scalar(Shape::Exponential { rates: vec![lambda] }, 1)?;
    let quad = GeneratingQuadruple::homogeneous(CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0))?, 1)?;
    let model = MmaModel::new(kernel, quad)?;

    let report = model.check_integrability()?;
    println!("integrable: {}", report.integrable());
    let marginal = model.marginal_triplet()?;
    println!("Var X_0 = {:.10} (closed form {:.10})", marginal.sigma()[(0, 0)], 0.5 / lambda);
    for t in [0.5, 1.0, 2.0, 4.0] {
        let c = model.gauss_cross(&[t])?.value[(0, 0)];
        println!("Cov(X_0, X_{t}) = {c:.10}  closed form {:.10}", (-lambda * t).exp() / (2.0 * lambda));
    }

    let points = vec![vec![0.0], vec![1.0]];
    let spec = SimulationSpec::new(5000, 0.02, 2024);
    let real = model.simulate(&points, &spec)?;
    let m = real.replicates() as f64;
    let (mut v0, mut c01) = (0.0, 0.0);
    for r in 0..real.replicates() {
        let a = real.value(r, 0)[0];
        let b = real.value(r, 1)[0];
        v0 += a * a;
        c01 += a * b;
    }
    println!("simulated Var X_0 = {:.4}, Cov(X_0, X_1) = {:.4}", v0 / m, c01 / m);
    Ok(())
}
