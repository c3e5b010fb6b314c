//! Subordinated Lévy basis: Brownian sheet run on a Poisson meta-time,
//! fed into an OU moving average.

use mixfield::field::IdField;
use mixfield::idlaw::CharTriplet;
use mixfield::kernel::{Kernel, Shape};
use mixfield::mixdiag::combined_criterion;
use mixfield::realization::SimulationSpec;
use mixfield::sequence::SequenceSpec;
use mixfield::subord::{subordinated_cell_cumulant, subordinated_mma, subordinated_triplet, SheetSpec};
use nalgebra::DMatrix;
use num_complex::Complex64;

fn main() -> mixfield::Result<()> {
    let x = SheetSpec::new(CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0))?, 1)?;
    let t = SheetSpec::poisson(1.0, 1.0, 1)?;

    let unit = subordinated_triplet(x.base(), t.base())?;
    for theta in [0.5, 1.0, 2.0] {
        let direct = unit.cumulant(&[theta])?;
        let composed = subordinated_cell_cumulant(&x, &t, 1.0, &[theta])?;
        // Poisson meta-time: κ_T(ψ_X(θ)) = e^{−θ²/2} − 1
        let closed = Complex64::new((-0.5 * theta * theta).exp() - 1.0, 0.0);
        println!("theta {theta}: triplet {direct:.10}, composed {composed:.10}, closed form {closed:.10}");
    }

    let model = subordinated_mma(Kernel::scalar(Shape::Exponential { rates: vec![1.0] }, 1)?, &x, &t, vec![1.0])?;
    let trace = combined_criterion(&model, &SequenceSpec::axis(1, 0.0, 1.5, 21)?)?;
    println!("combined criterion: {:.3e} -> {:.3e}, {}", trace.decay.initial, trace.last_value(), trace.verdict);

    let real = model.simulate(&[vec![0.0]], &SimulationSpec::new(5000, 0.05, 99))?;
    let marginal = model.marginal_triplet()?;
    let theta = 1.0;
    let ecf: Complex64 = (0..real.replicates())
        .map(|r| Complex64::new(0.0, theta * real.value(r, 0)[0]).exp())
        .sum::<Complex64>()
        / real.replicates() as f64;
    println!("ECF {ecf:.4} vs charfn {:.4}", marginal.charfn(&[theta])?);
    Ok(())
}
