//! Mixing criteria along a diverging sequence for a compound Poisson OU
//! field, with the constant field as a negative control.

use mixfield::field::ConstantField;
use mixfield::idlaw::{Atom, CharTriplet};
use mixfield::kernel::{Kernel, Shape};
use mixfield::levybasis::GeneratingQuadruple;
use mixfield::mixdiag::{
    codifference_analytic, codifference_oracle, combined_criterion, maruyama_check, pair_mixing_criterion,
    smallball_trace,
};
use mixfield::mmafield::MmaModel;
use mixfield::sequence::SequenceSpec;

fn main() -> mixfield::Result<()> {
    let noise = CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 1.0)])?;
    let ou = MmaModel::new(
        Kernel::scalar(Shape::Exponential { rates: vec![1.0] }, 1)?,
        GeneratingQuadruple::homogeneous(noise.clone(), 1)?,
    )?;
    let seq = SequenceSpec::axis(1, 0.0, 1.5, 15)?;

    let combined = combined_criterion(&ou, &seq)?;
    println!("combined: first {:.3e}, last {:.3e}, verdict {}", combined.decay.initial, combined.last_value(), combined.verdict);
    let pair = pair_mixing_criterion(&ou, &seq, 0, 0)?;
    println!("pair:     last {:.3e}, verdict {}", pair.last_value(), pair.verdict);
    let mm = maruyama_check(&ou, &seq, &[1e-2, 1e-1])?;
    println!("maruyama: verdict {}", mm.verdict());
    let sb = smallball_trace(&ou, &seq, 1.0)?;
    println!("smallball: last {:.3e}", sb.last_value());

    for t in [0.5, 2.0] {
        let a = codifference_analytic(&ou, &[t], 0, 0)?;
        let (o, steps) = codifference_oracle(&ou, &[t], 0, 0)?;
        println!("codifference at {t}: analytic {a:.10}, log oracle {o:.10} ({steps} steps)");
    }

    let constant = ConstantField::new(noise, 1)?;
    let pc = pair_mixing_criterion(&constant, &seq, 0, 0)?;
    let gap = (1.0 - (2.0 * (1f64.cos() - 1.0)).exp()).abs();
    println!("constant field: pair gap {:.9} (closed form {gap:.9}), verdict {}", pc.last_value(), pc.verdict);
    Ok(())
}
