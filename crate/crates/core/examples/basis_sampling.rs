//! Independent Lévy basis increments on a cell partition, checked against
//! the cell laws.

use mixfield::idlaw::{Atom, CharTriplet, LevyMeasure};
use mixfield::levybasis::{sample_increments, CellPartition, GeneratingQuadruple, JumpTruncation};

fn main() -> mixfield::Result<()> {
    let base = CharTriplet::scalar(0.0, 1.0, LevyMeasure::atomic(1, vec![Atom::new(vec![2.0], 1.0)])?)?;
    let quad = GeneratingQuadruple::new(base, vec![0.3, 0.7], 1)?;
    let partition = CellPartition::aligned(&[0.0], &[2.0], &[0.5], quad.weights())?;
    println!("{} cells over {} boxes, total measure {}", partition.len(), partition.boxes(), partition.volume());

    let replicates = 4000;
    let mut sums = vec![0.0; partition.len()];
    let mut squares = vec![0.0; partition.len()];
    for r in 0..replicates {
        let inc = sample_increments(&quad, &partition, 42, r, JumpTruncation::default())?;
        for (i, v) in inc.iter().enumerate() {
            sums[i] += v[0];
            squares[i] += v[0] * v[0];
        }
    }
    for (i, cell) in partition.cells().enumerate().take(4) {
        let n = replicates as f64;
        let mean = sums[i] / n;
        let var = squares[i] / n - mean * mean;
        // jumps of size 2 lie outside the unit ball, so E = 2m and Var = m(1 + 4)
        let expected_mean = cell.measure * 2.0;
        let expected_var = cell.measure * 5.0;
        println!(
            "cell {i} (class {}, m = {:.3}): mean {mean:.4} vs {expected_mean:.4}, var {var:.4} vs {expected_var:.4}",
            cell.class, cell.measure
        );
    }
    Ok(())
}
