//! Atoms of a Lévy measure on the lattice lines {x : some x_j ∈ 2πZ}.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::levy::{Atom, LevyMeasure};
use crate::error::{Error, Result};
use crate::rng::{stream, SALT_SCALE};

/// Absolute tolerance for membership in 2πZ.
pub const TWO_PI_TOL: f64 = 1e-12;

const MAX_PROPOSALS: usize = 1000;

/// Result of [`scan_atoms_2pi`].
#[derive(Debug, Clone, PartialEq)]
pub struct AtomScan {
    pub offending: Vec<Atom>,
    /// False when the measure has a part whose atoms cannot be enumerated
    /// (a parametric density not declared atomless).
    pub applicable: bool,
    /// True when the measure was declared atomless rather than enumerated.
    pub declared_atomless: bool,
}

impl AtomScan {
    pub fn is_clean(&self) -> bool {
        self.applicable && self.offending.is_empty()
    }
}

fn in_two_pi_z(v: f64) -> bool {
    let k = (v / (2.0 * PI)).round();
    (v - 2.0 * PI * k).abs() <= TWO_PI_TOL
}

/// Lists atoms having at least one coordinate in 2πZ (0 included).
pub fn scan_atoms_2pi(q: &LevyMeasure) -> AtomScan {
    let part = q.atomic_part();
    let offending = part
        .atoms
        .iter()
        .filter(|a| a.point.iter().any(|v| in_two_pi_z(*v)))
        .cloned()
        .collect();
    AtomScan {
        offending,
        applicable: part.complete,
        declared_atomless: part.complete && !part.purely_atomic && part.atoms.is_empty(),
    }
}

/// Whether `a` lies in Z = {z : z_j = 2πk / y_j for all j, one k ∈ Z, y an atom}.
pub fn in_scale_exclusion_set(a: &[f64], atoms: &[Atom]) -> bool {
    atoms.iter().any(|y| {
        if y.point.len() != a.len() || y.point.iter().any(|v| *v == 0.0) {
            return false;
        }
        let k = (a[0] * y.point[0] / (2.0 * PI)).round();
        a.iter()
            .zip(y.point.iter())
            .all(|(aj, yj)| (aj - 2.0 * PI * k / yj).abs() <= TWO_PI_TOL)
    })
}

fn scaled_scan_is_clean(q: &LevyMeasure, a: &[f64]) -> bool {
    let map = DMatrix::from_diagonal(&DVector::from_column_slice(a));
    let mapped = LevyMeasure::Pushforward {
        base: Box::new(q.clone()),
        map,
        correction: DVector::zeros(a.len()),
    };
    scan_atoms_2pi(&mapped).is_clean()
}

/// Finds a scale vector a with nonzero coordinates such that diag(a)·X has
/// no Lévy atoms on the 2πZ lattice lines.
///
/// `(1, …, 1)` is returned when already admissible. Otherwise proposals are
/// drawn uniformly from [0.5, 1.5)^d from a stream keyed by `seed`; each must
/// avoid the exclusion set Z and pass a post-hoc scan of the scaled measure.
pub fn find_admissible_scale(q: &LevyMeasure, seed: u64) -> Result<Vec<f64>> {
    let d = q.dim();
    let part = q.atomic_part();
    if !part.complete {
        return Err(Error::InvalidModel(
            "atoms of the Levy measure cannot be enumerated; scale search needs an atomic measure".into(),
        ));
    }
    let ones = vec![1.0; d];
    if scaled_scan_is_clean(q, &ones) {
        return Ok(ones);
    }
    if let Some(bad) = part.atoms.iter().find(|a| a.point.iter().any(|v| v.abs() <= TWO_PI_TOL)) {
        return Err(Error::Internal(format!(
            "atom {:?} has a zero coordinate, which no diagonal scaling moves off 2πZ",
            bad.point.as_slice()
        )));
    }
    let mut rng = stream(seed, 0, 0, SALT_SCALE);
    for _ in 0..MAX_PROPOSALS {
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
        if in_scale_exclusion_set(&a, &part.atoms) {
            continue;
        }
        if scaled_scan_is_clean(q, &a) {
            return Ok(a);
        }
    }
    Err(Error::Internal(format!("no admissible scale after {MAX_PROPOSALS} proposals")))
}
