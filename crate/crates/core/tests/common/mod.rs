//! Shared model builders and oracles for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use mixfield::experiment::presets;
use mixfield::field::IdField;
use mixfield::idlaw::{Atom, CharTriplet, LevyMeasure};
use mixfield::kernel::{Kernel, KernelTerm, Shape};
use mixfield::levybasis::GeneratingQuadruple;
use mixfield::mmafield::MmaModel;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_pcg::Pcg64Mcg;

pub fn rng(seed: u64) -> Pcg64Mcg {
    use rand::SeedableRng;
    Pcg64Mcg::seed_from_u64(seed)
}

pub fn preset_field(name: &str) -> Arc<dyn IdField> {
    presets::config(name)
        .unwrap_or_else(|| panic!("missing preset {name}"))
        .model
        .build()
        .unwrap()
        .field
}

pub fn ou_gaussian(lambda: f64) -> MmaModel {
    MmaModel::new(
        Kernel::scalar(Shape::Exponential { rates: vec![lambda] }, 1).unwrap(),
        GeneratingQuadruple::homogeneous(CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0)).unwrap(), 1)
            .unwrap(),
    )
    .unwrap()
}

pub fn random_atoms(r: &mut Pcg64Mcg, dim: usize, max_atoms: usize, range: f64) -> Vec<Atom> {
    let n = r.random_range(1..=max_atoms);
    (0..n)
        .map(|_| {
            let p: Vec<f64> = (0..dim).map(|_| r.random_range(-range..range)).collect();
            Atom::new(p, r.random_range(0.05..0.8))
        })
        .filter(|a| a.point.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-3)
        .collect()
}

/// An MMA on R with atomic basis on R^d and random piecewise-constant
/// matrix kernels in one or two classes.
pub fn random_atomic_mma(r: &mut Pcg64Mcg) -> MmaModel {
    let d = r.random_range(1..=3);
    let q = r.random_range(1..=2);
    let mut atoms = random_atoms(r, d, 5, 1.5);
    if atoms.is_empty() {
        atoms.push(Atom::new(vec![0.7; d], 0.4));
    }
    let gamma = DVector::from_fn(d, |_, _| r.random_range(-0.5..0.5));
    let base = CharTriplet::new(gamma, DMatrix::zeros(d, d), LevyMeasure::atomic(d, atoms).unwrap()).unwrap();
    let classes = r.random_range(1..=2);
    let weights = if classes == 1 {
        vec![1.0]
    } else {
        let w = r.random_range(0.2..0.8);
        vec![w, 1.0 - w]
    };
    let terms = (0..classes)
        .map(|_| {
            let lo = r.random_range(-1.0..0.5);
            let width = r.random_range(0.3..2.0);
            let m = DMatrix::from_fn(q, d, |_, _| r.random_range(-1.0..1.0));
            vec![KernelTerm::new(
                Shape::Indicator {
                    lower: vec![lo],
                    upper: vec![lo + width],
                },
                m,
            )]
        })
        .collect();
    let kernel = Kernel::new(q, d, 1, terms).unwrap();
    MmaModel::new(kernel, GeneratingQuadruple::new(base, weights, 1).unwrap()).unwrap()
}

/// Closed form 1 − exp(2(cos 1 − 1)) of the constant-field pair gap.
pub fn constant_field_gap() -> f64 {
    (1.0 - (2.0 * (1f64.cos() - 1.0)).exp()).abs()
}
