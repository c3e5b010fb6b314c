//! Property and oracle tests across the library.

mod common;

use std::sync::Arc;

use mixfield::ergodiag::{
    cells_for_frequency, cesaro_atom_bound, cesaro_average, filter_sequence, fourier_of_atoms, weak_mixing_check,
    DensityOneSet,
};
use mixfield::field::{IdField, LinearMapped};
use mixfield::idlaw::{find_admissible_scale, scan_atoms_2pi, Atom, CharTriplet, LevyMeasure};
use mixfield::levybasis::{cell_law, GeneratingQuadruple, JumpTruncation};
use mixfield::mixdiag::{
    codifference_analytic, codifference_oracle, combined_criterion, combined_value, empirical_threshold,
    pair_mixing_criterion, rescaled_criterion, Verdict,
};
use mixfield::realization::SimulationSpec;
use mixfield::sequence::SequenceSpec;
use mixfield::subord::{subordinated_cell_cumulant, SheetSpec, SubordinatedSampler};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn atom_strategy(d: usize, lo: f64, hi: f64) -> impl Strategy<Value = Atom> {
    (
        prop::collection::vec(prop_oneof![lo..-1e-2f64, 1e-2..hi], d),
        0.05..1.5f64,
    )
        .prop_map(|(p, m)| Atom::new(p, m))
}

fn triplet_strategy() -> impl Strategy<Value = CharTriplet> {
    (1usize..=3).prop_flat_map(|d| {
        (
            prop::collection::vec(-1.0..1.0f64, d),
            prop::collection::vec(-1.0..1.0f64, d * d),
            prop::collection::vec(atom_strategy(d, -3.0, 3.0), 0..5),
        )
            .prop_map(move |(g, a, atoms)| {
                let a = DMatrix::from_vec(d, d, a);
                let sigma = &a * a.transpose();
                CharTriplet::new(DVector::from_vec(g), sigma, LevyMeasure::atomic(d, atoms).unwrap()).unwrap()
            })
    })
}

fn theta_for(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, d)
}

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn charfn_is_bounded_and_hermitian((t, th) in triplet_strategy().prop_flat_map(|t| {
        let d = t.dim();
        (Just(t), theta_for(d))
    })) {
        let phi = t.charfn(&th).unwrap();
        let neg: Vec<f64> = th.iter().map(|v| -v).collect();
        prop_assert!(phi.norm() <= 1.0 + 1e-12);
        prop_assert!(close(t.charfn(&neg).unwrap(), phi.conj(), 1e-12));
    }

    #[test]
    fn convolution_multiplies_charfns((a, b, th) in (1usize..=3).prop_flat_map(|d| {
        (triplet_strategy().prop_filter("dim", move |t| t.dim() == d),
         triplet_strategy().prop_filter("dim", move |t| t.dim() == d),
         theta_for(d))
    })) {
        let ab = a.convolve(&b).unwrap();
        let ba = b.convolve(&a).unwrap();
        let want = a.charfn(&th).unwrap() * b.charfn(&th).unwrap();
        prop_assert!(close(ab.charfn(&th).unwrap(), want, 1e-9));
        prop_assert!(close(ab.charfn(&th).unwrap(), ba.charfn(&th).unwrap(), 1e-9));
    }

    #[test]
    fn linear_maps_compose((t, a, b, th) in triplet_strategy().prop_flat_map(|t| {
        let d = t.dim();
        (Just(t),
         prop::collection::vec(-1.5..1.5f64, 2 * d),
         prop::collection::vec(-1.5..1.5f64, 2),
         theta_for(1))
    })) {
        let d = t.dim();
        let a = DMatrix::from_vec(2, d, a);
        let b = DMatrix::from_vec(1, 2, b);
        let stepwise = t.linear_map(&a).unwrap().linear_map(&b).unwrap();
        let direct = t.linear_map(&(&b * &a)).unwrap();
        prop_assert!(close(stepwise.charfn(&th).unwrap(), direct.charfn(&th).unwrap(), 1e-9));
        let pulled: Vec<f64> = (0..d).map(|i| (b[(0, 0)] * a[(0, i)] + b[(0, 1)] * a[(1, i)]) * th[0]).collect();
        prop_assert!(close(direct.charfn(&th).unwrap(), t.charfn(&pulled).unwrap(), 1e-9));
    }

    #[test]
    fn cell_law_cumulant_is_linear_in_measure(
        (t, th) in triplet_strategy().prop_flat_map(|t| { let d = t.dim(); (Just(t), theta_for(d)) }),
        m in 0.01..5.0f64,
    ) {
        let q = GeneratingQuadruple::homogeneous(t.clone(), 1).unwrap();
        let law = cell_law(&q, m).unwrap();
        prop_assert!(close(law.cumulant(&th).unwrap(), t.cumulant(&th).unwrap() * m, 1e-9));
    }

    #[test]
    fn admissible_scale_clears_atoms(atoms in (1usize..=3).prop_flat_map(|d| {
        prop::collection::vec(prop_oneof![
            atom_strategy(d, -8.0, 8.0),
            prop::collection::vec(-3i32..=3, d).prop_filter("nonzero", |k| k.iter().all(|v| *v != 0))
                .prop_map(|k| Atom::new(k.iter().map(|v| 2.0 * std::f64::consts::PI * *v as f64).collect::<Vec<_>>(), 0.5)),
        ], 1..6)
    }), seed in any::<u64>()) {
        let d = atoms[0].point.len();
        let q = LevyMeasure::atomic(d, atoms.clone()).unwrap();
        let scale = find_admissible_scale(&q, seed).unwrap();
        let scaled: Vec<Atom> = atoms
            .iter()
            .map(|a| Atom::new(a.point.iter().zip(&scale).map(|(x, s)| x * s).collect::<Vec<_>>(), a.mass))
            .collect();
        prop_assert!(scan_atoms_2pi(&LevyMeasure::atomic(d, scaled).unwrap()).offending.is_empty());
    }

    #[test]
    fn cesaro_average_respects_atom_bound(
        atoms in prop::collection::vec(
            (prop_oneof![Just(0.0), -2.0..2.0f64], 0.05..1.0f64).prop_map(|(a, m)| Atom::new(vec![a], m)),
            1..8),
        t in 1.0..200.0f64,
    ) {
        let origin: f64 = atoms.iter().filter(|a| a.point[0] == 0.0).map(|a| a.mass).sum();
        let f = fourier_of_atoms(&atoms);
        let avg = cesaro_average(&f, t, 1, cells_for_frequency(t, 2.0)).unwrap();
        prop_assert!((avg.value - origin).norm() <= cesaro_atom_bound(&atoms, t) + avg.error + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn codifference_matches_distinguished_log(seed in any::<u64>(), t in -3.0..3.0f64) {
        let model = common::random_atomic_mma(&mut common::rng(seed));
        for j in 0..model.q() {
            for k in 0..model.q() {
                let a = codifference_analytic(&model, &[t], j, k).unwrap();
                let (o, _) = codifference_oracle(&model, &[t], j, k).unwrap();
                prop_assert!(close(a, o, 1e-8));
            }
        }
    }

    #[test]
    fn codifference_is_hermitian_under_reflection(seed in any::<u64>(), t in -3.0..3.0f64) {
        let model = common::random_atomic_mma(&mut common::rng(seed));
        for j in 0..model.q() {
            for k in 0..model.q() {
                let fwd = codifference_analytic(&model, &[t], j, k).unwrap();
                let back = codifference_analytic(&model, &[-t], k, j).unwrap();
                prop_assert!(close(fwd, back.conj(), 1e-9));
            }
        }
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let field = common::preset_field("ou-cp");
        let pts = vec![vec![0.0], vec![1.0], vec![2.5]];
        let spec = SimulationSpec::new(50, 0.1, seed);
        let a = field.simulate(&pts, &spec).unwrap();
        let b = field.simulate(&pts, &spec).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }
}

#[test]
fn subordinated_cells_match_their_law() {
    let x = SheetSpec::new(CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0)).unwrap(), 1).unwrap();
    let t = SheetSpec::subordinator(
        CharTriplet::scalar(1.0, 0.0, LevyMeasure::atomic(1, vec![Atom::new(vec![1.0], 1.0)]).unwrap()).unwrap(),
        1,
    )
    .unwrap();
    let sampler = SubordinatedSampler::new(&x, &t, JumpTruncation::default()).unwrap();
    let m_rep = 20_000;
    for m in [0.5, 1.0] {
        let draws: Vec<f64> = (0..m_rep).map(|r| sampler.sample(m, 77, r as u64, 0).unwrap()[0]).collect();
        for th in [-2.0, -0.7, 0.4, 1.3, 2.5] {
            let ecf = draws.iter().map(|v| Complex64::new((th * v).cos(), (th * v).sin())).sum::<Complex64>()
                / m_rep as f64;
            let want = subordinated_cell_cumulant(&x, &t, m, &[th]).unwrap().exp();
            assert!((ecf - want).norm() <= empirical_threshold(m_rep), "m = {m}, theta = {th}");
        }
    }
}

#[test]
fn cell_increments_add_up_to_the_unit_law() {
    let base = CharTriplet::new(
        DVector::from_element(1, 0.3),
        DMatrix::from_element(1, 1, 0.5),
        LevyMeasure::atomic(1, vec![Atom::new(vec![1.5], 0.8), Atom::new(vec![-0.4], 0.3)]).unwrap(),
    )
    .unwrap();
    let q = GeneratingQuadruple::homogeneous(base.clone(), 1).unwrap();
    let parts: Vec<CharTriplet> = [0.25, 0.25, 0.5].iter().map(|m| cell_law(&q, *m).unwrap()).collect();
    let sum = parts[1..].iter().fold(parts[0].clone(), |acc, p| acc.convolve(p).unwrap());
    for th in [-2.0, -0.5, 0.7, 3.0] {
        assert!(close(sum.charfn(&[th]).unwrap(), base.charfn(&[th]).unwrap(), 1e-12));
    }
}

fn ecf_at(real: &mixfield::realization::FieldRealization, point: usize, th: f64) -> Complex64 {
    (0..real.replicates())
        .map(|r| {
            let v = th * real.value(r, point)[0];
            Complex64::new(v.cos(), v.sin())
        })
        .sum::<Complex64>()
        / real.replicates() as f64
}

#[test]
fn marginal_ecf_is_stationary() {
    let field = common::preset_field("ou-cp");
    let pts = vec![vec![0.0], vec![3.0], vec![7.5]];
    let real = field.simulate(&pts, &SimulationSpec::new(8000, 0.05, 31)).unwrap();
    let tol = 2.0 * empirical_threshold(8000);
    for th in [-2.0, -0.6, 0.9, 2.2] {
        let base = ecf_at(&real, 0, th);
        for p in 1..pts.len() {
            assert!((ecf_at(&real, p, th) - base).norm() <= tol, "point {p}, theta {th}");
        }
    }
}

#[test]
fn finer_cells_reduce_variance_bias() {
    let field = common::ou_gaussian(1.0);
    let var = |h: f64| {
        let real = field.simulate(&[vec![0.0]], &SimulationSpec::new(40_000, h, 5)).unwrap();
        let n = real.replicates() as f64;
        let mean = (0..real.replicates()).map(|r| real.value(r, 0)[0]).sum::<f64>() / n;
        (0..real.replicates()).map(|r| (real.value(r, 0)[0] - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    let coarse = (var(0.8) - 0.5).abs();
    let fine = (var(0.4) - 0.5).abs();
    assert!(fine < coarse, "bias at h = 0.4 ({fine}) not below bias at h = 0.8 ({coarse})");
}

#[test]
fn combined_decay_implies_pair_decay() {
    for p in mixfield::experiment::PRESETS {
        if p.name == "atom-2pi" {
            continue;
        }
        let cfg = p.config();
        let built = cfg.model.build().unwrap();
        let seq = cfg.sequence.build(built.field.l()).unwrap();
        let combined = combined_criterion(built.field.as_ref(), &seq).unwrap();
        if combined.verdict == Verdict::ConsistentWithMixing {
            let pair = pair_mixing_criterion(built.field.as_ref(), &seq, 0, 0).unwrap();
            assert_eq!(pair.verdict, Verdict::ConsistentWithMixing, "{}", p.name);
        }
    }
}

#[test]
fn rescaling_preserves_verdicts_on_clean_models() {
    for name in ["ou-cp", "constant-field"] {
        let cfg = mixfield::experiment::presets::config(name).unwrap();
        let field = cfg.model.build().unwrap().field;
        let seq = cfg.sequence.build(1).unwrap();
        let plain = pair_mixing_criterion(field.as_ref(), &seq, 0, 0).unwrap();
        let scaled = rescaled_criterion(field, &seq, 0, 0, 9).unwrap();
        assert_eq!(plain.verdict, scaled.trace.verdict, "{name}");
    }
}

#[test]
fn rescaled_field_has_clean_atoms() {
    let field = common::preset_field("atom-2pi");
    let levy = field.marginal_triplet().unwrap().levy().clone();
    let scale = find_admissible_scale(&levy, 3).unwrap();
    let mapped = LinearMapped::diagonal(field, &scale).unwrap();
    assert!(mapped.marginal_atom_scan().unwrap().is_clean());
}

#[test]
fn weak_mixing_agrees_with_mixing_status() {
    let set = DensityOneSet::exemplar(1);
    let seq = filter_sequence(&SequenceSpec::axis(1, 0.0, 1.5, 30).unwrap(), &set).unwrap();
    let ou: Arc<dyn IdField> = Arc::new(common::ou_gaussian(1.0));
    assert_eq!(weak_mixing_check(ou.as_ref(), &set, &seq).unwrap().verdict, Verdict::ConsistentWithMixing);
    let constant = common::preset_field("constant-field");
    assert_eq!(weak_mixing_check(constant.as_ref(), &set, &seq).unwrap().verdict, Verdict::Inconsistent);
}

#[test]
fn cesaro_of_ou_dependence_has_closed_form() {
    let field = common::ou_gaussian(1.0);
    for t in [5.0, 20.0] {
        let f = |s: &[f64]| Complex64::new(combined_value(&field, s).unwrap(), 0.0);
        let avg = cesaro_average(f, t, 1, 2 * t as usize).unwrap();
        let want = (1.0 - (-t as f64).exp()) / (2.0 * t);
        assert!((avg.value.re - want).abs() <= 1e-9, "T = {t}: {} vs {want}", avg.value.re);
    }
}

#[test]
fn sup_norm_of_rays() {
    let seq = SequenceSpec::diagonal(2, 0.0, 1.5, 5).unwrap();
    let last = seq.points().pop().unwrap();
    assert_eq!(mixfield::sequence::sup(&last), 6.0);
}
