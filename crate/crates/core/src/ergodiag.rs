//! Weak mixing and ergodicity: density-one sets, Cesàro averages, the
//! codifference Gram check and empirical time averages.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::IdField;
use crate::idlaw::Atom;
use crate::mixdiag::{codifference_analytic, combined_criterion, CriterionTrace, Verdict};
use crate::quad::{tensor_rule_complex, Integral};
use crate::realization::FieldRealization;
use crate::sequence::SequenceSpec;

/// Lattice spacing of the built-in exceptional sets.
pub const LATTICE_SPACING: f64 = 2.0 * PI;
/// Extrapolated densities at or above this are classified as density one.
pub const DENSITY_ONE_LEVEL: f64 = 0.99;
/// Minimum window length, in decay lengths, for a conclusive time average.
pub const MIN_DECORRELATION_LENGTHS: f64 = 100.0;

/// Subsets of R^l used to filter sequences.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityOneSet {
    /// All of R^l.
    Full { l: usize },
    /// {x : x_axis ≥ 0}.
    HalfSpace { l: usize, axis: usize },
    /// Complement of sup-norm balls of radius r_k around the lattice points
    /// 2πk, with r_k = radius, or r_k = radius / √(1 + ‖k‖_∞) when shrinking.
    LatticeBallComplement { l: usize, radius: f64, shrinking: bool },
}

impl DensityOneSet {
    pub fn l(&self) -> usize {
        match self {
            DensityOneSet::Full { l } | DensityOneSet::HalfSpace { l, .. } | DensityOneSet::LatticeBallComplement { l, .. } => *l,
        }
    }

    /// The built-in density-one exemplar: shrinking balls of initial radius 1.
    pub fn exemplar(l: usize) -> Self {
        DensityOneSet::LatticeBallComplement {
            l,
            radius: 1.0,
            shrinking: true,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DensityOneSet::Full { l } => format!("R^{l}"),
            DensityOneSet::HalfSpace { axis, .. } => format!("half-space x{axis} >= 0"),
            DensityOneSet::LatticeBallComplement { radius, shrinking, .. } => format!(
                "complement of {} balls (r0 = {radius}) on the 2*pi lattice",
                if *shrinking { "shrinking" } else { "fixed" }
            ),
        }
    }

    fn ball_radius(&self, k: &[i64]) -> f64 {
        match self {
            DensityOneSet::LatticeBallComplement { radius, shrinking, .. } => {
                if *shrinking {
                    let m = k.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as f64;
                    radius / (1.0 + m).sqrt()
                } else {
                    *radius
                }
            }
            _ => 0.0,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DensityOneSet::Full { .. } => true,
            DensityOneSet::HalfSpace { axis, .. } => x[*axis] >= 0.0,
            DensityOneSet::LatticeBallComplement { .. } => {
                let k: Vec<i64> = x.iter().map(|v| (v / LATTICE_SPACING).round() as i64).collect();
                let r = self.ball_radius(&k);
                let dist = x
                    .iter()
                    .zip(&k)
                    .fold(0.0f64, |m, (v, kk)| m.max((v - LATTICE_SPACING * *kk as f64).abs()));
                dist > r
            }
        }
    }

    /// Density of the set in (−T, T]^l when a closed form is available.
    pub fn closed_form_density(&self, t: f64) -> Option<f64> {
        match self {
            DensityOneSet::Full { .. } => Some(1.0),
            DensityOneSet::HalfSpace { .. } => Some(0.5),
            DensityOneSet::LatticeBallComplement { l, radius, .. } => {
                if *radius >= PI {
                    return None;
                }
                let kmax = (t / LATTICE_SPACING).ceil() as i64 + 1;
                let per_axis = 2 * kmax as usize + 1;
                let total = per_axis.checked_pow(*l as u32)?;
                if total > 50_000_000 {
                    return None;
                }
                let mut excluded = 0.0;
                let mut k = vec![-kmax; *l];
                for _ in 0..total {
                    let r = self.ball_radius(&k);
                    let mut vol = 1.0;
                    for kk in &k {
                        let c = LATTICE_SPACING * *kk as f64;
                        vol *= ((c + r).min(t) - (c - r).max(-t)).max(0.0);
                        if vol == 0.0 {
                            break;
                        }
                    }
                    excluded += vol;
                    for v in k.iter_mut() {
                        *v += 1;
                        if *v <= kmax {
                            break;
                        }
                        *v = -kmax;
                    }
                }
                Some(1.0 - excluded / (2.0 * t).powi(*l as i32))
            }
        }
    }

    /// lim_{T→∞} of the density, when known.
    pub fn asymptotic_density(&self) -> Option<f64> {
        match self {
            DensityOneSet::Full { .. } => Some(1.0),
            DensityOneSet::HalfSpace { .. } => Some(0.5),
            DensityOneSet::LatticeBallComplement { l, radius, shrinking } => {
                if *shrinking {
                    Some(1.0)
                } else if *radius < PI {
                    Some(1.0 - (2.0 * radius / LATTICE_SPACING).powi(*l as i32))
                } else {
                    None
                }
            }
        }
    }

    /// Constancy breakpoints of the indicator on (−T, T] along each axis.
    fn breaks(&self, t: f64) -> Vec<Vec<f64>> {
        let l = self.l();
        match self {
            DensityOneSet::Full { .. } => vec![Vec::new(); l],
            DensityOneSet::HalfSpace { axis, .. } => (0..l).map(|i| if i == *axis { vec![0.0] } else { Vec::new() }).collect(),
            DensityOneSet::LatticeBallComplement { .. } => {
                let kmax = (t / LATTICE_SPACING).ceil() as i64 + 1;
                let mut radii: Vec<f64> = Vec::new();
                if l == 1 {
                    for k in -kmax..=kmax {
                        radii.push(self.ball_radius(&[k]));
                    }
                } else {
                    for m in 0..=kmax {
                        let mut k = vec![0i64; l];
                        k[0] = m;
                        radii.push(self.ball_radius(&k));
                    }
                }
                radii.sort_by(f64::total_cmp);
                radii.dedup();
                let mut b = Vec::new();
                for k in -kmax..=kmax {
                    let c = LATTICE_SPACING * k as f64;
                    for r in &radii {
                        for e in [c - r, c + r] {
                            if e > -t && e < t {
                                b.push(e);
                            }
                        }
                    }
                }
                vec![b; l]
            }
        }
    }
}

/// Densities (1/(2T)^l)∫_{(−T,T]^l} 1_E along a T-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrace {
    /// (T, value from cell enumeration, closed form if available)
    pub values: Vec<(f64, f64, Option<f64>)>,
    /// Closed-form limit when known, else an Aitken extrapolation of the
    /// last three values.
    pub limit: f64,
    pub density_one: bool,
}

/// Integrates the indicator exactly on its constancy cells (midpoint rule on
/// cells bounded by the set's breakpoints).
pub fn density_of_set(set: &DensityOneSet, t_grid: &[f64]) -> Result<DensityTrace> {
    let l = set.l();
    let mut values = Vec::new();
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(Error::validation("T", "window half-width must be positive"));
        }
        let edges: Vec<Vec<f64>> = set
            .breaks(t)
            .into_iter()
            .map(|mut b| {
                b.push(-t);
                b.push(t);
                b.sort_by(f64::total_cmp);
                b.dedup();
                b
            })
            .collect();
        let counts: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
        let total = counts.iter().try_fold(1usize, |a, c| a.checked_mul(*c));
        let total = match total {
            Some(n) if n <= 20_000_000 => n,
            _ => {
                return Err(Error::Quadrature {
                    achieved: f64::INFINITY,
                    requested: 0.0,
                })
            }
        };
        let inside: f64 = (0..total)
            .into_par_iter()
            .map(|flat| {
                let mut rem = flat;
                let mut mid = vec![0.0; l];
                let mut vol = 1.0;
                for i in 0..l {
                    let k = rem % counts[i];
                    rem /= counts[i];
                    mid[i] = 0.5 * (edges[i][k] + edges[i][k + 1]);
                    vol *= edges[i][k + 1] - edges[i][k];
                }
                if set.contains(&mid) {
                    vol
                } else {
                    0.0
                }
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .sum();
        values.push((t, inside / (2.0 * t).powi(l as i32), set.closed_form_density(t)));
    }
    let limit = set.asymptotic_density().unwrap_or_else(|| aitken(&values.iter().map(|v| v.1).collect::<Vec<_>>()));
    Ok(DensityTrace {
        density_one: limit >= DENSITY_ONE_LEVEL,
        values,
        limit,
    })
}

fn aitken(v: &[f64]) -> f64 {
    match v.len() {
        0 => f64::NAN,
        1 | 2 => v[v.len() - 1],
        n => {
            let (a, b, c) = (v[n - 3], v[n - 2], v[n - 1]);
            let den = c - 2.0 * b + a;
            if den.abs() < 1e-15 {
                c
            } else {
                c - (c - b) * (c - b) / den
            }
        }
    }
}

/// (1/(2T)^l)∫_{(−T,T]^l} f with a fixed product rule on `cells` cells per axis.
pub fn cesaro_average<F>(f: F, t: f64, l: usize, cells: usize) -> Result<Integral<Complex64>>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    if !(t > 0.0) || l == 0 || cells == 0 {
        return Err(Error::validation("cesaro", "need T > 0, l >= 1 and at least one cell"));
    }
    let vol = (2.0 * t).powi(l as i32);
    let r = tensor_rule_complex(&vec![-t; l], &vec![t; l], &vec![cells; l], f);
    Ok(r.map(|v| v / vol))
}

/// Cells per axis resolving e^{i a t} on (−T, T] with about two periods per cell.
pub fn cells_for_frequency(t: f64, max_frequency: f64) -> usize {
    ((2.0 * t * max_frequency.abs()) / (4.0 * PI)).ceil().max(1.0) as usize + 1
}

/// t ↦ Σ m_a e^{i⟨a, t⟩}, the Fourier transform of an atomic measure.
pub fn fourier_of_atoms(atoms: &[Atom]) -> impl Fn(&[f64]) -> Complex64 + Sync + '_ {
    move |t| {
        atoms.iter().fold(Complex64::new(0.0, 0.0), |acc, a| {
            let ph: f64 = a.point.iter().zip(t).map(|(x, y)| x * y).sum();
            acc + Complex64::new(ph.cos(), ph.sin()) * a.mass
        })
    }
}

/// Σ_{a≠0} m_a Π_i min(1, 1/(T|a_i|)).
pub fn cesaro_atom_bound(atoms: &[Atom], t: f64) -> f64 {
    atoms
        .iter()
        .filter(|a| a.point.iter().any(|v| *v != 0.0))
        .map(|a| a.mass * a.point.iter().map(|v| (1.0 / (t * v.abs())).min(1.0)).product::<f64>())
        .sum()
}

/// Combined criterion along a sequence that must lie in D.
pub fn weak_mixing_check(field: &dyn IdField, set: &DensityOneSet, seq: &SequenceSpec) -> Result<CriterionTrace> {
    if set.l() != field.l() {
        return Err(Error::DimensionMismatch {
            context: "density set dimension",
            expected: field.l(),
            found: set.l(),
        });
    }
    if let Some(p) = seq.points().into_iter().find(|p| !set.contains(p)) {
        return Err(Error::OutsideDensitySet(p));
    }
    let mut tr = combined_criterion(field, seq)?;
    tr.name = "weak-mixing".into();
    Ok(tr)
}

/// Keeps the points of a sequence that lie in D.
pub fn filter_sequence(seq: &SequenceSpec, set: &DensityOneSet) -> Result<SequenceSpec> {
    let kept: Vec<Vec<f64>> = seq.points().into_iter().filter(|p| set.contains(p)).collect();
    SequenceSpec::custom(kept)
}

/// Ergodicity verdict of a time-average comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErgodicVerdict {
    Ergodic,
    NonErgodic,
    Inconclusive,
}

/// Time averages compared with an independent ensemble mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicReport {
    /// Per replicate grid averages of g(X_t).
    pub time_averages: Vec<Complex64>,
    pub ensemble_mean: Complex64,
    pub ensemble_stderr: f64,
    /// RMS over replicates of |time average − ensemble mean|.
    pub gap: f64,
    /// RMS over replicates of the combined standard error (batch means
    /// within the window, plus the ensemble error).
    pub stderr: f64,
    /// Window length in decay lengths, when the field declares one.
    pub decorrelation_lengths: Option<f64>,
    pub verdict: ErgodicVerdict,
}

/// Number of contiguous blocks used for batch-mean standard errors.
pub const BATCHES: usize = 20;

/// Compares grid averages of g over each replicate of `long` with the mean
/// of g(X₀) over `ensemble`.
pub fn ergodic_time_average(
    long: &FieldRealization,
    ensemble: &FieldRealization,
    g: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    decay_length: Option<f64>,
) -> Result<ErgodicReport> {
    if long.q() != ensemble.q() {
        return Err(Error::DimensionMismatch {
            context: "ensemble dimension",
            expected: long.q(),
            found: ensemble.q(),
        });
    }
    let p0 = ensemble.require_point(&vec![0.0; ensemble.l()])?;
    let e_samples: Vec<Complex64> = (0..ensemble.replicates()).map(|r| g(ensemble.value(r, p0))).collect();
    let m = e_samples.len() as f64;
    let e_mean = e_samples.iter().sum::<Complex64>() / m;
    let e_var = if e_samples.len() > 1 {
        e_samples.iter().map(|z| (z - e_mean).norm_sqr()).sum::<f64>() / (m - 1.0)
    } else {
        f64::INFINITY
    };
    let e_se = (e_var / m).sqrt();

    let n = long.points();
    let batches = BATCHES.min(n).max(1);
    let mut averages = Vec::with_capacity(long.replicates());
    let mut sq_gap = 0.0;
    let mut sq_se = 0.0;
    for r in 0..long.replicates() {
        let vals: Vec<Complex64> = (0..n).map(|p| g(long.value(r, p))).collect();
        let avg = vals.iter().sum::<Complex64>() / n as f64;
        let means: Vec<Complex64> = (0..batches)
            .map(|b| {
                let lo = b * n / batches;
                let hi = (b + 1) * n / batches;
                vals[lo..hi].iter().sum::<Complex64>() / (hi - lo).max(1) as f64
            })
            .collect();
        let time_se = if batches > 1 {
            let bm = means.iter().sum::<Complex64>() / batches as f64;
            (means.iter().map(|z| (z - bm).norm_sqr()).sum::<f64>() / ((batches - 1) * batches) as f64).sqrt()
        } else {
            f64::INFINITY
        };
        sq_gap += (avg - e_mean).norm_sqr();
        sq_se += time_se * time_se + e_se * e_se;
        averages.push(avg);
    }
    let reps = long.replicates().max(1) as f64;
    let gap = (sq_gap / reps).sqrt();
    let stderr = (sq_se / reps).sqrt();
    let decorrelation_lengths = decay_length.map(|d| window_length(long) / d);
    let verdict = if gap > 4.0 * stderr {
        ErgodicVerdict::NonErgodic
    } else if decorrelation_lengths.is_some_and(|w| w < MIN_DECORRELATION_LENGTHS) {
        ErgodicVerdict::Inconclusive
    } else {
        ErgodicVerdict::Ergodic
    };
    Ok(ErgodicReport {
        time_averages: averages,
        ensemble_mean: e_mean,
        ensemble_stderr: e_se,
        gap,
        stderr,
        decorrelation_lengths,
        verdict,
    })
}

fn window_length(real: &FieldRealization) -> f64 {
    let l = real.l();
    (0..l)
        .map(|i| {
            let (lo, hi) = real
                .t_points()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[i]), b.max(p[i])));
            hi - lo
        })
        .fold(f64::INFINITY, f64::min)
}

/// Grid on (−T, T]^l with spacing min(1, decay/10).
pub fn time_average_grid(t: f64, l: usize, decay_length: Option<f64>) -> Vec<Vec<f64>> {
    let spacing = decay_length.map_or(1.0, |d| (d / 10.0).min(1.0));
    let n = (2.0 * t / spacing).round().max(1.0) as usize;
    let axis: Vec<f64> = (1..=n).map(|i| -t + i as f64 * (2.0 * t / n as f64)).collect();
    let total = n.pow(l as u32);
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            (0..l)
                .map(|_| {
                    let k = rem % n;
                    rem /= n;
                    axis[k]
                })
                .collect()
        })
        .collect()
}

/// Fuses the weak-mixing and ergodicity verdicts; disagreement is
/// inconclusive.
pub fn fuse_verdicts(weak: Verdict, ergodic: ErgodicVerdict) -> Verdict {
    match (weak, ergodic) {
        (Verdict::ConsistentWithMixing, ErgodicVerdict::Ergodic) => Verdict::ConsistentWithMixing,
        (Verdict::Inconsistent, ErgodicVerdict::NonErgodic) => Verdict::Inconsistent,
        _ => Verdict::Inconclusive,
    }
}

/// Gram matrix [τ^{(jk)}(t_a − t_b)] and its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct NndReport {
    pub gram: DMatrix<Complex64>,
    /// ‖G − G^H‖_F.
    pub asymmetry: f64,
    /// Smallest eigenvalue of (G + G^H)/2.
    pub min_eigenvalue: f64,
    pub norm: f64,
    /// max(0, −min eigenvalue) / ‖G‖_F.
    pub defect: f64,
}

impl NndReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.min_eigenvalue >= -rel_tol * self.norm.max(f64::MIN_POSITIVE)
    }
}

pub fn codiff_nnd_check(field: &dyn IdField, points: &[Vec<f64>], j: usize, k: usize) -> Result<NndReport> {
    let m = points.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).collect();
    let entries: Vec<Complex64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let lag: Vec<f64> = points[a].iter().zip(&points[b]).map(|(x, y)| x - y).collect();
            codifference_analytic(field, &lag, j, k)
        })
        .collect::<Result<_>>()?;
    let gram = DMatrix::from_fn(m, m, |a, b| entries[a * m + b]);
    let herm = (&gram + gram.adjoint()) * Complex64::new(0.5, 0.0);
    let asymmetry = (&gram - gram.adjoint()).norm();
    let norm = gram.norm();
    let min_eigenvalue = if m == 0 {
        0.0
    } else {
        SymmetricEigen::new(herm).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(NndReport {
        gram,
        asymmetry,
        min_eigenvalue,
        norm,
        defect: if norm > 0.0 { (-min_eigenvalue).max(0.0) / norm } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn densities() {
        let full = density_of_set(&DensityOneSet::Full { l: 2 }, &[1.0, 10.0]).unwrap();
        assert!(full.values.iter().all(|v| v.1 == 1.0));
        let half = density_of_set(&DensityOneSet::HalfSpace { l: 1, axis: 0 }, &[3.0, 7.5]).unwrap();
        assert!(half.values.iter().all(|v| (v.1 - 0.5).abs() < 1e-15));
        let fixed = DensityOneSet::LatticeBallComplement {
            l: 1,
            radius: 1.0,
            shrinking: false,
        };
        let tr = density_of_set(&fixed, &[10.0, 100.0, 1000.0]).unwrap();
        for (t, v, c) in &tr.values {
            assert!((v - c.unwrap()).abs() < 1e-12);
            assert!((v - (1.0 - 1.0 / PI)).abs() <= 2.0 / t);
        }
        assert!(!tr.density_one);
        let ex = density_of_set(&DensityOneSet::exemplar(1), &[10.0, 1000.0]).unwrap();
        assert!(ex.density_one);
        assert!(ex.values[1].1 > ex.values[0].1);
    }

    #[test]
    fn cesaro_examples() {
        let one = cesaro_average(|_| Complex64::new(1.0, 0.0), 7.0, 1, 3).unwrap();
        assert!((one.value.re - 1.0).abs() < 1e-14);
        let atoms = vec![Atom::new(vec![1.0], 1.0)];
        let f = fourier_of_atoms(&atoms);
        let v = cesaro_average(&f, 100.0, 1, cells_for_frequency(100.0, 1.0)).unwrap();
        assert!((v.value.re - 100f64.sin() / 100.0).abs() < 1e-12);
        assert!((v.value.re + 0.0050637).abs() < 1e-7);
    }

    #[test]
    fn outside_set_is_refused() {
        let set = DensityOneSet::HalfSpace { l: 1, axis: 0 };
        let f = crate::field::ConstantField::new(crate::idlaw::CharTriplet::zero(1), 1).unwrap();
        let seq = SequenceSpec::custom(vec![vec![1.0], vec![-2.0]]).unwrap();
        assert!(matches!(weak_mixing_check(&f, &set, &seq), Err(Error::OutsideDensitySet(_))));
    }

    #[test]
    fn grid_spacing() {
        let g = time_average_grid(5.0, 1, Some(2.0));
        assert_eq!(g.len(), 50);
        assert!((g[1][0] - g[0][0] - 0.2).abs() < 1e-12);
    }
}
