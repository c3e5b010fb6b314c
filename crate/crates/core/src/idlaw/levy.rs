use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{Integral, QuadSpec};
use crate::rng::StreamRng;

/// Images closer than this to the origin are dropped from Lévy measures.
pub const ORIGIN_TOL: f64 = 1e-12;

/// A point mass of a Lévy measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: DVector<f64>,
    pub mass: f64,
}

impl Atom {
    pub fn new(point: impl Into<Vec<f64>>, mass: f64) -> Self {
        Atom {
            point: DVector::from_vec(point.into()),
            mass,
        }
    }
}

/// Moments of the part of a Lévy measure inside and outside an ε-ball.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallJumpBudget {
    pub eps: f64,
    /// Q(‖x‖ > ε)
    pub mass_above: f64,
    /// ∫_{ε<‖x‖≤1} x Q(dx), the compensator of the retained jumps.
    pub compensator_above: DVector<f64>,
    /// ∫_{‖x‖≤ε} x x' Q(dx), covariance of the dropped jumps.
    pub covariance_below: DMatrix<f64>,
    /// ∫_{‖x‖≤ε} ‖x‖ Q(dx); bounds the L¹ bias of dropping small jumps
    /// when finite.
    pub first_moment_below: f64,
}

/// A Lévy measure given by a density (or any non-atomic description) that
/// can be integrated numerically and, optionally, sampled above a cut-off.
pub trait LevyDensity: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    /// ∫ g dQ over R^d \ {0}.
    fn integrate(&self, g: &dyn Fn(&[f64]) -> Complex64, spec: &QuadSpec) -> Result<Integral<Complex64>>;

    /// ∫ (e^{i⟨θ,x⟩} − 1 − i⟨θ,x⟩ 1{‖x‖≤1}) Q(dx).
    fn compensated_term(&self, theta: &[f64], spec: &QuadSpec) -> Result<Integral<Complex64>> {
        self.integrate(&|x| compensated_integrand(theta, x), spec)
    }

    /// ∫ (e^{wx} − 1 − wx 1{|x|≤1}) Q(dx) for one-dimensional measures and Re w ≤ 0.
    fn compensated_laplace(&self, w: Complex64, spec: &QuadSpec) -> Result<Integral<Complex64>> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch {
                context: "Laplace exponent",
                expected: 1,
                found: self.dim(),
            });
        }
        self.integrate(
            &|x| {
                let v = x[0];
                let c = if v.abs() <= 1.0 { w * v } else { Complex64::new(0.0, 0.0) };
                (w * v).exp() - 1.0 - c
            },
            spec,
        )
    }

    /// Whether the measure is declared free of atoms.
    fn is_atomless(&self) -> bool {
        true
    }

    /// Whether the measure is concentrated on (0, ∞) (one-dimensional only).
    fn on_positive_halfline(&self) -> bool {
        false
    }

    fn has_sampler(&self) -> bool {
        false
    }

    /// Q(‖x‖ > ε).
    fn mass_above(&self, eps: f64) -> Result<f64> {
        let spec = QuadSpec::default();
        Ok(self
            .integrate(&|x| indicator(norm(x) > eps), &spec)?
            .value
            .re)
    }

    /// Draws one jump from Q restricted to ‖x‖ > ε and normalised.
    fn sample_above(&self, _eps: f64, _rng: &mut StreamRng) -> Result<DVector<f64>> {
        Err(Error::SamplerMissing(self.name()))
    }

    fn small_jump_budget(&self, eps: f64) -> Result<SmallJumpBudget> {
        generic_budget(self, eps)
    }
}

pub(crate) fn indicator(b: bool) -> Complex64 {
    Complex64::new(if b { 1.0 } else { 0.0 }, 0.0)
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// e^{i⟨θ,x⟩} − 1 − i⟨θ,x⟩ 1{‖x‖≤1}
pub(crate) fn compensated_integrand(theta: &[f64], x: &[f64]) -> Complex64 {
    let p = dot(theta, x);
    let comp = if norm(x) <= 1.0 { p } else { 0.0 };
    Complex64::new(p.cos() - 1.0, p.sin() - comp)
}

fn generic_budget<D: LevyDensity + ?Sized>(q: &D, eps: f64) -> Result<SmallJumpBudget> {
    let d = q.dim();
    let spec = QuadSpec::default();
    let mass_above = q.integrate(&|x| indicator(norm(x) > eps), &spec)?.value.re;
    let mut compensator_above = DVector::zeros(d);
    let mut covariance_below = DMatrix::zeros(d, d);
    for i in 0..d {
        compensator_above[i] = q
            .integrate(
                &|x| {
                    let r = norm(x);
                    Complex64::new(if r > eps && r <= 1.0 { x[i] } else { 0.0 }, 0.0)
                },
                &spec,
            )?
            .value
            .re;
        for j in 0..d {
            covariance_below[(i, j)] = q
                .integrate(
                    &|x| Complex64::new(if norm(x) <= eps { x[i] * x[j] } else { 0.0 }, 0.0),
                    &spec,
                )?
                .value
                .re;
        }
    }
    let first_moment_below = q
        .integrate(
            &|x| {
                let r = norm(x);
                Complex64::new(if r <= eps { r } else { 0.0 }, 0.0)
            },
            &spec,
        )?
        .value
        .re;
    Ok(SmallJumpBudget {
        eps,
        mass_above,
        compensator_above,
        covariance_below,
        first_moment_below,
    })
}

/// Representation of a Lévy measure on R^d \ {0}.
#[derive(Debug, Clone)]
pub enum LevyMeasure {
    /// Finitely many point masses; all integrals are exact sums.
    Atomic { dim: usize, atoms: Vec<Atom> },
    Parametric(Arc<dyn LevyDensity>),
    /// Image of `base` under x ↦ map·x. `correction` is
    /// ∫ Mx (1{‖Mx‖≤1} − 1{‖x‖≤1}) base(dx), the drift shift induced by
    /// moving the truncation ball.
    Pushforward {
        base: Box<LevyMeasure>,
        map: DMatrix<f64>,
        correction: DVector<f64>,
    },
    Scaled { base: Box<LevyMeasure>, factor: f64 },
    Sum(Vec<LevyMeasure>),
}

/// Outcome of scanning a measure's atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicPart {
    pub atoms: Vec<Atom>,
    /// False when some component is neither atomic nor declared atomless.
    pub complete: bool,
    /// True when the measure is purely atomic.
    pub purely_atomic: bool,
}

impl LevyMeasure {
    pub fn zero(dim: usize) -> Self {
        LevyMeasure::Atomic {
            dim,
            atoms: Vec::new(),
        }
    }

    /// Builds an atomic measure, merging atoms at equal points.
    pub fn atomic(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        for (i, a) in atoms.iter().enumerate() {
            if a.point.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "atom point",
                    expected: dim,
                    found: a.point.len(),
                });
            }
            if !(a.mass > 0.0) || !a.mass.is_finite() {
                return Err(Error::InvalidModel(format!("atom {i} has non-positive mass {}", a.mass)));
            }
            if a.point.norm() <= ORIGIN_TOL {
                return Err(Error::InvalidModel(format!("atom {i} sits at the origin")));
            }
        }
        Ok(LevyMeasure::Atomic {
            dim,
            atoms: merge_atoms(atoms),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            LevyMeasure::Atomic { dim, .. } => *dim,
            LevyMeasure::Parametric(p) => p.dim(),
            LevyMeasure::Pushforward { map, .. } => map.nrows(),
            LevyMeasure::Scaled { base, .. } => base.dim(),
            LevyMeasure::Sum(parts) => parts.first().map(|p| p.dim()).unwrap_or(0),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LevyMeasure::Atomic { atoms, .. } => atoms.is_empty(),
            LevyMeasure::Scaled { base, factor } => *factor == 0.0 || base.is_zero(),
            LevyMeasure::Sum(parts) => parts.iter().all(|p| p.is_zero()),
            LevyMeasure::Pushforward { base, .. } => base.is_zero(),
            LevyMeasure::Parametric(_) => false,
        }
    }

    /// ∫ g dQ. Exact for atomic measures.
    pub fn integrate(&self, g: &dyn Fn(&[f64]) -> Complex64, spec: &QuadSpec) -> Result<Integral<Complex64>> {
        match self {
            LevyMeasure::Atomic { atoms, .. } => {
                let v = atoms
                    .iter()
                    .fold(Complex64::new(0.0, 0.0), |acc, a| acc + g(a.point.as_slice()) * a.mass);
                Ok(Integral::exact(v))
            }
            LevyMeasure::Parametric(p) => p.integrate(g, spec),
            LevyMeasure::Pushforward { base, map, .. } => {
                let q = map.nrows();
                base.integrate(
                    &|x| {
                        let mut y = vec![0.0; q];
                        apply(map, x, &mut y);
                        if norm(&y) <= ORIGIN_TOL {
                            Complex64::new(0.0, 0.0)
                        } else {
                            g(&y)
                        }
                    },
                    spec,
                )
            }
            LevyMeasure::Scaled { base, factor } => {
                if *factor == 0.0 {
                    return Ok(Integral::exact(Complex64::new(0.0, 0.0)));
                }
                Ok(base.integrate(g, spec)?.map(|v| v * *factor))
            }
            LevyMeasure::Sum(parts) => sum_integrals(parts.iter().map(|p| p.integrate(g, spec))),
        }
    }

    /// Real-valued convenience wrapper around [`LevyMeasure::integrate`].
    pub fn integrate_real(&self, g: &dyn Fn(&[f64]) -> f64, spec: &QuadSpec) -> Result<Integral<f64>> {
        Ok(self
            .integrate(&|x| Complex64::new(g(x), 0.0), spec)?
            .map(|v| v.re))
    }

    /// ∫ (e^{i⟨θ,x⟩} − 1 − i⟨θ,x⟩ 1{‖x‖≤1}) Q(dx).
    pub fn compensated_term(&self, theta: &[f64], spec: &QuadSpec) -> Result<Integral<Complex64>> {
        match self {
            LevyMeasure::Atomic { atoms, .. } => {
                let v = atoms.iter().fold(Complex64::new(0.0, 0.0), |acc, a| {
                    acc + compensated_integrand(theta, a.point.as_slice()) * a.mass
                });
                Ok(Integral::exact(v))
            }
            LevyMeasure::Parametric(p) => p.compensated_term(theta, spec),
            LevyMeasure::Pushforward {
                base,
                map,
                correction,
            } => {
                let pulled: Vec<f64> = (map.transpose() * DVector::from_column_slice(theta)).iter().copied().collect();
                let shift = dot(theta, correction.as_slice());
                Ok(base
                    .compensated_term(&pulled, spec)?
                    .map(|v| v - Complex64::new(0.0, shift)))
            }
            LevyMeasure::Scaled { base, factor } => {
                if *factor == 0.0 {
                    return Ok(Integral::exact(Complex64::new(0.0, 0.0)));
                }
                Ok(base.compensated_term(theta, spec)?.map(|v| v * *factor))
            }
            LevyMeasure::Sum(parts) => sum_integrals(parts.iter().map(|p| p.compensated_term(theta, spec))),
        }
    }

    /// ∫ (e^{wx} − 1 − wx 1{|x|≤1}) Q(dx), one-dimensional, Re w ≤ 0.
    pub fn compensated_laplace(&self, w: Complex64, spec: &QuadSpec) -> Result<Integral<Complex64>> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch {
                context: "Laplace exponent",
                expected: 1,
                found: self.dim(),
            });
        }
        match self {
            LevyMeasure::Atomic { atoms, .. } => {
                let v = atoms.iter().fold(Complex64::new(0.0, 0.0), |acc, a| {
                    let x = a.point[0];
                    let c = if x.abs() <= 1.0 { w * x } else { Complex64::new(0.0, 0.0) };
                    acc + ((w * x).exp() - 1.0 - c) * a.mass
                });
                Ok(Integral::exact(v))
            }
            LevyMeasure::Parametric(p) => p.compensated_laplace(w, spec),
            LevyMeasure::Pushforward {
                base,
                map,
                correction,
            } => {
                if base.dim() == 1 {
                    let m = map[(0, 0)];
                    Ok(base
                        .compensated_laplace(w * m, spec)?
                        .map(|v| v - w * correction[0]))
                } else {
                    self.integrate(
                        &|x| {
                            let v = x[0];
                            let c = if v.abs() <= 1.0 { w * v } else { Complex64::new(0.0, 0.0) };
                            (w * v).exp() - 1.0 - c
                        },
                        spec,
                    )
                }
            }
            LevyMeasure::Scaled { base, factor } => {
                if *factor == 0.0 {
                    return Ok(Integral::exact(Complex64::new(0.0, 0.0)));
                }
                Ok(base.compensated_laplace(w, spec)?.map(|v| v * *factor))
            }
            LevyMeasure::Sum(parts) => sum_integrals(parts.iter().map(|p| p.compensated_laplace(w, spec))),
        }
    }

    /// ∫ min(1, ‖x‖²) Q(dx).
    pub fn integrability(&self, spec: &QuadSpec) -> Result<Integral<f64>> {
        self.integrate_real(&|x| dot(x, x).min(1.0), spec)
    }

    /// Atoms of the measure, with flags describing how complete the list is.
    pub fn atomic_part(&self) -> AtomicPart {
        match self {
            LevyMeasure::Atomic { atoms, .. } => AtomicPart {
                atoms: atoms.clone(),
                complete: true,
                purely_atomic: true,
            },
            LevyMeasure::Parametric(p) => AtomicPart {
                atoms: Vec::new(),
                complete: p.is_atomless(),
                purely_atomic: false,
            },
            LevyMeasure::Pushforward { base, map, .. } => {
                let inner = base.atomic_part();
                let atoms = inner
                    .atoms
                    .into_iter()
                    .filter_map(|a| {
                        let p = map * &a.point;
                        (p.norm() > ORIGIN_TOL).then_some(Atom { point: p, mass: a.mass })
                    })
                    .collect();
                AtomicPart {
                    atoms: merge_atoms(atoms),
                    complete: inner.complete,
                    purely_atomic: inner.purely_atomic,
                }
            }
            LevyMeasure::Scaled { base, factor } => {
                let inner = base.atomic_part();
                if *factor == 0.0 {
                    return AtomicPart {
                        atoms: Vec::new(),
                        complete: true,
                        purely_atomic: true,
                    };
                }
                AtomicPart {
                    atoms: inner
                        .atoms
                        .into_iter()
                        .map(|a| Atom {
                            point: a.point,
                            mass: a.mass * factor,
                        })
                        .collect(),
                    ..inner
                }
            }
            LevyMeasure::Sum(parts) => {
                let mut atoms = Vec::new();
                let mut complete = true;
                let mut purely_atomic = true;
                for p in parts {
                    let a = p.atomic_part();
                    atoms.extend(a.atoms);
                    complete &= a.complete;
                    purely_atomic &= a.purely_atomic;
                }
                AtomicPart {
                    atoms: merge_atoms(atoms),
                    complete,
                    purely_atomic,
                }
            }
        }
    }

    /// Collapses scaled/summed/pushed-forward atomic measures into one atom list.
    pub fn to_atomic(&self) -> Option<LevyMeasure> {
        let part = self.atomic_part();
        part.purely_atomic.then(|| LevyMeasure::Atomic {
            dim: self.dim(),
            atoms: part.atoms,
        })
    }

    /// Scales the measure by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> LevyMeasure {
        if factor == 0.0 || self.is_zero() {
            return LevyMeasure::zero(self.dim());
        }
        if factor == 1.0 {
            return self.clone();
        }
        match self {
            LevyMeasure::Atomic { dim, atoms } => LevyMeasure::Atomic {
                dim: *dim,
                atoms: atoms
                    .iter()
                    .map(|a| Atom {
                        point: a.point.clone(),
                        mass: a.mass * factor,
                    })
                    .collect(),
            },
            LevyMeasure::Scaled { base, factor: f } => LevyMeasure::Scaled {
                base: base.clone(),
                factor: f * factor,
            },
            other => LevyMeasure::Scaled {
                base: Box::new(other.clone()),
                factor,
            },
        }
    }

    /// Measure sum; atomic + atomic stays atomic.
    pub fn add(&self, other: &LevyMeasure) -> LevyMeasure {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        match (self, other) {
            (LevyMeasure::Atomic { dim, atoms: a }, LevyMeasure::Atomic { atoms: b, .. }) => {
                let mut all = a.clone();
                all.extend(b.iter().cloned());
                LevyMeasure::Atomic {
                    dim: *dim,
                    atoms: merge_atoms(all),
                }
            }
            (LevyMeasure::Sum(a), LevyMeasure::Sum(b)) => {
                let mut parts = a.clone();
                parts.extend(b.iter().cloned());
                LevyMeasure::Sum(parts)
            }
            (LevyMeasure::Sum(a), b) => {
                let mut parts = a.clone();
                parts.push(b.clone());
                LevyMeasure::Sum(parts)
            }
            (a, b) => LevyMeasure::Sum(vec![a.clone(), b.clone()]),
        }
    }

    /// Whether every component has a jump sampler.
    pub fn can_sample(&self) -> bool {
        match self {
            LevyMeasure::Atomic { .. } => true,
            LevyMeasure::Parametric(p) => p.has_sampler(),
            LevyMeasure::Pushforward { base, .. } | LevyMeasure::Scaled { base, .. } => base.can_sample(),
            LevyMeasure::Sum(parts) => parts.iter().all(|p| p.can_sample()),
        }
    }

    /// Whether the measure is concentrated on (0, ∞) (one-dimensional).
    pub fn on_positive_halfline(&self) -> bool {
        if self.dim() != 1 {
            return false;
        }
        match self {
            LevyMeasure::Atomic { atoms, .. } => atoms.iter().all(|a| a.point[0] > 0.0),
            LevyMeasure::Parametric(p) => p.on_positive_halfline(),
            LevyMeasure::Pushforward { base, map, .. } => base.on_positive_halfline() && map[(0, 0)] > 0.0,
            LevyMeasure::Scaled { base, .. } => base.on_positive_halfline(),
            LevyMeasure::Sum(parts) => parts.iter().all(|p| p.on_positive_halfline()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LevyMeasure::Atomic { atoms, .. } if atoms.is_empty() => "0".into(),
            LevyMeasure::Atomic { atoms, .. } => {
                let parts: Vec<String> = atoms
                    .iter()
                    .map(|a| format!("{}·δ{:?}", a.mass, a.point.as_slice()))
                    .collect();
                parts.join(" + ")
            }
            LevyMeasure::Parametric(p) => p.name(),
            LevyMeasure::Pushforward { base, .. } => format!("pushforward({})", base.describe()),
            LevyMeasure::Scaled { base, factor } => format!("{factor}·({})", base.describe()),
            LevyMeasure::Sum(parts) => parts.iter().map(|p| p.describe()).collect::<Vec<_>>().join(" + "),
        }
    }
}

pub(crate) fn apply(map: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..map.ncols()).map(|j| map[(i, j)] * x[j]).sum();
    }
}

fn sum_integrals(parts: impl Iterator<Item = Result<Integral<Complex64>>>) -> Result<Integral<Complex64>> {
    let mut total = Integral::exact(Complex64::new(0.0, 0.0));
    for p in parts {
        let p = p?;
        total.value += p.value;
        total.error += p.error;
        total.evaluations += p.evaluations;
        total.converged &= p.converged;
    }
    Ok(total)
}

/// Merges atoms whose points agree to 1e-12 (absolute, per coordinate),
/// keeping first-appearance order.
pub fn merge_atoms(atoms: Vec<Atom>) -> Vec<Atom> {
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        if let Some(existing) = out.iter_mut().find(|b| {
            b.point.len() == a.point.len() && b.point.iter().zip(a.point.iter()).all(|(x, y)| (x - y).abs() <= 1e-12)
        }) {
            existing.mass += a.mass;
        } else {
            out.push(a);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_rejects_origin_and_bad_mass() {
        assert!(LevyMeasure::atomic(1, vec![Atom::new(vec![0.0], 1.0)]).is_err());
        assert!(LevyMeasure::atomic(1, vec![Atom::new(vec![1.0], -1.0)]).is_err());
        assert!(LevyMeasure::atomic(2, vec![Atom::new(vec![1.0], 1.0)]).is_err());
    }

    #[test]
    fn merge_combines_equal_points() {
        let m = LevyMeasure::atomic(1, vec![Atom::new(vec![1.0], 1.0), Atom::new(vec![1.0], 2.0)]).unwrap();
        match m {
            LevyMeasure::Atomic { atoms, .. } => {
                assert_eq!(atoms.len(), 1);
                assert_eq!(atoms[0].mass, 3.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn pushforward_drops_origin_images() {
        let base = LevyMeasure::atomic(2, vec![Atom::new(vec![0.0, 1.0], 1.0), Atom::new(vec![1.0, 1.0], 2.0)]).unwrap();
        let map = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let pf = LevyMeasure::Pushforward {
            base: Box::new(base),
            map,
            correction: DVector::zeros(1),
        };
        let mass = pf.integrate_real(&|_| 1.0, &QuadSpec::default()).unwrap().value;
        assert_eq!(mass, 2.0);
        assert_eq!(pf.atomic_part().atoms.len(), 1);
    }
}
