//! Time-homogeneous factorisable Lévy bases on S × R^l with a finite mixing
//! space S, and independent per-cell increment sampling.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::idlaw::{Atom, CharTriplet, LevyDensity, LevyMeasure, SmallJumpBudget};
use crate::rng::{stream, StreamRng, SALT_BASIS};

/// (γ, Σ, Q, π): base triplet, mixing weights over S = {A_1, …, A_K}, and
/// the spatial dimension l.
#[derive(Debug, Clone)]
pub struct GeneratingQuadruple {
    base: CharTriplet,
    weights: Vec<f64>,
    l: usize,
}

impl GeneratingQuadruple {
    pub fn new(base: CharTriplet, weights: Vec<f64>, l: usize) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidModel("mixing space needs at least one class".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidModel(format!("mixing weights must be positive, got {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("mixing weights sum to {total}, not 1")));
        }
        if l == 0 {
            return Err(Error::InvalidModel("spatial dimension l must be positive".into()));
        }
        Ok(GeneratingQuadruple { base, weights, l })
    }

    /// Single-class mixing space.
    pub fn homogeneous(base: CharTriplet, l: usize) -> Result<Self> {
        GeneratingQuadruple::new(base, vec![1.0], l)
    }

    pub fn base(&self) -> &CharTriplet {
        &self.base
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn d(&self) -> usize {
        self.base.dim()
    }

    /// Law of Λ(B) for a set with Π(B) = `cell_measure`.
    pub fn cell_law(&self, cell_measure: f64) -> Result<CharTriplet> {
        cell_law(self, cell_measure)
    }
}

/// Law of Λ(B) when Π(B) = `cell_measure`: every component scaled.
pub fn cell_law(q: &GeneratingQuadruple, cell_measure: f64) -> Result<CharTriplet> {
    if cell_measure < 0.0 || !cell_measure.is_finite() {
        return Err(Error::NegativeMeasure(cell_measure));
    }
    q.base.scaled(cell_measure)
}

/// One cell of a partition: a class of S times a spatial box.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub class: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Π(cell) = π(A)·volume(box).
    pub measure: f64,
}

impl Cell {
    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// A regular grid of boxes over a spatial window, repeated for every class of S.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    pub lower: Vec<f64>,
    pub h: Vec<f64>,
    pub counts: Vec<usize>,
    weights: Vec<f64>,
}

impl CellPartition {
    /// Grid with edges on the lattice hZ, covering `[lower, upper]`.
    pub fn aligned(lower: &[f64], upper: &[f64], h: &[f64], weights: &[f64]) -> Result<Self> {
        let l = lower.len();
        if upper.len() != l || h.len() != l {
            return Err(Error::DimensionMismatch {
                context: "cell partition",
                expected: l,
                found: upper.len().max(h.len()),
            });
        }
        if h.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidModel(format!("cell size must be positive, got {h:?}")));
        }
        let mut lo = Vec::with_capacity(l);
        let mut counts = Vec::with_capacity(l);
        for i in 0..l {
            if !(upper[i] >= lower[i]) {
                return Err(Error::InvalidModel(format!("empty window on axis {i}")));
            }
            let a = (lower[i] / h[i] + 1e-9).floor();
            let b = (upper[i] / h[i] - 1e-9).ceil();
            lo.push(a * h[i]);
            counts.push(((b - a).round() as usize).max(1));
        }
        Ok(CellPartition {
            lower: lo,
            h: h.to_vec(),
            counts,
            weights: weights.to_vec(),
        })
    }

    pub fn l(&self) -> usize {
        self.lower.len()
    }

    pub fn upper(&self) -> Vec<f64> {
        (0..self.l()).map(|i| self.lower[i] + self.h[i] * self.counts[i] as f64).collect()
    }

    pub fn boxes(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn len(&self) -> usize {
        self.boxes() * self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Cell number `index`; classes vary slowest.
    pub fn cell(&self, index: usize) -> Cell {
        let nb = self.boxes();
        let class = index / nb;
        let mut rem = index % nb;
        let l = self.l();
        let mut lower = vec![0.0; l];
        let mut upper = vec![0.0; l];
        for i in (0..l).rev() {
            let k = rem % self.counts[i];
            rem /= self.counts[i];
            lower[i] = self.lower[i] + self.h[i] * k as f64;
            upper[i] = lower[i] + self.h[i];
        }
        Cell {
            class,
            lower,
            upper,
            measure: self.weights[class] * self.volume(),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(move |i| self.cell(i))
    }
}

/// Treatment of jumps below the truncation level of parametric measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmallJumps {
    /// Dropped; the increment loses ∫_{‖x‖≤ε} x x' Q(dx) of covariance.
    #[default]
    Drop,
    /// Replaced by a centred Gaussian with the dropped covariance.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpTruncation {
    pub eps: f64,
    pub small: SmallJumps,
}

impl Default for JumpTruncation {
    fn default() -> Self {
        JumpTruncation {
            eps: 1e-3,
            small: SmallJumps::Drop,
        }
    }
}

#[derive(Debug, Clone)]
enum JumpPlan {
    Atomic {
        atoms: Vec<Atom>,
        /// ∫_{‖x‖≤1} x Q(dx)
        compensator: DVector<f64>,
    },
    Parametric {
        density: Arc<dyn LevyDensity>,
        budget: SmallJumpBudget,
        small_factor: Option<DMatrix<f64>>,
    },
    Pushforward {
        base: Box<JumpPlan>,
        map: DMatrix<f64>,
        correction: DVector<f64>,
    },
    Scaled {
        base: Box<JumpPlan>,
        factor: f64,
    },
    Sum(Vec<JumpPlan>),
}

impl JumpPlan {
    fn compile(levy: &LevyMeasure, trunc: &JumpTruncation) -> Result<Self> {
        Ok(match levy {
            LevyMeasure::Atomic { dim, atoms } => {
                let mut compensator = DVector::zeros(*dim);
                for a in atoms {
                    if a.point.norm() <= 1.0 {
                        compensator += &a.point * a.mass;
                    }
                }
                JumpPlan::Atomic {
                    atoms: atoms.clone(),
                    compensator,
                }
            }
            LevyMeasure::Parametric(p) => {
                if !p.has_sampler() {
                    return Err(Error::SamplerMissing(p.name()));
                }
                let budget = p.small_jump_budget(trunc.eps)?;
                let small_factor = match trunc.small {
                    SmallJumps::Drop => None,
                    SmallJumps::Gaussian => Some(psd_factor(&budget.covariance_below)),
                };
                JumpPlan::Parametric {
                    density: p.clone(),
                    budget,
                    small_factor,
                }
            }
            LevyMeasure::Pushforward {
                base,
                map,
                correction,
            } => JumpPlan::Pushforward {
                base: Box::new(JumpPlan::compile(base, trunc)?),
                map: map.clone(),
                correction: correction.clone(),
            },
            LevyMeasure::Scaled { base, factor } => JumpPlan::Scaled {
                base: Box::new(JumpPlan::compile(base, trunc)?),
                factor: *factor,
            },
            LevyMeasure::Sum(parts) => JumpPlan::Sum(
                parts
                    .iter()
                    .map(|p| JumpPlan::compile(p, trunc))
                    .collect::<Result<Vec<_>>>()?,
            ),
        })
    }

    /// Adds a draw whose law has cumulant m·∫(e^{i⟨θ,x⟩} − 1 − i⟨θ,x⟩1{‖x‖≤1})Q(dx).
    fn sample_into(&self, m: f64, rng: &mut StreamRng, out: &mut DVector<f64>) -> Result<()> {
        match self {
            JumpPlan::Atomic { atoms, compensator } => {
                for a in atoms {
                    let n = poisson(m * a.mass, rng)?;
                    if n > 0 {
                        out.axpy(n as f64, &a.point, 1.0);
                    }
                }
                out.axpy(-m, compensator, 1.0);
            }
            JumpPlan::Parametric {
                density,
                budget,
                small_factor,
            } => {
                let n = poisson(m * budget.mass_above, rng)?;
                for _ in 0..n {
                    let x = density.sample_above(budget.eps, rng)?;
                    *out += x;
                }
                out.axpy(-m, &budget.compensator_above, 1.0);
                if let Some(f) = small_factor {
                    let z = normal_vector(f.ncols(), rng);
                    out.axpy(m.sqrt(), &(f * z), 1.0);
                }
            }
            JumpPlan::Pushforward {
                base,
                map,
                correction,
            } => {
                let mut inner = DVector::zeros(map.ncols());
                base.sample_into(m, rng, &mut inner)?;
                *out += map * inner;
                out.axpy(-m, correction, 1.0);
            }
            JumpPlan::Scaled { base, factor } => base.sample_into(m * factor, rng, out)?,
            JumpPlan::Sum(parts) => {
                for p in parts {
                    p.sample_into(m, rng, out)?;
                }
            }
        }
        Ok(())
    }
}

fn poisson(rate: f64, rng: &mut StreamRng) -> Result<u64> {
    if rate <= 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(rate).map_err(|e| Error::Internal(format!("Poisson({rate}): {e}")))?;
    Ok(p.sample(rng) as u64)
}

fn normal_vector(n: usize, rng: &mut StreamRng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A factor F with F F' = Σ for a symmetric positive semidefinite Σ.
pub(crate) fn psd_factor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sigma.nrows();
    if sigma.iter().all(|v| *v == 0.0) {
        return DMatrix::zeros(n, n);
    }
    if let Some(c) = sigma.clone().cholesky() {
        return c.l();
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

/// Draws increments of the ID law with cumulant m·ψ for arbitrary m ≥ 0.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    gamma: DVector<f64>,
    gauss_factor: Option<DMatrix<f64>>,
    jumps: Option<JumpPlan>,
    truncation: JumpTruncation,
}

impl IncrementSampler {
    pub fn new(base: &CharTriplet, truncation: JumpTruncation) -> Result<Self> {
        let gauss_factor = if base.sigma().iter().all(|v| *v == 0.0) {
            None
        } else {
            Some(psd_factor(base.sigma()))
        };
        let jumps = if base.levy().is_zero() {
            None
        } else {
            let levy = base.levy().to_atomic().unwrap_or_else(|| base.levy().clone());
            Some(JumpPlan::compile(&levy, &truncation)?)
        };
        Ok(IncrementSampler {
            gamma: base.gamma().clone(),
            gauss_factor,
            jumps,
            truncation,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn truncation(&self) -> JumpTruncation {
        self.truncation
    }

    pub fn is_zero(&self) -> bool {
        self.gauss_factor.is_none() && self.jumps.is_none() && self.gamma.iter().all(|v| *v == 0.0)
    }

    /// One draw of the law with cumulant `m`·ψ.
    pub fn sample(&self, m: f64, rng: &mut StreamRng) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim());
        self.sample_into(m, rng, &mut out)?;
        Ok(out)
    }

    pub fn sample_into(&self, m: f64, rng: &mut StreamRng, out: &mut DVector<f64>) -> Result<()> {
        out.fill(0.0);
        if m <= 0.0 {
            return Ok(());
        }
        out.axpy(m, &self.gamma, 0.0);
        if let Some(f) = &self.gauss_factor {
            let z = normal_vector(f.ncols(), rng);
            out.axpy(m.sqrt(), &(f * z), 1.0);
        }
        if let Some(j) = &self.jumps {
            j.sample_into(m, rng, out)?;
        }
        Ok(())
    }
}

/// Independent increments Λ(cell) for every cell of `partition`, in cell order.
///
/// Each cell draws from its own stream keyed by `(seed, replicate, cell)`.
pub fn sample_increments(
    q: &GeneratingQuadruple,
    partition: &CellPartition,
    seed: u64,
    replicate: u64,
    truncation: JumpTruncation,
) -> Result<Vec<DVector<f64>>> {
    if partition.l() != q.l() {
        return Err(Error::DimensionMismatch {
            context: "partition dimension",
            expected: q.l(),
            found: partition.l(),
        });
    }
    let sampler = IncrementSampler::new(q.base(), truncation)?;
    (0..partition.len())
        .into_par_iter()
        .map(|i| {
            let cell = partition.cell(i);
            let mut rng = stream(seed, replicate, i as u64, SALT_BASIS);
            sampler.sample(cell.measure, &mut rng)
        })
        .collect()
}
