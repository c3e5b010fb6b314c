//! Lévy sheets and extended subordination.
//!
//! A basis M over cells is built from a space sheet Λ_X and a nonnegative
//! meta-time sheet Λ_T through the conditional law
//! M(A) | Λ_T(A) = v  ~  ID with exponent v·ψ_X. Its unit-cell exponent is
//! κ_T(ψ_X(θ)), where κ_T is the Laplace-type exponent of Λ_T.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::IdField;
use crate::idlaw::{merge_atoms, norm, Atom, CharTriplet, LevyDensity, LevyMeasure, ORIGIN_TOL};
use crate::kernel::Kernel;
use crate::levybasis::{psd_factor, GeneratingQuadruple, IncrementSampler, JumpTruncation};
use crate::mmafield::{BasisDraw, MmaModel};
use crate::quad::{integrate_box, Integral, QuadSpec, Region};
use crate::realization::{FieldRealization, SimulationSpec};
use crate::rng::{stream, SALT_BASIS, SALT_TIME};

/// Half-width of the standard normal box used for Gaussian expectations.
const GAUSS_BOX: f64 = 8.5;
/// Poisson tail mass left out when enumerating compound Poisson laws.
const POISSON_TAIL: f64 = 1e-17;

/// A homogeneous Lévy sheet on R^k given by its unit-volume increment law.
#[derive(Debug, Clone)]
pub struct SheetSpec {
    base: CharTriplet,
    k: usize,
    nonneg: bool,
}

impl SheetSpec {
    pub fn new(base: CharTriplet, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidModel("sheet parameter dimension must be positive".into()));
        }
        Ok(SheetSpec { base, k, nonneg: false })
    }

    /// A subordinator sheet; the triplet must have nonnegative increments.
    pub fn subordinator(base: CharTriplet, k: usize) -> Result<Self> {
        check_subordinator(&base)?;
        let mut s = SheetSpec::new(base, k)?;
        s.nonneg = true;
        Ok(s)
    }

    /// Deterministic meta-time T(A) = rate·|A|.
    pub fn drift_only(rate: f64, k: usize) -> Result<Self> {
        SheetSpec::subordinator(CharTriplet::drift(DVector::from_element(1, rate)), k)
    }

    /// Poisson meta-time with the given intensity and jump size.
    pub fn poisson(intensity: f64, jump: f64, k: usize) -> Result<Self> {
        let drift = if jump.abs() <= 1.0 { intensity * jump } else { 0.0 };
        SheetSpec::subordinator(
            CharTriplet::scalar(drift, 0.0, LevyMeasure::atomic(1, vec![Atom::new(vec![jump], intensity)])?)?,
            k,
        )
    }

    pub fn base(&self) -> &CharTriplet {
        &self.base
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    /// Increment law over a set of Lebesgue measure m.
    pub fn cell_law(&self, m: f64) -> Result<CharTriplet> {
        self.base.scaled(m)
    }
}

/// β₀ = γ − ∫_{0<x≤1} x Q(dx) of a one-dimensional triplet.
fn subordinator_drift(t: &CharTriplet) -> Result<(f64, f64)> {
    let spec = QuadSpec::default().lenient();
    let rho1 = if t.levy().is_zero() {
        0.0
    } else {
        t.levy()
            .integrate_real(&|x| if x[0].abs() <= 1.0 { x[0] } else { 0.0 }, &spec)?
            .value
    };
    Ok((t.gamma()[0] - rho1, rho1))
}

/// Checks that a triplet is the unit law of a subordinator: one-dimensional,
/// no Gaussian part, jumps on (0, ∞) of finite variation and a nonnegative
/// drift after removing the compensator.
pub fn check_subordinator(t: &CharTriplet) -> Result<()> {
    if t.dim() != 1 {
        return Err(Error::InvalidModel(format!(
            "subordinator must be one-dimensional, got dimension {}",
            t.dim()
        )));
    }
    if t.sigma()[(0, 0)] != 0.0 {
        return Err(Error::InvalidModel("subordinator must have no Gaussian part".into()));
    }
    if !t.levy().is_zero() {
        if !t.levy().on_positive_halfline() {
            return Err(Error::InvalidModel("subordinator jumps must lie on (0, inf)".into()));
        }
        let fv = t
            .levy()
            .integrate_real(&|x| x[0].abs().min(1.0), &QuadSpec::default().lenient())?;
        if !fv.value.is_finite() {
            return Err(Error::InvalidModel("subordinator jumps must have finite variation".into()));
        }
    }
    let (beta0, _) = subordinator_drift(t)?;
    if beta0 < -1e-12 {
        return Err(Error::InvalidModel(format!(
            "subordinator drift after compensation is negative: {beta0}"
        )));
    }
    Ok(())
}

/// Cumulant of M(A) for a cell of Lebesgue measure `cell_measure`:
/// cell_measure · κ_T(ψ_X(θ)).
pub fn subordinated_cell_cumulant(x: &SheetSpec, t: &SheetSpec, cell_measure: f64, theta: &[f64]) -> Result<Complex64> {
    if !t.nonneg {
        return Err(Error::InvalidModel("meta-time sheet is not a subordinator".into()));
    }
    if cell_measure < 0.0 {
        return Err(Error::NegativeMeasure(cell_measure));
    }
    if theta.iter().all(|v| *v == 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let w = x.base.cumulant(theta)?;
    let w = Complex64::new(w.re.min(0.0), w.im);
    let k = t.base.laplace_exponent(w, &QuadSpec::default())?.value;
    Ok(k * cell_measure)
}

/// Triplet of the unit-cell law of the subordinated basis.
///
/// γ = β₀γ_X + ∫ρ(dv) E[X_v 1{0<‖X_v‖≤1}], Σ = β₀Σ_X and
/// Q = β₀Q_X + ∫ρ(dv) P(X_v ∈ ·, X_v ≠ 0), where (β₀, ρ) are the drift and
/// jump measure of the subordinator. The mixture term is available when X
/// is Gaussian, or when X is compound Poisson and ρ is atomic.
pub fn subordinated_triplet(x: &CharTriplet, t: &CharTriplet) -> Result<CharTriplet> {
    check_subordinator(t)?;
    let (beta0, rho1) = subordinator_drift(t)?;
    let beta0 = beta0.max(0.0);
    let rho = t.levy();
    if rho.is_zero() {
        return x.scaled(beta0);
    }
    let (mixture, m1) = if x.levy().is_zero() {
        let g = SubordinatedGaussian::new(rho.clone(), rho1, x.gamma().clone(), x.sigma())?;
        let m1 = g.m1.clone();
        (LevyMeasure::Parametric(Arc::new(g)), m1)
    } else {
        let rho_atoms = match rho.to_atomic() {
            Some(LevyMeasure::Atomic { atoms, .. }) => atoms,
            _ => {
                return Err(Error::InvalidModel(
                    "subordination of a jump space sheet needs an atomic meta-time jump measure".into(),
                ))
            }
        };
        if x.sigma().iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidModel(
                "subordination of a mixed Gaussian and jump space sheet is not supported".into(),
            ));
        }
        enumerate_compound_poisson_mixture(x, &rho_atoms)?
    };
    let mut levy = mixture;
    if beta0 > 0.0 {
        levy = x.levy().scaled(beta0).add(&levy);
    }
    let gamma = x.gamma() * beta0 + m1;
    CharTriplet::new(gamma, x.sigma() * beta0, levy)
}

/// Atoms of ∫ρ(dv) P(X_v ∈ ·, X_v ≠ 0) and the truncated mean for compound
/// Poisson X and atomic ρ.
fn enumerate_compound_poisson_mixture(x: &CharTriplet, rho: &[Atom]) -> Result<(LevyMeasure, DVector<f64>)> {
    let d = x.dim();
    let jumps = match x.levy().to_atomic() {
        Some(LevyMeasure::Atomic { atoms, .. }) => atoms,
        _ => {
            return Err(Error::InvalidModel(
                "subordination needs a Gaussian or compound Poisson space sheet".into(),
            ))
        }
    };
    let lambda: f64 = jumps.iter().map(|a| a.mass).sum();
    let small: DVector<f64> = jumps
        .iter()
        .filter(|a| a.point.norm() <= 1.0)
        .fold(DVector::zeros(d), |acc, a| acc + &a.point * a.mass);
    let b = x.gamma() - small;
    let mut out = Vec::new();
    let mut m1 = DVector::zeros(d);
    for r in rho {
        let v = r.point[0];
        let shift = &b * v;
        let mean = v * lambda;
        // law of the n-fold jump sum, carried as normalised atoms
        let mut sum_law = vec![Atom {
            point: DVector::zeros(d),
            mass: 1.0,
        }];
        let mut p = (-mean).exp();
        let mut cumulative = 0.0;
        let mut n = 0usize;
        loop {
            for a in &sum_law {
                let point = &a.point + &shift;
                let mass = r.mass * p * a.mass;
                if point.norm() <= ORIGIN_TOL || mass == 0.0 {
                    continue;
                }
                if point.norm() <= 1.0 {
                    m1 += &point * mass;
                }
                out.push(Atom { point, mass });
            }
            cumulative += p;
            if 1.0 - cumulative < POISSON_TAIL || n >= 400 {
                break;
            }
            n += 1;
            p *= mean / n as f64;
            let mut next = Vec::with_capacity(sum_law.len() * jumps.len());
            for a in &sum_law {
                for j in &jumps {
                    next.push(Atom {
                        point: &a.point + &j.point,
                        mass: a.mass * j.mass / lambda,
                    });
                }
            }
            sum_law = merge_atoms(next);
        }
    }
    Ok((LevyMeasure::Atomic { dim: d, atoms: merge_atoms(out) }, m1))
}

/// ∫ρ(dv) N(vγ, vΣ)(·) for a jump measure ρ on (0, ∞).
#[derive(Debug)]
pub struct SubordinatedGaussian {
    rho: LevyMeasure,
    rho1: f64,
    gamma: DVector<f64>,
    sigma: DMatrix<f64>,
    factor: DMatrix<f64>,
    m1: DVector<f64>,
    spec: QuadSpec,
}

impl SubordinatedGaussian {
    fn new(rho: LevyMeasure, rho1: f64, gamma: DVector<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        let d = gamma.len();
        let mut g = SubordinatedGaussian {
            rho,
            rho1,
            gamma,
            sigma: sigma.clone(),
            factor: psd_factor(sigma),
            m1: DVector::zeros(d),
            spec: QuadSpec::with_tol(1e-13, 1e-11).lenient(),
        };
        let mut m1 = DVector::zeros(d);
        for i in 0..d {
            m1[i] = g
                .integrate(
                    &|x| {
                        if norm(x) <= 1.0 {
                            Complex64::new(x[i], 0.0)
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    },
                    &g.spec.clone(),
                )?
                .value
                .re;
        }
        g.m1 = m1;
        Ok(g)
    }

    /// E g(vγ + √v L z), z standard normal.
    fn gaussian_expectation(&self, v: f64, g: &dyn Fn(&[f64]) -> Complex64) -> Result<Complex64> {
        let d = self.gamma.len();
        let region = Region::new(vec![-GAUSS_BOX; d], vec![GAUSS_BOX; d]);
        let sv = v.sqrt();
        let norm_const = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
        let r = integrate_box(&region, 2, &self.spec, |z, out| {
            let mut x = vec![0.0; d];
            for i in 0..d {
                x[i] = v * self.gamma[i] + sv * (0..d).map(|j| self.factor[(i, j)] * z[j]).sum::<f64>();
            }
            if norm(&x) <= ORIGIN_TOL {
                return;
            }
            let dens = norm_const * (-0.5 * z.iter().map(|u| u * u).sum::<f64>()).exp();
            let val = g(&x) * dens;
            out[0] = val.re;
            out[1] = val.im;
        })?;
        Ok(Complex64::new(r.value[0], r.value[1]))
    }
}

impl LevyDensity for SubordinatedGaussian {
    fn name(&self) -> String {
        format!("gaussian mixture over {}", self.rho.describe())
    }

    fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn integrate(&self, g: &dyn Fn(&[f64]) -> Complex64, spec: &QuadSpec) -> Result<Integral<Complex64>> {
        let failure = RefCell::new(None);
        let r = self.rho.integrate(
            &|v| match self.gaussian_expectation(v[0], g) {
                Ok(c) => c,
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    Complex64::new(0.0, 0.0)
                }
            },
            spec,
        )?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(r)
    }

    fn compensated_term(&self, theta: &[f64], spec: &QuadSpec) -> Result<Integral<Complex64>> {
        let th = DVector::from_column_slice(theta);
        let w = Complex64::new(-0.5 * (th.transpose() * &self.sigma * &th)[(0, 0)], self.gamma.dot(&th));
        let mix = self.rho.compensated_laplace(w, spec)?;
        let shift = self.m1.dot(&th);
        Ok(mix.map(|v| v + w * self.rho1 - Complex64::new(0.0, shift)))
    }

    fn is_atomless(&self) -> bool {
        self.sigma.clone().cholesky().is_some()
    }
}

/// Draws M(A) by first drawing Λ_T(A) = v and then an X-increment over measure v.
#[derive(Debug, Clone)]
pub struct SubordinatedSampler {
    space: IncrementSampler,
    time: IncrementSampler,
}

impl SubordinatedSampler {
    pub fn new(x: &SheetSpec, t: &SheetSpec, truncation: JumpTruncation) -> Result<Self> {
        if !t.nonneg {
            return Err(Error::InvalidModel("meta-time sheet is not a subordinator".into()));
        }
        Ok(SubordinatedSampler {
            space: IncrementSampler::new(&x.base, truncation)?,
            time: IncrementSampler::new(&t.base, truncation)?,
        })
    }

    /// One increment over a set of measure `m`, from the streams of the given key.
    pub fn sample(&self, m: f64, seed: u64, replicate: u64, cell: u64) -> Result<DVector<f64>> {
        let mut trng = stream(seed, replicate, cell, SALT_TIME);
        let v = self.time.sample(m, &mut trng)?[0].max(0.0);
        let mut xrng = stream(seed, replicate, cell, SALT_BASIS);
        self.space.sample(v, &mut xrng)
    }

    /// Meta-time increment only.
    pub fn sample_time(&self, m: f64, seed: u64, replicate: u64, cell: u64) -> Result<f64> {
        let mut trng = stream(seed, replicate, cell, SALT_TIME);
        Ok(self.time.sample(m, &mut trng)?[0])
    }
}

/// Generating quadruple of the subordinated basis.
pub fn subordinated_quadruple(x: &SheetSpec, t: &SheetSpec, weights: Vec<f64>) -> Result<GeneratingQuadruple> {
    if x.k != t.k {
        return Err(Error::DimensionMismatch {
            context: "meta-time sheet parameter dimension",
            expected: x.k,
            found: t.k,
        });
    }
    if !t.nonneg {
        return Err(Error::InvalidModel("meta-time sheet is not a subordinator".into()));
    }
    GeneratingQuadruple::new(subordinated_triplet(&x.base, &t.base)?, weights, x.k)
}

/// MMA over the subordinated basis; simulation draws meta-time first.
pub fn subordinated_mma(kernel: Kernel, x: &SheetSpec, t: &SheetSpec, weights: Vec<f64>) -> Result<MmaModel> {
    let quad = subordinated_quadruple(x, t, weights)?;
    Ok(MmaModel::new(kernel, quad)?.with_basis_draw(BasisDraw::Subordinated {
        space: x.base.clone(),
        time: t.base.clone(),
    }))
}

/// Simulates the subordinated MMA at the given points.
pub fn simulate_subordinated_mma(
    kernel: Kernel,
    x: &SheetSpec,
    t: &SheetSpec,
    weights: Vec<f64>,
    t_points: &[Vec<f64>],
    spec: &SimulationSpec,
) -> Result<FieldRealization> {
    subordinated_mma(kernel, x, t, weights)?.simulate(t_points, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss_x() -> SheetSpec {
        SheetSpec::new(CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0)).unwrap(), 1).unwrap()
    }

    #[test]
    fn drift_only_time_is_identity() {
        let x = gauss_x();
        let t = SheetSpec::drift_only(1.0, 1).unwrap();
        let c = subordinated_cell_cumulant(&x, &t, 0.7, &[1.3]).unwrap();
        let e = x.base().cumulant(&[1.3]).unwrap() * 0.7;
        assert!((c - e).norm() < 1e-14);
        let tr = subordinated_triplet(x.base(), t.base()).unwrap();
        assert!((tr.sigma()[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn poisson_time_gaussian_space() {
        let x = gauss_x();
        let t = SheetSpec::poisson(1.0, 1.0, 1).unwrap();
        for th in [0.0, 0.5, 1.0, 2.0] {
            let c = subordinated_cell_cumulant(&x, &t, 1.0, &[th]).unwrap();
            let e = (-th * th / 2.0f64).exp() - 1.0;
            assert!((c - Complex64::new(e, 0.0)).norm() < 1e-12);
            let tr = subordinated_triplet(x.base(), t.base()).unwrap();
            let c2 = tr.cumulant(&[th]).unwrap();
            assert!((c2 - Complex64::new(e, 0.0)).norm() < 1e-9, "{c2} vs {e}");
        }
    }

    #[test]
    fn poisson_time_poisson_space_is_atomic() {
        let x = SheetSpec::new(
            CharTriplet::compound_poisson(1, vec![Atom::new(vec![0.5], 2.0)]).unwrap(),
            1,
        )
        .unwrap();
        let t = SheetSpec::poisson(1.5, 1.0, 1).unwrap();
        let tr = subordinated_triplet(x.base(), t.base()).unwrap();
        assert!(tr.levy().atomic_part().complete);
        for th in [0.3, 1.0, 4.0] {
            let a = tr.cumulant(&[th]).unwrap();
            let b = subordinated_cell_cumulant(&x, &t, 1.0, &[th]).unwrap();
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_non_subordinator() {
        let bad = CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!(SheetSpec::subordinator(bad, 1).is_err());
        let neg = CharTriplet::compound_poisson(1, vec![Atom::new(vec![-1.0], 1.0)]).unwrap();
        assert!(SheetSpec::subordinator(neg, 1).is_err());
    }

    #[test]
    fn nonneg_sheet_draws_are_nonnegative() {
        let t = SheetSpec::poisson(2.0, 0.5, 1).unwrap();
        let s = SubordinatedSampler::new(&gauss_x(), &t, JumpTruncation::default()).unwrap();
        for r in 0..20_000u64 {
            assert!(s.sample_time(0.3, 11, r, 0).unwrap() >= 0.0);
        }
    }

    #[test]
    fn zero_kernel_gives_zero_field() {
        let x = gauss_x();
        let t = SheetSpec::poisson(1.0, 1.0, 1).unwrap();
        let r = simulate_subordinated_mma(
            Kernel::zero(1, 1, 1, 1).unwrap(),
            &x,
            &t,
            vec![1.0],
            &[vec![0.0], vec![1.0]],
            &SimulationSpec::new(5, 0.1, 3),
        )
        .unwrap();
        assert!(r.values().iter().all(|v| *v == 0.0));
    }
}
