//! Mixed moving average fields X_t = ∫_S ∫_{R^l} f(A, t − s) Λ(dA, ds).
//!
//! All laws are obtained from the basis exponent: the joint cumulant of
//! (X_{p_1}, …, X_{p_m}) at (θ_1, …, θ_m) is
//! Σ_A π(A) ∫ ψ(Σ_k f(A, p_k − s)'θ_k) ds, evaluated by adaptive cubature
//! over the (tail-truncated) kernel support with the kernel's breakpoints.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{check_joint_args, check_lag, IdField, PairDomain, PairFn};
use crate::idlaw::{merge_atoms, Atom, CharTriplet, LevyDensity, LevyMeasure, ORIGIN_TOL};
use crate::kernel::{Kernel, Support};
use crate::levybasis::{CellPartition, GeneratingQuadruple, IncrementSampler};
use crate::quad::{integrate_box, Integral, QuadSpec, Region};
use crate::realization::{FieldRealization, RealizationMeta, SimulationSpec};
use crate::rng::{stream, SALT_BASIS, SALT_TIME};

/// Kernel values below this are treated as zero in analytic integrals.
pub const QUAD_TAIL: f64 = 1e-17;

/// How basis increments are drawn during simulation.
#[derive(Debug, Clone)]
pub enum BasisDraw {
    /// Directly from the cell law of the generating quadruple.
    Direct,
    /// First a meta-time increment v from `time`, then an increment of `space`
    /// with exponent v·ψ.
    Subordinated { space: CharTriplet, time: CharTriplet },
}

/// One integrability condition: value, finiteness and error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub value: f64,
    pub finite: bool,
    pub error: f64,
}

/// The three integrability conditions of a kernel against a basis:
/// drift compensation, Gaussian energy and jump activity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrabilityReport {
    /// ∫∫ ‖f γ + ∫ f x (1{‖f x‖≤1} − 1{‖x‖≤1}) Q(dx)‖ ds π(dA)
    pub condition1: Condition,
    /// ∫∫ ‖f Σ f'‖ ds π(dA)
    pub condition2: Condition,
    /// ∫∫∫ min(1, ‖f x‖²) Q(dx) ds π(dA)
    pub condition3: Condition,
}

impl IntegrabilityReport {
    pub fn integrable(&self) -> bool {
        self.condition1.finite && self.condition2.finite && self.condition3.finite
    }
}

#[derive(Debug, Clone)]
struct ClassGeom {
    lower: Vec<f64>,
    upper: Vec<f64>,
    breaks: Vec<Vec<f64>>,
}

impl ClassGeom {
    /// Box and breakpoints of s ↦ f(A, p − s).
    fn shifted(&self, p: &[f64]) -> ClassGeom {
        let l = p.len();
        ClassGeom {
            lower: (0..l).map(|i| p[i] - self.upper[i]).collect(),
            upper: (0..l).map(|i| p[i] - self.lower[i]).collect(),
            breaks: (0..l).map(|i| self.breaks[i].iter().map(|b| p[i] - b).collect()).collect(),
        }
    }
}

fn combine(geoms: &[ClassGeom], domain: PairDomain) -> Option<Region> {
    let l = geoms[0].lower.len();
    let mut lower = geoms[0].lower.clone();
    let mut upper = geoms[0].upper.clone();
    for g in &geoms[1..] {
        for i in 0..l {
            match domain {
                PairDomain::Intersection => {
                    lower[i] = lower[i].max(g.lower[i]);
                    upper[i] = upper[i].min(g.upper[i]);
                }
                PairDomain::Union => {
                    lower[i] = lower[i].min(g.lower[i]);
                    upper[i] = upper[i].max(g.upper[i]);
                }
            }
        }
    }
    if (0..l).any(|i| !(upper[i] > lower[i])) {
        return None;
    }
    let mut breaks = vec![Vec::new(); l];
    for g in geoms {
        for i in 0..l {
            breaks[i].push(g.lower[i]);
            breaks[i].push(g.upper[i]);
            breaks[i].extend(g.breaks[i].iter().copied());
        }
    }
    Some(Region::new(lower, upper).with_breaks(breaks))
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum();
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn take_err(cell: RefCell<Option<Error>>) -> Result<()> {
    match cell.into_inner() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn sum_class_integrals<T: Clone>(
    parts: Vec<Integral<T>>,
    zero: T,
    add: impl Fn(T, T) -> T,
) -> Integral<T> {
    let mut acc = Integral::exact(zero);
    for p in parts {
        acc = Integral {
            value: add(acc.value, p.value),
            error: acc.error + p.error,
            evaluations: acc.evaluations + p.evaluations,
            converged: acc.converged && p.converged,
        };
    }
    acc
}

/// A mixed moving average model: kernel plus generating quadruple.
#[derive(Debug, Clone)]
pub struct MmaModel {
    kernel: Kernel,
    quadruple: GeneratingQuadruple,
    spec: QuadSpec,
    draw: BasisDraw,
}

impl MmaModel {
    /// Builds the model and rejects it when an integrability condition fails.
    pub fn new(kernel: Kernel, quadruple: GeneratingQuadruple) -> Result<Self> {
        let m = MmaModel::unchecked(kernel, quadruple)?;
        let report = m.check_integrability()?;
        if !report.integrable() {
            return Err(Error::NotIntegrable(format!("{report:?}")));
        }
        Ok(m)
    }

    /// Builds the model with dimension checks only, for integrability diagnostics.
    pub fn unchecked(kernel: Kernel, quadruple: GeneratingQuadruple) -> Result<Self> {
        if kernel.d() != quadruple.d() {
            return Err(Error::DimensionMismatch {
                context: "kernel columns vs basis dimension",
                expected: quadruple.d(),
                found: kernel.d(),
            });
        }
        if kernel.l() != quadruple.l() {
            return Err(Error::DimensionMismatch {
                context: "kernel vs basis spatial dimension",
                expected: quadruple.l(),
                found: kernel.l(),
            });
        }
        if kernel.classes() != quadruple.classes() {
            return Err(Error::DimensionMismatch {
                context: "kernel classes vs mixing space",
                expected: quadruple.classes(),
                found: kernel.classes(),
            });
        }
        Ok(MmaModel {
            kernel,
            quadruple,
            spec: QuadSpec::default(),
            draw: BasisDraw::Direct,
        })
    }

    pub fn with_quad_spec(mut self, spec: QuadSpec) -> Self {
        self.spec = spec;
        self
    }

    pub fn with_basis_draw(mut self, draw: BasisDraw) -> Self {
        self.draw = draw;
        self
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn quadruple(&self) -> &GeneratingQuadruple {
        &self.quadruple
    }

    pub fn quad_spec(&self) -> &QuadSpec {
        &self.spec
    }

    fn base(&self) -> &CharTriplet {
        self.quadruple.base()
    }

    fn inner_spec(&self) -> QuadSpec {
        QuadSpec {
            abs_tol: self.spec.abs_tol * 0.1,
            rel_tol: self.spec.rel_tol * 0.1,
            ..self.spec
        }
        .lenient()
    }

    fn geom(&self, class: usize) -> Result<Option<ClassGeom>> {
        match self.kernel.support(class, QUAD_TAIL) {
            Support::Empty => Ok(None),
            Support::Unbounded => Err(Error::NotIntegrable(format!(
                "kernel class {class} has unbounded support without decay"
            ))),
            Support::Box { lower, upper } => Ok(Some(ClassGeom {
                lower,
                upper,
                breaks: self.kernel.breaks(class),
            })),
        }
    }

    /// Evaluates the three integrability conditions.
    ///
    /// Classes with unbounded, non-decaying support are integrated over
    /// growing windows; a value still growing by more than half per
    /// doubling is reported as infinite.
    pub fn check_integrability(&self) -> Result<IntegrabilityReport> {
        let spec = QuadSpec::with_tol(1e-10, 1e-8).lenient();
        let mut totals = [0.0f64; 3];
        let mut errors = [0.0f64; 3];
        let mut finite = [true; 3];
        for a in 0..self.kernel.classes() {
            let w = self.quadruple.weights()[a];
            match self.kernel.support(a, QUAD_TAIL) {
                Support::Empty => {}
                Support::Box { lower, upper } => {
                    let region = Region::new(lower, upper).with_breaks(self.kernel.breaks(a));
                    let r = self.condition_integrals(a, &region, &spec)?;
                    for k in 0..3 {
                        totals[k] += w * r.value[k];
                        errors[k] += w * r.error;
                    }
                }
                Support::Unbounded => {
                    let l = self.kernel.l();
                    let mut prev = [0.0f64; 3];
                    let mut last = [0.0f64; 3];
                    let mut err = 0.0;
                    for k in 0..7 {
                        let radius = 2f64.powi(k);
                        let region = Region::new(vec![-radius; l], vec![radius; l]).with_breaks(self.kernel.breaks(a));
                        let r = self.condition_integrals(a, &region, &spec)?;
                        prev = last;
                        last = [r.value[0], r.value[1], r.value[2]];
                        err = r.error;
                    }
                    for k in 0..3 {
                        let growing = last[k] > 1e-12 && last[k] > 1.5 * prev[k];
                        if growing {
                            finite[k] = false;
                            totals[k] = f64::INFINITY;
                        } else {
                            totals[k] += w * last[k];
                        }
                        errors[k] += w * err;
                    }
                }
            }
        }
        let cond = |k: usize| Condition {
            value: totals[k],
            finite: finite[k] && totals[k].is_finite(),
            error: errors[k],
        };
        Ok(IntegrabilityReport {
            condition1: cond(0),
            condition2: cond(1),
            condition3: cond(2),
        })
    }

    fn condition_integrals(&self, class: usize, region: &Region, spec: &QuadSpec) -> Result<Integral<Vec<f64>>> {
        let base = self.base();
        let (q, d) = (self.kernel.q(), self.kernel.d());
        let levy = base.levy();
        let inner = self.inner_spec();
        let failure = RefCell::new(None);
        let res = integrate_box(region, 3, spec, |s, out| {
            let f = self.kernel.eval(class, s);
            let mut drift: Vec<f64> = (&f * base.gamma()).iter().copied().collect();
            let mut jump = 0.0;
            if !levy.is_zero() {
                for i in 0..q {
                    let r = levy.integrate_real(
                        &|x| {
                            let mut y = vec![0.0; q];
                            mat_vec(&f, x, &mut y);
                            let a = norm(&y) <= 1.0;
                            let b = norm(x) <= 1.0;
                            match (a, b) {
                                (true, false) => y[i],
                                (false, true) => -y[i],
                                _ => 0.0,
                            }
                        },
                        &inner,
                    );
                    match r {
                        Ok(v) => drift[i] += v.value,
                        Err(e) => *failure.borrow_mut() = Some(e),
                    }
                }
                match levy.integrate_real(
                    &|x| {
                        let mut y = vec![0.0; q];
                        mat_vec(&f, x, &mut y);
                        y.iter().map(|v| v * v).sum::<f64>().min(1.0)
                    },
                    &inner,
                ) {
                    Ok(v) => jump = v.value,
                    Err(e) => *failure.borrow_mut() = Some(e),
                }
            }
            let _ = d;
            out[0] = norm(&drift);
            out[1] = (&f * base.sigma() * f.transpose()).norm();
            out[2] = jump;
        })?;
        take_err(failure)?;
        Ok(res)
    }

    fn require_integrable(&self) -> Result<()> {
        let r = self.check_integrability()?;
        if !r.integrable() {
            return Err(Error::NotIntegrable(format!("{r:?}")));
        }
        Ok(())
    }

    /// Σ(t) = Σ_A π(A) ∫ f(A, −s) Σ f(A, t − s)' ds.
    pub fn gauss_cross_matrix(&self, t: &[f64]) -> Result<Integral<DMatrix<f64>>> {
        check_lag(self, t)?;
        let q = self.kernel.q();
        let sigma = self.base().sigma();
        if sigma.iter().all(|v| *v == 0.0) {
            return Ok(Integral::exact(DMatrix::zeros(q, q)));
        }
        let zero = vec![0.0; t.len()];
        let mut parts = Vec::new();
        for a in 0..self.kernel.classes() {
            let Some(g) = self.geom(a)? else { continue };
            let Some(region) = combine(&[g.shifted(&zero), g.shifted(t)], PairDomain::Intersection) else {
                continue;
            };
            let w = self.quadruple.weights()[a];
            let r = integrate_box(&region, q * q, &self.spec, |s, out| {
                let neg: Vec<f64> = s.iter().map(|v| -v).collect();
                let lag: Vec<f64> = t.iter().zip(s).map(|(a, b)| a - b).collect();
                let f0 = self.kernel.eval(a, &neg);
                let f1 = self.kernel.eval(a, &lag);
                let m = f0 * sigma * f1.transpose();
                out.copy_from_slice(m.as_slice());
            })?;
            parts.push(r.map(|v| DMatrix::from_column_slice(q, q, &v) * w));
        }
        Ok(sum_class_integrals(parts, DMatrix::zeros(q, q), |a, b| a + b))
    }

    /// ∫∫∫ g(f(A, −s)x, f(A, t − s)x) Q(dx) ds π(dA), images (0, 0) excluded.
    pub fn pair_integral(&self, t: &[f64], g: &PairFn, domain: PairDomain) -> Result<Integral<Complex64>> {
        check_lag(self, t)?;
        let levy = self.base().levy();
        if levy.is_zero() {
            return Ok(Integral::exact(Complex64::new(0.0, 0.0)));
        }
        let q = self.kernel.q();
        let zero = vec![0.0; t.len()];
        let inner = self.inner_spec();
        let outer = self.spec.lenient();
        let mut parts = Vec::new();
        for a in 0..self.kernel.classes() {
            let Some(geo) = self.geom(a)? else { continue };
            let Some(region) = combine(&[geo.shifted(&zero), geo.shifted(t)], domain) else {
                continue;
            };
            let w = self.quadruple.weights()[a];
            let failure = RefCell::new(None);
            let r = integrate_box(&region, 2, &outer, |s, out| {
                let neg: Vec<f64> = s.iter().map(|v| -v).collect();
                let lag: Vec<f64> = t.iter().zip(s).map(|(a, b)| a - b).collect();
                let f0 = self.kernel.eval(a, &neg);
                let f1 = self.kernel.eval(a, &lag);
                let v = levy.integrate(
                    &|x| {
                        let mut y0 = vec![0.0; q];
                        let mut y1 = vec![0.0; q];
                        mat_vec(&f0, x, &mut y0);
                        mat_vec(&f1, x, &mut y1);
                        if norm(&y0) <= ORIGIN_TOL && norm(&y1) <= ORIGIN_TOL {
                            Complex64::new(0.0, 0.0)
                        } else {
                            g(&y0, &y1)
                        }
                    },
                    &inner,
                );
                match v {
                    Ok(v) => {
                        out[0] = v.value.re;
                        out[1] = v.value.im;
                    }
                    Err(e) => *failure.borrow_mut() = Some(e),
                }
            })?;
            take_err(failure)?;
            parts.push(r.map(|v| Complex64::new(v[0], v[1]) * w));
        }
        Ok(sum_class_integrals(parts, Complex64::new(0.0, 0.0), |a, b| a + b))
    }

    /// Gaussian cross-covariance and pair functional at lag `t`.
    pub fn joint_pair(&self, t: &[f64]) -> Result<JointPairStructure<'_>> {
        let gauss_cross = self.gauss_cross_matrix(t)?;
        Ok(JointPairStructure {
            t: t.to_vec(),
            gauss_cross,
            model: self,
        })
    }

    /// Atoms of the image measure for piecewise-constant kernels and atomic Q:
    /// one atom f·x per kernel plateau and basis atom.
    fn plateau_atoms(&self) -> Result<Option<(Vec<Atom>, DVector<f64>)>> {
        let Some(atomic) = self.base().levy().to_atomic() else {
            return Ok(None);
        };
        let LevyMeasure::Atomic { atoms, .. } = atomic else {
            return Ok(None);
        };
        let q = self.kernel.q();
        let mut out = Vec::new();
        let mut correction = DVector::zeros(q);
        for a in 0..self.kernel.classes() {
            if !self.kernel.class_is_piecewise_constant(a) {
                return Ok(None);
            }
            let Some(geo) = self.geom(a)? else { continue };
            let l = geo.lower.len();
            let edges: Vec<Vec<f64>> = (0..l)
                .map(|i| {
                    let mut e = vec![geo.lower[i], geo.upper[i]];
                    e.extend(geo.breaks[i].iter().copied().filter(|b| *b > geo.lower[i] && *b < geo.upper[i]));
                    e.sort_by(f64::total_cmp);
                    e.dedup();
                    e
                })
                .collect();
            let counts: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
            let total: usize = counts.iter().product();
            let w = self.quadruple.weights()[a];
            for idx in 0..total {
                let mut rem = idx;
                let mut mid = vec![0.0; l];
                let mut vol = 1.0;
                for i in 0..l {
                    let k = rem % counts[i];
                    rem /= counts[i];
                    mid[i] = 0.5 * (edges[i][k] + edges[i][k + 1]);
                    vol *= edges[i][k + 1] - edges[i][k];
                }
                let f = self.kernel.eval(a, &mid);
                for atom in &atoms {
                    let y = &f * &atom.point;
                    if y.norm() <= ORIGIN_TOL {
                        continue;
                    }
                    let mass = w * vol * atom.mass;
                    let inside_new = y.norm() <= 1.0;
                    let inside_old = atom.point.norm() <= 1.0;
                    match (inside_new, inside_old) {
                        (true, false) => correction += &y * mass,
                        (false, true) => correction -= &y * mass,
                        _ => {}
                    }
                    out.push(Atom { point: y, mass });
                }
            }
        }
        Ok(Some((merge_atoms(out), correction)))
    }

    /// c = Σ π ∫∫ f x (1{‖f x‖≤1} − 1{‖x‖≤1}) Q(dx) ds.
    fn image_correction(&self) -> Result<Integral<DVector<f64>>> {
        let q = self.kernel.q();
        let levy = self.base().levy();
        if levy.is_zero() {
            return Ok(Integral::exact(DVector::zeros(q)));
        }
        let inner = self.inner_spec();
        let outer = self.spec.lenient();
        let mut parts = Vec::new();
        for a in 0..self.kernel.classes() {
            let Some(geo) = self.geom(a)? else { continue };
            let region = Region::new(geo.lower.clone(), geo.upper.clone()).with_breaks(geo.breaks.clone());
            let w = self.quadruple.weights()[a];
            let failure = RefCell::new(None);
            let r = integrate_box(&region, q, &outer, |s, out| {
                let f = self.kernel.eval(a, s);
                for (i, o) in out.iter_mut().enumerate() {
                    let v = levy.integrate_real(
                        &|x| {
                            let mut y = vec![0.0; q];
                            mat_vec(&f, x, &mut y);
                            match (norm(&y) <= 1.0, norm(x) <= 1.0) {
                                (true, false) => y[i],
                                (false, true) => -y[i],
                                _ => 0.0,
                            }
                        },
                        &inner,
                    );
                    match v {
                        Ok(v) => *o = v.value,
                        Err(e) => *failure.borrow_mut() = Some(e),
                    }
                }
            })?;
            take_err(failure)?;
            parts.push(r.map(|v| DVector::from_vec(v) * w));
        }
        Ok(sum_class_integrals(parts, DVector::zeros(q), |a, b| a + b))
    }

    /// Σ π ∫ f(A, s) γ ds.
    fn drift_integral(&self) -> Result<Integral<DVector<f64>>> {
        let q = self.kernel.q();
        let gamma = self.base().gamma();
        if gamma.iter().all(|v| *v == 0.0) {
            return Ok(Integral::exact(DVector::zeros(q)));
        }
        let mut parts = Vec::new();
        for a in 0..self.kernel.classes() {
            let Some(geo) = self.geom(a)? else { continue };
            let region = Region::new(geo.lower.clone(), geo.upper.clone()).with_breaks(geo.breaks.clone());
            let w = self.quadruple.weights()[a];
            let r = integrate_box(&region, q, &self.spec, |s, out| {
                let v = self.kernel.eval(a, s) * gamma;
                out.copy_from_slice(v.as_slice());
            })?;
            parts.push(r.map(|v| DVector::from_vec(v) * w));
        }
        Ok(sum_class_integrals(parts, DVector::zeros(q), |a, b| a + b))
    }

    /// (γ_int, Σ_int, v_int) of X₀.
    ///
    /// v_int is exactly atomic when every class is piecewise constant and Q
    /// is atomic; otherwise it is the image measure, integrated by cubature
    /// over s with the stored drift correction.
    pub fn marginal(&self) -> Result<CharTriplet> {
        self.require_integrable()?;
        let q = self.kernel.q();
        let sigma = self.gauss_cross_matrix(&vec![0.0; self.kernel.l()])?.value;
        let sigma = 0.5 * (&sigma + sigma.transpose());
        let drift = self.drift_integral()?.value;
        if self.base().levy().is_zero() {
            return CharTriplet::new(drift, sigma, LevyMeasure::zero(q));
        }
        if let Some((atoms, correction)) = self.plateau_atoms()? {
            return CharTriplet::new(drift + correction, sigma, LevyMeasure::Atomic { dim: q, atoms });
        }
        let correction = self.image_correction()?.value;
        let image = MmaImage {
            kernel: self.kernel.clone(),
            weights: self.quadruple.weights().to_vec(),
            levy: self.base().levy().clone(),
            correction: correction.clone(),
            geoms: (0..self.kernel.classes()).map(|a| self.geom(a)).collect::<Result<Vec<_>>>()?,
            spec: self.spec.lenient(),
            inner: self.inner_spec(),
        };
        CharTriplet::new(
            drift + correction,
            sigma,
            LevyMeasure::Parametric(Arc::new(image)),
        )
    }

    fn joint_cumulant_impl(&self, points: &[Vec<f64>], thetas: &[Vec<f64>]) -> Result<Integral<Complex64>> {
        check_joint_args(self, points, thetas)?;
        let (q, d) = (self.kernel.q(), self.kernel.d());
        let base = self.base();
        let inner = self.inner_spec();
        let live: Vec<(&Vec<f64>, &Vec<f64>)> = points
            .iter()
            .zip(thetas)
            .filter(|(_, th)| th.iter().any(|v| *v != 0.0))
            .collect();
        if live.is_empty() {
            return Ok(Integral::exact(Complex64::new(0.0, 0.0)));
        }
        let mut parts = Vec::new();
        for a in 0..self.kernel.classes() {
            let Some(geo) = self.geom(a)? else { continue };
            let shifted: Vec<ClassGeom> = live.iter().map(|(p, _)| geo.shifted(p)).collect();
            let Some(region) = combine(&shifted, PairDomain::Union) else { continue };
            let w = self.quadruple.weights()[a];
            let failure = RefCell::new(None);
            let r = integrate_box(&region, 2, &self.spec, |s, out| {
                let mut u = vec![0.0; d];
                let mut f = DMatrix::zeros(q, d);
                for (p, th) in &live {
                    let lag: Vec<f64> = p.iter().zip(s).map(|(a, b)| a - b).collect();
                    self.kernel.eval_into(a, &lag, &mut f);
                    for (j, uj) in u.iter_mut().enumerate() {
                        *uj += (0..q).map(|i| f[(i, j)] * th[i]).sum::<f64>();
                    }
                }
                if u.iter().all(|v| *v == 0.0) {
                    return;
                }
                match base.cumulant_with_error(&u, &inner) {
                    Ok(v) => {
                        out[0] = v.value.re;
                        out[1] = v.value.im;
                    }
                    Err(e) => *failure.borrow_mut() = Some(e),
                }
            })?;
            take_err(failure)?;
            parts.push(r.map(|v| Complex64::new(v[0], v[1]) * w));
        }
        Ok(sum_class_integrals(parts, Complex64::new(0.0, 0.0), |a, b| a + b))
    }

    fn simulate_impl(&self, t_points: &[Vec<f64>], spec: &SimulationSpec) -> Result<FieldRealization> {
        spec.validate()?;
        let l = self.kernel.l();
        let (q, d) = (self.kernel.q(), self.kernel.d());
        for p in t_points {
            if p.len() != l {
                return Err(Error::DimensionMismatch {
                    context: "t-point",
                    expected: l,
                    found: p.len(),
                });
            }
        }
        let value_tail = spec.energy_tail.sqrt();
        let mut req_lo = vec![f64::INFINITY; l];
        let mut req_hi = vec![f64::NEG_INFINITY; l];
        let mut boxes = Vec::with_capacity(self.kernel.classes());
        for a in 0..self.kernel.classes() {
            match self.kernel.support(a, value_tail) {
                Support::Empty => boxes.push(None),
                Support::Unbounded => {
                    return Err(Error::NotIntegrable(format!(
                        "kernel class {a} has unbounded support; no finite window reaches the tail bound"
                    )))
                }
                Support::Box { lower, upper } => {
                    for p in t_points {
                        for i in 0..l {
                            req_lo[i] = req_lo[i].min(p[i] - upper[i]);
                            req_hi[i] = req_hi[i].max(p[i] - lower[i]);
                        }
                    }
                    boxes.push(Some((lower, upper)));
                }
            }
        }
        let n_points = t_points.len();
        if boxes.iter().all(|b| b.is_none()) || n_points == 0 {
            return FieldRealization::new(
                t_points.to_vec(),
                q,
                spec.replicates,
                vec![0.0; spec.replicates * n_points * q],
                RealizationMeta::from_spec(self.describe(), spec, spec.window.clone()),
            );
        }
        let (win_lo, win_hi) = match &spec.window {
            Some((lo, hi)) => {
                if lo.len() != l || hi.len() != l {
                    return Err(Error::DimensionMismatch {
                        context: "simulation window",
                        expected: l,
                        found: lo.len(),
                    });
                }
                for i in 0..l {
                    if lo[i] > req_lo[i] + 1e-9 || hi[i] < req_hi[i] - 1e-9 {
                        return Err(Error::WindowViolation(format!(
                            "axis {i}: window [{}, {}] must contain [{}, {}]",
                            lo[i], hi[i], req_lo[i], req_hi[i]
                        )));
                    }
                }
                (lo.clone(), hi.clone())
            }
            None => (req_lo, req_hi),
        };
        let partition = CellPartition::aligned(&win_lo, &win_hi, &vec![spec.h; l], self.quadruple.weights())?;

        // weights f(A, t_p − s_c), shared by all replicates
        let table: Vec<Option<(f64, Vec<(usize, Vec<f64>)>)>> = (0..partition.len())
            .into_par_iter()
            .map(|i| {
                let cell = partition.cell(i);
                let (lo, hi) = boxes[cell.class].as_ref()?;
                let mid = cell.midpoint();
                let mut entries = Vec::new();
                for (pi, p) in t_points.iter().enumerate() {
                    let s: Vec<f64> = p.iter().zip(&mid).map(|(a, b)| a - b).collect();
                    if (0..l).any(|k| s[k] < lo[k] || s[k] > hi[k]) {
                        continue;
                    }
                    let f = self.kernel.eval(cell.class, &s);
                    if f.iter().any(|v| *v != 0.0) {
                        entries.push((pi, f.as_slice().to_vec()));
                    }
                }
                (!entries.is_empty()).then_some((cell.measure, entries))
            })
            .collect();
        let active: Vec<(usize, &(f64, Vec<(usize, Vec<f64>)>))> = table
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.as_ref().map(|t| (i, t)))
            .collect();

        let (space, time) = match &self.draw {
            BasisDraw::Direct => (IncrementSampler::new(self.base(), spec.truncation)?, None),
            BasisDraw::Subordinated { space, time } => (
                IncrementSampler::new(space, spec.truncation)?,
                Some(IncrementSampler::new(time, spec.truncation)?),
            ),
        };
        let rows: Vec<Vec<f64>> = (0..spec.replicates)
            .into_par_iter()
            .map(|r| -> Result<Vec<f64>> {
                let mut vals = vec![0.0; n_points * q];
                let mut inc = DVector::zeros(d);
                let mut tinc = DVector::zeros(1);
                for (cell_idx, (measure, entries)) in &active {
                    let mut rng = stream(spec.seed, r as u64, *cell_idx as u64, SALT_BASIS);
                    match &time {
                        None => space.sample_into(*measure, &mut rng, &mut inc)?,
                        Some(ts) => {
                            let mut trng = stream(spec.seed, r as u64, *cell_idx as u64, SALT_TIME);
                            ts.sample_into(*measure, &mut trng, &mut tinc)?;
                            space.sample_into(tinc[0].max(0.0), &mut rng, &mut inc)?;
                        }
                    }
                    if inc.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    for (pi, w) in entries {
                        let out = &mut vals[pi * q..(pi + 1) * q];
                        for j in 0..d {
                            let x = inc[j];
                            if x == 0.0 {
                                continue;
                            }
                            for (i, o) in out.iter_mut().enumerate() {
                                *o += w[i + j * q] * x;
                            }
                        }
                    }
                }
                Ok(vals)
            })
            .collect::<Result<Vec<_>>>()?;
        let values = rows.concat();
        let window = Some((partition.lower.clone(), partition.upper()));
        FieldRealization::new(
            t_points.to_vec(),
            q,
            spec.replicates,
            values,
            RealizationMeta::from_spec(self.describe(), spec, window),
        )
    }
}

impl IdField for MmaModel {
    fn q(&self) -> usize {
        self.kernel.q()
    }

    fn l(&self) -> usize {
        self.kernel.l()
    }

    fn describe(&self) -> String {
        format!(
            "MMA kernel [{}], Q = {}, pi = {:?}",
            self.kernel.describe(),
            self.base().levy().describe(),
            self.quadruple.weights()
        )
    }

    fn joint_cumulant(&self, points: &[Vec<f64>], thetas: &[Vec<f64>]) -> Result<Integral<Complex64>> {
        self.joint_cumulant_impl(points, thetas)
    }

    fn marginal_triplet(&self) -> Result<CharTriplet> {
        self.marginal()
    }

    fn gauss_cross(&self, t: &[f64]) -> Result<Integral<DMatrix<f64>>> {
        self.gauss_cross_matrix(t)
    }

    fn pair_functional(&self, t: &[f64], g: &PairFn, domain: PairDomain) -> Result<Integral<Complex64>> {
        self.pair_integral(t, g, domain)
    }

    fn decay_length(&self) -> Option<f64> {
        self.kernel.decay_length()
    }

    fn simulate(&self, t_points: &[Vec<f64>], spec: &SimulationSpec) -> Result<FieldRealization> {
        self.simulate_impl(t_points, spec)
    }
}

/// Σ(t) and Q_{0t} of an MMA at a fixed lag.
#[derive(Debug, Clone)]
pub struct JointPairStructure<'a> {
    pub t: Vec<f64>,
    pub gauss_cross: Integral<DMatrix<f64>>,
    model: &'a MmaModel,
}

impl JointPairStructure<'_> {
    /// ∫ g dQ_{0t}.
    pub fn levy_pair_functional(&self, g: &PairFn, domain: PairDomain) -> Result<Integral<Complex64>> {
        self.model.pair_integral(&self.t, g, domain)
    }

    /// ∫ g dQ_{0t}^{jk}: the (j, k) coordinate projection, x = X₀^{(k)}, y = X_t^{(j)}.
    pub fn projected_functional(
        &self,
        j: usize,
        k: usize,
        g: &(dyn Fn(f64, f64) -> Complex64 + Sync),
    ) -> Result<Integral<Complex64>> {
        let q = self.model.kernel.q();
        if j >= q || k >= q {
            return Err(Error::DimensionMismatch {
                context: "component index",
                expected: q,
                found: j.max(k) + 1,
            });
        }
        self.model.pair_integral(
            &self.t,
            &|x, y| {
                if x[k].abs() <= ORIGIN_TOL && y[j].abs() <= ORIGIN_TOL {
                    Complex64::new(0.0, 0.0)
                } else {
                    g(x[k], y[j])
                }
            },
            PairDomain::Union,
        )
    }
}

/// Image of π ⊗ λ^l ⊗ Q under (A, s, x) ↦ f(A, s)x.
#[derive(Debug)]
struct MmaImage {
    kernel: Kernel,
    weights: Vec<f64>,
    levy: LevyMeasure,
    correction: DVector<f64>,
    geoms: Vec<Option<ClassGeom>>,
    spec: QuadSpec,
    inner: QuadSpec,
}

impl MmaImage {
    fn over_s(&self, per_s: &dyn Fn(&DMatrix<f64>) -> Result<Complex64>) -> Result<Integral<Complex64>> {
        let mut parts = Vec::new();
        for (a, geo) in self.geoms.iter().enumerate() {
            let Some(geo) = geo else { continue };
            let region = Region::new(geo.lower.clone(), geo.upper.clone()).with_breaks(geo.breaks.clone());
            let failure = RefCell::new(None);
            let r = integrate_box(&region, 2, &self.spec, |s, out| {
                let f = self.kernel.eval(a, s);
                match per_s(&f) {
                    Ok(v) => {
                        out[0] = v.re;
                        out[1] = v.im;
                    }
                    Err(e) => *failure.borrow_mut() = Some(e),
                }
            })?;
            take_err(failure)?;
            parts.push(r.map(|v| Complex64::new(v[0], v[1]) * self.weights[a]));
        }
        Ok(sum_class_integrals(parts, Complex64::new(0.0, 0.0), |a, b| a + b))
    }
}

impl LevyDensity for MmaImage {
    fn name(&self) -> String {
        format!("image of {} under kernel [{}]", self.levy.describe(), self.kernel.describe())
    }

    fn dim(&self) -> usize {
        self.kernel.q()
    }

    fn integrate(&self, g: &dyn Fn(&[f64]) -> Complex64, _spec: &QuadSpec) -> Result<Integral<Complex64>> {
        let q = self.kernel.q();
        self.over_s(&|f| {
            Ok(self
                .levy
                .integrate(
                    &|x| {
                        let mut y = vec![0.0; q];
                        mat_vec(f, x, &mut y);
                        if norm(&y) <= ORIGIN_TOL {
                            Complex64::new(0.0, 0.0)
                        } else {
                            g(&y)
                        }
                    },
                    &self.inner,
                )?
                .value)
        })
    }

    fn compensated_term(&self, theta: &[f64], _spec: &QuadSpec) -> Result<Integral<Complex64>> {
        let d = self.kernel.d();
        let q = self.kernel.q();
        let term = self.over_s(&|f| {
            let u: Vec<f64> = (0..d).map(|j| (0..q).map(|i| f[(i, j)] * theta[i]).sum()).collect();
            if u.iter().all(|v| *v == 0.0) {
                return Ok(Complex64::new(0.0, 0.0));
            }
            Ok(self.levy.compensated_term(&u, &self.inner)?.value)
        })?;
        let shift: f64 = theta.iter().zip(self.correction.iter()).map(|(a, b)| a * b).sum();
        Ok(term.map(|v| v - Complex64::new(0.0, shift)))
    }

    fn is_atomless(&self) -> bool {
        (0..self.kernel.classes()).all(|a| self.kernel.class_is_zero(a) || self.kernel.class_is_atomless(a))
            && !self.levy.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Shape;

    fn ou_gauss(lambda: f64) -> MmaModel {
        let k = Kernel::scalar(Shape::Exponential { rates: vec![lambda] }, 1).unwrap();
        let b = CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0)).unwrap();
        MmaModel::new(k, GeneratingQuadruple::homogeneous(b, 1).unwrap()).unwrap()
    }

    fn indicator_cp(atom: f64) -> MmaModel {
        let k = Kernel::scalar(
            Shape::Indicator {
                lower: vec![0.0],
                upper: vec![1.0],
            },
            1,
        )
        .unwrap();
        let b = CharTriplet::compound_poisson(1, vec![Atom::new(vec![atom], 1.0)]).unwrap();
        MmaModel::new(k, GeneratingQuadruple::homogeneous(b, 1).unwrap()).unwrap()
    }

    #[test]
    fn integrability_examples() {
        let b = CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let q = GeneratingQuadruple::homogeneous(b, 1).unwrap();
        let zero = MmaModel::unchecked(Kernel::zero(1, 1, 1, 1).unwrap(), q.clone()).unwrap();
        let r = zero.check_integrability().unwrap();
        assert!(r.integrable());
        assert_eq!(r.condition2.value, 0.0);

        let r = ou_gauss(1.0).check_integrability().unwrap();
        assert!((r.condition2.value - 0.5).abs() < 1e-6);

        let cp = CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 1.0)]).unwrap();
        let m = MmaModel::unchecked(
            Kernel::scalar(Shape::Constant, 1).unwrap(),
            GeneratingQuadruple::homogeneous(cp, 1).unwrap(),
        )
        .unwrap();
        let r = m.check_integrability().unwrap();
        assert!(!r.condition3.finite);
        assert!(r.condition3.value.is_infinite());
        assert!(!r.integrable());
    }

    #[test]
    fn marginal_examples() {
        let s = ou_gauss(1.0).marginal().unwrap();
        assert!((s.sigma()[(0, 0)] - 0.5).abs() < 1e-9);
        let m = indicator_cp(1.0).marginal().unwrap();
        let atoms = m.levy().atomic_part().atoms;
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].point[0], 1.0);
        assert!((atoms[0].mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_cross_closed_form() {
        let m = ou_gauss(1.0);
        let s0 = m.gauss_cross_matrix(&[0.0]).unwrap().value[(0, 0)];
        let s1 = m.gauss_cross_matrix(&[2f64.ln()]).unwrap().value[(0, 0)];
        assert!((s0 - 0.5).abs() < 1e-12);
        assert!((s1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn pair_functional_examples() {
        let m = indicator_cp(1.0);
        let g = |x: &[f64], y: &[f64]| Complex64::new((x[0] * y[0]).abs().min(1.0), 0.0);
        let far = m.pair_integral(&[2.0], &g, PairDomain::Intersection).unwrap().value;
        assert_eq!(far, Complex64::new(0.0, 0.0));
        let near = m.pair_integral(&[0.5], &g, PairDomain::Intersection).unwrap().value;
        assert!((near.re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn joint_cumulant_matches_marginal() {
        let m = indicator_cp(1.0);
        let c = m.joint_cumulant(&[vec![0.3]], &[vec![1.0]]).unwrap().value;
        let expected = Complex64::new(0.0, 1.0).exp() - 1.0 - Complex64::new(0.0, 1.0);
        assert!((c - expected).norm() < 1e-13);
        let marg = m.marginal().unwrap().cumulant(&[1.0]).unwrap();
        assert!((marg - expected).norm() < 1e-13);
    }

    #[test]
    fn ou_cp_marginal_triplet_matches_joint_cumulant() {
        let k = Kernel::scalar(Shape::Exponential { rates: vec![1.0] }, 1).unwrap();
        let b = CharTriplet::compound_poisson(1, vec![Atom::new(vec![2.0], 1.0)]).unwrap();
        let m = MmaModel::new(k, GeneratingQuadruple::homogeneous(b, 1).unwrap()).unwrap();
        let t = m.marginal().unwrap();
        assert!(t.levy().atomic_part().complete);
        for th in [-1.5, 0.4, 2.0] {
            let a = t.cumulant(&[th]).unwrap();
            let b = m.joint_cumulant(&[vec![0.0]], &[vec![th]]).unwrap().value;
            assert!((a - b).norm() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn simulation_variance_and_determinism() {
        let m = ou_gauss(1.0);
        let spec = SimulationSpec::new(4000, 0.02, 7);
        let pts = vec![vec![0.0], vec![1.0]];
        let r = m.simulate(&pts, &spec).unwrap();
        let n = r.replicates() as f64;
        for p in 0..2 {
            let xs: Vec<f64> = (0..r.replicates()).map(|i| r.value(i, p)[0]).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = 0.5 * (2.0 / n).sqrt();
            assert!((var - 0.5).abs() < 4.0 * se, "var {var}");
        }
        let again = m.simulate(&pts, &spec).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn window_violation_is_reported() {
        let m = indicator_cp(1.0);
        let spec = SimulationSpec::new(2, 0.1, 1).with_window(vec![-0.5], vec![0.0]);
        assert!(matches!(m.simulate(&[vec![0.0]], &spec), Err(Error::WindowViolation(_))));
    }
}
