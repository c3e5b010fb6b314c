//! Stationary infinitely divisible fields described through their finite
//! dimensional laws.
//!
//! Everything the diagnostics need is expressed by four quantities: the
//! joint cumulant of finitely many field values, the marginal triplet of X₀,
//! the Gaussian cross-covariance Σ(t) = Cov(X₀, X_t) and integrals against
//! the bivariate Lévy measure Q_{0t} of (X₀, X_t).

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::idlaw::{scan_atoms_2pi, AtomScan, CharTriplet, ORIGIN_TOL};
use crate::levybasis::IncrementSampler;
use crate::quad::{Integral, QuadSpec};
use crate::realization::{FieldRealization, RealizationMeta, SimulationSpec};
use crate::rng::{stream, stream_seed, SALT_GLOBAL};

/// Integrand g(x, y) of a pair functional ∫ g dQ_{0t}, with x the value at 0
/// and y the value at t.
pub type PairFn<'a> = dyn Fn(&[f64], &[f64]) -> Complex64 + Sync + 'a;

/// Region over which a pair functional has to be integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairDomain {
    /// g(x, y) = 0 whenever x = 0 or y = 0.
    Intersection,
    /// General g.
    Union,
}

pub trait IdField: Send + Sync + fmt::Debug {
    /// Dimension of the field values.
    fn q(&self) -> usize;

    /// Dimension of the index set R^l.
    fn l(&self) -> usize;

    fn describe(&self) -> String;

    /// log E exp(i Σ_k ⟨θ_k, X_{p_k}⟩), continuous in θ with value 0 at θ = 0.
    fn joint_cumulant(&self, points: &[Vec<f64>], thetas: &[Vec<f64>]) -> Result<Integral<Complex64>>;

    /// Characteristic triplet of X₀.
    fn marginal_triplet(&self) -> Result<CharTriplet>;

    /// Σ(t) = Cov of the Gaussian parts of X₀ and X_t, entry (a, b) pairing
    /// X₀^{(a)} with X_t^{(b)}.
    fn gauss_cross(&self, t: &[f64]) -> Result<Integral<DMatrix<f64>>>;

    /// ∫ g(x, y) Q_{0t}(dx, dy).
    fn pair_functional(&self, t: &[f64], g: &PairFn, domain: PairDomain) -> Result<Integral<Complex64>>;

    /// Length over which dependence decays; `None` when it does not.
    fn decay_length(&self) -> Option<f64>;

    fn simulate(&self, t_points: &[Vec<f64>], spec: &SimulationSpec) -> Result<FieldRealization>;

    /// Scan of the Lévy measure of X₀ for atoms with a coordinate in 2πZ.
    fn marginal_atom_scan(&self) -> Result<AtomScan> {
        Ok(scan_atoms_2pi(self.marginal_triplet()?.levy()))
    }
}

/// E exp(i Σ_k ⟨θ_k, X_{p_k}⟩).
pub fn joint_charfn(field: &dyn IdField, points: &[Vec<f64>], thetas: &[Vec<f64>]) -> Result<Complex64> {
    Ok(field.joint_cumulant(points, thetas)?.value.exp())
}

pub(crate) fn check_joint_args(field: &dyn IdField, points: &[Vec<f64>], thetas: &[Vec<f64>]) -> Result<()> {
    if points.len() != thetas.len() {
        return Err(Error::DimensionMismatch {
            context: "points vs thetas",
            expected: points.len(),
            found: thetas.len(),
        });
    }
    for p in points {
        if p.len() != field.l() {
            return Err(Error::DimensionMismatch {
                context: "index point",
                expected: field.l(),
                found: p.len(),
            });
        }
    }
    for th in thetas {
        if th.len() != field.q() {
            return Err(Error::DimensionMismatch {
                context: "theta",
                expected: field.q(),
                found: th.len(),
            });
        }
    }
    Ok(())
}

pub(crate) fn check_lag(field: &dyn IdField, t: &[f64]) -> Result<()> {
    if t.len() != field.l() {
        return Err(Error::DimensionMismatch {
            context: "lag",
            expected: field.l(),
            found: t.len(),
        });
    }
    Ok(())
}

fn add_integrals<T>(a: Integral<T>, b: Integral<T>, add: impl FnOnce(T, T) -> T) -> Integral<T> {
    Integral {
        value: add(a.value, b.value),
        error: a.error + b.error,
        evaluations: a.evaluations + b.evaluations,
        converged: a.converged && b.converged,
    }
}

/// X_t ≡ Z for all t: stationary, never mixing, never ergodic unless Z is
/// degenerate.
#[derive(Debug, Clone)]
pub struct ConstantField {
    z: CharTriplet,
    l: usize,
}

impl ConstantField {
    pub fn new(z: CharTriplet, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidModel("index dimension must be positive".into()));
        }
        Ok(ConstantField { z, l })
    }

    pub fn law(&self) -> &CharTriplet {
        &self.z
    }
}

impl IdField for ConstantField {
    fn q(&self) -> usize {
        self.z.dim()
    }

    fn l(&self) -> usize {
        self.l
    }

    fn describe(&self) -> String {
        format!("constant field, Q = {}", self.z.levy().describe())
    }

    fn joint_cumulant(&self, points: &[Vec<f64>], thetas: &[Vec<f64>]) -> Result<Integral<Complex64>> {
        check_joint_args(self, points, thetas)?;
        let mut total = vec![0.0; self.q()];
        for th in thetas {
            for (t, v) in total.iter_mut().zip(th) {
                *t += v;
            }
        }
        self.z.cumulant_with_error(&total, &QuadSpec::default())
    }

    fn marginal_triplet(&self) -> Result<CharTriplet> {
        Ok(self.z.clone())
    }

    fn gauss_cross(&self, t: &[f64]) -> Result<Integral<DMatrix<f64>>> {
        check_lag(self, t)?;
        Ok(Integral::exact(self.z.sigma().clone()))
    }

    fn pair_functional(&self, t: &[f64], g: &PairFn, _domain: PairDomain) -> Result<Integral<Complex64>> {
        check_lag(self, t)?;
        self.z.levy().integrate(&|x| g(x, x), &QuadSpec::default().lenient())
    }

    fn decay_length(&self) -> Option<f64> {
        None
    }

    fn simulate(&self, t_points: &[Vec<f64>], spec: &SimulationSpec) -> Result<FieldRealization> {
        spec.validate()?;
        let sampler = IncrementSampler::new(&self.z, spec.truncation)?;
        let q = self.q();
        let mut values = Vec::with_capacity(spec.replicates * t_points.len() * q);
        for r in 0..spec.replicates {
            let z = sampler.sample(1.0, &mut stream(spec.seed, r as u64, 0, SALT_GLOBAL))?;
            for _ in t_points {
                values.extend(z.iter());
            }
        }
        FieldRealization::new(
            t_points.to_vec(),
            q,
            spec.replicates,
            values,
            RealizationMeta::from_spec(self.describe(), spec, None),
        )
    }
}

/// Sum of independent fields with equal q and l.
#[derive(Debug, Clone)]
pub struct SumField {
    parts: Vec<Arc<dyn IdField>>,
}

impl SumField {
    pub fn new(parts: Vec<Arc<dyn IdField>>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidModel("sum of zero fields".into()))?;
        for p in &parts[1..] {
            if p.q() != first.q() || p.l() != first.l() {
                return Err(Error::DimensionMismatch {
                    context: "summand field",
                    expected: first.q() * 1000 + first.l(),
                    found: p.q() * 1000 + p.l(),
                });
            }
        }
        Ok(SumField { parts })
    }

    pub fn parts(&self) -> &[Arc<dyn IdField>] {
        &self.parts
    }
}

impl IdField for SumField {
    fn q(&self) -> usize {
        self.parts[0].q()
    }

    fn l(&self) -> usize {
        self.parts[0].l()
    }

    fn describe(&self) -> String {
        let parts: Vec<String> = self.parts.iter().map(|p| format!("({})", p.describe())).collect();
        parts.join(" + ")
    }

    fn joint_cumulant(&self, points: &[Vec<f64>], thetas: &[Vec<f64>]) -> Result<Integral<Complex64>> {
        let mut acc = Integral::exact(Complex64::new(0.0, 0.0));
        for p in &self.parts {
            acc = add_integrals(acc, p.joint_cumulant(points, thetas)?, |a, b| a + b);
        }
        Ok(acc)
    }

    fn marginal_triplet(&self) -> Result<CharTriplet> {
        let mut acc = CharTriplet::zero(self.q());
        for p in &self.parts {
            acc = acc.convolve(&p.marginal_triplet()?)?;
        }
        Ok(acc)
    }

    fn gauss_cross(&self, t: &[f64]) -> Result<Integral<DMatrix<f64>>> {
        let q = self.q();
        let mut acc = Integral::exact(DMatrix::zeros(q, q));
        for p in &self.parts {
            acc = add_integrals(acc, p.gauss_cross(t)?, |a, b| a + b);
        }
        Ok(acc)
    }

    fn pair_functional(&self, t: &[f64], g: &PairFn, domain: PairDomain) -> Result<Integral<Complex64>> {
        let mut acc = Integral::exact(Complex64::new(0.0, 0.0));
        for p in &self.parts {
            acc = add_integrals(acc, p.pair_functional(t, g, domain)?, |a, b| a + b);
        }
        Ok(acc)
    }

    fn decay_length(&self) -> Option<f64> {
        let mut best: f64 = 0.0;
        for p in &self.parts {
            best = best.max(p.decay_length()?);
        }
        Some(best)
    }

    fn simulate(&self, t_points: &[Vec<f64>], spec: &SimulationSpec) -> Result<FieldRealization> {
        let mut acc: Option<FieldRealization> = None;
        for (i, p) in self.parts.iter().enumerate() {
            let sub = spec.clone().with_seed(stream_seed(spec.seed, i as u64, 0, SALT_GLOBAL));
            let r = p.simulate(t_points, &sub)?;
            acc = Some(match acc {
                None => r,
                Some(a) => a.add(&r)?,
            });
        }
        let mut out = acc.expect("at least one part");
        out.meta.model = self.describe();
        out.meta.seed = spec.seed;
        Ok(out)
    }
}

/// The field M·X for a fixed q'×q matrix M.
#[derive(Debug, Clone)]
pub struct LinearMapped {
    inner: Arc<dyn IdField>,
    map: DMatrix<f64>,
}

impl LinearMapped {
    pub fn new(inner: Arc<dyn IdField>, map: DMatrix<f64>) -> Result<Self> {
        if map.ncols() != inner.q() || map.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                context: "linear map of field",
                expected: inner.q(),
                found: map.ncols(),
            });
        }
        Ok(LinearMapped { inner, map })
    }

    pub fn diagonal(inner: Arc<dyn IdField>, scale: &[f64]) -> Result<Self> {
        let map = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(scale));
        LinearMapped::new(inner, map)
    }

    pub fn map(&self) -> &DMatrix<f64> {
        &self.map
    }

    fn pull(&self, theta: &[f64]) -> Vec<f64> {
        let q = self.inner.q();
        (0..q)
            .map(|j| (0..self.map.nrows()).map(|i| self.map[(i, j)] * theta[i]).sum())
            .collect()
    }

    fn push(&self, x: &[f64]) -> Vec<f64> {
        (0..self.map.nrows())
            .map(|i| (0..self.map.ncols()).map(|j| self.map[(i, j)] * x[j]).sum())
            .collect()
    }
}

impl IdField for LinearMapped {
    fn q(&self) -> usize {
        self.map.nrows()
    }

    fn l(&self) -> usize {
        self.inner.l()
    }

    fn describe(&self) -> String {
        format!("M·({}) with M = {:?}", self.inner.describe(), self.map.as_slice())
    }

    fn joint_cumulant(&self, points: &[Vec<f64>], thetas: &[Vec<f64>]) -> Result<Integral<Complex64>> {
        check_joint_args(self, points, thetas)?;
        let pulled: Vec<Vec<f64>> = thetas.iter().map(|t| self.pull(t)).collect();
        self.inner.joint_cumulant(points, &pulled)
    }

    fn marginal_triplet(&self) -> Result<CharTriplet> {
        self.inner.marginal_triplet()?.linear_map(&self.map)
    }

    fn gauss_cross(&self, t: &[f64]) -> Result<Integral<DMatrix<f64>>> {
        Ok(self.inner.gauss_cross(t)?.map(|s| &self.map * s * self.map.transpose()))
    }

    fn pair_functional(&self, t: &[f64], g: &PairFn, domain: PairDomain) -> Result<Integral<Complex64>> {
        let wrapped = |x: &[f64], y: &[f64]| {
            let (mx, my) = (self.push(x), self.push(y));
            let small = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt() <= ORIGIN_TOL;
            if small(&mx) && small(&my) {
                Complex64::new(0.0, 0.0)
            } else {
                g(&mx, &my)
            }
        };
        self.inner.pair_functional(t, &wrapped, domain)
    }

    fn decay_length(&self) -> Option<f64> {
        self.inner.decay_length()
    }

    fn simulate(&self, t_points: &[Vec<f64>], spec: &SimulationSpec) -> Result<FieldRealization> {
        let mut r = self.inner.simulate(t_points, spec)?.map(&self.map)?;
        r.meta.model = self.describe();
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idlaw::Atom;

    fn cp1() -> CharTriplet {
        CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 1.0)]).unwrap()
    }

    #[test]
    fn constant_field_joint_law() {
        let f = ConstantField::new(cp1(), 1).unwrap();
        let c = f
            .joint_cumulant(&[vec![0.0], vec![7.0]], &[vec![1.0], vec![-1.0]])
            .unwrap()
            .value;
        assert_eq!(c, Complex64::new(0.0, 0.0));
        let pf = f
            .pair_functional(&[3.0], &|x, y| Complex64::new((x[0] * y[0]).min(1.0), 0.0), PairDomain::Intersection)
            .unwrap();
        assert_eq!(pf.value.re, 1.0);
    }

    #[test]
    fn constant_field_simulation_is_constant_in_t() {
        let f = ConstantField::new(cp1(), 1).unwrap();
        let r = f
            .simulate(&[vec![0.0], vec![1.0], vec![5.0]], &SimulationSpec::new(20, 0.1, 3))
            .unwrap();
        for rep in 0..20 {
            assert_eq!(r.value(rep, 0), r.value(rep, 2));
        }
    }

    #[test]
    fn sum_and_map_compose() {
        let a: Arc<dyn IdField> = Arc::new(ConstantField::new(cp1(), 1).unwrap());
        let s = SumField::new(vec![a.clone(), a.clone()]).unwrap();
        let c2 = s.joint_cumulant(&[vec![0.0]], &[vec![0.7]]).unwrap().value;
        let c1 = a.joint_cumulant(&[vec![0.0]], &[vec![0.7]]).unwrap().value;
        assert!((c2 - c1 * 2.0).norm() < 1e-15);
        let m = LinearMapped::diagonal(a.clone(), &[2.0]).unwrap();
        let cm = m.joint_cumulant(&[vec![0.0]], &[vec![0.35]]).unwrap().value;
        assert!((cm - c1).norm() < 1e-15);
        let atoms = m.marginal_triplet().unwrap().levy().atomic_part().atoms;
        assert_eq!(atoms[0].point[0], 2.0);
    }
}
