//! Built-in parametric Lévy densities on (0, ∞).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::levy::{LevyDensity, SmallJumpBudget};
use crate::error::{Error, Result};
use crate::quad::{integrate_complex, Integral, QuadSpec, Region};
use crate::rng::StreamRng;

fn halfline_region(upper: f64) -> Region {
    let mut breaks: Vec<f64> = (1..=12).map(|k| 10f64.powi(-k)).collect();
    breaks.extend([0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0].iter().filter(|b| **b < upper));
    Region::new(vec![0.0], vec![upper]).with_breaks(vec![breaks])
}

/// Lévy density `shape · x⁻¹ · e^{−rate·x}` on (0, ∞): the gamma subordinator.
/// Infinite activity, finite first moment.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaLevy {
    pub shape: f64,
    pub rate: f64,
}

impl GammaLevy {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0) {
            return Err(Error::InvalidModel(format!(
                "gamma Levy density needs positive shape and rate, got ({shape}, {rate})"
            )));
        }
        Ok(GammaLevy { shape, rate })
    }

    fn density(&self, x: f64) -> f64 {
        self.shape * (-self.rate * x).exp() / x
    }

    fn upper(&self) -> f64 {
        1.0 + 60.0 / self.rate
    }

    /// ∫_0^1 x ν(dx)
    fn unit_first_moment(&self) -> f64 {
        self.shape * (1.0 - (-self.rate).exp()) / self.rate
    }

    fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.shape * (expint_e1(self.rate * lo) - expint_e1(self.rate * hi))
    }
}

/// Exponential integral E₁(x) for x > 0.
pub(crate) fn expint_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x > 700.0 {
        return 0.0;
    }
    if x <= 1.0 {
        // E₁(x) = −γ − ln x − Σ (−x)^k / (k·k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -0.577_215_664_901_532_860_6 - x.ln() - sum
    } else {
        // modified Lentz continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

impl LevyDensity for GammaLevy {
    fn name(&self) -> String {
        format!("gamma(shape={}, rate={})", self.shape, self.rate)
    }

    fn dim(&self) -> usize {
        1
    }

    fn integrate(&self, g: &dyn Fn(&[f64]) -> Complex64, spec: &QuadSpec) -> Result<Integral<Complex64>> {
        integrate_complex(&halfline_region(self.upper()), spec, |x| g(x) * self.density(x[0]))
    }

    fn compensated_term(&self, theta: &[f64], _spec: &QuadSpec) -> Result<Integral<Complex64>> {
        let t = theta[0];
        let log_term = (Complex64::new(1.0, -t / self.rate)).ln();
        let v = -log_term * self.shape - Complex64::new(0.0, t * self.unit_first_moment());
        Ok(Integral::exact(v))
    }

    fn compensated_laplace(&self, w: Complex64, _spec: &QuadSpec) -> Result<Integral<Complex64>> {
        if w.re > 1e-12 {
            return Err(Error::InvalidModel(format!("Laplace argument needs Re w <= 0, got {w}")));
        }
        let v = -(Complex64::new(1.0, 0.0) - w / self.rate).ln() * self.shape - w * self.unit_first_moment();
        Ok(Integral::exact(v))
    }

    fn on_positive_halfline(&self) -> bool {
        true
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn mass_above(&self, eps: f64) -> Result<f64> {
        Ok(self.mass_between(eps, self.upper()))
    }

    fn sample_above(&self, eps: f64, rng: &mut StreamRng) -> Result<DVector<f64>> {
        // x⁻¹e^{−bx} on (ε, 1]: log-uniform proposal, accept e^{−b(x−ε)};
        // on (1, ∞): shifted exponential proposal, accept 1/x.
        let lower_mass = if eps < 1.0 { self.mass_between(eps, 1.0) } else { 0.0 };
        let upper_mass = self.mass_between(eps.max(1.0), self.upper());
        let p_lower = lower_mass / (lower_mass + upper_mass);
        let exp = Exp::new(self.rate).map_err(|e| Error::Internal(e.to_string()))?;
        // the branch is chosen once; re-choosing after a rejection would bias
        // the mixture towards the branch with the higher acceptance rate
        let lower = rng.random::<f64>() < p_lower;
        for _ in 0..100_000 {
            if lower {
                let u: f64 = rng.random();
                let x = eps * (1.0 / eps).powf(u);
                if rng.random::<f64>() < (-self.rate * (x - eps)).exp() {
                    return Ok(DVector::from_element(1, x));
                }
            } else {
                let start = eps.max(1.0);
                let x = start + exp.sample(rng);
                if rng.random::<f64>() < start / x {
                    return Ok(DVector::from_element(1, x));
                }
            }
        }
        Err(Error::Internal("gamma jump sampler exhausted its rejection budget".into()))
    }

    fn small_jump_budget(&self, eps: f64) -> Result<SmallJumpBudget> {
        let (a, b) = (self.shape, self.rate);
        // ∫_0^ε x ν = a(1 − e^{−bε})/b, ∫_0^ε x² ν = a(1 − e^{−bε}(1 + bε))/b²
        let first = a * (1.0 - (-b * eps).exp()) / b;
        let second = a * (1.0 - (-b * eps).exp() * (1.0 + b * eps)) / (b * b);
        Ok(SmallJumpBudget {
            eps,
            mass_above: self.mass_above(eps)?,
            compensator_above: DVector::from_element(1, (self.unit_first_moment() - first).max(0.0)),
            covariance_below: DMatrix::from_element(1, 1, second),
            first_moment_below: first,
        })
    }
}

/// Compound-Poisson Lévy measure with exponential jump sizes:
/// `intensity · rate · e^{−rate·x}` on (0, ∞).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpJumps {
    pub intensity: f64,
    pub rate: f64,
}

impl ExpJumps {
    pub fn new(intensity: f64, rate: f64) -> Result<Self> {
        if !(intensity > 0.0 && rate > 0.0) {
            return Err(Error::InvalidModel(format!(
                "exponential jumps need positive intensity and rate, got ({intensity}, {rate})"
            )));
        }
        Ok(ExpJumps { intensity, rate })
    }

    /// ∫_0^1 x ν(dx)
    fn unit_first_moment(&self) -> f64 {
        let b = self.rate;
        self.intensity * (1.0 - (-b).exp() * (1.0 + b)) / b
    }
}

impl LevyDensity for ExpJumps {
    fn name(&self) -> String {
        format!("exp-jumps(intensity={}, rate={})", self.intensity, self.rate)
    }

    fn dim(&self) -> usize {
        1
    }

    fn integrate(&self, g: &dyn Fn(&[f64]) -> Complex64, spec: &QuadSpec) -> Result<Integral<Complex64>> {
        let upper = 1.0 + 60.0 / self.rate;
        let r = Region::new(vec![0.0], vec![upper]).with_breaks(vec![vec![1.0]]);
        integrate_complex(&r, spec, |x| {
            g(x) * (self.intensity * self.rate * (-self.rate * x[0]).exp())
        })
    }

    fn compensated_term(&self, theta: &[f64], _spec: &QuadSpec) -> Result<Integral<Complex64>> {
        let t = theta[0];
        let it = Complex64::new(0.0, t);
        let v = it * self.intensity / (Complex64::new(self.rate, 0.0) - it) - it * self.unit_first_moment();
        Ok(Integral::exact(v))
    }

    fn compensated_laplace(&self, w: Complex64, _spec: &QuadSpec) -> Result<Integral<Complex64>> {
        if w.re > 1e-12 {
            return Err(Error::InvalidModel(format!("Laplace argument needs Re w <= 0, got {w}")));
        }
        let v = w * self.intensity / (Complex64::new(self.rate, 0.0) - w) - w * self.unit_first_moment();
        Ok(Integral::exact(v))
    }

    fn on_positive_halfline(&self) -> bool {
        true
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn mass_above(&self, eps: f64) -> Result<f64> {
        Ok(self.intensity * (-self.rate * eps.max(0.0)).exp())
    }

    fn sample_above(&self, eps: f64, rng: &mut StreamRng) -> Result<DVector<f64>> {
        let exp = Exp::new(self.rate).map_err(|e| Error::Internal(e.to_string()))?;
        Ok(DVector::from_element(1, eps.max(0.0) + exp.sample(rng)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idlaw::levy::compensated_integrand;
    use crate::rng;

    #[test]
    fn e1_against_quadrature() {
        let spec = QuadSpec::default();
        for &x in &[0.01, 0.3, 1.0, 2.5, 10.0] {
            let r = Region::new(vec![x], vec![x + 80.0]).with_breaks(vec![vec![x + 1.0, x + 5.0, x + 20.0]]);
            let q = integrate_complex(&r, &spec, |t| Complex64::new((-t[0]).exp() / t[0], 0.0)).unwrap().value.re;
            assert!((expint_e1(x) - q).abs() < 1e-12 * q.max(1.0), "x={x}");
        }
    }

    #[test]
    fn gamma_closed_form_matches_quadrature() {
        let g = GammaLevy::new(1.5, 2.0).unwrap();
        let spec = QuadSpec::default();
        for &t in &[-3.0, -0.7, 0.4, 1.0, 5.0] {
            let closed = g.compensated_term(&[t], &spec).unwrap().value;
            let quad = g
                .integrate(&|x| compensated_integrand(&[t], x), &spec)
                .unwrap()
                .value;
            assert!((closed - quad).norm() < 1e-9, "t={t}: {closed} vs {quad}");
        }
    }

    #[test]
    fn exp_jumps_closed_form_matches_quadrature() {
        let e = ExpJumps::new(2.0, 1.5).unwrap();
        let spec = QuadSpec::default();
        for &t in &[-2.0, 0.3, 1.0, 4.0] {
            let closed = e.compensated_term(&[t], &spec).unwrap().value;
            let quad = e.integrate(&|x| compensated_integrand(&[t], x), &spec).unwrap().value;
            assert!((closed - quad).norm() < 1e-9);
        }
    }

    #[test]
    fn gamma_laplace_is_continuation_of_cumulant() {
        // κ(w) at w = iθ equals the compensated cumulant term at θ
        let g = GammaLevy::new(0.8, 1.2).unwrap();
        let spec = QuadSpec::default();
        let a = g.compensated_laplace(Complex64::new(0.0, 0.9), &spec).unwrap().value;
        let b = g.compensated_term(&[0.9], &spec).unwrap().value;
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn gamma_sampler_mean_above_cutoff() {
        let g = GammaLevy::new(1.0, 1.0).unwrap();
        let eps = 0.05;
        let mass = g.mass_above(eps).unwrap();
        let spec = QuadSpec::default();
        let mean = g
            .integrate(&|x| Complex64::new(if x[0] > eps { x[0] } else { 0.0 }, 0.0), &spec)
            .unwrap()
            .value
            .re
            / mass;
        let mut r = rng::stream(3, 0, 0, 0);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| g.sample_above(eps, &mut r).unwrap()[0]).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(draws.iter().all(|x| *x > eps));
        assert!((m - mean).abs() < 4.0 * sd / (n as f64).sqrt(), "{m} vs {mean}");
    }
}
