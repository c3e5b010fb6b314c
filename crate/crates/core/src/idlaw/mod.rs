//! Infinitely divisible laws as characteristic triplets (γ, Σ, Q).
//!
//! The cumulant convention is the truncated Lévy–Khintchine form
//!
//! ```text
//! ψ(θ) = i⟨γ,θ⟩ − ½⟨θ,Σθ⟩ + ∫ (e^{i⟨θ,x⟩} − 1 − i⟨θ,x⟩·1{‖x‖≤1}) Q(dx)
//! ```
//!
//! with the Euclidean norm in the truncation indicator. Atomic Lévy
//! measures are evaluated exactly; parametric ones by quadrature, and every
//! numerical value carries its error estimate.

mod atoms;
mod densities;
mod levy;

pub use atoms::{find_admissible_scale, in_scale_exclusion_set, scan_atoms_2pi, AtomScan, TWO_PI_TOL};
pub use densities::{ExpJumps, GammaLevy};
pub use levy::{merge_atoms, Atom, AtomicPart, LevyDensity, LevyMeasure, SmallJumpBudget, ORIGIN_TOL};
pub(crate) use levy::norm;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{Integral, QuadSpec};

/// An infinitely divisible law on R^d.
#[derive(Debug, Clone)]
pub struct CharTriplet {
    gamma: DVector<f64>,
    sigma: DMatrix<f64>,
    levy: LevyMeasure,
}

impl CharTriplet {
    /// Validates and builds a triplet.
    ///
    /// Σ must be symmetric positive semidefinite (smallest eigenvalue at least
    /// −1e−10·‖Σ‖) and ∫ min(1, ‖x‖²) Q(dx) must be finite.
    pub fn new(gamma: DVector<f64>, sigma: DMatrix<f64>, levy: LevyMeasure) -> Result<Self> {
        let d = gamma.len();
        if d == 0 {
            return Err(Error::InvalidModel("triplet dimension must be positive".into()));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "Gaussian covariance",
                expected: d,
                found: sigma.nrows().max(sigma.ncols()),
            });
        }
        if levy.dim() != d {
            return Err(Error::DimensionMismatch {
                context: "Levy measure",
                expected: d,
                found: levy.dim(),
            });
        }
        check_psd(&sigma)?;
        if !levy.is_zero() {
            let mass = levy.integrability(&QuadSpec::default())?;
            if !mass.value.is_finite() {
                return Err(Error::InvalidModel("Levy measure fails ∫min(1,|x|²) < ∞".into()));
            }
        }
        Ok(CharTriplet { gamma, sigma, levy })
    }

    /// The law δ₀ on R^d.
    pub fn zero(dim: usize) -> Self {
        CharTriplet {
            gamma: DVector::zeros(dim),
            sigma: DMatrix::zeros(dim, dim),
            levy: LevyMeasure::zero(dim),
        }
    }

    pub fn gaussian(sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        CharTriplet::new(DVector::zeros(d), sigma, LevyMeasure::zero(d))
    }

    pub fn drift(gamma: DVector<f64>) -> Self {
        let d = gamma.len();
        CharTriplet {
            gamma,
            sigma: DMatrix::zeros(d, d),
            levy: LevyMeasure::zero(d),
        }
    }

    /// A pure-jump law with the given atoms and zero drift γ.
    pub fn compound_poisson(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        CharTriplet::new(DVector::zeros(dim), DMatrix::zeros(dim, dim), LevyMeasure::atomic(dim, atoms)?)
    }

    /// Scalar convenience constructor.
    pub fn scalar(gamma: f64, sigma2: f64, levy: LevyMeasure) -> Result<Self> {
        CharTriplet::new(
            DVector::from_element(1, gamma),
            DMatrix::from_element(1, 1, sigma2),
            levy,
        )
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn levy(&self) -> &LevyMeasure {
        &self.levy
    }

    pub fn is_zero(&self) -> bool {
        self.gamma.iter().all(|v| *v == 0.0) && self.sigma.iter().all(|v| *v == 0.0) && self.levy.is_zero()
    }

    /// ψ(θ) with its quadrature error.
    pub fn cumulant_with_error(&self, theta: &[f64], spec: &QuadSpec) -> Result<Integral<Complex64>> {
        self.check_theta(theta)?;
        let th = DVector::from_column_slice(theta);
        let drift = self.gamma.dot(&th);
        let quad = (th.transpose() * &self.sigma * &th)[(0, 0)];
        let base = Complex64::new(-0.5 * quad, drift);
        if self.levy.is_zero() {
            return Ok(Integral::exact(base));
        }
        Ok(self.levy.compensated_term(theta, spec)?.map(|v| v + base))
    }

    /// ψ(θ).
    pub fn cumulant(&self, theta: &[f64]) -> Result<Complex64> {
        Ok(self.cumulant_with_error(theta, &QuadSpec::default())?.value)
    }

    /// E e^{i⟨θ,X⟩} = exp ψ(θ).
    pub fn charfn(&self, theta: &[f64]) -> Result<Complex64> {
        Ok(self.cumulant(theta)?.exp())
    }

    /// Laplace-type exponent κ(w) = ψ(−iw) of a one-dimensional law,
    /// defined for Re w ≤ 0: E e^{wX} = e^{κ(w)}.
    pub fn laplace_exponent(&self, w: Complex64, spec: &QuadSpec) -> Result<Integral<Complex64>> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch {
                context: "Laplace exponent",
                expected: 1,
                found: self.dim(),
            });
        }
        if w.re > 1e-12 {
            return Err(Error::InvalidModel(format!("Laplace exponent needs Re w <= 0, got {w}")));
        }
        let base = w * self.gamma[0] + w * w * (0.5 * self.sigma[(0, 0)]);
        if self.levy.is_zero() {
            return Ok(Integral::exact(base));
        }
        Ok(self.levy.compensated_laplace(w, spec)?.map(|v| v + base))
    }

    /// Law of the sum of independent variables: component-wise sum of triplets.
    pub fn convolve(&self, other: &CharTriplet) -> Result<CharTriplet> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "convolve",
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(CharTriplet {
            gamma: &self.gamma + &other.gamma,
            sigma: &self.sigma + &other.sigma,
            levy: self.levy.add(&other.levy),
        })
    }

    /// Law of M·X for a q×d matrix M.
    ///
    /// Σ ↦ MΣM', Q ↦ Q∘M⁻¹ (images at the origin dropped) and the drift is
    /// recompensated for the moved truncation ball so that the new
    /// characteristic function at θ equals the old one at M'θ.
    pub fn linear_map(&self, map: &DMatrix<f64>) -> Result<CharTriplet> {
        if map.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "linear_map columns",
                expected: self.dim(),
                found: map.ncols(),
            });
        }
        let q = map.nrows();
        let sigma = map * &self.sigma * map.transpose();
        let sigma = 0.5 * (&sigma + sigma.transpose());
        let spec = QuadSpec::default();
        let mut correction = DVector::zeros(q);
        if !self.levy.is_zero() {
            for i in 0..q {
                correction[i] = self
                    .levy
                    .integrate_real(
                        &|x| {
                            let mut y = vec![0.0; q];
                            levy::apply(map, x, &mut y);
                            let inside_new = norm(&y) <= 1.0;
                            let inside_old = norm(x) <= 1.0;
                            match (inside_new, inside_old) {
                                (true, false) => y[i],
                                (false, true) => -y[i],
                                _ => 0.0,
                            }
                        },
                        &spec,
                    )?
                    .value;
            }
        }
        let levy = match &self.levy {
            LevyMeasure::Atomic { atoms, .. } => {
                let mut mapped = Vec::with_capacity(atoms.len());
                for a in atoms {
                    let p = map * &a.point;
                    if p.norm() <= ORIGIN_TOL {
                        log::warn!("atom {:?} maps to the origin and is dropped", a.point.as_slice());
                        continue;
                    }
                    mapped.push(Atom { point: p, mass: a.mass });
                }
                LevyMeasure::Atomic {
                    dim: q,
                    atoms: merge_atoms(mapped),
                }
            }
            other if other.is_zero() => LevyMeasure::zero(q),
            other => LevyMeasure::Pushforward {
                base: Box::new(other.clone()),
                map: map.clone(),
                correction: correction.clone(),
            },
        };
        Ok(CharTriplet {
            gamma: map * &self.gamma + correction,
            sigma,
            levy,
        })
    }

    /// The law with cumulant m·ψ: every component scaled by `m ≥ 0`.
    pub fn scaled(&self, m: f64) -> Result<CharTriplet> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::NegativeMeasure(m));
        }
        if m == 0.0 {
            return Ok(CharTriplet::zero(self.dim()));
        }
        Ok(CharTriplet {
            gamma: &self.gamma * m,
            sigma: &self.sigma * m,
            levy: self.levy.scaled(m),
        })
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "theta",
                expected: self.dim(),
                found: theta.len(),
            });
        }
        Ok(())
    }
}

fn check_psd(sigma: &DMatrix<f64>) -> Result<()> {
    let asym = (sigma - sigma.transpose()).abs().max();
    let scale = sigma.norm().max(f64::MIN_POSITIVE);
    if asym > 1e-12 * scale.max(1.0) {
        return Err(Error::InvalidModel(format!("Gaussian covariance is not symmetric (defect {asym:.3e})")));
    }
    if sigma.nrows() == 0 || sigma.iter().all(|v| *v == 0.0) {
        return Ok(());
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let min = eig.eigenvalues.min();
    if min < -1e-10 * sigma.norm() {
        return Err(Error::InvalidModel(format!("Gaussian covariance has negative eigenvalue {min:.3e}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cumulant_examples() {
        let g = CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((g.cumulant(&[1.0]).unwrap() - c(-0.5, 0.0)).norm() < 1e-15);
        let d = CharTriplet::drift(DVector::from_element(1, 2.0));
        assert!((d.cumulant(&[1.0]).unwrap() - c(0.0, 2.0)).norm() < 1e-15);
        let cp = CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 1.0)]).unwrap();
        // e^{iπ} − 1 − iπ
        assert!((cp.cumulant(&[PI]).unwrap() - c(-2.0, -PI)).norm() < 1e-14);
    }

    #[test]
    fn charfn_examples() {
        let cp = CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 1.0)]).unwrap();
        assert_eq!(cp.charfn(&[0.0]).unwrap(), c(1.0, 0.0));
        let g = CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((g.charfn(&[1.0]).unwrap().re - (-0.5f64).exp()).abs() < 1e-15);
        let phi = cp.charfn(&[1.0]).unwrap();
        let expected = (c(0.0, 1.0).exp() - 1.0).exp() * c(0.0, -1.0).exp();
        assert!((phi - expected).norm() < 1e-15);
        assert!((phi.norm() - (1f64.cos() - 1.0).exp()).abs() < 1e-15);
        assert!((phi.norm() - 0.631_52).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = CharTriplet::zero(2);
        assert!(matches!(g.cumulant(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(g.convolve(&CharTriplet::zero(1)).is_err());
        assert!(g.linear_map(&DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CharTriplet::gaussian(s).is_err());
    }

    #[test]
    fn convolve_examples() {
        let x = CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 1.0)]).unwrap();
        let y = CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 2.0)]).unwrap();
        let z = x.convolve(&y).unwrap();
        match z.levy() {
            LevyMeasure::Atomic { atoms, .. } => {
                assert_eq!(atoms.len(), 1);
                assert_eq!(atoms[0].mass, 3.0);
            }
            _ => panic!("expected atomic"),
        }
        let id = x.convolve(&CharTriplet::zero(1)).unwrap();
        for t in [0.3, 1.0, 2.0] {
            assert_eq!(id.charfn(&[t]).unwrap(), x.charfn(&[t]).unwrap());
        }
        let g1 = CharTriplet::gaussian(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let g2 = CharTriplet::gaussian(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let g3 = g1.convolve(&g2).unwrap();
        assert_eq!(g3.sigma()[(0, 0)], 3.0);
        for k in 0..10 {
            let t = -2.0 + 0.45 * k as f64;
            let prod = g1.charfn(&[t]).unwrap() * g2.charfn(&[t]).unwrap();
            assert!((g3.charfn(&[t]).unwrap() - prod).norm() < 1e-15);
            assert!((g3.charfn(&[t]).unwrap().re - (-1.5 * t * t).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_map_examples() {
        let t = CharTriplet::compound_poisson(2, vec![Atom::new(vec![2.0 * PI, 0.0], 1.0)]).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        let mapped = t.linear_map(&m).unwrap();
        let atoms = mapped.levy().atomic_part().atoms;
        assert_eq!(atoms.len(), 1);
        assert!((atoms[0].point[0] - PI).abs() < 1e-15 && atoms[0].point[1] == 0.0);
        assert_eq!(atoms[0].mass, 1.0);

        let t = CharTriplet::compound_poisson(2, vec![Atom::new(vec![1.0, 2.0], 1.0)]).unwrap();
        let p = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let proj = t.linear_map(&p).unwrap();
        let atoms = proj.levy().atomic_part().atoms;
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].point[0], 1.0);
        // the atom left the unit ball's complement: drift picks up the compensator
        for th in [-1.3, 0.2, 0.9, 2.5] {
            let lhs = proj.charfn(&[th]).unwrap();
            let rhs = t.charfn(&[th, 0.0]).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }

        let id = t.linear_map(&DMatrix::identity(2, 2)).unwrap();
        assert!((id.gamma() - t.gamma()).norm() == 0.0);
    }

    #[test]
    fn linear_map_parametric_charfn_identity() {
        let base = CharTriplet::scalar(0.3, 0.2, LevyMeasure::Parametric(std::sync::Arc::new(GammaLevy::new(1.0, 1.5).unwrap()))).unwrap();
        let m = DMatrix::from_row_slice(2, 1, &[2.0, -0.7]);
        let mapped = base.linear_map(&m).unwrap();
        for (a, b) in [(0.4, 0.1), (-1.0, 2.0), (0.0, 0.5)] {
            let lhs = mapped.charfn(&[a, b]).unwrap();
            let rhs = base.charfn(&[2.0 * a - 0.7 * b]).unwrap();
            assert!((lhs - rhs).norm() < 1e-9, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn scaled_measure() {
        let cp = CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 1.0)]).unwrap();
        let two = cp.scaled(2.0).unwrap();
        for t in [-1.0, 0.5, 3.0] {
            let a = two.cumulant(&[t]).unwrap();
            let b = cp.cumulant(&[t]).unwrap() * 2.0;
            assert!((a - b).norm() < 1e-14);
        }
        assert!(cp.scaled(0.0).unwrap().is_zero());
        assert!(matches!(cp.scaled(-1.0), Err(Error::NegativeMeasure(_))));
    }

    #[test]
    fn laplace_exponent_of_poisson() {
        let p = CharTriplet::compound_poisson(1, vec![Atom::new(vec![1.0], 1.0)]).unwrap();
        // the compensator of a unit jump is folded back into γ by the caller;
        // here γ = 0 so κ(w) = e^{w} − 1 − w
        let w = c(-0.5, 0.0);
        let k = p.laplace_exponent(w, &QuadSpec::default()).unwrap().value;
        assert!((k - (w.exp() - 1.0 - w)).norm() < 1e-15);
        assert!(p.laplace_exponent(c(0.5, 0.0), &QuadSpec::default()).is_err());
    }
}
