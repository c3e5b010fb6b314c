//! Kernel functions f: S × R^l → R^{q×d} of mixed moving averages.
//!
//! A kernel is, per class A of the mixing space, a finite sum of scalar
//! shapes times constant matrices: f(A, s) = Σ_k φ_k(s)·M_k.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar profile φ: R^l → R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Shape {
    /// Π_i e^{−λ_i s_i}·1{s_i ≥ 0}; one rate per axis.
    Exponential { rates: Vec<f64> },
    /// 1{lower ≤ s < upper} componentwise.
    Indicator { lower: Vec<f64>, upper: Vec<f64> },
    /// e^{−λ‖s‖²/2}.
    Gaussian { precision: f64 },
    /// φ ≡ 1; never integrable, kept for divergence diagnostics.
    Constant,
    /// e^{−λ s_1}·1{s_1 ≥ 0}·Π_{i>1} 1{|s_i| ≤ w}: a one-sided slab.
    Slab { rate: f64, half_width: f64 },
}

/// Where a class of the kernel can be nonzero.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Empty,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Nonzero on an unbounded set without declared decay.
    Unbounded,
}

impl Shape {
    pub fn validate(&self, l: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        match self {
            Shape::Exponential { rates } => {
                if rates.len() != l {
                    return Err(Error::DimensionMismatch {
                        context: "exponential kernel rates",
                        expected: l,
                        found: rates.len(),
                    });
                }
                if rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
                    return bad(format!("exponential kernel rates must be positive, got {rates:?}"));
                }
            }
            Shape::Indicator { lower, upper } => {
                if lower.len() != l || upper.len() != l {
                    return Err(Error::DimensionMismatch {
                        context: "indicator kernel box",
                        expected: l,
                        found: lower.len().max(upper.len()),
                    });
                }
                if lower.iter().zip(upper).any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
                    return bad(format!("indicator kernel box is empty or unbounded: {lower:?}..{upper:?}"));
                }
            }
            Shape::Gaussian { precision } => {
                if !(*precision > 0.0) || !precision.is_finite() {
                    return bad(format!("gaussian kernel precision must be positive, got {precision}"));
                }
            }
            Shape::Constant => {}
            Shape::Slab { rate, half_width } => {
                if !(*rate > 0.0 && *half_width > 0.0) {
                    return bad(format!("slab kernel needs positive rate and width, got ({rate}, {half_width})"));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, s: &[f64]) -> f64 {
        match self {
            Shape::Exponential { rates } => {
                let mut e = 0.0;
                for (si, r) in s.iter().zip(rates) {
                    if *si < 0.0 {
                        return 0.0;
                    }
                    e += r * si;
                }
                (-e).exp()
            }
            Shape::Indicator { lower, upper } => {
                let inside = s.iter().zip(lower.iter().zip(upper)).all(|(x, (a, b))| *x >= *a && *x < *b);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Gaussian { precision } => (-0.5 * precision * s.iter().map(|v| v * v).sum::<f64>()).exp(),
            Shape::Constant => 1.0,
            Shape::Slab { rate, half_width } => {
                if s[0] < 0.0 || s[1..].iter().any(|v| v.abs() > *half_width) {
                    0.0
                } else {
                    (-rate * s[0]).exp()
                }
            }
        }
    }

    /// Box outside which |φ| ≤ `tail` (exactly zero for compact shapes).
    pub fn support(&self, l: usize, tail: f64) -> Support {
        let reach = (1.0 / tail).ln().max(0.0);
        match self {
            Shape::Exponential { rates } => Support::Box {
                lower: vec![0.0; l],
                upper: rates.iter().map(|r| reach / r).collect(),
            },
            Shape::Indicator { lower, upper } => Support::Box {
                lower: lower.clone(),
                upper: upper.clone(),
            },
            Shape::Gaussian { precision } => {
                let r = (2.0 * reach / precision).sqrt();
                Support::Box {
                    lower: vec![-r; l],
                    upper: vec![r; l],
                }
            }
            Shape::Constant => Support::Unbounded,
            Shape::Slab { rate, half_width } => {
                let mut lower = vec![-half_width; l];
                let mut upper = vec![*half_width; l];
                lower[0] = 0.0;
                upper[0] = reach / rate;
                Support::Box { lower, upper }
            }
        }
    }

    /// Per-axis coordinates where φ is discontinuous or not smooth.
    pub fn breaks(&self, l: usize) -> Vec<Vec<f64>> {
        match self {
            Shape::Exponential { .. } => vec![vec![0.0]; l],
            Shape::Indicator { lower, upper } => (0..l).map(|i| vec![lower[i], upper[i]]).collect(),
            Shape::Gaussian { .. } | Shape::Constant => vec![Vec::new(); l],
            Shape::Slab { half_width, .. } => {
                let mut b = vec![vec![-half_width, *half_width]; l];
                b[0] = vec![0.0];
                b
            }
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self, Shape::Indicator { .. } | Shape::Constant)
    }

    /// Distance over which φ decays by a factor e, or the support diameter
    /// for compact shapes. `None` when φ does not decay.
    pub fn decay_length(&self) -> Option<f64> {
        match self {
            Shape::Exponential { rates } => rates.iter().map(|r| 1.0 / r).reduce(f64::max),
            Shape::Indicator { lower, upper } => lower.iter().zip(upper).map(|(a, b)| b - a).reduce(f64::max),
            Shape::Gaussian { precision } => Some((2.0 / precision).sqrt()),
            Shape::Constant => None,
            Shape::Slab { rate, half_width } => Some((1.0 / rate).max(2.0 * half_width)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Shape::Exponential { rates } => format!("exp{rates:?}"),
            Shape::Indicator { lower, upper } => format!("1[{lower:?},{upper:?})"),
            Shape::Gaussian { precision } => format!("gauss({precision})"),
            Shape::Constant => "1".into(),
            Shape::Slab { rate, half_width } => format!("slab({rate},{half_width})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelTerm {
    pub shape: Shape,
    pub matrix: DMatrix<f64>,
}

impl KernelTerm {
    pub fn new(shape: Shape, matrix: DMatrix<f64>) -> Self {
        KernelTerm { shape, matrix }
    }
}

/// f(A, s) = Σ_k φ_k(s)·M_k, one term list per class A.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    q: usize,
    d: usize,
    l: usize,
    classes: Vec<Vec<KernelTerm>>,
}

impl Kernel {
    pub fn new(q: usize, d: usize, l: usize, classes: Vec<Vec<KernelTerm>>) -> Result<Self> {
        if q == 0 || d == 0 || l == 0 {
            return Err(Error::InvalidModel("kernel dimensions must be positive".into()));
        }
        if classes.is_empty() {
            return Err(Error::InvalidModel("kernel needs at least one class".into()));
        }
        for terms in &classes {
            for t in terms {
                t.shape.validate(l)?;
                if t.matrix.nrows() != q || t.matrix.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        context: "kernel matrix",
                        expected: q * d,
                        found: t.matrix.nrows() * t.matrix.ncols(),
                    });
                }
            }
        }
        Ok(Kernel { q, d, l, classes })
    }

    /// One class, one term.
    pub fn single(shape: Shape, matrix: DMatrix<f64>, l: usize) -> Result<Self> {
        Kernel::new(matrix.nrows(), matrix.ncols(), l, vec![vec![KernelTerm::new(shape, matrix)]])
    }

    /// Scalar kernel (q = d = 1) with a single shape.
    pub fn scalar(shape: Shape, l: usize) -> Result<Self> {
        Kernel::single(shape, DMatrix::from_element(1, 1, 1.0), l)
    }

    pub fn zero(q: usize, d: usize, l: usize, classes: usize) -> Result<Self> {
        Kernel::new(q, d, l, vec![Vec::new(); classes.max(1)])
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn classes(&self) -> usize {
        self.classes.len()
    }

    pub fn terms(&self, class: usize) -> &[KernelTerm] {
        &self.classes[class]
    }

    pub fn is_zero(&self) -> bool {
        (0..self.classes()).all(|a| self.class_is_zero(a))
    }

    pub fn class_is_zero(&self, class: usize) -> bool {
        self.classes[class].iter().all(|t| t.matrix.iter().all(|v| *v == 0.0))
    }

    /// Writes f(A, s) into `out` (q×d).
    pub fn eval_into(&self, class: usize, s: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for t in &self.classes[class] {
            let v = t.shape.value(s);
            if v != 0.0 {
                out.zip_apply(&t.matrix, |o, m| *o += v * m);
            }
        }
    }

    pub fn eval(&self, class: usize, s: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.q, self.d);
        self.eval_into(class, s, &mut out);
        out
    }

    /// Bounding box of the class support, with tails cut where every
    /// profile is below `tail`.
    pub fn support(&self, class: usize, tail: f64) -> Support {
        if self.class_is_zero(class) {
            return Support::Empty;
        }
        let mut lower = vec![f64::INFINITY; self.l];
        let mut upper = vec![f64::NEG_INFINITY; self.l];
        for t in &self.classes[class] {
            if t.matrix.iter().all(|v| *v == 0.0) {
                continue;
            }
            match t.shape.support(self.l, tail) {
                Support::Unbounded => return Support::Unbounded,
                Support::Empty => {}
                Support::Box { lower: lo, upper: hi } => {
                    for i in 0..self.l {
                        lower[i] = lower[i].min(lo[i]);
                        upper[i] = upper[i].max(hi[i]);
                    }
                }
            }
        }
        Support::Box { lower, upper }
    }

    /// Sorted, deduplicated breakpoints of the class per axis.
    pub fn breaks(&self, class: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.l];
        for t in &self.classes[class] {
            for (i, b) in t.shape.breaks(self.l).into_iter().enumerate() {
                out[i].extend(b);
            }
        }
        for axis in &mut out {
            axis.sort_by(f64::total_cmp);
            axis.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
        }
        out
    }

    pub fn class_is_piecewise_constant(&self, class: usize) -> bool {
        self.classes[class].iter().all(|t| t.shape.is_piecewise_constant())
    }

    /// Whether every nonzero image f(A, s)x of the class is taken on a
    /// Lebesgue-null set of s, so that pushforwards of atoms carry no atoms.
    pub fn class_is_atomless(&self, class: usize) -> bool {
        let live: Vec<&KernelTerm> = self.classes[class]
            .iter()
            .filter(|t| t.matrix.iter().any(|v| *v != 0.0))
            .collect();
        live.len() == 1 && !live[0].shape.is_piecewise_constant()
    }

    /// Largest decay length over all terms; `None` when some term does not decay.
    pub fn decay_length(&self) -> Option<f64> {
        let mut best: f64 = 0.0;
        for terms in &self.classes {
            for t in terms {
                best = best.max(t.shape.decay_length()?);
            }
        }
        Some(best)
    }

    pub fn describe(&self) -> String {
        let classes: Vec<String> = self
            .classes
            .iter()
            .map(|terms| {
                let parts: Vec<String> = terms.iter().map(|t| t.shape.describe()).collect();
                if parts.is_empty() {
                    "0".into()
                } else {
                    parts.join(" + ")
                }
            })
            .collect();
        classes.join(" | ")
    }

    /// Kernel of M·X: every matrix left-multiplied by `map`.
    pub fn left_mul(&self, map: &DMatrix<f64>) -> Result<Kernel> {
        if map.ncols() != self.q {
            return Err(Error::DimensionMismatch {
                context: "kernel left map",
                expected: self.q,
                found: map.ncols(),
            });
        }
        let classes = self
            .classes
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| KernelTerm::new(t.shape.clone(), map * &t.matrix))
                    .collect()
            })
            .collect();
        Kernel::new(map.nrows(), self.d, self.l, classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_values() {
        let e = Shape::Exponential { rates: vec![2.0] };
        assert_eq!(e.value(&[-0.1]), 0.0);
        assert!((e.value(&[0.5]) - (-1.0f64).exp()).abs() < 1e-15);
        let i = Shape::Indicator {
            lower: vec![0.0],
            upper: vec![1.0],
        };
        assert_eq!(i.value(&[0.0]), 1.0);
        assert_eq!(i.value(&[1.0]), 0.0);
        let s = Shape::Slab {
            rate: 1.0,
            half_width: 0.5,
        };
        assert_eq!(s.value(&[1.0, 0.6]), 0.0);
        assert!((s.value(&[1.0, 0.4]) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn support_truncation_bounds_tail() {
        let e = Shape::Exponential { rates: vec![0.5, 2.0] };
        match e.support(2, 1e-6) {
            Support::Box { upper, .. } => {
                assert!((e.value(&[upper[0], 0.0]) - 1e-6).abs() < 1e-15);
                assert!((e.value(&[0.0, upper[1]]) - 1e-6).abs() < 1e-15);
            }
            _ => panic!(),
        }
        assert_eq!(Shape::Constant.support(1, 1e-6), Support::Unbounded);
    }

    #[test]
    fn kernel_eval_and_dims() {
        let k = Kernel::new(
            2,
            1,
            1,
            vec![vec![
                KernelTerm::new(Shape::Exponential { rates: vec![1.0] }, DMatrix::from_column_slice(2, 1, &[1.0, 0.0])),
                KernelTerm::new(
                    Shape::Indicator {
                        lower: vec![0.0],
                        upper: vec![1.0],
                    },
                    DMatrix::from_column_slice(2, 1, &[0.0, 2.0]),
                ),
            ]],
        )
        .unwrap();
        let v = k.eval(0, &[0.5]);
        assert!((v[(0, 0)] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(v[(1, 0)], 2.0);
        assert!(!k.class_is_atomless(0));
        assert_eq!(k.breaks(0), vec![vec![0.0, 1.0]]);
        assert!(Kernel::new(1, 1, 1, vec![vec![KernelTerm::new(Shape::Constant, DMatrix::zeros(2, 1))]]).is_err());
    }

    #[test]
    fn zero_kernel() {
        let k = Kernel::zero(1, 1, 1, 1).unwrap();
        assert!(k.is_zero());
        assert_eq!(k.support(0, 1e-9), Support::Empty);
    }
}
