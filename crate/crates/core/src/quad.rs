//! Adaptive tensor-product Gauss–Kronrod quadrature on boxes, plus
//! Gauss–Hermite rules for Gaussian expectations.
//!
//! The box integrator starts from a grid induced by caller-supplied
//! breakpoints (kernel discontinuities, kinks) so that every initial cell
//! holds a piecewise-smooth integrand, then bisects the cell with the
//! largest Kronrod/Gauss discrepancy until the absolute error budget is met.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// 15 nodes on [-1, 1] with Kronrod and embedded Gauss weights.
struct Rule {
    nodes: [f64; 15],
    kronrod: [f64; 15],
    gauss: [f64; 15],
}

fn rule() -> &'static Rule {
    static RULE: std::sync::OnceLock<Rule> = std::sync::OnceLock::new();
    RULE.get_or_init(|| {
        let mut nodes = [0.0; 15];
        let mut kronrod = [0.0; 15];
        let mut gauss = [0.0; 15];
        for i in 0..7 {
            nodes[i] = -XGK[i];
            nodes[14 - i] = XGK[i];
            kronrod[i] = WGK[i];
            kronrod[14 - i] = WGK[i];
            if i % 2 == 1 {
                gauss[i] = WG[i / 2];
                gauss[14 - i] = WG[i / 2];
            }
        }
        nodes[7] = 0.0;
        kronrod[7] = WGK[7];
        gauss[7] = WG[3];
        Rule {
            nodes,
            kronrod,
            gauss,
        }
    })
}

/// Error control for [`integrate_box`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_boxes: usize,
    /// When false, running out of boxes returns the estimate with
    /// `converged = false` instead of an error. Used for indicator-type
    /// integrands whose discontinuities cannot be resolved to full precision.
    pub strict: bool,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_boxes: 20_000,
            strict: true,
        }
    }
}

impl QuadSpec {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        QuadSpec {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }

    pub fn lenient(self) -> Self {
        QuadSpec {
            strict: false,
            ..self
        }
    }

    fn budget(&self, magnitude: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * magnitude)
    }
}

/// A quadrature result with its error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl<T> Integral<T> {
    pub fn exact(value: T) -> Self {
        Integral {
            value,
            error: 0.0,
            evaluations: 0,
            converged: true,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Integral<U> {
        Integral {
            value: f(self.value),
            error: self.error,
            evaluations: self.evaluations,
            converged: self.converged,
        }
    }
}

/// An axis-aligned box with per-axis breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub breaks: Vec<Vec<f64>>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let breaks = vec![Vec::new(); lower.len()];
        Region {
            lower,
            upper,
            breaks,
        }
    }

    pub fn with_breaks(mut self, breaks: Vec<Vec<f64>>) -> Self {
        self.breaks = breaks;
        self
    }

    /// Splits every axis uniformly into `cells` pieces in addition to the breakpoints.
    pub fn with_uniform_cells(mut self, cells: usize) -> Self {
        for i in 0..self.dim() {
            let (a, b) = (self.lower[i], self.upper[i]);
            for k in 1..cells {
                self.breaks[i].push(a + (b - a) * k as f64 / cells as f64);
            }
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .any(|(a, b)| !(b > a))
    }

    fn initial_cells(&self) -> Vec<Cell> {
        let dim = self.dim();
        let mut edges: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for i in 0..dim {
            let (a, b) = (self.lower[i], self.upper[i]);
            let mut e = vec![a, b];
            if let Some(br) = self.breaks.get(i) {
                e.extend(br.iter().copied().filter(|x| *x > a && *x < b));
            }
            e.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
            e.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
            edges.push(e);
        }
        let counts: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
        let total: usize = counts.iter().product();
        let mut cells = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let lower = (0..dim).map(|i| edges[i][idx[i]]).collect();
            let upper = (0..dim).map(|i| edges[i][idx[i] + 1]).collect();
            cells.push(Cell { lower, upper });
            for i in 0..dim {
                idx[i] += 1;
                if idx[i] < counts[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        cells
    }
}

#[derive(Debug, Clone)]
struct Cell {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

struct Evaluated {
    cell: Cell,
    value: Vec<f64>,
    error: f64,
    scale: Vec<f64>,
}

impl PartialEq for Evaluated {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Evaluated {}
impl PartialOrd for Evaluated {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Evaluated {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn evaluate_cell<F>(cell: Cell, dim_out: usize, f: &F, point: &mut [f64], out: &mut [f64]) -> Evaluated
where
    F: Fn(&[f64], &mut [f64]),
{
    let r = rule();
    let dim = cell.lower.len();
    let half: Vec<f64> = (0..dim).map(|i| 0.5 * (cell.upper[i] - cell.lower[i])).collect();
    let mid: Vec<f64> = (0..dim).map(|i| 0.5 * (cell.upper[i] + cell.lower[i])).collect();
    let jac: f64 = half.iter().product();
    let mut kron = vec![0.0; dim_out];
    let mut gauss = vec![0.0; dim_out];
    let total = 15usize.pow(dim as u32);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut wk = 1.0;
        let mut wg = 1.0;
        for i in 0..dim {
            point[i] = mid[i] + half[i] * r.nodes[idx[i]];
            wk *= r.kronrod[idx[i]];
            wg *= r.gauss[idx[i]];
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        f(&point[..dim], out);
        for k in 0..dim_out {
            kron[k] += wk * out[k];
            if wg != 0.0 {
                gauss[k] += wg * out[k];
            }
        }
        for i in 0..dim {
            idx[i] += 1;
            if idx[i] < 15 {
                break;
            }
            idx[i] = 0;
        }
    }
    let mut error = 0.0f64;
    for k in 0..dim_out {
        kron[k] *= jac;
        gauss[k] *= jac;
        error = error.max((kron[k] - gauss[k]).abs());
    }
    Evaluated {
        cell,
        value: kron,
        error,
        scale: half,
    }
}

/// Integrates a vector-valued function over a region.
///
/// `f(point, out)` must write `dim_out` values into `out` (pre-zeroed).
pub fn integrate_box<F>(region: &Region, dim_out: usize, spec: &QuadSpec, f: F) -> Result<Integral<Vec<f64>>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = region.dim();
    if dim == 0 {
        let mut out = vec![0.0; dim_out];
        f(&[], &mut out);
        return Ok(Integral {
            value: out,
            error: 0.0,
            evaluations: 1,
            converged: true,
        });
    }
    if region.is_empty() {
        return Ok(Integral::exact(vec![0.0; dim_out]));
    }
    let per_cell = 15usize.pow(dim as u32);
    let mut point = vec![0.0; dim];
    let mut out = vec![0.0; dim_out];
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    let initial_span: Vec<f64> = (0..dim)
        .map(|i| (region.upper[i] - region.lower[i]).max(f64::MIN_POSITIVE))
        .collect();
    for cell in region.initial_cells() {
        heap.push(evaluate_cell(cell, dim_out, &f, &mut point, &mut out));
        evaluations += per_cell;
    }
    let mut boxes = heap.len();
    let (mut value, mut error) = totals(&heap, dim_out);
    let mut converged = error <= spec.budget(max_abs(&value));
    while !converged && boxes < spec.max_boxes {
        let worst = match heap.pop() {
            Some(w) => w,
            None => break,
        };
        // bisect along the axis that is longest relative to the region span
        let axis = (0..dim)
            .max_by(|&a, &b| {
                (worst.scale[a] / initial_span[a]).total_cmp(&(worst.scale[b] / initial_span[b]))
            })
            .unwrap_or(0);
        let cut = 0.5 * (worst.cell.lower[axis] + worst.cell.upper[axis]);
        let mut left = worst.cell.clone();
        left.upper[axis] = cut;
        let mut right = worst.cell;
        right.lower[axis] = cut;
        let l = evaluate_cell(left, dim_out, &f, &mut point, &mut out);
        let r = evaluate_cell(right, dim_out, &f, &mut point, &mut out);
        for k in 0..dim_out {
            value[k] += l.value[k] + r.value[k] - worst.value[k];
        }
        error += l.error + r.error - worst.error;
        heap.push(l);
        heap.push(r);
        evaluations += 2 * per_cell;
        boxes += 1;
        if boxes % 512 == 0 {
            (value, error) = totals(&heap, dim_out);
        }
        converged = error <= spec.budget(max_abs(&value));
    }
    (value, error) = totals(&heap, dim_out);
    converged = converged || error <= spec.budget(max_abs(&value));
    if !converged && spec.strict {
        return Err(Error::Quadrature {
            achieved: error,
            requested: spec.budget(max_abs(&value)),
        });
    }
    Ok(Integral {
        value,
        error,
        evaluations,
        converged,
    })
}

fn totals(heap: &BinaryHeap<Evaluated>, dim_out: usize) -> (Vec<f64>, f64) {
    // summation order must not depend on heap layout
    let mut items: Vec<&Evaluated> = heap.iter().collect();
    items.sort_by(|a, b| {
        a.cell
            .lower
            .iter()
            .zip(&b.cell.lower)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    let mut value = vec![0.0; dim_out];
    let mut error = 0.0;
    for e in items {
        for k in 0..dim_out {
            value[k] += e.value[k];
        }
        error += e.error;
    }
    (value, error)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Scalar convenience wrapper around [`integrate_box`].
pub fn integrate_scalar<F>(region: &Region, spec: &QuadSpec, f: F) -> Result<Integral<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    integrate_box(region, 1, spec, |x, out| out[0] = f(x)).map(|i| i.map(|v| v[0]))
}

/// Complex convenience wrapper around [`integrate_box`].
pub fn integrate_complex<F>(region: &Region, spec: &QuadSpec, f: F) -> Result<Integral<Complex64>>
where
    F: Fn(&[f64]) -> Complex64,
{
    integrate_box(region, 2, spec, |x, out| {
        let z = f(x);
        out[0] = z.re;
        out[1] = z.im;
    })
    .map(|i| i.map(|v| Complex64::new(v[0], v[1])))
}

/// Fixed (non-adaptive) Gauss–Kronrod product rule over a uniform grid of
/// `cells[i]` cells per axis, evaluated in parallel over cells and summed in
/// cell order. The error is the summed Kronrod/Gauss discrepancy.
pub fn tensor_rule_complex<F>(lower: &[f64], upper: &[f64], cells: &[usize], f: F) -> Integral<Complex64>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    use rayon::prelude::*;
    let dim = lower.len();
    if dim == 0 || cells.iter().any(|c| *c == 0) || (0..dim).any(|i| !(upper[i] > lower[i])) {
        return Integral::exact(Complex64::new(0.0, 0.0));
    }
    let total: usize = cells.iter().product();
    let width: Vec<f64> = (0..dim).map(|i| (upper[i] - lower[i]) / cells[i] as f64).collect();
    let parts: Vec<(Complex64, f64)> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut lo = vec![0.0; dim];
            let mut hi = vec![0.0; dim];
            for i in 0..dim {
                let k = rem % cells[i];
                rem /= cells[i];
                lo[i] = lower[i] + k as f64 * width[i];
                hi[i] = if k + 1 == cells[i] { upper[i] } else { lower[i] + (k + 1) as f64 * width[i] };
            }
            let mut point = vec![0.0; dim];
            let mut out = [0.0; 2];
            let ev = evaluate_cell(Cell { lower: lo, upper: hi }, 2, &|x: &[f64], o: &mut [f64]| {
                let z = f(x);
                o[0] = z.re;
                o[1] = z.im;
            }, &mut point, &mut out);
            (Complex64::new(ev.value[0], ev.value[1]), ev.error)
        })
        .collect();
    let mut value = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    for (v, e) in parts {
        value += v;
        error += e;
    }
    Integral {
        value,
        error,
        evaluations: total * 15usize.pow(dim as u32),
        converged: true,
    }
}

/// Gauss–Hermite rule for expectations under the standard normal:
/// `E[g(Z)] ≈ Σ w_i g(x_i)` with `Σ w_i = 1`.
pub fn gauss_hermite_normal(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Hermite order must be positive");
    // Golub–Welsch on the Jacobi matrix of the probabilists' Hermite recurrence
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1 / total).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = Region::new(vec![0.0], vec![2.0]);
        let i = integrate_scalar(&r, &QuadSpec::default(), |x| x[0].powi(5)).unwrap();
        assert!((i.value - 64.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_tail_2d() {
        let r = Region::new(vec![0.0, 0.0], vec![40.0, 40.0]);
        let i = integrate_scalar(&r, &QuadSpec::default(), |x| (-x[0] - 2.0 * x[1]).exp()).unwrap();
        assert!((i.value - 0.5).abs() < 1e-10, "{}", i.value);
    }

    #[test]
    fn breakpoints_resolve_jump() {
        let r = Region::new(vec![-1.0], vec![1.0]).with_breaks(vec![vec![0.3]]);
        let i = integrate_scalar(&r, &QuadSpec::default(), |x| if x[0] >= 0.3 { 1.0 } else { 0.0 }).unwrap();
        assert!((i.value - 0.7).abs() < 1e-13);
        assert_eq!(i.evaluations, 30);
    }

    #[test]
    fn unresolved_jump_without_breaks_converges_adaptively() {
        let r = Region::new(vec![-1.0], vec![1.0]);
        let spec = QuadSpec::with_tol(1e-9, 0.0);
        let i = integrate_scalar(&r, &spec, |x| if x[0] >= 0.3 { 1.0 } else { 0.0 }).unwrap();
        assert!((i.value - 0.7).abs() < 1e-9);
    }

    #[test]
    fn strict_failure_reports_error() {
        let r = Region::new(vec![-1.0], vec![1.0]);
        let spec = QuadSpec {
            abs_tol: 1e-15,
            rel_tol: 0.0,
            max_boxes: 3,
            strict: true,
        };
        let err = integrate_scalar(&r, &spec, |x| if x[0] >= 0.3 { 1.0 } else { 0.0 }).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
        let lenient = integrate_scalar(&r, &spec.lenient(), |x| if x[0] >= 0.3 { 1.0 } else { 0.0 }).unwrap();
        assert!(!lenient.converged);
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite_normal(20);
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-11);
    }

    #[test]
    fn complex_oscillatory() {
        let r = Region::new(vec![-10.0], vec![10.0]).with_uniform_cells(8);
        let i = integrate_complex(&r, &QuadSpec::default(), |x| Complex64::new(0.0, x[0]).exp()).unwrap();
        assert!((i.value.re - 2.0 * 10f64.sin()).abs() < 1e-11);
        assert!(i.value.im.abs() < 1e-11);
    }
}
