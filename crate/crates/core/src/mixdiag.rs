//! Mixing diagnostics along diverging index sequences.
//!
//! Analytic criteria are evaluated from the joint law of the field; empirical
//! criteria from a [`FieldRealization`]. Every criterion produces a
//! [`CriterionTrace`] whose verdict is a fixed function of its stored points.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{joint_charfn, IdField, LinearMapped, PairDomain, SumField};
use crate::idlaw::find_admissible_scale;
use crate::realization::{csv_err, fmt_f64, FieldRealization};
use crate::sequence::{sup, SequenceSpec};

/// Tail threshold for analytic traces.
pub const ANALYTIC_THRESHOLD: f64 = 1e-6;
/// Smallest charfn modulus accepted while tracking a logarithm.
pub const BRANCH_MODULUS_FLOOR: f64 = 1e-12;
/// Default δ-grid for the jump-mass condition.
pub const DEFAULT_DELTAS: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];

/// Empirical tail threshold 4/√M.
pub fn empirical_threshold(replicates: usize) -> f64 {
    4.0 / (replicates as f64).sqrt()
}

/// Outcome of a finite diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    ConsistentWithMixing,
    Inconsistent,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConsistentWithMixing => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    /// Conjunction: any inconsistent wins, then any inconclusive.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Inconsistent, _) | (_, Inconsistent) => Inconsistent,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => ConsistentWithMixing,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluated point of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub n: usize,
    pub t: Vec<f64>,
    pub value: f64,
    pub stderr: f64,
    pub threshold: f64,
}

/// Least-squares summary of log(value) against ‖t‖_∞ over positive values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySummary {
    pub initial: f64,
    pub last: f64,
    /// last / initial, or 0 when both vanish.
    pub ratio: f64,
    /// Fitted exponential rate, when at least two values are positive.
    pub rate: Option<f64>,
}

/// A criterion evaluated along a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionTrace {
    pub name: String,
    pub points: Vec<TracePoint>,
    pub decay: DecaySummary,
    pub verdict: Verdict,
}

/// Verdict rule: the last max(1, N/4) values all at or below their
/// thresholds give consistency; otherwise a last value at most half the
/// first gives an inconclusive verdict; otherwise inconsistent.
pub fn verdict_of(points: &[TracePoint]) -> Verdict {
    if points.is_empty() {
        return Verdict::Inconclusive;
    }
    let tail = (points.len() / 4).max(1);
    if points[points.len() - tail..].iter().all(|p| p.value <= p.threshold) {
        return Verdict::ConsistentWithMixing;
    }
    let first = points[0].value;
    let last = points[points.len() - 1].value;
    if last <= 0.5 * first {
        Verdict::Inconclusive
    } else {
        Verdict::Inconsistent
    }
}

fn decay_of(points: &[TracePoint]) -> DecaySummary {
    let initial = points.first().map_or(0.0, |p| p.value);
    let last = points.last().map_or(0.0, |p| p.value);
    let ratio = if initial == 0.0 {
        if last == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        last / initial
    };
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.value > 0.0)
        .map(|p| (sup(&p.t), p.value.ln()))
        .collect();
    let rate = if xy.len() >= 2 {
        let n = xy.len() as f64;
        let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
        let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| -sxy / sxx)
    } else {
        None
    };
    DecaySummary {
        initial,
        last,
        ratio,
        rate,
    }
}

impl CriterionTrace {
    pub fn new(name: impl Into<String>, points: Vec<TracePoint>) -> Self {
        let verdict = verdict_of(&points);
        let decay = decay_of(&points);
        CriterionTrace {
            name: name.into(),
            points,
            decay,
            verdict,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn last_value(&self) -> f64 {
        self.decay.last
    }

    /// Verdict recomputed from the stored points.
    pub fn recompute_verdict(&self) -> Verdict {
        verdict_of(&self.points)
    }

    /// Columns n, t0.., value, stderr, threshold, verdict (on the prefix).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let l = self.points.first().map_or(0, |p| p.t.len());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["n".to_string()];
        header.extend((0..l).map(|i| format!("t{i}")));
        header.extend(["value", "stderr", "threshold", "verdict"].map(String::from));
        wr.write_record(&header).map_err(csv_err)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut row = vec![p.n.to_string()];
            row.extend(p.t.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(p.value));
            row.push(fmt_f64(p.stderr));
            row.push(fmt_f64(p.threshold));
            row.push(verdict_of(&self.points[..=i]).to_string());
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }
}

fn analytic_trace(
    name: &str,
    seq: &SequenceSpec,
    eval: impl Fn(&[f64]) -> Result<f64> + Sync,
) -> Result<CriterionTrace> {
    let pts = seq.points();
    let values: Vec<f64> = pts.par_iter().map(|t| eval(t)).collect::<Result<Vec<_>>>()?;
    let points = pts
        .into_iter()
        .zip(values)
        .enumerate()
        .map(|(n, (t, value))| TracePoint {
            n,
            t,
            value,
            stderr: 0.0,
            threshold: ANALYTIC_THRESHOLD,
        })
        .collect();
    Ok(CriterionTrace::new(name, points))
}

fn check_seq(field: &dyn IdField, seq: &SequenceSpec) -> Result<()> {
    if seq.l != field.l() {
        return Err(Error::DimensionMismatch {
            context: "sequence dimension",
            expected: field.l(),
            found: seq.l,
        });
    }
    Ok(())
}

fn check_component(field: &dyn IdField, j: usize, k: usize) -> Result<()> {
    let q = field.q();
    if j >= q || k >= q {
        return Err(Error::DimensionMismatch {
            context: "component index",
            expected: q,
            found: j.max(k) + 1,
        });
    }
    Ok(())
}

fn unit(q: usize, i: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; q];
    v[i] = scale;
    v
}

fn cexp_i(x: f64) -> Complex64 {
    Complex64::new(x.cos(), x.sin())
}

// ---------------------------------------------------------------- codifference

/// Codifference entries at one lag, with (j, k) = τ(X₀^{(k)}, X_t^{(j)}).
#[derive(Debug, Clone, PartialEq)]
pub struct CodifferenceMatrix {
    pub t: Vec<f64>,
    pub values: DMatrix<Complex64>,
    /// Homotopy steps taken by the logarithm oracle per entry.
    pub branch_steps: DMatrix<usize>,
}

/// τ^{(jk)}(t) = Σ(t)_{kj} + ∫(e^{ix} − 1)·conj(e^{iy} − 1) Q_{0t}^{jk}(dx, dy).
pub fn codifference_analytic(field: &dyn IdField, t: &[f64], j: usize, k: usize) -> Result<Complex64> {
    check_component(field, j, k)?;
    let sigma = field.gauss_cross(t)?.value[(k, j)];
    let g = move |x: &[f64], y: &[f64]| (cexp_i(x[k]) - 1.0) * (cexp_i(y[j]) - 1.0).conj();
    let jump = field.pair_functional(t, &g, PairDomain::Intersection)?.value;
    Ok(Complex64::new(sigma, 0.0) + jump)
}

/// Continuous logarithm of r ↦ φ(r) on [0, 1] with φ(0) = 1.
///
/// Steps are halved whenever the phase moves by more than π/2; a modulus
/// below [`BRANCH_MODULUS_FLOOR`] is an error. Returns (log φ(1), steps).
pub fn distinguished_log(phi: impl Fn(f64) -> Result<Complex64>) -> Result<(Complex64, usize)> {
    const MAX_STEP: f64 = 1.0 / 16.0;
    const MIN_STEP: f64 = 1e-9;
    let mut r = 0.0;
    let mut v = Complex64::new(1.0, 0.0);
    let mut phase = 0.0;
    let mut h = MAX_STEP;
    let mut steps = 0usize;
    while r < 1.0 {
        let r_next = (r + h).min(1.0);
        let v_next = phi(r_next)?;
        let modulus = v_next.norm();
        if !(modulus >= BRANCH_MODULUS_FLOOR) {
            return Err(Error::BranchFailure { r: r_next, modulus });
        }
        let d = (v_next / v).arg();
        if d.abs() > PI / 2.0 {
            if h <= MIN_STEP {
                return Err(Error::BranchFailure { r: r_next, modulus });
            }
            h *= 0.5;
            continue;
        }
        phase += d;
        r = r_next;
        v = v_next;
        steps += 1;
        h = (h * 2.0).min(MAX_STEP);
    }
    Ok((Complex64::new(v.norm().ln(), phase), steps))
}

/// τ from its definition log E e^{i(X₁−X₂)} − log E e^{iX₁} − log E e^{−iX₂}
/// with X₁ = X₀^{(k)}, X₂ = X_t^{(j)}, all logarithms distinguished.
pub fn codifference_oracle(field: &dyn IdField, t: &[f64], j: usize, k: usize) -> Result<(Complex64, usize)> {
    check_component(field, j, k)?;
    let q = field.q();
    let zero = vec![0.0; field.l()];
    let pts = [zero.clone(), t.to_vec()];
    let (joint, s1) = distinguished_log(|r| joint_charfn(field, &pts, &[unit(q, k, r), unit(q, j, -r)]))?;
    let (m1, s2) = distinguished_log(|r| joint_charfn(field, &[zero.clone()], &[unit(q, k, r)]))?;
    let (m2, s3) = distinguished_log(|r| joint_charfn(field, &[zero.clone()], &[unit(q, j, -r)]))?;
    Ok((joint - m1 - m2, s1 + s2 + s3))
}

/// All q×q entries at lag t.
pub fn codifference_matrix(field: &dyn IdField, t: &[f64]) -> Result<CodifferenceMatrix> {
    let q = field.q();
    let mut values = DMatrix::from_element(q, q, Complex64::new(0.0, 0.0));
    let mut steps = DMatrix::zeros(q, q);
    for j in 0..q {
        for k in 0..q {
            values[(j, k)] = codifference_analytic(field, t, j, k)?;
            steps[(j, k)] = codifference_oracle(field, t, j, k)?.1;
        }
    }
    Ok(CodifferenceMatrix {
        t: t.to_vec(),
        values,
        branch_steps: steps,
    })
}

// ---------------------------------------------------------------- pair criteria

fn require_clean_atoms(field: &dyn IdField) -> Result<()> {
    let scan = field.marginal_atom_scan()?;
    if !scan.applicable {
        return Err(Error::InvalidModel(
            "atoms of the marginal Lévy measure cannot be enumerated; the pair criterion needs them excluded from 2πZ"
                .into(),
        ));
    }
    if !scan.offending.is_empty() {
        return Err(Error::AtomsIn2PiZ {
            count: scan.offending.len(),
        });
    }
    Ok(())
}

/// |E e^{i(X_t^{(j)} − X₀^{(k)})} − E e^{iX₀^{(j)}}·E e^{−iX₀^{(k)}}| from the joint law.
pub fn pair_gap(field: &dyn IdField, t: &[f64], j: usize, k: usize) -> Result<f64> {
    let q = field.q();
    let zero = vec![0.0; field.l()];
    let joint = joint_charfn(field, &[zero.clone(), t.to_vec()], &[unit(q, k, -1.0), unit(q, j, 1.0)])?;
    let a = joint_charfn(field, &[zero.clone()], &[unit(q, j, 1.0)])?;
    let b = joint_charfn(field, &[zero], &[unit(q, k, -1.0)])?;
    Ok((joint - a * b).norm())
}

/// Analytic pair criterion; refuses when X₀ has jump atoms with a
/// coordinate in 2πZ.
pub fn pair_mixing_criterion(field: &dyn IdField, seq: &SequenceSpec, j: usize, k: usize) -> Result<CriterionTrace> {
    check_seq(field, seq)?;
    check_component(field, j, k)?;
    require_clean_atoms(field)?;
    analytic_trace(&format!("pair({j},{k})"), seq, |t| pair_gap(field, t, j, k))
}

/// Monte Carlo estimate of E exp(i(⟨θ₁, X₀⟩ + ⟨θ₂, X_lag⟩)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcfEstimate {
    pub value: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub replicates: usize,
    /// False for a single replicate, where no spread can be estimated.
    pub usable: bool,
}

impl EcfEstimate {
    pub fn stderr(&self) -> f64 {
        self.stderr_re.hypot(self.stderr_im)
    }
}

fn mean_and_stderr(samples: &[Complex64]) -> EcfEstimate {
    let m = samples.len();
    let n = m as f64;
    let mean = samples.iter().fold(Complex64::new(0.0, 0.0), |a, b| a + b) / n;
    if m < 2 {
        return EcfEstimate {
            value: mean,
            stderr_re: f64::INFINITY,
            stderr_im: f64::INFINITY,
            replicates: m,
            usable: false,
        };
    }
    let vr = samples.iter().map(|z| (z.re - mean.re).powi(2)).sum::<f64>() / (n - 1.0);
    let vi = samples.iter().map(|z| (z.im - mean.im).powi(2)).sum::<f64>() / (n - 1.0);
    EcfEstimate {
        value: mean,
        stderr_re: (vr / n).sqrt(),
        stderr_im: (vi / n).sqrt(),
        replicates: m,
        usable: true,
    }
}

fn dotc(theta: &[f64], x: &[f64]) -> f64 {
    theta.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// ECF of (X₀, X_lag) at (θ₁, θ₂).
pub fn ecf_estimator(real: &FieldRealization, theta1: &[f64], theta2: &[f64], lag: &[f64]) -> Result<EcfEstimate> {
    if theta1.len() != real.q() || theta2.len() != real.q() {
        return Err(Error::DimensionMismatch {
            context: "theta",
            expected: real.q(),
            found: theta1.len().max(theta2.len()),
        });
    }
    let p0 = real.require_point(&vec![0.0; real.l()])?;
    let p1 = real.require_point(lag)?;
    let samples: Vec<Complex64> = (0..real.replicates())
        .map(|r| cexp_i(dotc(theta1, real.value(r, p0)) + dotc(theta2, real.value(r, p1))))
        .collect();
    Ok(mean_and_stderr(&samples))
}

/// |E e^{i(⟨θ₁,X_λ⟩ + ⟨θ₂,X_{μ+t}⟩)} − E e^{i⟨θ₁,X_λ⟩}·E e^{i⟨θ₂,X_μ⟩}| with a
/// delta-method standard error.
fn multipoint_gap(
    real: &FieldRealization,
    lam: &[usize],
    mu: &[usize],
    mu_shift: &[usize],
    theta1: &[f64],
    theta2: &[f64],
) -> (f64, f64) {
    let q = real.q();
    let m = real.replicates();
    let phase = |r: usize, idx: &[usize], th: &[f64]| -> f64 {
        idx.iter()
            .enumerate()
            .map(|(i, p)| dotc(&th[i * q..(i + 1) * q], real.value(r, *p)))
            .sum()
    };
    let mut ja = Vec::with_capacity(m);
    let mut aa = Vec::with_capacity(m);
    let mut ba = Vec::with_capacity(m);
    for r in 0..m {
        let a = phase(r, lam, theta1);
        let b = phase(r, mu, theta2);
        let c = phase(r, mu_shift, theta2);
        ja.push(cexp_i(a + c));
        aa.push(cexp_i(a));
        ba.push(cexp_i(b));
    }
    let n = m as f64;
    let mean = |v: &[Complex64]| v.iter().fold(Complex64::new(0.0, 0.0), |s, z| s + z) / n;
    let (j, a, b) = (mean(&ja), mean(&aa), mean(&ba));
    let gap = j - a * b;
    let value = gap.norm();
    if m < 2 {
        return (value, f64::INFINITY);
    }
    // influence of each replicate on the gap, projected on its direction
    let dir = if value > 0.0 { gap / value } else { Complex64::new(1.0, 0.0) };
    let infl: Vec<f64> = (0..m)
        .map(|r| {
            let z = (ja[r] - j) - a * (ba[r] - b) - b * (aa[r] - a);
            (z * dir.conj()).re
        })
        .collect();
    let var = infl.iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
    (value, (var / n).sqrt())
}

/// Empirical pair criterion from a realization containing 0 and every t_n.
pub fn pair_mixing_criterion_empirical(
    real: &FieldRealization,
    seq: &SequenceSpec,
    j: usize,
    k: usize,
) -> Result<CriterionTrace> {
    let q = real.q();
    if j >= q || k >= q {
        return Err(Error::DimensionMismatch {
            context: "component index",
            expected: q,
            found: j.max(k) + 1,
        });
    }
    multipoint_ecf_probe(
        real,
        &[vec![0.0; real.l()]],
        &[vec![0.0; real.l()]],
        &unit(q, k, -1.0),
        &unit(q, j, 1.0),
        seq,
    )
    .map(|mut t| {
        t.name = format!("pair-empirical({j},{k})");
        t
    })
}

/// Empirical multipoint criterion with X_λ = (X_{λ_1}, …), X_μ = (X_{μ_1}, …).
pub fn multipoint_ecf_probe(
    real: &FieldRealization,
    lambda_points: &[Vec<f64>],
    mu_points: &[Vec<f64>],
    theta1: &[f64],
    theta2: &[f64],
    seq: &SequenceSpec,
) -> Result<CriterionTrace> {
    let q = real.q();
    if theta1.len() != lambda_points.len() * q || theta2.len() != mu_points.len() * q {
        return Err(Error::DimensionMismatch {
            context: "stacked theta",
            expected: lambda_points.len() * q,
            found: theta1.len(),
        });
    }
    let lam: Vec<usize> = lambda_points.iter().map(|p| real.require_point(p)).collect::<Result<_>>()?;
    let mu: Vec<usize> = mu_points.iter().map(|p| real.require_point(p)).collect::<Result<_>>()?;
    let threshold = empirical_threshold(real.replicates());
    let mut points = Vec::new();
    for (n, t) in seq.points().into_iter().enumerate() {
        let shifted: Vec<usize> = mu_points
            .iter()
            .map(|p| {
                let s: Vec<f64> = p.iter().zip(&t).map(|(a, b)| a + b).collect();
                real.require_point(&s)
            })
            .collect::<Result<_>>()?;
        let (value, stderr) = multipoint_gap(real, &lam, &mu, &shifted, theta1, theta2);
        points.push(TracePoint {
            n,
            t,
            value,
            stderr,
            threshold,
        });
    }
    Ok(CriterionTrace::new("multipoint-empirical", points))
}

// ---------------------------------------------------------------- jump conditions

/// Traces of ‖Σ(t_n)‖ and Q_{0t_n}(‖x‖·‖y‖ > δ) for each δ.
#[derive(Debug, Clone, PartialEq)]
pub struct MaruyamaReport {
    pub mm1: CriterionTrace,
    pub mm2: Vec<(f64, CriterionTrace)>,
}

impl MaruyamaReport {
    pub fn verdict(&self) -> Verdict {
        self.mm2.iter().fold(self.mm1.verdict, |v, (_, t)| v.and(t.verdict))
    }
}

fn product_norm(x: &[f64], y: &[f64]) -> f64 {
    dotc(x, x).sqrt() * dotc(y, y).sqrt()
}

/// Q_{0t}(‖x‖·‖y‖ > δ).
pub fn joint_jump_mass(field: &dyn IdField, t: &[f64], delta: f64) -> Result<f64> {
    let g = move |x: &[f64], y: &[f64]| Complex64::new(if product_norm(x, y) > delta { 1.0 } else { 0.0 }, 0.0);
    Ok(field.pair_functional(t, &g, PairDomain::Intersection)?.value.re)
}

pub fn maruyama_check(field: &dyn IdField, seq: &SequenceSpec, deltas: &[f64]) -> Result<MaruyamaReport> {
    check_seq(field, seq)?;
    let mm1 = analytic_trace("mm1", seq, |t| Ok(field.gauss_cross(t)?.value.norm()))?;
    let mm2 = deltas
        .iter()
        .map(|&d| Ok((d, analytic_trace(&format!("mm2(delta={d})"), seq, |t| joint_jump_mass(field, t, d))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MaruyamaReport { mm1, mm2 })
}

/// ∫_{0<‖x‖²+‖y‖²≤b} ‖x‖·‖y‖ Q_{0t}(dx, dy).
pub fn smallball_integral(field: &dyn IdField, t: &[f64], bound: f64) -> Result<f64> {
    let g = move |x: &[f64], y: &[f64]| {
        let r2 = dotc(x, x) + dotc(y, y);
        Complex64::new(if r2 <= bound { product_norm(x, y) } else { 0.0 }, 0.0)
    };
    Ok(field.pair_functional(t, &g, PairDomain::Intersection)?.value.re)
}

pub fn smallball_trace(field: &dyn IdField, seq: &SequenceSpec, bound: f64) -> Result<CriterionTrace> {
    check_seq(field, seq)?;
    analytic_trace("smallball", seq, |t| smallball_integral(field, t, bound))
}

/// ∫ min(1, ‖x‖·‖y‖) Q_{0t}(dx, dy).
pub fn jump_dependence(field: &dyn IdField, t: &[f64]) -> Result<f64> {
    let g = |x: &[f64], y: &[f64]| Complex64::new(product_norm(x, y).min(1.0), 0.0);
    Ok(field.pair_functional(t, &g, PairDomain::Intersection)?.value.re)
}

/// ‖Σ(t)‖ (Frobenius) + ∫ min(1, ‖x‖·‖y‖) Q_{0t}(dx, dy).
pub fn combined_value(field: &dyn IdField, t: &[f64]) -> Result<f64> {
    Ok(field.gauss_cross(t)?.value.norm() + jump_dependence(field, t)?)
}

pub fn combined_criterion(field: &dyn IdField, seq: &SequenceSpec) -> Result<CriterionTrace> {
    check_seq(field, seq)?;
    analytic_trace("combined", seq, |t| combined_value(field, t))
}

// ---------------------------------------------------------------- aggregates

/// Conjunction of per-pair verdicts.
pub fn pairwise_mixing_aggregate(traces: &[CriterionTrace]) -> Verdict {
    traces
        .iter()
        .fold(Verdict::ConsistentWithMixing, |v, t| v.and(t.verdict))
}

/// Pair criteria for all j ≤ k and their conjunction.
pub fn pairwise_mixing(
    field: &dyn IdField,
    seq: &SequenceSpec,
) -> Result<(Vec<((usize, usize), CriterionTrace)>, Verdict)> {
    let q = field.q();
    let mut out = Vec::new();
    for j in 0..q {
        for k in j..q {
            out.push(((j, k), pair_mixing_criterion(field, seq, j, k)?));
        }
    }
    let verdict = pairwise_mixing_aggregate(&out.iter().map(|(_, t)| t.clone()).collect::<Vec<_>>());
    Ok((out, verdict))
}

/// max over θ of |E e^{i⟨θ, X_t − X₀⟩} − |E e^{i⟨θ, X₀⟩}|²|.
pub fn law_convergence_check(field: &dyn IdField, seq: &SequenceSpec, thetas: &[Vec<f64>]) -> Result<CriterionTrace> {
    check_seq(field, seq)?;
    let zero = vec![0.0; field.l()];
    let marg: Vec<f64> = thetas
        .iter()
        .map(|th| Ok(joint_charfn(field, &[zero.clone()], &[th.clone()])?.norm_sqr()))
        .collect::<Result<_>>()?;
    analytic_trace("law-convergence", seq, |t| {
        let mut worst = 0.0f64;
        for (th, m) in thetas.iter().zip(&marg) {
            let neg: Vec<f64> = th.iter().map(|v| -v).collect();
            let joint = joint_charfn(field, &[zero.clone(), t.to_vec()], &[neg, th.clone()])?;
            worst = worst.max((joint - m).norm());
        }
        Ok(worst)
    })
}

/// Pair criterion after rescaling components away from 2πZ.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledTrace {
    pub scale: Vec<f64>,
    pub trace: CriterionTrace,
}

pub fn rescaled_criterion(
    field: Arc<dyn IdField>,
    seq: &SequenceSpec,
    j: usize,
    k: usize,
    seed: u64,
) -> Result<RescaledTrace> {
    let marginal = field.marginal_triplet()?;
    let scale = find_admissible_scale(marginal.levy(), seed)?;
    let mapped = LinearMapped::diagonal(field, &scale)?;
    let mut trace = pair_mixing_criterion(&mapped, seq, j, k)?;
    trace.name = format!("rescaled-pair({j},{k})");
    Ok(RescaledTrace { scale, trace })
}

/// Pair-criterion verdicts along several sequence shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct NormFreeReport {
    pub directions: Vec<(String, Verdict, f64)>,
    pub uniform: bool,
    pub verdict: Verdict,
}

pub fn norm_free_probe(field: &dyn IdField, seqs: &[SequenceSpec], j: usize, k: usize) -> Result<NormFreeReport> {
    let mut directions = Vec::new();
    for s in seqs {
        let t = pair_mixing_criterion(field, s, j, k)?;
        directions.push((s.describe(), t.verdict, t.last_value()));
    }
    let first = directions.first().map(|d| d.1).unwrap_or(Verdict::Inconclusive);
    let uniform = directions.iter().all(|d| d.1 == first);
    Ok(NormFreeReport {
        directions,
        uniform,
        verdict: if uniform { first } else { Verdict::Inconclusive },
    })
}

/// Additivity of the combined criterion over independent summands.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditivityReport {
    pub sum_trace: CriterionTrace,
    pub component_traces: Vec<CriterionTrace>,
    /// max_n |trace of the sum − Σ component traces|.
    pub trace_defect: f64,
    /// max_n ‖Σ_sum(t_n) − Σ_i Σ_i(t_n)‖.
    pub sigma_defect: f64,
    /// max_n |∫min(1,‖x‖‖y‖)dQ_{0t_n}^{sum} − Σ_i ∫min(1,‖x‖‖y‖)dQ_{0t_n}^{i}|.
    pub jump_defect: f64,
}

pub fn sum_of_independents_check(fields: Vec<Arc<dyn IdField>>, seq: &SequenceSpec) -> Result<AdditivityReport> {
    let sum = SumField::new(fields.clone())?;
    let sum_trace = combined_criterion(&sum, seq)?;
    let component_traces = fields
        .iter()
        .map(|f| combined_criterion(f.as_ref(), seq))
        .collect::<Result<Vec<_>>>()?;
    let mut trace_defect = 0.0f64;
    let mut sigma_defect = 0.0f64;
    let mut jump_defect = 0.0f64;
    for (n, p) in sum_trace.points.iter().enumerate() {
        let parts: f64 = component_traces.iter().map(|c| c.points[n].value).sum();
        trace_defect = trace_defect.max((p.value - parts).abs());
        let s_sum = sum.gauss_cross(&p.t)?.value;
        let mut s_parts = DMatrix::zeros(sum.q(), sum.q());
        let mut j_parts = 0.0;
        for f in &fields {
            s_parts += f.gauss_cross(&p.t)?.value;
            j_parts += jump_dependence(f.as_ref(), &p.t)?;
        }
        sigma_defect = sigma_defect.max((s_sum - s_parts).norm());
        jump_defect = jump_defect.max((jump_dependence(&sum, &p.t)? - j_parts).abs());
    }
    Ok(AdditivityReport {
        sum_trace,
        component_traces,
        trace_defect,
        sigma_defect,
        jump_defect,
    })
}
