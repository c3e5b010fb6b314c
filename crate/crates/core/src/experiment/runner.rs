//! Executes an experiment config: simulation cache, diagnostics, artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ergodiag::{
    codiff_nnd_check, ergodic_time_average, filter_sequence, time_average_grid, weak_mixing_check, DensityOneSet,
    ErgodicVerdict,
};
use crate::error::{Error, Result};
use crate::field::IdField;
use crate::mixdiag::{
    codifference_analytic, codifference_oracle, combined_criterion, empirical_threshold, law_convergence_check,
    maruyama_check, norm_free_probe, pair_mixing_criterion, pair_mixing_criterion_empirical, pairwise_mixing,
    rescaled_criterion, smallball_trace, CriterionTrace,
};
use crate::realization::{csv_err, fmt_f64, FieldRealization};
use crate::sequence::{sup, SequenceSpec};

use super::config::{BuiltModel, ExperimentConfig};

/// Environment variable overriding `output.directory`.
pub const OUTPUT_DIR_ENV: &str = "OUTPUT_DIR";

/// Tolerance of the codifference cross-check.
pub const CODIFFERENCE_TOL: f64 = 1e-8;

/// Relative tolerance of the Gram matrix eigenvalue check.
pub const NND_TOL: f64 = 1e-8;

/// Lags used by the Gram matrix check.
const NND_POINTS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A hypothesis of the diagnostic is violated by the model.
    Refused(String),
    Failed(String),
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Refused(_) => "refused",
            Status::Failed(_) => "failed",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Status::Ok => "",
            Status::Refused(m) | Status::Failed(m) => m,
        }
    }
}

/// One artifact held in memory until the writer stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticOutcome {
    pub name: String,
    pub status: Status,
    /// consistent / inconsistent / inconclusive for mixing criteria,
    /// ergodic / non-ergodic for ergodicity, pass / fail for checks.
    pub verdict: Option<String>,
    /// Headline number: last trace value, largest deviation, or gap.
    pub value: Option<f64>,
    pub detail: String,
    pub artifacts: Vec<Artifact>,
}

impl DiagnosticOutcome {
    fn from_error(name: &str, e: Error) -> Self {
        let status = match e {
            Error::AtomsIn2PiZ { .. } => Status::Refused(e.to_string()),
            _ => Status::Failed(e.to_string()),
        };
        DiagnosticOutcome {
            name: name.into(),
            status,
            verdict: None,
            value: None,
            detail: String::new(),
            artifacts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub directory: PathBuf,
    pub outcomes: Vec<DiagnosticOutcome>,
    pub files: Vec<FileRecord>,
}

impl RunReport {
    /// 0 success, 2 when a diagnostic failed at runtime, 3 when every
    /// verdict is inconclusive.
    pub fn exit_code(&self) -> i32 {
        if self.outcomes.iter().any(|o| matches!(o.status, Status::Failed(_))) {
            return 2;
        }
        let verdicts: Vec<&str> = self.outcomes.iter().filter_map(|o| o.verdict.as_deref()).collect();
        if !verdicts.is_empty() && verdicts.iter().all(|v| *v == "inconclusive") {
            return 3;
        }
        0
    }

    pub fn outcome(&self, name: &str) -> Option<&DiagnosticOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }
}

/// Resolved output directory: `OUTPUT_DIR` when set, else the config's.
pub fn output_directory(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => PathBuf::from(&cfg.output.directory),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn trace_csv(trace: &CriterionTrace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    Ok(buf)
}

fn xy_csv(rows: impl IntoIterator<Item = (f64, f64)>) -> Result<Vec<u8>> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["x", "y"]).map_err(csv_err)?;
    for (x, y) in rows {
        wr.write_record([fmt_f64(x), fmt_f64(y)]).map_err(csv_err)?;
    }
    wr.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn table_csv(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(header).map_err(csv_err)?;
    for r in rows {
        wr.write_record(r).map_err(csv_err)?;
    }
    wr.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Trace CSV plus its x/y plot file.
fn trace_artifacts(stem: &str, trace: &CriterionTrace) -> Result<Vec<Artifact>> {
    Ok(vec![
        Artifact {
            name: format!("{stem}.csv"),
            bytes: trace_csv(trace)?,
        },
        Artifact {
            name: format!("plot_{stem}.csv"),
            bytes: xy_csv(trace.points.iter().map(|p| (sup(&p.t), p.value)))?,
        },
    ])
}

fn trace_outcome(name: &str, trace: &CriterionTrace, detail: String) -> Result<DiagnosticOutcome> {
    Ok(DiagnosticOutcome {
        name: name.into(),
        status: Status::Ok,
        verdict: Some(trace.verdict.to_string()),
        value: Some(trace.last_value()),
        detail,
        artifacts: trace_artifacts(name, trace)?,
    })
}

fn check_outcome(name: &str, pass: bool, value: f64, detail: String, artifacts: Vec<Artifact>) -> DiagnosticOutcome {
    DiagnosticOutcome {
        name: name.into(),
        status: Status::Ok,
        verdict: Some(if pass { "pass" } else { "fail" }.into()),
        value: Some(value),
        detail,
        artifacts,
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a BuiltModel,
    seq: SequenceSpec,
    /// Realization at 0 and every sequence point, when a diagnostic needs it.
    sample: Option<Arc<FieldRealization>>,
    cache_dir: PathBuf,
}

impl Context<'_> {
    fn field(&self) -> &dyn IdField {
        self.model.field.as_ref()
    }

    fn components(&self) -> (usize, usize) {
        let [j, k] = self.cfg.diagnostics.components;
        (j, k)
    }

    /// Applies a configured threshold to an analytic trace.
    fn thresholded(&self, mut trace: CriterionTrace) -> CriterionTrace {
        if let Some(th) = self.cfg.diagnostics.threshold {
            for p in &mut trace.points {
                p.threshold = th;
            }
            trace = CriterionTrace::new(trace.name.clone(), trace.points);
        }
        trace
    }

    fn sample(&self) -> Result<&FieldRealization> {
        self.sample
            .as_deref()
            .ok_or_else(|| Error::Internal("no realization was prepared".into()))
    }

    fn run(&self, name: &str) -> Result<DiagnosticOutcome> {
        let field = self.field();
        let (j, k) = self.components();
        match name {
            "combined" => {
                let t = self.thresholded(combined_criterion(field, &self.seq)?);
                trace_outcome(name, &t, self.seq.describe())
            }
            "pair" => {
                let t = self.thresholded(pair_mixing_criterion(field, &self.seq, j, k)?);
                trace_outcome(name, &t, format!("components ({j},{k})"))
            }
            "pair-empirical" => {
                let t = pair_mixing_criterion_empirical(self.sample()?, &self.seq, j, k)?;
                trace_outcome(name, &t, format!("M = {}", self.cfg.simulation.replicates))
            }
            "pairwise" => {
                let (traces, verdict) = pairwise_mixing(field, &self.seq)?;
                let mut artifacts = Vec::new();
                for ((a, b), t) in &traces {
                    let t = self.thresholded(t.clone());
                    artifacts.extend(trace_artifacts(&format!("pairwise_{a}_{b}"), &t)?);
                }
                Ok(DiagnosticOutcome {
                    name: name.into(),
                    status: Status::Ok,
                    verdict: Some(verdict.to_string()),
                    value: traces.iter().map(|(_, t)| t.last_value()).reduce(f64::max),
                    detail: format!("{} component pairs", traces.len()),
                    artifacts,
                })
            }
            "maruyama" => {
                let rep = maruyama_check(field, &self.seq, &self.cfg.diagnostics.deltas)?;
                let mm1 = self.thresholded(rep.mm1.clone());
                let mut verdict = mm1.verdict;
                let mut artifacts = trace_artifacts("maruyama_mm1", &mm1)?;
                for (i, (_, t)) in rep.mm2.iter().enumerate() {
                    let t = self.thresholded(t.clone());
                    verdict = verdict.and(t.verdict);
                    artifacts.extend(trace_artifacts(&format!("maruyama_mm2_{i}"), &t)?);
                }
                let deltas: Vec<String> = rep.mm2.iter().map(|(d, _)| d.to_string()).collect();
                Ok(DiagnosticOutcome {
                    name: name.into(),
                    status: Status::Ok,
                    verdict: Some(verdict.to_string()),
                    value: Some(mm1.last_value()),
                    detail: format!("deltas {}", deltas.join(" ")),
                    artifacts,
                })
            }
            "smallball" => {
                let t = self.thresholded(smallball_trace(field, &self.seq, self.cfg.diagnostics.smallball_bound)?);
                trace_outcome(name, &t, format!("bound {}", self.cfg.diagnostics.smallball_bound))
            }
            "law" => {
                let thetas = self.cfg.diagnostics.theta_grid(field.q());
                let t = self.thresholded(law_convergence_check(field, &self.seq, &thetas)?);
                trace_outcome(name, &t, format!("{} theta values", thetas.len()))
            }
            "rescaled" => {
                let r = rescaled_criterion(self.model.field.clone(), &self.seq, j, k, self.cfg.simulation.seed)?;
                let t = self.thresholded(r.trace);
                let scale: Vec<String> = r.scale.iter().map(|v| fmt_f64(*v)).collect();
                trace_outcome(name, &t, format!("scale {}", scale.join(" ")))
            }
            "norm-free" => {
                let seqs = self.cfg.sequence.shapes(field.l())?;
                let rep = norm_free_probe(field, &seqs, j, k)?;
                let mut artifacts = Vec::new();
                let mut rows = Vec::new();
                for (i, s) in seqs.iter().enumerate() {
                    let t = self.thresholded(pair_mixing_criterion(field, s, j, k)?);
                    artifacts.extend(trace_artifacts(&format!("norm-free_{i}"), &t)?);
                    rows.push(vec![i.to_string(), s.describe(), t.verdict.to_string(), fmt_f64(t.last_value())]);
                }
                artifacts.push(Artifact {
                    name: "norm-free.csv".into(),
                    bytes: table_csv(&["shape", "sequence", "verdict", "last"].map(String::from), &rows)?,
                });
                Ok(DiagnosticOutcome {
                    name: name.into(),
                    status: Status::Ok,
                    verdict: Some(rep.verdict.to_string()),
                    value: rep.directions.iter().map(|d| d.2).reduce(f64::max),
                    detail: format!("{} shapes, uniform = {}", seqs.len(), rep.uniform),
                    artifacts,
                })
            }
            "weak-mixing" => {
                let set = DensityOneSet::exemplar(field.l());
                let filtered = filter_sequence(&self.seq, &set)?;
                let t = self.thresholded(weak_mixing_check(field, &set, &filtered)?);
                trace_outcome(name, &t, set.describe())
            }
            "codifference" => self.codifference(),
            "marginal-mc" => self.marginal_mc(),
            "ergodic" => self.ergodic(),
            "integrability" => self.integrability(),
            "nnd" => {
                let pts: Vec<Vec<f64>> = self.seq.points().into_iter().take(NND_POINTS).collect();
                let rep = codiff_nnd_check(field, &pts, j, k)?;
                let header = ["min_eigenvalue", "asymmetry", "norm", "defect"].map(String::from);
                let row = vec![
                    fmt_f64(rep.min_eigenvalue),
                    fmt_f64(rep.asymmetry),
                    fmt_f64(rep.norm),
                    fmt_f64(rep.defect),
                ];
                let art = Artifact {
                    name: "nnd.csv".into(),
                    bytes: table_csv(&header, &[row])?,
                };
                Ok(check_outcome(
                    name,
                    rep.passes(NND_TOL),
                    rep.min_eigenvalue,
                    format!("{} lags", pts.len()),
                    vec![art],
                ))
            }
            other => Err(Error::validation("diagnostics.run", format!("unknown diagnostic '{other}'"))),
        }
    }

    fn codifference(&self) -> Result<DiagnosticOutcome> {
        let field = self.field();
        let (j, k) = self.components();
        let l = field.l();
        let rows: Vec<(Vec<f64>, Complex64, Complex64, usize)> = self
            .seq
            .points()
            .into_iter()
            .map(|t| {
                let a = codifference_analytic(field, &t, j, k)?;
                let (o, steps) = codifference_oracle(field, &t, j, k)?;
                Ok((t, a, o, steps))
            })
            .collect::<Result<_>>()?;
        let mut header = vec!["n".to_string()];
        header.extend((0..l).map(|i| format!("t{i}")));
        header.extend(["analytic_re", "analytic_im", "oracle_re", "oracle_im", "abs_diff", "steps"].map(String::from));
        let mut worst = 0.0f64;
        let table: Vec<Vec<String>> = rows
            .iter()
            .enumerate()
            .map(|(n, (t, a, o, s))| {
                let diff = (a - o).norm();
                worst = worst.max(diff);
                let mut r = vec![n.to_string()];
                r.extend(t.iter().map(|v| fmt_f64(*v)));
                r.extend([fmt_f64(a.re), fmt_f64(a.im), fmt_f64(o.re), fmt_f64(o.im), fmt_f64(diff), s.to_string()]);
                r
            })
            .collect();
        let artifacts = vec![
            Artifact {
                name: "codifference.csv".into(),
                bytes: table_csv(&header, &table)?,
            },
            Artifact {
                name: "plot_codifference.csv".into(),
                bytes: xy_csv(rows.iter().map(|(t, a, _, _)| (sup(t), a.norm())))?,
            },
        ];
        Ok(check_outcome(
            "codifference",
            worst <= CODIFFERENCE_TOL,
            worst,
            format!("max |analytic - oracle|, tolerance {CODIFFERENCE_TOL:e}"),
            artifacts,
        ))
    }

    fn marginal_mc(&self) -> Result<DiagnosticOutcome> {
        let field = self.field();
        let real = self.sample()?;
        let q = field.q();
        let triplet = field.marginal_triplet()?;
        let p0 = real.require_point(&vec![0.0; field.l()])?;
        let m = real.replicates();
        let thetas = self.cfg.diagnostics.theta_grid(q);
        let threshold = empirical_threshold(m);
        let mut worst = 0.0f64;
        let mut rows = Vec::new();
        let mut plot = Vec::new();
        for th in &thetas {
            let ecf = (0..m)
                .map(|r| {
                    let x: f64 = th.iter().zip(real.value(r, p0)).map(|(a, b)| a * b).sum();
                    Complex64::new(x.cos(), x.sin())
                })
                .sum::<Complex64>()
                / m as f64;
            let cf = triplet.charfn(th)?;
            let gap = (ecf - cf).norm();
            worst = worst.max(gap);
            let mut r: Vec<String> = th.iter().map(|v| fmt_f64(*v)).collect();
            r.extend([ecf.re, ecf.im, cf.re, cf.im, gap].map(fmt_f64));
            rows.push(r);
            plot.push((th.iter().map(|v| v * v).sum::<f64>().sqrt() * th[0].signum(), gap));
        }
        let mut header: Vec<String> = (0..q).map(|i| format!("theta{i}")).collect();
        header.extend(["ecf_re", "ecf_im", "charfn_re", "charfn_im", "gap"].map(String::from));
        let artifacts = vec![
            Artifact {
                name: "marginal-mc.csv".into(),
                bytes: table_csv(&header, &rows)?,
            },
            Artifact {
                name: "plot_marginal-mc.csv".into(),
                bytes: xy_csv(plot)?,
            },
        ];
        Ok(check_outcome(
            "marginal-mc",
            worst <= threshold,
            worst,
            format!("sup gap over {} thetas, threshold {}", thetas.len(), fmt_f64(threshold)),
            artifacts,
        ))
    }

    fn ergodic(&self) -> Result<DiagnosticOutcome> {
        let field = self.field();
        let e = &self.cfg.diagnostics.ergodic;
        let q = field.q();
        let decay = field.decay_length();
        let grid = time_average_grid(e.horizon, field.l(), decay);
        let mut long_spec = self.cfg.simulation.spec();
        long_spec.replicates = e.replicates;
        long_spec.seed = self.cfg.simulation.seed.wrapping_add(1);
        let long = cached_simulation(field, &grid, &long_spec, self.cfg, &self.cache_dir)?;
        let ensemble = self.sample()?;
        let theta = e.theta.clone().unwrap_or_else(|| vec![1.0; q]);
        let g = move |x: &[f64]| {
            let s: f64 = theta.iter().zip(x).map(|(a, b)| a * b).sum();
            Complex64::new(s.cos(), s.sin())
        };
        let rep = ergodic_time_average(&long, ensemble, &g, decay)?;
        let rows: Vec<Vec<String>> = rep
            .time_averages
            .iter()
            .enumerate()
            .map(|(r, z)| {
                vec![
                    r.to_string(),
                    fmt_f64(z.re),
                    fmt_f64(z.im),
                    fmt_f64(rep.ensemble_mean.re),
                    fmt_f64(rep.ensemble_mean.im),
                ]
            })
            .collect();
        let header = ["replicate", "time_avg_re", "time_avg_im", "ensemble_re", "ensemble_im"].map(String::from);
        let verdict = match rep.verdict {
            ErgodicVerdict::Ergodic => "ergodic",
            ErgodicVerdict::NonErgodic => "non-ergodic",
            ErgodicVerdict::Inconclusive => "inconclusive",
        };
        Ok(DiagnosticOutcome {
            name: "ergodic".into(),
            status: Status::Ok,
            verdict: Some(verdict.into()),
            value: Some(rep.gap),
            detail: format!(
                "gap {} stderr {} over {} replicates, T = {}",
                fmt_f64(rep.gap),
                fmt_f64(rep.stderr),
                e.replicates,
                e.horizon
            ),
            artifacts: vec![Artifact {
                name: "ergodic.csv".into(),
                bytes: table_csv(&header, &rows)?,
            }],
        })
    }

    fn integrability(&self) -> Result<DiagnosticOutcome> {
        let mma = self
            .model
            .mma
            .as_ref()
            .ok_or_else(|| Error::InvalidModel("integrability applies to moving average models only".into()))?;
        let rep = mma.check_integrability()?;
        let rows: Vec<Vec<String>> = [rep.condition1, rep.condition2, rep.condition3]
            .iter()
            .enumerate()
            .map(|(i, c)| {
                vec![
                    (i + 1).to_string(),
                    fmt_f64(c.value),
                    c.finite.to_string(),
                    fmt_f64(c.error),
                ]
            })
            .collect();
        let header = ["condition", "value", "finite", "error"].map(String::from);
        let worst = [rep.condition1, rep.condition2, rep.condition3]
            .iter()
            .map(|c| c.value)
            .fold(0.0f64, f64::max);
        Ok(check_outcome(
            "integrability",
            rep.integrable(),
            worst,
            "three integrability conditions".into(),
            vec![Artifact {
                name: "integrability.csv".into(),
                bytes: table_csv(&header, &rows)?,
            }],
        ))
    }
}

fn cache_key(cfg: &ExperimentConfig, field: &dyn IdField, points: &[Vec<f64>], spec_seed: u64, reps: usize) -> String {
    let mut h = Sha256::new();
    h.update(toml::to_string(&cfg.model).unwrap_or_default());
    h.update(toml::to_string(&cfg.simulation).unwrap_or_default());
    h.update(field.describe());
    h.update(spec_seed.to_le_bytes());
    h.update((reps as u64).to_le_bytes());
    for p in points {
        for v in p {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

/// Simulates, or reads a previous simulation with the same inputs.
fn cached_simulation(
    field: &dyn IdField,
    points: &[Vec<f64>],
    spec: &crate::realization::SimulationSpec,
    cfg: &ExperimentConfig,
    cache_dir: &Path,
) -> Result<FieldRealization> {
    let key = cache_key(cfg, field, points, spec.seed, spec.replicates);
    let path = cache_dir.join(format!("realization-{key}.bin"));
    if let Ok(bytes) = fs::read(&path) {
        if let Ok(r) = FieldRealization::read_binary(bytes.as_slice()) {
            if r.t_points() == points && r.replicates() == spec.replicates {
                return Ok(r);
            }
        }
    }
    let r = field.simulate(points, spec)?;
    fs::create_dir_all(cache_dir)?;
    let mut buf = Vec::new();
    r.write_binary(&mut buf)?;
    fs::write(&path, buf)?;
    Ok(r)
}

/// 0 followed by the sequence points not equal to 0.
fn sample_points(seq: &SequenceSpec) -> Vec<Vec<f64>> {
    let zero = vec![0.0; seq.l];
    let mut pts = vec![zero.clone()];
    for p in seq.points() {
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    pts
}

const NEEDS_SAMPLE: [&str; 3] = ["pair-empirical", "marginal-mc", "ergodic"];

#[derive(Serialize)]
struct ManifestFile<'a> {
    path: &'a str,
    sha256: &'a str,
    bytes: u64,
}

#[derive(Serialize)]
struct ManifestDiagnostic<'a> {
    name: &'a str,
    status: &'a str,
    verdict: &'a str,
    message: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    library: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    created_unix: u64,
    config_source: &'a str,
    config: &'a str,
    files: Vec<ManifestFile<'a>>,
    diagnostics: Vec<ManifestDiagnostic<'a>>,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    source: &str,
    files: &[FileRecord],
    outcomes: &[DiagnosticOutcome],
) -> Result<()> {
    let config = cfg.to_toml()?;
    let created_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let m = Manifest {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.simulation.seed,
        created_unix,
        config_source: source,
        config: &config,
        files: files
            .iter()
            .map(|f| ManifestFile {
                path: &f.path,
                sha256: &f.sha256,
                bytes: f.bytes,
            })
            .collect(),
        diagnostics: outcomes
            .iter()
            .map(|o| ManifestDiagnostic {
                name: &o.name,
                status: o.status.as_str(),
                verdict: o.verdict.as_deref().unwrap_or(""),
                message: o.status.message(),
            })
            .collect(),
    };
    let text = toml::to_string(&m).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

fn record(dir: &Path, rel: &str) -> Result<FileRecord> {
    let bytes = fs::read(dir.join(rel))?;
    Ok(FileRecord {
        path: rel.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

fn cache_records(dir: &Path) -> Result<Vec<FileRecord>> {
    let cache = dir.join("cache");
    let mut names: Vec<String> = match fs::read_dir(&cache) {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    names.iter().map(|n| record(dir, &format!("cache/{n}"))).collect()
}

/// Runs every configured diagnostic and writes the artifact directory.
///
/// Errors are returned only before the directory is created (validation) or
/// when artifacts cannot be written; diagnostic failures are recorded in
/// the report and the manifest.
pub fn run(cfg: &ExperimentConfig, source: &str) -> Result<RunReport> {
    run_in(cfg, source, &output_directory(cfg))
}

pub fn run_in(cfg: &ExperimentConfig, source: &str, dir: &Path) -> Result<RunReport> {
    let model = cfg.validate()?;
    let seq = cfg.sequence.build(model.field.l())?;
    fs::create_dir_all(dir)?;
    let cache_dir = dir.join("cache");

    let mut sample = None;
    let mut sample_error = None;
    if cfg.diagnostics.run.iter().any(|d| NEEDS_SAMPLE.contains(&d.as_str())) {
        match cached_simulation(model.field.as_ref(), &sample_points(&seq), &cfg.simulation.spec(), cfg, &cache_dir) {
            Ok(r) => sample = Some(Arc::new(r)),
            Err(e) => sample_error = Some(e),
        }
    }
    let ctx = Context {
        cfg,
        model: &model,
        seq,
        sample,
        cache_dir,
    };
    let outcomes: Vec<DiagnosticOutcome> = cfg
        .diagnostics
        .run
        .par_iter()
        .map(|name| {
            if NEEDS_SAMPLE.contains(&name.as_str()) {
                if let Some(e) = &sample_error {
                    return DiagnosticOutcome::from_error(name, e.clone());
                }
            }
            ctx.run(name).unwrap_or_else(|e| DiagnosticOutcome::from_error(name, e))
        })
        .collect();

    let mut files = Vec::new();
    for o in &outcomes {
        for a in &o.artifacts {
            fs::write(dir.join(&a.name), &a.bytes)?;
            files.push(FileRecord {
                path: a.name.clone(),
                sha256: sha256_hex(&a.bytes),
                bytes: a.bytes.len() as u64,
            });
        }
    }
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                o.name.clone(),
                o.status.as_str().into(),
                o.verdict.clone().unwrap_or_default(),
                o.value.map(fmt_f64).unwrap_or_default(),
                if o.detail.is_empty() { o.status.message().into() } else { o.detail.clone() },
            ]
        })
        .collect();
    let summary = table_csv(&["diagnostic", "status", "verdict", "value", "detail"].map(String::from), &rows)?;
    fs::write(dir.join("summary.csv"), &summary)?;
    files.push(record(dir, "summary.csv")?);
    files.extend(cache_records(dir)?);
    write_manifest(dir, "run", cfg, source, &files, &outcomes)?;
    Ok(RunReport {
        directory: dir.to_path_buf(),
        outcomes,
        files,
    })
}

/// Simulates the field at 0 and every sequence point and stores the cache
/// (plus `realization.csv` when the csv format is enabled).
pub fn simulate(cfg: &ExperimentConfig, source: &str) -> Result<RunReport> {
    simulate_in(cfg, source, &output_directory(cfg))
}

pub fn simulate_in(cfg: &ExperimentConfig, source: &str, dir: &Path) -> Result<RunReport> {
    let model = cfg.validate()?;
    let seq = cfg.sequence.build(model.field.l())?;
    fs::create_dir_all(dir)?;
    let real = cached_simulation(
        model.field.as_ref(),
        &sample_points(&seq),
        &cfg.simulation.spec(),
        cfg,
        &dir.join("cache"),
    )?;
    let mut files = Vec::new();
    if cfg.output.formats.iter().any(|f| f == "csv") {
        let mut buf = Vec::new();
        real.write_csv(&mut buf)?;
        fs::write(dir.join("realization.csv"), &buf)?;
        files.push(record(dir, "realization.csv")?);
    }
    files.extend(cache_records(dir)?);
    write_manifest(dir, "simulate", cfg, source, &files, &[])?;
    Ok(RunReport {
        directory: dir.to_path_buf(),
        outcomes: Vec::new(),
        files,
    })
}
