//! Experiment configuration: a TOML document with the sections `model`,
//! `sequence`, `diagnostics`, `simulation` and `output`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ConstantField, IdField, SumField};
use crate::idlaw::{Atom, CharTriplet, ExpJumps, GammaLevy, LevyMeasure};
use crate::kernel::{Kernel, KernelTerm, Shape};
use crate::levybasis::GeneratingQuadruple;
use crate::mixdiag::DEFAULT_DELTAS;
use crate::mmafield::MmaModel;
use crate::realization::SimulationSpec;
use crate::sequence::SequenceSpec;
use crate::subord::{subordinated_mma, SheetSpec};

use super::presets;

/// Diagnostics understood by the runner.
pub const DIAGNOSTICS: [&str; 15] = [
    "combined",
    "pair",
    "pair-empirical",
    "pairwise",
    "maruyama",
    "smallball",
    "law",
    "rescaled",
    "norm-free",
    "weak-mixing",
    "codifference",
    "marginal-mc",
    "ergodic",
    "integrability",
    "nnd",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSpec,
    #[serde(default)]
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// The model of a built-in preset.
    Preset { name: String },
    /// Mixed moving average with a homogeneous basis.
    Mma {
        l: usize,
        basis: BasisSpec,
        kernel: Vec<KernelTermSpec>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    /// X_t = Z for all t.
    Constant { l: usize, law: BasisSpec },
    /// Sum of independent fields.
    Sum { parts: Vec<ModelSpec> },
    /// Mixed moving average over a subordinated basis.
    Subordinated {
        l: usize,
        space: BasisSpec,
        time: BasisSpec,
        kernel: Vec<KernelTermSpec>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

/// Characteristic triplet in config form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub dim: usize,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    /// Rows of the Gaussian covariance.
    #[serde(default)]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    /// One-dimensional gamma Lévy density.
    #[serde(default)]
    pub gamma_jumps: Option<GammaJumpSpec>,
    /// One-dimensional exponential jumps.
    #[serde(default)]
    pub exp_jumps: Option<ExpJumpSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub point: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaJumpSpec {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpJumpSpec {
    pub intensity: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTermSpec {
    #[serde(default)]
    pub class: usize,
    pub shape: Shape,
    /// Rows of the q × d coefficient matrix; 1 × 1 identity when absent.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceType {
    #[default]
    Ray,
    Diagonal,
    Spiral,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    #[serde(rename = "type", default)]
    pub kind: SequenceType,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub angle_step: Option<f64>,
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
}

fn default_step() -> f64 {
    1.0
}

fn default_count() -> usize {
    21
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            kind: SequenceType::Ray,
            direction: None,
            start: 0.0,
            step: default_step(),
            count: default_count(),
            angle_step: None,
            points: None,
        }
    }
}

impl SequenceConfig {
    pub fn build(&self, l: usize) -> Result<SequenceSpec> {
        let seq = match self.kind {
            SequenceType::Ray => match &self.direction {
                Some(u) => SequenceSpec::ray(u.clone(), self.start, self.step, self.count)?,
                None => SequenceSpec::axis(l, self.start, self.step, self.count)?,
            },
            SequenceType::Diagonal => SequenceSpec::diagonal(l, self.start, self.step, self.count)?,
            SequenceType::Spiral => SequenceSpec::spiral(
                l,
                self.start,
                self.step,
                self.count,
                self.angle_step.unwrap_or(std::f64::consts::PI / 7.0),
            )?,
            SequenceType::Custom => match &self.points {
                Some(p) => SequenceSpec::custom(p.clone())?,
                None => return Err(Error::validation("sequence.points", "custom sequences need points")),
            },
        };
        if seq.l != l {
            return Err(Error::validation(
                "sequence",
                format!("sequence dimension {} differs from model index dimension {l}", seq.l),
            ));
        }
        Ok(seq)
    }

    /// Axis rays, diagonal and spiral sharing this sequence's radii.
    pub fn shapes(&self, l: usize) -> Result<Vec<SequenceSpec>> {
        SequenceSpec::standard_shapes(l, self.start, self.step, self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_run")]
    pub run: Vec<String>,
    /// Overrides the analytic threshold.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// θ-grid for the law and Monte Carlo checks; a 21-point grid on the
    /// diagonal of [−3, 3]^q when absent.
    #[serde(default)]
    pub thetas: Option<Vec<Vec<f64>>>,
    /// Component pair (j, k).
    #[serde(default)]
    pub components: [usize; 2],
    #[serde(default = "default_bound")]
    pub smallball_bound: f64,
    #[serde(default)]
    pub ergodic: ErgodicConfig,
}

fn default_run() -> Vec<String> {
    vec!["combined".into(), "pair".into()]
}

fn default_deltas() -> Vec<f64> {
    DEFAULT_DELTAS.to_vec()
}

fn default_bound() -> f64 {
    1.0
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            run: default_run(),
            threshold: None,
            deltas: default_deltas(),
            thetas: None,
            components: [0, 0],
            smallball_bound: default_bound(),
            ergodic: ErgodicConfig::default(),
        }
    }
}

impl DiagnosticsConfig {
    pub fn theta_grid(&self, q: usize) -> Vec<Vec<f64>> {
        match &self.thetas {
            Some(t) => t.clone(),
            None => (0..21).map(|i| vec![-3.0 + 0.3 * i as f64; q]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicConfig {
    /// Half-width T of the averaging window (−T, T]^l.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_ergodic_replicates")]
    pub replicates: usize,
    /// θ in g(x) = exp(i⟨θ, x⟩); all ones when absent.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
}

fn default_horizon() -> f64 {
    100.0
}

fn default_ergodic_replicates() -> usize {
    64
}

impl Default for ErgodicConfig {
    fn default() -> Self {
        ErgodicConfig {
            horizon: default_horizon(),
            replicates: default_ergodic_replicates(),
            theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub window: Option<WindowConfig>,
    #[serde(default = "default_energy_tail")]
    pub energy_tail: f64,
}

fn default_replicates() -> usize {
    1000
}

fn default_h() -> f64 {
    0.05
}

fn default_energy_tail() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SimulationConfig {
    pub fn spec(&self) -> SimulationSpec {
        let mut s = SimulationSpec::new(self.replicates, self.h, self.seed);
        s.energy_tail = self.energy_tail;
        if let Some(w) = &self.window {
            s = s.with_window(w.lower.clone(), w.upper.clone());
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    /// Any of "csv" and "binary"; governs the realization cache format.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_directory() -> String {
    "mixfield-out".into()
}

fn default_formats() -> Vec<String> {
    vec!["csv".into()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

/// A model ready for diagnostics.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub field: Arc<dyn IdField>,
    /// The MMA itself when the model is a single MMA.
    pub mma: Option<Arc<MmaModel>>,
    /// Independent summands of a sum model.
    pub parts: Vec<Arc<dyn IdField>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
        return Err(Error::validation(field, "matrix rows must be nonempty and of equal length"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl BasisSpec {
    pub fn triplet(&self) -> Result<CharTriplet> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::validation("basis.dim", "must be positive"));
        }
        let gamma = match &self.gamma {
            Some(g) if g.len() != d => return Err(Error::validation("basis.gamma", format!("expected {d} entries"))),
            Some(g) => DVector::from_column_slice(g),
            None => DVector::zeros(d),
        };
        let sigma = match &self.sigma {
            Some(rows) => {
                let m = matrix_from_rows(rows, "basis.sigma")?;
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::validation("basis.sigma", format!("expected a {d} x {d} matrix")));
                }
                m
            }
            None => DMatrix::zeros(d, d),
        };
        let mut levy = LevyMeasure::zero(d);
        if !self.atoms.is_empty() {
            let atoms = self.atoms.iter().map(|a| Atom::new(a.point.clone(), a.mass)).collect();
            levy = levy.add(&LevyMeasure::atomic(d, atoms)?);
        }
        if let Some(g) = &self.gamma_jumps {
            if d != 1 {
                return Err(Error::validation("basis.gamma_jumps", "only available for dim = 1"));
            }
            levy = levy.add(&LevyMeasure::Parametric(Arc::new(GammaLevy::new(g.shape, g.rate)?)));
        }
        if let Some(e) = &self.exp_jumps {
            if d != 1 {
                return Err(Error::validation("basis.exp_jumps", "only available for dim = 1"));
            }
            levy = levy.add(&LevyMeasure::Parametric(Arc::new(ExpJumps::new(e.intensity, e.rate)?)));
        }
        CharTriplet::new(gamma, sigma, levy)
    }
}

fn build_kernel(terms: &[KernelTermSpec], l: usize, classes: usize, d: usize) -> Result<Kernel> {
    if terms.is_empty() {
        return Err(Error::validation("model.kernel", "at least one kernel term is required"));
    }
    let mut q = None;
    let mut by_class: Vec<Vec<KernelTerm>> = vec![Vec::new(); classes];
    for (i, t) in terms.iter().enumerate() {
        let field = format!("model.kernel[{i}]");
        if t.class >= classes {
            return Err(Error::validation(field, format!("class {} out of range (weights give {classes})", t.class)));
        }
        let m = match &t.matrix {
            Some(rows) => matrix_from_rows(rows, &field)?,
            None => DMatrix::identity(1, d),
        };
        if m.ncols() != d {
            return Err(Error::validation(field, format!("matrix needs {d} columns to match the basis")));
        }
        if *q.get_or_insert(m.nrows()) != m.nrows() {
            return Err(Error::validation(field, "all kernel matrices need the same number of rows"));
        }
        t.shape.validate(l).map_err(|e| Error::validation(format!("model.kernel[{i}].shape"), e.to_string()))?;
        by_class[t.class].push(KernelTerm::new(t.shape.clone(), m));
    }
    Kernel::new(q.unwrap_or(1), d, l, by_class)
}

fn weights_or_unit(weights: &Option<Vec<f64>>) -> Vec<f64> {
    weights.clone().unwrap_or_else(|| vec![1.0])
}

fn at(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Validation { .. } => e,
        other => Error::validation(field, other.to_string()),
    }
}

impl ModelSpec {
    /// Replaces a preset reference by the preset's model.
    pub fn resolve(&self) -> Result<ModelSpec> {
        match self {
            ModelSpec::Preset { name } => {
                let cfg = presets::config(name)
                    .ok_or_else(|| Error::validation("model.name", format!("unknown preset '{name}'")))?;
                cfg.model.resolve()
            }
            ModelSpec::Sum { parts } => Ok(ModelSpec::Sum {
                parts: parts.iter().map(|p| p.resolve()).collect::<Result<_>>()?,
            }),
            other => Ok(other.clone()),
        }
    }

    pub fn build(&self) -> Result<BuiltModel> {
        match self.resolve()? {
            ModelSpec::Preset { .. } => Err(Error::Internal("unresolved preset".into())),
            ModelSpec::Mma { l, basis, kernel, weights } => {
                let base = basis.triplet().map_err(at("model.basis"))?;
                let w = weights_or_unit(&weights);
                let k = build_kernel(&kernel, l, w.len(), base.dim()).map_err(at("model.kernel"))?;
                let quad = GeneratingQuadruple::new(base, w, l).map_err(at("model.weights"))?;
                let m = Arc::new(MmaModel::new(k, quad).map_err(at("model"))?);
                Ok(BuiltModel {
                    field: m.clone(),
                    mma: Some(m),
                    parts: Vec::new(),
                })
            }
            ModelSpec::Constant { l, law } => {
                let z = law.triplet().map_err(at("model.law"))?;
                let f: Arc<dyn IdField> = Arc::new(ConstantField::new(z, l).map_err(at("model"))?);
                Ok(BuiltModel {
                    field: f,
                    mma: None,
                    parts: Vec::new(),
                })
            }
            ModelSpec::Sum { parts } => {
                if parts.is_empty() {
                    return Err(Error::validation("model.parts", "a sum needs at least one part"));
                }
                let built: Vec<Arc<dyn IdField>> = parts
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p.build().map(|b| b.field).map_err(at(&format!("model.parts[{i}]"))))
                    .collect::<Result<_>>()?;
                let f: Arc<dyn IdField> = Arc::new(SumField::new(built.clone()).map_err(at("model.parts"))?);
                Ok(BuiltModel {
                    field: f,
                    mma: None,
                    parts: built,
                })
            }
            ModelSpec::Subordinated {
                l,
                space,
                time,
                kernel,
                weights,
            } => {
                let x = SheetSpec::new(space.triplet().map_err(at("model.space"))?, l).map_err(at("model.space"))?;
                let t = SheetSpec::subordinator(time.triplet().map_err(at("model.time"))?, l)
                    .map_err(at("model.time"))?;
                let w = weights_or_unit(&weights);
                let k = build_kernel(&kernel, l, w.len(), space.dim).map_err(at("model.kernel"))?;
                let m = Arc::new(subordinated_mma(k, &x, &t, w).map_err(at("model"))?);
                Ok(BuiltModel {
                    field: m.clone(),
                    mma: Some(m),
                    parts: Vec::new(),
                })
            }
        }
    }
}

/// Converts a TOML parse error into a validation error carrying the line.
fn parse_error(text: &str, e: toml::de::Error) -> Error {
    let location = e
        .span()
        .map(|s| {
            let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}")
        })
        .unwrap_or_else(|| "config".into());
    Error::Validation {
        field: location,
        message: e.message().to_string(),
    }
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))
    }

    /// Semantic checks beyond the grammar; builds the model once.
    pub fn validate(&self) -> Result<BuiltModel> {
        for name in &self.diagnostics.run {
            if !DIAGNOSTICS.contains(&name.as_str()) {
                return Err(Error::validation(
                    "diagnostics.run",
                    format!("unknown diagnostic '{name}' (known: {})", DIAGNOSTICS.join(", ")),
                ));
            }
        }
        if let Some(t) = self.diagnostics.threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::validation("diagnostics.threshold", "must be positive"));
            }
        }
        if self.diagnostics.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::validation("diagnostics.deltas", "must be positive"));
        }
        if !(self.diagnostics.smallball_bound > 0.0) {
            return Err(Error::validation("diagnostics.smallball_bound", "must be positive"));
        }
        let e = &self.diagnostics.ergodic;
        if !(e.horizon > 0.0 && e.horizon.is_finite()) || e.replicates == 0 {
            return Err(Error::validation("diagnostics.ergodic", "need horizon > 0 and replicates >= 1"));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "binary" {
                return Err(Error::validation("output.formats", format!("unknown format '{f}'")));
            }
        }
        self.simulation.spec().validate()?;
        let model = self.model.build()?;
        let (q, l) = (model.field.q(), model.field.l());
        self.sequence.build(l)?;
        let [j, k] = self.diagnostics.components;
        if j >= q || k >= q {
            return Err(Error::validation("diagnostics.components", format!("indices must be below q = {q}")));
        }
        if self.diagnostics.theta_grid(q).iter().any(|t| t.len() != q) {
            return Err(Error::validation("diagnostics.thetas", format!("every theta needs {q} entries")));
        }
        if e.theta.as_ref().is_some_and(|t| t.len() != q) {
            return Err(Error::validation("diagnostics.ergodic.theta", format!("needs {q} entries")));
        }
        if let Some(w) = &self.simulation.window {
            if w.lower.len() != l || w.upper.len() != l {
                return Err(Error::validation("simulation.window", format!("bounds need {l} entries")));
            }
        }
        Ok(model)
    }
}
