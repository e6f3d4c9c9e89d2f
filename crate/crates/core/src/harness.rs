//! Scenario files, the built-in gallery, the staged diagnostics pipeline and
//! report emission.
//!
//! A run never aborts after the model is built: each stage records either its
//! result or its error, and stages that depend on a failed one are marked
//! not-applicable with the reason. All wall-clock data lives under the
//! report's `timestamp` field, so two runs of the same scenario produce the
//! same JSON outside it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{self, EigenFamily, EstimateReport, ExpansionTarget, FamilySide, FrameReport, SuiteConfig};
use crate::detfun::{self, DetFunction, Formula, IndicatorData, Rect, Spectrum, WidthReport, Zero, INDICATOR_TOL};
use crate::error::Error;
use crate::grid::{Grid, GridFunction, GridKind};
use crate::model::{OperatorKind, PerturbedModel, VolterraOperator};
use crate::weights::{self, A2Report, Band, IntegrabilityReport, WeightTrace};
use crate::{c64, Verdict};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------- scenarios

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub model: ModelSpec,
    /// Half-width `R` of the real-line window.
    pub window_r: f64,
    /// Spectrum rectangle; defaults to `[-(2R+15), 2R+15] × [-2, 2]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Rect>,
    #[serde(default = "default_strip_c")]
    pub strip_c: f64,
    #[serde(default)]
    pub probes: ProbeCounts,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Trace samples per unit length on the real line.
    #[serde(default = "default_density")]
    pub samples_per_unit: f64,
}

fn default_strip_c() -> f64 {
    1.0
}

fn default_seed() -> u64 {
    7
}

fn default_density() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeCounts {
    /// LRG probe columns across `[-R/2, R/2]`.
    pub lrg_columns: usize,
    /// LRG probe rows across `[-c, c]`.
    pub lrg_rows: usize,
    /// Random probe points for the biorthogonality identities.
    pub biorthogonality: usize,
    /// Leading eigenvalues used by biorthogonality and the pole integral.
    pub eigen_count: usize,
    /// Random test vectors for the integral estimates.
    pub draws: usize,
}

impl Default for ProbeCounts {
    fn default() -> Self {
        Self { lrg_columns: 41, lrg_rows: 3, biorthogonality: 3, eigen_count: 10, draws: 32 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Operator(OperatorSpec),
    ExponentialFamily(FamilySpec),
    WeightGallery(GallerySpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub a: f64,
    pub n: usize,
    #[serde(default = "default_grid")]
    pub grid: GridKind,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub f: VectorSpec,
    pub g: VectorSpec,
}

fn default_grid() -> GridKind {
    GridKind::Chebyshev
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `k ≡ 1`, the integration operator.
    #[default]
    Canonical,
    /// `k(x, s) = e^{rate (x - s)}`.
    ExpDiff { rate: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorSpec {
    One,
    Zero,
    /// `e^{rate t}`.
    ExpT { rate: f64 },
    /// `exp(-(t - center)² / (2 width²))`.
    Gaussian { center: f64, width: f64 },
    /// Values at the grid nodes.
    Table {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub families: Vec<KadecSpec>,
    /// Index bound `N`: exponents `k = -N..N`.
    pub n_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KadecSpec {
    pub delta: f64,
    #[serde(default)]
    pub signed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GallerySpec {
    pub weights: Vec<WeightSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// `|x|^alpha`.
    Power { alpha: f64 },
    /// `1 + x²`.
    OnePlusXSq,
    Constant { value: f64 },
}

impl WeightSpec {
    fn name(&self) -> String {
        match self {
            WeightSpec::Power { alpha } => format!("power_{alpha}"),
            WeightSpec::OnePlusXSq => "one_plus_x_sq".into(),
            WeightSpec::Constant { value } => format!("constant_{value}"),
        }
    }

    fn eval(&self, x: f64) -> f64 {
        match *self {
            WeightSpec::Power { alpha } => x.abs().powf(alpha),
            WeightSpec::OnePlusXSq => 1.0 + x * x,
            WeightSpec::Constant { value } => value,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("unknown built-in scenario {0:?} (expected S1, S2, S3 or S4)")]
    UnknownBuiltin(String),
    #[error("model build failed: {0}")]
    ModelBuild(Error),
    #[error("I/O error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl HarnessError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, HarnessError::Io { .. })
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }

    /// The spectrum rectangle in effect.
    pub fn spectrum_window(&self) -> Rect {
        self.spectrum.unwrap_or(Rect {
            re_min: -(2.0 * self.window_r + 15.0),
            re_max: 2.0 * self.window_r + 15.0,
            im_min: -2.0,
            im_max: 2.0,
        })
    }

    /// Trace sample count on `[-R, R]`, always even so that the window is a
    /// whole number of cells on each side of the origin.
    pub fn samples(&self) -> usize {
        let m = (2.0 * self.window_r * self.samples_per_unit).round() as usize;
        (m + m % 2).max(weights::MIN_SAMPLES)
    }

    /// Checks every field and lists all violations, each naming its field.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut v = Vec::new();
        let mut positive = |field: &str, x: f64| {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{field}: must be positive and finite (got {x})"));
            }
        };
        positive("window_r", self.window_r);
        positive("strip_c", self.strip_c);
        positive("samples_per_unit", self.samples_per_unit);
        if self.schema_version != SCHEMA_VERSION {
            v.push(format!("schema_version: expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if self.name.trim().is_empty() {
            v.push("name: must not be empty".into());
        }
        if let Some(r) = &self.spectrum {
            if let Err(e) = Rect::new(r.re_min, r.re_max, r.im_min, r.im_max) {
                v.push(format!("spectrum: {e}"));
            }
        }
        let p = &self.probes;
        for (field, x) in [
            ("probes.lrg_columns", p.lrg_columns),
            ("probes.lrg_rows", p.lrg_rows),
            ("probes.biorthogonality", p.biorthogonality),
            ("probes.eigen_count", p.eigen_count),
            ("probes.draws", p.draws),
        ] {
            if x == 0 {
                v.push(format!("{field}: must be at least 1"));
            }
        }
        match &self.model {
            ModelSpec::Operator(op) => {
                if !(op.a > 0.0 && op.a.is_finite()) {
                    v.push(format!("model.a: must be positive and finite (got {})", op.a));
                }
                if op.n < 2 {
                    v.push(format!("model.n: must be at least 2 (got {})", op.n));
                }
                if let KernelSpec::ExpDiff { rate } = op.kernel {
                    if !rate.is_finite() {
                        v.push("model.kernel.rate: must be finite".into());
                    }
                }
                for (name, spec) in [("model.f", &op.f), ("model.g", &op.g)] {
                    validate_vector(name, spec, op.n, &mut v);
                }
            }
            ModelSpec::ExponentialFamily(fam) => {
                if fam.n_index < 4 {
                    v.push(format!("model.n_index: must be at least 4 (got {})", fam.n_index));
                }
                if fam.families.is_empty() {
                    v.push("model.families: must not be empty".into());
                }
                for (i, k) in fam.families.iter().enumerate() {
                    if !(k.delta.is_finite() && k.delta.abs() < 0.5) {
                        v.push(format!("model.families[{i}].delta: must lie in (-0.5, 0.5) (got {})", k.delta));
                    }
                }
            }
            ModelSpec::WeightGallery(g) => {
                if g.weights.is_empty() {
                    v.push("model.weights: must not be empty".into());
                }
                for (i, w) in g.weights.iter().enumerate() {
                    match *w {
                        WeightSpec::Power { alpha } if !alpha.is_finite() => {
                            v.push(format!("model.weights[{i}].alpha: must be finite"))
                        }
                        WeightSpec::Constant { value } if !(value > 0.0 && value.is_finite()) => {
                            v.push(format!("model.weights[{i}].value: must be positive (got {value})"))
                        }
                        _ => {}
                    }
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(v))
        }
    }

    /// Applies command-line overrides and revalidates.
    pub fn with_overrides(
        mut self,
        grid_n: Option<usize>,
        window_r: Option<f64>,
        seed: Option<u64>,
        strip_c: Option<f64>,
    ) -> Result<Self, HarnessError> {
        if let Some(n) = grid_n {
            match &mut self.model {
                ModelSpec::Operator(op) => op.n = n,
                _ => return Err(HarnessError::Validation(vec!["grid_n: the scenario has no grid".into()])),
            }
        }
        if let Some(r) = window_r {
            self.window_r = r;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(c) = strip_c {
            self.strip_c = c;
        }
        self.validate()?;
        Ok(self)
    }
}

fn validate_vector(name: &str, spec: &VectorSpec, n: usize, v: &mut Vec<String>) {
    match spec {
        VectorSpec::ExpT { rate } if !rate.is_finite() => v.push(format!("{name}.rate: must be finite")),
        VectorSpec::Gaussian { width, .. } if !(*width > 0.0) => {
            v.push(format!("{name}.width: must be positive (got {width})"))
        }
        VectorSpec::Gaussian { center, .. } if !center.is_finite() => v.push(format!("{name}.center: must be finite")),
        VectorSpec::Table { re, im } => {
            if re.len() != n {
                v.push(format!("{name}.re: table length {} does not match n = {n}", re.len()));
            }
            if !im.is_empty() && im.len() != n {
                v.push(format!("{name}.im: table length {} does not match n = {n}", im.len()));
            }
            if re.iter().chain(im).any(|x| !x.is_finite()) {
                v.push(format!("{name}: table entries must be finite"));
            }
        }
        _ => {}
    }
}

fn operator(name: &str, g: VectorSpec, r: f64) -> Scenario {
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        model: ModelSpec::Operator(OperatorSpec {
            a: 1.0,
            n: 201,
            grid: GridKind::Chebyshev,
            kernel: KernelSpec::Canonical,
            f: VectorSpec::One,
            g,
        }),
        window_r: r,
        spectrum: None,
        strip_c: default_strip_c(),
        probes: ProbeCounts::default(),
        seed: default_seed(),
        samples_per_unit: default_density(),
    }
}

/// The shipped scenarios:
/// - `S1`: `a = 1`, `f = g ≡ 1`, zeros `π/4 + 2πk - i ln2/2`;
/// - `S2`: Kadec exponential families `δ = 0.1` and `δ = 0.25` signed;
/// - `S3`: `g(t) = e^t`, `f ≡ 1`, numeric spectrum;
/// - `S4`: synthetic weights `|x|^{1/2}`, `|x|^{3/2}` and `1 + x²`.
pub fn builtin(name: &str) -> Result<Scenario, HarnessError> {
    let sc = match name.to_ascii_uppercase().as_str() {
        "S1" => operator("S1", VectorSpec::One, 100.0),
        "S2" => Scenario {
            model: ModelSpec::ExponentialFamily(FamilySpec {
                families: vec![KadecSpec { delta: 0.1, signed: false }, KadecSpec { delta: 0.25, signed: true }],
                n_index: 256,
            }),
            ..operator("S2", VectorSpec::One, 100.0)
        },
        "S3" => operator("S3", VectorSpec::ExpT { rate: 1.0 }, 100.0),
        "S4" => Scenario {
            model: ModelSpec::WeightGallery(GallerySpec {
                weights: vec![
                    WeightSpec::Power { alpha: 0.5 },
                    WeightSpec::Power { alpha: 1.5 },
                    WeightSpec::OnePlusXSq,
                ],
            }),
            ..operator("S4", VectorSpec::One, 100.0)
        },
        _ => return Err(HarnessError::UnknownBuiltin(name.into())),
    };
    sc.validate()?;
    Ok(sc)
}

/// Loads `builtin:NAME` or a JSON file.
pub fn load_scenario(source: &str) -> Result<Scenario, HarnessError> {
    if let Some(name) = source.strip_prefix("builtin:") {
        return builtin(name);
    }
    let path = Path::new(source);
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Scenario::from_json(&text)
}

fn build_vector(spec: &VectorSpec, grid: &std::sync::Arc<Grid>) -> crate::Result<GridFunction> {
    Ok(match spec {
        VectorSpec::One => GridFunction::constant(grid, c64(1.0, 0.0)),
        VectorSpec::Zero => GridFunction::zeros(grid),
        VectorSpec::ExpT { rate } => GridFunction::from_fn(grid, |t| c64((rate * t).exp(), 0.0)),
        VectorSpec::Gaussian { center, width } => {
            GridFunction::from_fn(grid, |t| c64((-(t - center).powi(2) / (2.0 * width * width)).exp(), 0.0))
        }
        VectorSpec::Table { re, im } => {
            let values = re.iter().enumerate().map(|(i, &x)| c64(x, im.get(i).copied().unwrap_or(0.0))).collect();
            GridFunction::new(grid.clone(), values)?
        }
    })
}

/// Builds the perturbed model of an operator scenario.
pub fn build_model(spec: &OperatorSpec) -> crate::Result<PerturbedModel> {
    let grid = Grid::new(spec.grid, spec.a, spec.n)?;
    let op = match spec.kernel {
        KernelSpec::Canonical => VolterraOperator::canonical(grid.clone()),
        KernelSpec::ExpDiff { rate } => VolterraOperator::with_kernel(grid.clone(), move |x, s| c64((rate * (x - s)).exp(), 0.0)),
    };
    let f = build_vector(&spec.f, &grid)?;
    let g = build_vector(&spec.g, &grid)?;
    PerturbedModel::new(op, f, g)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Ok,
    Failed,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub id: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTime {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub unix_seconds: u64,
    pub total_seconds: f64,
    pub stages: Vec<StageTime>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub kind: String,
    pub a: f64,
    pub n: usize,
    pub grid: GridKind,
    pub compat_residuals: (f64, f64),
    pub spectral_radius: f64,
    pub quasinilpotent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiCheck {
    pub points: usize,
    pub max_rel_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub count: usize,
    pub window: Rect,
    pub nudge: f64,
    pub winding_total: i64,
    pub simplicity_margin: f64,
    pub distance_to_real_line: Option<f64>,
    pub zeros: Vec<Zero>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub name: String,
    pub r: f64,
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedA2 {
    pub name: String,
    pub report: A2Report,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedIntegrability {
    pub name: String,
    pub report: IntegrabilityReport,
}

/// `W² / w*²` bands at `R` and `2R`.
#[derive(Debug, Clone, Serialize)]
pub struct MainBand {
    pub at_r: Band,
    pub at_2r: Band,
    pub drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlesonSummary {
    pub upper: Option<f64>,
    pub lower: Option<f64>,
    /// Same constants over the zeros with `|Re λ| ≤ R`.
    pub upper_at_r: Option<f64>,
    pub lower_at_r: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionRow {
    pub target: ExpansionTarget,
    pub point: Complex64,
    pub n: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub scenario: Scenario,
    pub model: Option<ModelSummary>,
    pub phi_check: Option<PhiCheck>,
    pub spectrum: Option<SpectrumSummary>,
    pub indicator: Option<IndicatorData>,
    pub width: Option<WidthReport>,
    pub traces: Vec<TraceSummary>,
    pub w_star_sign_gap: Option<f64>,
    pub a2: Vec<NamedA2>,
    pub integrability: Vec<NamedIntegrability>,
    pub main_band: Option<MainBand>,
    pub carleson: Option<CarlesonSummary>,
    pub frames: Vec<FrameReport>,
    pub estimates: Vec<EstimateReport>,
    pub expansion: Vec<ExpansionRow>,
    pub stages: Vec<StageRecord>,
    pub checks: Vec<Check>,
    pub timestamp: Timing,
    #[serde(skip)]
    pub trace_data: Vec<(String, WeightTrace)>,
}

impl DiagnosticsReport {
    fn new(scenario: &Scenario) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.into(),
            scenario: scenario.clone(),
            model: None,
            phi_check: None,
            spectrum: None,
            indicator: None,
            width: None,
            traces: Vec::new(),
            w_star_sign_gap: None,
            a2: Vec::new(),
            integrability: Vec::new(),
            main_band: None,
            carleson: None,
            frames: Vec::new(),
            estimates: Vec::new(),
            expansion: Vec::new(),
            stages: Vec::new(),
            checks: Vec::new(),
            timestamp: Timing { unix_seconds: 0, total_seconds: 0.0, stages: Vec::new() },
            trace_data: Vec::new(),
        }
    }

    pub fn check(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn estimate(&self, id: &str) -> Option<&EstimateReport> {
        self.estimates.iter().find(|e| e.id == id)
    }

    pub fn a2_report(&self, name: &str) -> Option<&A2Report> {
        self.a2.iter().find(|a| a.name == name).map(|a| &a.report)
    }

    fn push_check(&mut self, id: impl Into<String>, verdict: Verdict, detail: impl Into<String>) {
        self.checks.push(Check { id: id.into(), verdict, detail: detail.into() });
    }

    /// Runs `f` as a named stage and records its outcome and duration.
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> crate::Result<T>) -> Option<T> {
        let t = Instant::now();
        let out = f();
        self.timestamp.stages.push(StageTime { name: name.into(), seconds: t.elapsed().as_secs_f64() });
        match out {
            Ok(v) => {
                self.stages.push(StageRecord { name: name.into(), status: StageStatus::Ok, detail: None });
                Some(v)
            }
            Err(e) => {
                self.stages.push(StageRecord { name: name.into(), status: StageStatus::Failed, detail: Some(e.to_string()) });
                None
            }
        }
    }

    fn skip(&mut self, name: &str, reason: &str) {
        self.stages.push(StageRecord { name: name.into(), status: StageStatus::NotApplicable, detail: Some(reason.into()) });
    }

    fn last_error(&self) -> String {
        self.stages.last().and_then(|s| s.detail.clone()).unwrap_or_default()
    }

    fn summarize_trace(&mut self, name: &str, t: &WeightTrace) {
        self.traces.push(TraceSummary {
            name: name.into(),
            r: t.r,
            samples: t.len(),
            min: t.values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: t.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            offset: t.offset,
        });
        self.trace_data.push((name.into(), t.clone()));
    }
}

// ---------------------------------------------------------------- pipeline

/// Runs every stage of the scenario. Only a failure to build the model is
/// returned as an error.
pub fn run_pipeline(scenario: &Scenario) -> Result<DiagnosticsReport, HarnessError> {
    scenario.validate()?;
    let start = Instant::now();
    let mut rep = DiagnosticsReport::new(scenario);
    match &scenario.model {
        ModelSpec::Operator(spec) => {
            let t = Instant::now();
            let model = build_model(spec).map_err(HarnessError::ModelBuild)?;
            rep.timestamp.stages.push(StageTime { name: "model".into(), seconds: t.elapsed().as_secs_f64() });
            rep.stages.push(StageRecord { name: "model".into(), status: StageStatus::Ok, detail: None });
            run_operator(scenario, spec, &model, &mut rep);
        }
        ModelSpec::ExponentialFamily(fam) => run_families(fam, &mut rep),
        ModelSpec::WeightGallery(gal) => run_gallery(scenario, gal, &mut rep),
    }
    rep.timestamp.total_seconds = start.elapsed().as_secs_f64();
    rep.timestamp.unix_seconds = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(rep)
}

fn verdict_of(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn run_families(fam: &FamilySpec, rep: &mut DiagnosticsReport) {
    for k in &fam.families {
        let id = format!("frame_kadec_{}{}", k.delta, if k.signed { "_signed" } else { "" });
        match rep.stage(&id, || basis::kadec_frame_report(fam.n_index, k.delta, k.signed)) {
            Some(f) => {
                let trend: Vec<String> = f.lower.iter().map(|m| format!("{m:.4}")).collect();
                let detail = format!("m_N = {:.4e}, M_N = {:.4e}, lower bound by truncation {}", f.m_n, f.big_m_n, trend.join(" → "));
                rep.push_check(id, f.verdict, detail);
                rep.frames.push(f);
            }
            None => {
                let e = rep.last_error();
                rep.push_check(id, Verdict::Fail, e);
            }
        }
    }
}

fn run_gallery(sc: &Scenario, gal: &GallerySpec, rep: &mut DiagnosticsReport) {
    let r = sc.window_r;
    let m = sc.samples();
    for w in &gal.weights {
        let name = w.name();
        let traces = rep.stage(&format!("trace_{name}"), || {
            let doubled = WeightTrace::synthetic(2.0 * r, 2 * m, |x| w.eval(x))?;
            Ok((weights::restrict(&doubled, r)?, doubled))
        });
        let Some((at_r, doubled)) = traces else {
            let e = rep.last_error();
            rep.push_check(format!("a2_{name}"), Verdict::Fail, e.clone());
            rep.push_check(format!("integrability_{name}"), Verdict::Fail, e);
            continue;
        };
        rep.summarize_trace(&name, &at_r);
        let a2 = weights::a2_check(&at_r, Some(&doubled));
        rep.push_check(
            format!("a2_{name}"),
            a2.verdict,
            a2_detail(&a2),
        );
        rep.a2.push(NamedA2 { name: name.clone(), report: a2 });
        let int = weights::integrability_check(&at_r, &doubled);
        rep.push_check(
            format!("integrability_{name}"),
            int.verdict,
            format!("direct change {:.3}, reciprocal change {:.3}", int.direct.rel_change, int.reciprocal.rel_change),
        );
        rep.integrability.push(NamedIntegrability { name, report: int });
    }
}

fn run_operator(sc: &Scenario, spec: &OperatorSpec, model: &PerturbedModel, rep: &mut DiagnosticsReport) {
    let op = model.operator();
    rep.model = Some(ModelSummary {
        kind: match op.kind() {
            OperatorKind::CanonicalJa => "canonical".into(),
            OperatorKind::GeneralKernel => "general_kernel".into(),
        },
        a: spec.a,
        n: spec.n,
        grid: spec.grid,
        compat_residuals: model.compat_residuals(),
        spectral_radius: op.spectral_radius(),
        quasinilpotent: op.is_quasinilpotent(),
    });
    let det = DetFunction::new(model);
    let window = sc.spectrum_window();
    let r = sc.window_r;
    let c = sc.strip_c;
    let m = sc.samples();

    // φ by both formulas on a 10 × 5 grid over the spectrum window.
    if op.kind() == OperatorKind::CanonicalJa {
        let pts: Vec<Complex64> = basis::probe_grid(window.re_max.min(r), window.im_min, window.im_max, 10, 5);
        let res = rep.stage("phi_formulas", || {
            let mut worst = 0.0f64;
            for &z in &pts {
                let a = det.eval_with(z, Formula::InnerProduct)?;
                let b = det.eval_with(z, Formula::Semigroup)?;
                worst = worst.max((a - b).norm() / a.norm().max(1.0));
            }
            Ok(worst)
        });
        match res {
            Some(d) => {
                rep.phi_check = Some(PhiCheck { points: pts.len(), max_rel_diff: d });
                rep.push_check("phi_formulas", verdict_of(d <= 1e-8), format!("max relative difference {d:.3e}"));
            }
            None => {
                let e = rep.last_error();
                rep.push_check("phi_formulas", Verdict::Fail, e);
            }
        }
    } else {
        rep.skip("phi_formulas", "the semigroup formula needs the shift realization");
        rep.push_check("phi_formulas", Verdict::NotApplicable, "general kernel: no shift realization");
    }

    let spectrum = rep.stage("spectrum", || detfun::find_spectrum(&det, window));
    match &spectrum {
        Some(s) => {
            rep.spectrum = Some(SpectrumSummary {
                count: s.len(),
                window: s.window,
                nudge: s.nudge,
                winding_total: s.winding_total,
                simplicity_margin: s.simplicity_margin,
                distance_to_real_line: s.distance_to_real_line(),
                zeros: s.zeros.clone(),
            });
            rep.push_check("spectrum", Verdict::Pass, format!("{} simple zeros, none real", s.len()));
        }
        None => {
            let e = rep.last_error();
            rep.push_check("spectrum", Verdict::Fail, e);
        }
    }
    let nonempty = spectrum.as_ref().filter(|s| !s.is_empty());
    let spec_reason = if spectrum.is_some() { "empty spectrum" } else { "spectrum stage failed" };

    // Indicator along ±i.
    let r_max = if op.kind() == OperatorKind::CanonicalJa { 60.0 } else { 25.0 / spec.a };
    let radii: Vec<f64> = (0..12).map(|k| 5.0 + (r_max - 5.0) * k as f64 / 11.0).collect();
    let far = det.far_field();
    let indicator = rep.stage("indicator", || detfun::indicator_data(&far, &radii));
    match &indicator {
        Some(ind) => {
            let ok = ind.h_up <= INDICATOR_TOL && ind.h_down <= spec.a + INDICATOR_TOL && ind.d_ge_half_width;
            rep.push_check(
                "indicator",
                verdict_of(ok),
                format!("h_up {:.4}, h_down {:.4}, width {:.4}, d {:.4}", ind.h_up, ind.h_down, ind.width, ind.d),
            );
            rep.indicator = Some(ind.clone());
        }
        None => {
            let e = rep.last_error();
            rep.push_check("indicator", Verdict::Fail, e);
        }
    }
    match (&spectrum, &indicator) {
        (Some(s), Some(ind)) => {
            let w = detfun::width_positivity_check(s, ind);
            rep.push_check("width_positivity", w.verdict, w.note.clone());
            rep.width = Some(w);
        }
        _ => rep.push_check("width_positivity", Verdict::NotApplicable, "needs the spectrum and the indicator"),
    }
    match nonempty.and_then(|s| s.distance_to_real_line()) {
        Some(d) => rep.push_check("strip_distance", verdict_of(d > 1e-8), format!("dist(Λ, ℝ) = {d:.6}")),
        None => rep.push_check("strip_distance", Verdict::NotApplicable, spec_reason),
    }

    // Traces on [-2R, 2R], restricted to [-R, R].
    let w_sq = rep.stage("trace_w_sq", || {
        let d = weights::trace_w(model, 2.0 * r, 2 * m)?;
        Ok((weights::restrict(&d, r)?, d))
    });
    let w_star = rep.stage("trace_w_star_sq", || {
        let d = weights::trace_w_star(model, 2.0 * r, 2 * m)?;
        Ok((weights::restrict(&d.trace, r)?, d))
    });
    let big_w = match (nonempty, &w_sq) {
        (Some(s), Some((_, w2))) => rep.stage("trace_W_sq", || {
            let d = weights::trace_big_w_from(model, s, w2)?;
            Ok((weights::restrict(&d, r)?, d))
        }),
        _ => {
            rep.skip("trace_W_sq", "needs a nonempty spectrum and the w² trace");
            None
        }
    };
    if let Some((t, _)) = &w_sq {
        rep.summarize_trace("w_sq", t);
    }
    if let Some((t, full)) = &w_star {
        rep.summarize_trace("w_star_sq", t);
        rep.w_star_sign_gap = Some(full.max_rel_gap);
    }
    if let Some((t, _)) = &big_w {
        rep.summarize_trace("W_sq", t);
    }
    let a2_w = a2_stage(rep, "w_sq", w_sq.as_ref().map(|(a, b)| (a, b)), "w² trace failed");
    let a2_ws = a2_stage(rep, "w_star_sq", w_star.as_ref().map(|(a, b)| (a, &b.trace)), "w*² trace failed");
    let a2_bw = a2_stage(rep, "W_sq", big_w.as_ref().map(|(a, b)| (a, b)), "W² trace unavailable");
    for (name, pair) in [
        ("w_sq", w_sq.as_ref().map(|(a, b)| (a, b))),
        ("w_star_sq", w_star.as_ref().map(|(a, b)| (a, &b.trace))),
    ] {
        let id = format!("integrability_{name}");
        match pair {
            Some((t, d)) => {
                let rpt = weights::integrability_check(t, d);
                rep.push_check(
                    id,
                    rpt.verdict,
                    format!("direct change {:.3}, reciprocal change {:.3}", rpt.direct.rel_change, rpt.reciprocal.rel_change),
                );
                rep.integrability.push(NamedIntegrability { name: name.into(), report: rpt });
            }
            None => rep.push_check(id, Verdict::NotApplicable, "trace unavailable"),
        }
    }
    match (&big_w, &w_star) {
        (Some((bw, bw2)), Some((ws, ws2))) => {
            let band = rep.stage("main_band", || {
                let at_r = weights::band(bw, ws)?;
                let at_2r = weights::band(bw2, &ws2.trace)?;
                Ok(MainBand { at_r, at_2r, drift: at_2r.ratio / at_r.ratio - 1.0 })
            });
            match band {
                Some(b) => {
                    // Within the band and R-stable passes; R-stable beyond the
                    // band is still a bounded ratio and reported as stable.
                    let stable = b.drift.abs() < weights::STABLE_DRIFT;
                    let within = b.at_r.ratio < basis::BAND_LIMIT && b.at_2r.ratio < basis::BAND_LIMIT;
                    let v = match (stable, within) {
                        (true, true) => Verdict::Pass,
                        (true, false) => Verdict::Stable,
                        _ => Verdict::Fail,
                    };
                    rep.push_check(
                        "main_band",
                        v,
                        format!("max/min of W²/w*²: {:.4} at R, {:.4} at 2R", b.at_r.ratio, b.at_2r.ratio),
                    );
                    rep.main_band = Some(b);
                }
                None => {
                    let e = rep.last_error();
                    rep.push_check("main_band", Verdict::Fail, e);
                }
            }
        }
        _ => rep.push_check("main_band", Verdict::NotApplicable, "needs the W² and w*² traces"),
    }

    // Spectrum-dependent checks.
    let Some(s) = nonempty else {
        for id in [
            "carleson",
            "frame_g",
            "frame_f_star",
            "uniform_minimality",
            "biorthogonality",
            "lrg",
            "estimates",
            "expansion",
        ] {
            rep.skip(id, spec_reason);
            rep.push_check(id, Verdict::NotApplicable, spec_reason);
        }
        right_regularity_stage(rep, model, r, m);
        theorem_consistency(rep, None, [a2_w, a2_ws, a2_bw]);
        return;
    };

    let pts = s.points();
    let carleson = rep.stage("carleson", || {
        let (upper, lower) = basis::carleson_per_half_plane(&pts)?;
        let near: Vec<Complex64> = pts.iter().copied().filter(|l| l.re.abs() <= r).collect();
        let (upper_at_r, lower_at_r) = basis::carleson_per_half_plane(&near)?;
        Ok(CarlesonSummary { upper, lower, upper_at_r, lower_at_r })
    });
    match carleson {
        Some(cs) => {
            let drift = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => (b / a - 1.0).abs(),
                _ => 0.0,
            };
            let d = drift(cs.upper, cs.upper_at_r).max(drift(cs.lower, cs.lower_at_r));
            let v = if d < weights::STABLE_DRIFT { Verdict::Stable } else { Verdict::Inconclusive };
            rep.push_check("carleson", v, format!("upper {:?}, lower {:?}, drift from R to the full window {d:.3}", cs.upper, cs.lower));
            rep.carleson = Some(cs);
        }
        None => {
            let e = rep.last_error();
            rep.push_check("carleson", Verdict::Fail, e);
        }
    }

    let family = rep.stage("family", || EigenFamily::from_model(model, s, None));
    let mut frame_verdicts = Vec::new();
    for (id, side) in [("frame_g", FamilySide::G), ("frame_f_star", FamilySide::FStar)] {
        let Some(fam) = &family else {
            rep.push_check(id, Verdict::NotApplicable, "eigenfamily unavailable");
            continue;
        };
        match rep.stage(id, || basis::frame_report(fam, side)) {
            Some(f) => {
                frame_verdicts.push(f.verdict);
                rep.push_check(id, f.verdict, format!("N = {}, m_N = {:.4e}, M_N = {:.4e}", f.n, f.m_n, f.big_m_n));
                rep.frames.push(f);
            }
            None => {
                frame_verdicts.push(Verdict::Fail);
                let e = rep.last_error();
                rep.push_check(id, Verdict::Fail, e);
            }
        }
    }

    if let Some(fam) = &family {
        let um = rep.stage("uniform_minimality", || basis::uniform_minimality(fam));
        estimate_check(rep, "uniform_minimality", um);

        let lead = EigenFamily::from_model(model, s, Some(sc.probes.eigen_count));
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed.wrapping_add(1));
        let mut probes = Vec::new();
        while probes.len() < sc.probes.biorthogonality {
            let z = c64(rng.random_range(-r / 2.0..r / 2.0), rng.random_range(-c..c));
            if s.distance(z).unwrap_or(f64::INFINITY) > 0.1 && probes.iter().all(|p: &Complex64| (p - z).norm() > 0.1) {
                probes.push(z);
            }
        }
        let bi = rep.stage("biorthogonality", || basis::biorthogonality_residuals(model, &lead?, &probes));
        estimate_check(rep, "biorthogonality", bi);
    } else {
        for id in ["uniform_minimality", "biorthogonality"] {
            rep.push_check(id, Verdict::NotApplicable, "eigenfamily unavailable");
        }
    }

    right_regularity_stage(rep, model, r, m);

    let lrg_probes: Vec<Complex64> = basis::probe_grid(r / 2.0, -c, c, sc.probes.lrg_columns, sc.probes.lrg_rows)
        .into_iter()
        .filter(|&z| s.distance(z).unwrap_or(f64::INFINITY) >= basis::PROBE_MIN_DISTANCE)
        .collect();
    let lrg = rep.stage("lrg", || basis::lrg_sample(model, &pts, &lrg_probes));
    estimate_check(rep, "lrg", lrg);

    match &family {
        Some(fam) => {
            let mut cfg = SuiteConfig::new(r, c, sc.seed);
            cfg.draws = sc.probes.draws;
            cfg.eigen_count = sc.probes.eigen_count;
            let suite = rep.stage("estimates", || basis::estimate_suite(model, s, fam, &cfg));
            match suite {
                Some(list) => {
                    for e in list {
                        rep.push_check(e.id.clone(), e.verdict, format!("[{:.4e}, {:.4e}], ratio {:.4}", e.left, e.right, e.ratio));
                        rep.estimates.push(e);
                    }
                }
                None => {
                    let e = rep.last_error();
                    rep.push_check("estimates", Verdict::Fail, e);
                }
            }

            let point = c64(5.0, 0.2);
            let sizes: Vec<usize> = [4, 8, 16, fam.len()].into_iter().filter(|&k| k <= fam.len()).collect();
            let rows = rep.stage("expansion", || {
                let mut rows = Vec::new();
                for target in [ExpansionTarget::GAtLambda, ExpansionTarget::FStarAtMu] {
                    for &k in &sizes {
                        let residual = basis::expansion_residual(model, fam, target, point, k)?;
                        rows.push(ExpansionRow { target, point, n: k, residual });
                    }
                }
                Ok(rows)
            });
            match rows {
                Some(rows) => {
                    let trend_ok = rows.windows(2).filter(|w| w[0].target == w[1].target).all(|w| w[1].residual <= 1.1 * w[0].residual);
                    let last: Vec<String> = rows.iter().filter(|r| r.n == fam.len()).map(|r| format!("{:.3e}", r.residual)).collect();
                    rep.push_check(
                        "expansion",
                        verdict_of(trend_ok),
                        format!("residuals nonincreasing in N at {point}; full-family residuals {}", last.join(", ")),
                    );
                    rep.expansion = rows;
                }
                None => {
                    let e = rep.last_error();
                    rep.push_check("expansion", Verdict::Fail, e);
                }
            }
        }
        None => {
            for id in ["estimates", "expansion"] {
                rep.skip(id, "eigenfamily unavailable");
                rep.push_check(id, Verdict::NotApplicable, "eigenfamily unavailable");
            }
        }
    }

    let frames = if frame_verdicts.len() == 2 { Some(frame_verdicts) } else { None };
    theorem_consistency(rep, frames, [a2_w, a2_ws, a2_bw]);
}

fn a2_stage(rep: &mut DiagnosticsReport, name: &str, pair: Option<(&WeightTrace, &WeightTrace)>, reason: &str) -> Option<Verdict> {
    let id = format!("a2_{name}");
    match pair {
        Some((t, d)) => {
            let a2 = weights::a2_check(t, Some(d));
            rep.push_check(
                id,
                a2.verdict,
                a2_detail(&a2),
            );
            let v = a2.verdict;
            rep.a2.push(NamedA2 { name: name.into(), report: a2 });
            Some(v)
        }
        None => {
            rep.push_check(id, Verdict::NotApplicable, reason);
            None
        }
    }
}

fn a2_detail(a2: &A2Report) -> String {
    format!(
        "interval {:.4}, Poisson {:.4}, doubling ratios {:.4}/{:.4}",
        a2.constant_interval,
        a2.constant_poisson,
        a2.interval_ratio.unwrap_or(f64::NAN),
        a2.poisson_ratio.unwrap_or(f64::NAN)
    )
}

fn estimate_check(rep: &mut DiagnosticsReport, id: &str, res: Option<EstimateReport>) {
    match res {
        Some(e) => {
            rep.push_check(id, e.verdict, format!("[{:.4e}, {:.4e}], ratio {:.4}", e.left, e.right, e.ratio));
            rep.estimates.push(e);
        }
        None => {
            let e = rep.last_error();
            rep.push_check(id, Verdict::Fail, e);
        }
    }
}

fn right_regularity_stage(rep: &mut DiagnosticsReport, model: &PerturbedModel, r: f64, m: usize) {
    let rr = rep.stage("right_regularity", || basis::right_regularity_bounds(model, r, m));
    estimate_check(rep, "right_regularity", rr);
}

/// If both eigenfamilies are Riesz-stable, all three weights must be stable
/// (A₂). Nothing is claimed otherwise.
fn theorem_consistency(rep: &mut DiagnosticsReport, frames: Option<Vec<Verdict>>, a2: [Option<Verdict>; 3]) {
    let stable_frames = frames.as_ref().is_some_and(|f| f.iter().all(|v| *v == Verdict::Stable));
    if !stable_frames {
        rep.push_check("theorem_consistency", Verdict::NotApplicable, "frames are not both riesz-stable; no claim");
        return;
    }
    let all = a2.iter().all(|v| *v == Some(Verdict::Stable));
    let name = |v: Option<Verdict>| v.map_or("unavailable".to_string(), |v| format!("{v:?}").to_lowercase());
    rep.push_check(
        "theorem_consistency",
        verdict_of(all),
        format!("frames stable; A₂ verdicts w² {}, w*² {}, W² {}", name(a2[0]), name(a2[1]), name(a2[2])),
    );
}

// ---------------------------------------------------------------- emission

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Both,
}

pub fn to_json(rep: &DiagnosticsReport) -> String {
    serde_json::to_string_pretty(rep).expect("report serializes")
}

/// The JSON with the `timestamp` field removed, for determinism checks.
pub fn json_without_timestamp(rep: &DiagnosticsReport) -> String {
    let mut v = serde_json::to_value(rep).expect("report serializes");
    if let Some(o) = v.as_object_mut() {
        o.remove("timestamp");
    }
    serde_json::to_string_pretty(&v).expect("value serializes")
}

pub fn spectrum_csv(rep: &DiagnosticsReport) -> String {
    let mut s = String::from("re,im,abs_phi_prime\n");
    if let Some(sp) = &rep.spectrum {
        for z in &sp.zeros {
            let _ = writeln!(s, "{},{},{}", z.lambda.re, z.lambda.im, z.abs_dphi);
        }
    }
    s
}

pub fn estimates_csv(rep: &DiagnosticsReport) -> String {
    let mut s = String::from("id,left,right,ratio\n");
    for e in &rep.estimates {
        let _ = writeln!(s, "{},{},{},{}", e.id, e.left, e.right, e.ratio);
    }
    s
}

/// Writes the report into `dir` and returns the written paths.
pub fn emit(rep: &DiagnosticsReport, format: Format, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    if matches!(format, Format::Json | Format::Both) {
        files.push((dir.join("report.json"), to_json(rep)));
    }
    if matches!(format, Format::Csv | Format::Both) {
        files.push((dir.join("spectrum.csv"), spectrum_csv(rep)));
        files.push((dir.join("estimates.csv"), estimates_csv(rep)));
        for (name, t) in &rep.trace_data {
            files.push((dir.join(format!("trace_{name}.csv")), t.to_csv()));
        }
    }
    let mut out = Vec::with_capacity(files.len());
    for (path, body) in files {
        fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

/// Spectrum of an emitted report, for consumers that only need the zeros.
pub fn spectrum_of(rep: &DiagnosticsReport) -> Option<Spectrum> {
    rep.spectrum.as_ref().map(|s| Spectrum {
        zeros: s.zeros.clone(),
        window: s.window,
        nudge: s.nudge,
        winding_total: s.winding_total,
        simplicity_margin: s.simplicity_margin,
    })
}
