//! JSON run configurations for the command-line front end.
//!
//! Every document carries `schema_version` and rejects unknown keys.
//! Optional keys fall back to the defaults of the standard experiment
//! (L = 13, T = 20, CFL 0.2, ε = 0.05, forcing A = 1, B = 2, n = 4).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::Probe;
use crate::grid::{make_grid, BoundaryKind, Field, GridError, GridSpec};
use crate::inverse::{family_initials, FamilySpec, InverseSetup};
use crate::neural::TrainConfig;
use crate::soliton::SolitonParams;
use crate::solver::{ForcingSpec, ProblemConfig, ProblemKind, SolveError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl From<SolveError> for ConfigError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::InvalidConfig { field, reason } => ConfigError::Invalid {
                field: field.into(),
                reason,
            },
            SolveError::Unstable { value } => ConfigError::Invalid {
                field: "cfl".into(),
                reason: format!("stability number cfl² + 2λdt/dx² = {value} must be < 1"),
            },
            other => ConfigError::Invalid {
                field: "problem".into(),
                reason: other.to_string(),
            },
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L", default = "default_l")]
    pub half_length: f64,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(rename = "T", default = "default_t")]
    pub final_time: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_l() -> f64 {
    13.0
}
fn default_nx() -> usize {
    201
}
fn default_t() -> f64 {
    20.0
}
fn default_cfl() -> f64 {
    0.2
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            half_length: default_l(),
            nx: default_nx(),
            final_time: default_t(),
            cfl: default_cfl(),
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec, GridError> {
        make_grid(self.half_length, self.nx, self.final_time, self.cfl)
    }
}

/// `g(x, t) = A cos(nπx/L) + B cos(nπt/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    #[serde(rename = "A", default = "default_a")]
    pub amplitude_x: f64,
    #[serde(rename = "B", default = "default_b")]
    pub amplitude_t: f64,
    #[serde(rename = "n", default = "default_n")]
    pub mode: u32,
}

fn default_a() -> f64 {
    1.0
}
fn default_b() -> f64 {
    2.0
}
fn default_n() -> u32 {
    4
}

impl Default for ForcingConfig {
    fn default() -> Self {
        ForcingConfig {
            amplitude_x: default_a(),
            amplitude_t: default_b(),
            mode: default_n(),
        }
    }
}

impl ForcingConfig {
    pub fn build(&self, grid: &GridSpec) -> ForcingSpec {
        ForcingSpec::new(self.amplitude_x, self.amplitude_t, self.mode, grid)
    }
}

/// Initial deviation `(η(·,0), η_t(·,0))`. Full-equation runs start from
/// `φ + ε η0`, `φ_t + ε η1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialConfig {
    #[default]
    Zero,
    /// `η0 = cos(ωx)`, `η1 = -ω sin(ωx)` (or 0 when `velocity` is false),
    /// with `ω = nπ/L` when `n` is given instead of `omega`.
    Cosine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
        #[serde(rename = "n", default, skip_serializing_if = "Option::is_none")]
        mode: Option<u32>,
        #[serde(default = "yes")]
        velocity: bool,
    },
}

fn yes() -> bool {
    true
}

impl InitialConfig {
    pub fn build(&self, grid: &GridSpec) -> Result<(Field, Field), ConfigError> {
        match *self {
            InitialConfig::Zero => Ok((Field::zeros(*grid), Field::zeros(*grid))),
            InitialConfig::Cosine { omega, mode, velocity } => {
                let w = match (omega, mode) {
                    (Some(w), None) if w.is_finite() => w,
                    (None, Some(n)) => n as f64 * std::f64::consts::PI / grid.half_length,
                    _ => return Err(invalid("initial", "cosine data needs exactly one finite `omega` or `n`")),
                };
                let (u0, v0) = family_initials(w, grid);
                Ok((u0, if velocity { v0 } else { Field::zeros(*grid) }))
            }
        }
    }
}

/// Physical parameters shared by all commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_soliton")]
    pub soliton: SolitonParams,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default = "default_bc")]
    pub bc: BoundaryKind,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub initial: InitialConfig,
}

fn default_epsilon() -> f64 {
    0.05
}
fn default_soliton() -> SolitonParams {
    SolitonParams { v: 0.5, x0: 0.0 }
}
fn default_bc() -> BoundaryKind {
    BoundaryKind::Neumann
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            grid: GridConfig::default(),
            epsilon: default_epsilon(),
            soliton: default_soliton(),
            forcing: ForcingConfig::default(),
            bc: default_bc(),
            lambda: 0.0,
            initial: InitialConfig::Zero,
        }
    }
}

impl PhysicsConfig {
    /// Validated solver configuration for `kind`.
    pub fn problem(&self, kind: ProblemKind) -> Result<ProblemConfig, ConfigError> {
        let grid = self.grid.build()?;
        let (eta0, eta1) = self.initial.build(&grid)?;
        let mut cfg = ProblemConfig::quiet(kind, grid);
        cfg.epsilon = self.epsilon;
        cfg.soliton = self.soliton;
        cfg.forcing = self.forcing.build(&grid);
        cfg.bc = self.bc;
        cfg.lambda = self.lambda;
        cfg.soliton
            .validate()
            .map_err(|e| invalid("soliton.v", e.to_string()))?;
        if kind == ProblemKind::Full {
            (cfg.u0, cfg.v0) = ProblemConfig::full_from_deviation(self.epsilon, self.soliton, &eta0, &eta1)?;
        } else {
            (cfg.u0, cfg.v0) = (eta0, eta1);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub problem: PhysicsConfig,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ProblemKind>,
    /// Also write `φ + ε η` for every deviation run.
    #[serde(default = "yes")]
    pub reconstruct: bool,
    #[serde(default = "default_snapshots")]
    pub snapshots: Vec<f64>,
    #[serde(default = "yes")]
    pub write_csv: bool,
    #[serde(default = "yes")]
    pub write_binary: bool,
    #[serde(default = "yes")]
    pub colormap: bool,
}

fn default_kinds() -> Vec<ProblemKind> {
    vec![ProblemKind::Full, ProblemKind::Perturbation]
}
fn default_snapshots() -> Vec<f64> {
    vec![2.0, 5.0, 8.0, 10.0, 15.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub problem: PhysicsConfig,
    #[serde(default)]
    pub family: FamilySpec,
    #[serde(rename = "N_t", default = "default_n_t")]
    pub n_t: usize,
    #[serde(rename = "N_x", default = "default_n_x")]
    pub n_x: usize,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default = "yes")]
    pub write_dataset: bool,
}

fn default_n_t() -> usize {
    2
}
fn default_n_x() -> usize {
    50
}

impl InvertConfig {
    pub fn setup(&self) -> Result<InverseSetup, ConfigError> {
        if (self.family.half_length - self.problem.grid.half_length).abs() > 1e-12 {
            return Err(invalid("family.half_length", "must equal grid L"));
        }
        if self.problem.initial != InitialConfig::Zero {
            return Err(invalid("initial", "initial data come from the frequency family"));
        }
        self.family.validate().map_err(|e| invalid("family", e.to_string()))?;
        let template = self.problem.problem(ProblemKind::Perturbation)?;
        let mut train = self.training.clone();
        train.seed = self.seed;
        Ok(InverseSetup {
            family: self.family,
            template,
            n_t: self.n_t,
            n_x: self.n_x,
            sigma: self.sigma,
            train,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub problem: PhysicsConfig,
    #[serde(default = "default_diag_kind")]
    pub kind: ProblemKind,
    /// Relative perturbation sizes for the continuous-dependence check.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_probe")]
    pub probe: Probe,
}

fn default_probe() -> Probe {
    Probe::Both
}

fn default_diag_kind() -> ProblemKind {
    ProblemKind::Perturbation
}
fn default_deltas() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Binary history written by `simulate`, relative to the config file.
    pub input: PathBuf,
    #[serde(default = "default_render_output")]
    pub output: String,
}

fn default_render_output() -> String {
    "colormap.ppm".into()
}

/// Implemented by every top-level document.
pub trait RunConfig: Serialize + for<'de> Deserialize<'de> + Sized {
    fn schema_version(&self) -> u32;
    fn seed_mut(&mut self) -> &mut u64;
    /// Checks that do not need a solve.
    fn check(&self) -> Result<(), ConfigError>;
}

impl RunConfig for SimulateConfig {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
    fn check(&self) -> Result<(), ConfigError> {
        if self.kinds.is_empty() {
            return Err(invalid("kinds", "at least one problem kind is required"));
        }
        for &k in &self.kinds {
            self.problem.problem(k)?;
        }
        if let Some(t) = self.snapshots.iter().find(|t| !(**t >= 0.0 && **t <= self.problem.grid.final_time)) {
            return Err(invalid("snapshots", format!("time {t} outside [0, T]")));
        }
        Ok(())
    }
}

impl RunConfig for InvertConfig {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
    fn check(&self) -> Result<(), ConfigError> {
        let s = self.setup()?;
        crate::inverse::select_time_indices(s.template.grid.nt, self.n_t).map_err(|e| invalid("N_t", e.to_string()))?;
        crate::inverse::select_space_indices(s.template.grid.nx, self.n_x).map_err(|e| invalid("N_x", e.to_string()))?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", "must be finite and >= 0"));
        }
        let t = &self.training;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(invalid("training.lr", "must be finite and positive"));
        }
        if !(t.loss_threshold >= 0.0) {
            return Err(invalid("training.loss_threshold", "must be >= 0"));
        }
        Ok(())
    }
}

impl RunConfig for DiagnoseConfig {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
    fn check(&self) -> Result<(), ConfigError> {
        self.problem.problem(self.kind)?;
        if self.deltas.iter().any(|d| !(d.is_finite() && *d != 0.0)) {
            return Err(invalid("deltas", "must be finite and nonzero"));
        }
        Ok(())
    }
}

impl RunConfig for RenderConfig {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
    fn check(&self) -> Result<(), ConfigError> {
        if self.output.is_empty() || self.output.contains(['/', '\\']) {
            return Err(invalid("output", "must be a plain file name"));
        }
        Ok(())
    }
}

pub fn parse<C: RunConfig>(text: &str) -> Result<C, ConfigError> {
    let c: C = serde_json::from_str(text)?;
    if c.schema_version() != SCHEMA_VERSION {
        return Err(ConfigError::Schema(c.schema_version()));
    }
    c.check()?;
    Ok(c)
}

pub fn load<C: RunConfig>(path: &Path) -> Result<C, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text)
}

pub fn to_pretty_json<C: RunConfig>(c: &C) -> String {
    let mut s = serde_json::to_string_pretty(c).expect("config serializes");
    s.push('\n');
    s
}
