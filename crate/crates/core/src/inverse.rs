//! Recovering initial data of the deviation equation from sampled trajectories.
//!
//! A family of initial profiles `u0 = cos(ωx)`, `v0 = -ω sin(ωx)` is pushed
//! through the forward solver, trajectories are downsampled on a
//! space-time lattice, and a network `(x, ω, t) ↦ (η, η_t)` is fitted to the
//! samples. Evaluating the network at `t = 0` and the target frequency
//! `ω = nπ/L` yields the reconstructed initial data.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::grid::{Field, GridSpec};
use crate::neural::{self, Batch, InputScaling, MLPParams, TrainConfig, TrainError, TrainOutcome};
use crate::solver::{solve, ProblemConfig, ProblemKind, SolveError};

#[derive(Debug, Error)]
pub enum InverseError {
    #[error("invalid inverse-problem parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("forward solve for omega = {omega} failed: {source}")]
    Solve {
        omega: f64,
        #[source]
        source: SolveError,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Neural(#[from] neural::NeuralError),
    #[error("fields are on different grids")]
    GridMismatch,
}

fn invalid(field: &'static str, reason: impl Into<String>) -> InverseError {
    InverseError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Frequencies `ω` centered on `nπ/L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(default = "default_mode")]
    pub mode: u32,
    #[serde(default = "default_half_length")]
    pub half_length: f64,
    #[serde(default = "default_omega_count")]
    pub omega_count: usize,
    /// Family spans `[nπ/L - half_width, nπ/L + half_width]`.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_mode() -> u32 {
    4
}
fn default_half_length() -> f64 {
    13.0
}
fn default_omega_count() -> usize {
    50
}
fn default_half_width() -> f64 {
    0.5
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec {
            mode: default_mode(),
            half_length: default_half_length(),
            omega_count: default_omega_count(),
            half_width: default_half_width(),
        }
    }
}

impl FamilySpec {
    pub fn target_omega(&self) -> f64 {
        self.mode as f64 * PI / self.half_length
    }

    pub fn omega_lo(&self) -> f64 {
        self.target_omega() - self.half_width
    }

    pub fn omega_hi(&self) -> f64 {
        self.target_omega() + self.half_width
    }

    /// Index of the target inside [`omegas`](Self::omegas).
    pub fn target_index(&self) -> usize {
        self.omega_count / 2
    }

    /// Uniformly spaced frequencies that contain the target exactly.
    ///
    /// Odd counts span `[lo, hi]` inclusive. Even counts cannot place the
    /// center on an inclusive lattice, so they use spacing `2w/count`
    /// starting at `lo`, and the top of the lattice stops one step short of `hi`.
    pub fn omegas(&self) -> Vec<f64> {
        let c = self.target_omega();
        let k = self.target_index();
        let step = if self.omega_count % 2 == 1 {
            2.0 * self.half_width / (self.omega_count - 1).max(1) as f64
        } else {
            2.0 * self.half_width / self.omega_count as f64
        };
        (0..self.omega_count)
            .map(|j| if j == k { c } else { c + (j as f64 - k as f64) * step })
            .collect()
    }

    pub fn validate(&self) -> Result<(), InverseError> {
        if self.omega_count == 0 {
            return Err(invalid("omega_count", "must be positive"));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(invalid("half_width", "must be finite and positive"));
        }
        if !(self.half_length > 0.0 && self.half_length.is_finite()) {
            return Err(invalid("half_length", "must be finite and positive"));
        }
        Ok(())
    }
}

/// `u0 = cos(ωx)`, `v0 = -ω sin(ωx)` on the grid.
pub fn family_initials(omega: f64, grid: &GridSpec) -> (Field, Field) {
    (
        grid.sample(|x| (omega * x).cos()),
        grid.sample(|x| -omega * (omega * x).sin()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRow {
    pub x: f64,
    pub omega: f64,
    pub t: f64,
    pub eta: f64,
    pub eta_t: f64,
    pub noisy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Ordered by ω index, then time index, then space index.
    pub rows: Vec<SampleRow>,
    pub time_indices: Vec<usize>,
    pub space_indices: Vec<usize>,
    pub target_omega: f64,
    pub sigma: f64,
}

impl Dataset {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,omega,t,eta,eta_t,noisy")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{},{}", r.x, r.omega, r.t, r.eta, r.eta_t, r.noisy as u8)?;
        }
        Ok(())
    }

    /// Network batch with inputs mapped through `scaling`.
    pub fn to_batch(&self, scaling: &InputScaling) -> Result<Batch, InverseError> {
        let raw: Vec<f64> = self.rows.iter().flat_map(|r| [r.x, r.omega, r.t]).collect();
        let targets: Vec<f64> = self.rows.iter().flat_map(|r| [r.eta, r.eta_t]).collect();
        Ok(Batch::new(scaling.apply(&raw), targets, 3, 2)?)
    }
}

/// Time levels used for training: always `0` and `1`, then `n_t - 2`
/// further levels spread uniformly up to the final one.
pub fn select_time_indices(levels: usize, n_t: usize) -> Result<Vec<usize>, InverseError> {
    if n_t < 2 {
        return Err(invalid("n_t", format!("must be at least 2, got {n_t}")));
    }
    if levels < n_t || levels < 2 {
        return Err(invalid("n_t", format!("{n_t} time samples requested from {levels} levels")));
    }
    let mut idx = vec![0, 1];
    let extra = n_t - 2;
    for j in 1..=extra {
        idx.push(((j * (levels - 1)) as f64 / extra as f64).round() as usize);
    }
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("n_t", format!("{n_t} distinct time samples do not fit in {levels} levels")));
    }
    Ok(idx)
}

/// `n_x` spatial indices spread uniformly over `0..nx`, both ends included.
pub fn select_space_indices(nx: usize, n_x: usize) -> Result<Vec<usize>, InverseError> {
    if n_x < 2 || n_x > nx {
        return Err(invalid("n_x", format!("must lie in [2, {nx}], got {n_x}")));
    }
    Ok((0..n_x)
        .map(|j| ((j * (nx - 1)) as f64 / (n_x - 1) as f64).round() as usize)
        .collect())
}

/// Solves the deviation problem for every family member and samples the
/// trajectories. Rows at the target frequency get `N(0, σ²)` noise on both
/// targets, drawn from a generator seeded by `seed`.
pub fn generate_dataset(
    family: &FamilySpec,
    template: &ProblemConfig,
    n_t: usize,
    n_x: usize,
    sigma: f64,
    seed: u64,
) -> Result<Dataset, InverseError> {
    family.validate()?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
    }
    let grid = template.grid;
    if (grid.half_length - family.half_length).abs() > 1e-12 * family.half_length {
        return Err(invalid("half_length", "family and grid disagree on L"));
    }
    let time_indices = select_time_indices(grid.nt, n_t)?;
    let space_indices = select_space_indices(grid.nx, n_x)?;
    let omegas = family.omegas();
    let target = family.target_omega();
    let xs = grid.xs();

    let blocks: Vec<Vec<SampleRow>> = omegas
        .par_iter()
        .map(|&omega| {
            let mut cfg = template.clone();
            cfg.kind = ProblemKind::Perturbation;
            let (u0, v0) = family_initials(omega, &grid);
            cfg.u0 = u0;
            cfg.v0 = v0;
            let h = solve(&cfg).map_err(|source| InverseError::Solve { omega, source })?;
            let mut rows = Vec::with_capacity(time_indices.len() * space_indices.len());
            for &n in &time_indices {
                let eta = h.row(n);
                let eta_t = h.time_derivative(n);
                for &i in &space_indices {
                    rows.push(SampleRow {
                        x: xs[i],
                        omega,
                        t: grid.t(n),
                        eta: eta[i],
                        eta_t: eta_t[i],
                        noisy: false,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_, InverseError>>()?;
    let mut rows: Vec<SampleRow> = blocks.into_iter().flatten().collect();

    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for r in rows.iter_mut().filter(|r| r.omega == target) {
            r.eta += normal.sample(&mut rng);
            r.eta_t += normal.sample(&mut rng);
            r.noisy = true;
        }
    }
    Ok(Dataset {
        rows,
        time_indices,
        space_indices,
        target_omega: target,
        sigma,
    })
}

/// Maps `x ∈ [-L, L]`, `ω ∈ [lo, hi]`, `t ∈ [0, T]` onto `[-1, 1]`.
pub fn input_scaling(family: &FamilySpec, grid: &GridSpec) -> InputScaling {
    InputScaling {
        lo: vec![-grid.half_length, family.omega_lo(), 0.0],
        hi: vec![grid.half_length, family.omega_hi(), grid.final_time],
    }
}

/// Network prediction at `t = 0` and the target frequency over the whole grid.
pub fn reconstruct_initial(p: &MLPParams, scaling: &InputScaling, family: &FamilySpec, grid: &GridSpec) -> (Field, Field) {
    let target = family.target_omega();
    let raw: Vec<f64> = grid.xs().into_iter().flat_map(|x| [x, target, 0.0]).collect();
    let out = neural::forward_batch(p, &scaling.apply(&raw));
    let u0: Vec<f64> = out.chunks_exact(2).map(|o| o[0]).collect();
    let v0: Vec<f64> = out.chunks_exact(2).map(|o| o[1]).collect();
    (Field { values: u0, grid: *grid }, Field { values: v0, grid: *grid })
}

fn mse(a: &Field, b: &Field) -> Result<f64, InverseError> {
    if !a.grid.same_space(&b.grid) || a.len() != b.len() {
        return Err(InverseError::GridMismatch);
    }
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// Mean squared pointwise errors `(MSE_u0, MSE_v0)`.
pub fn evaluate(u0_nn: &Field, v0_nn: &Field, u0: &Field, v0: &Field) -> Result<(f64, f64), InverseError> {
    Ok((mse(u0_nn, u0)?, mse(v0_nn, v0)?))
}

/// One row of the downsampling table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseReport {
    pub n_t: usize,
    pub n_x: usize,
    pub epochs: usize,
    pub loss_eta: f64,
    pub loss_eta_t: f64,
    pub mse_u0: f64,
    pub mse_v0: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl InverseReport {
    pub const CSV_HEADER: &'static str = "N_t,N_x,epochs,loss_eta,loss_eta_t,mse_u0,mse_v0,noise_sigma,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n_t,
            self.n_x,
            self.epochs,
            self.loss_eta,
            self.loss_eta_t,
            self.mse_u0,
            self.mse_v0,
            self.noise_sigma,
            self.seed
        )
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        writeln!(out, "{}", self.csv_row())
    }

    pub fn total_loss(&self) -> f64 {
        self.loss_eta + self.loss_eta_t
    }
}

/// Inputs of one end-to-end inversion.
#[derive(Debug, Clone)]
pub struct InverseSetup {
    pub family: FamilySpec,
    pub template: ProblemConfig,
    pub n_t: usize,
    pub n_x: usize,
    pub sigma: f64,
    pub train: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct InverseRun {
    pub report: InverseReport,
    pub dataset: Dataset,
    pub outcome: TrainOutcome,
    pub scaling: InputScaling,
    pub u0_nn: Field,
    pub v0_nn: Field,
    pub u0_true: Field,
    pub v0_true: Field,
}

impl InverseRun {
    /// `x,u0_true,u0_nn,v0_true,v0_nn` over the grid.
    pub fn write_overlay_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,u0_true,u0_nn,v0_true,v0_nn")?;
        let xs = self.u0_true.grid.xs();
        for (i, x) in xs.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                x, self.u0_true.values[i], self.u0_nn.values[i], self.v0_true.values[i], self.v0_nn.values[i]
            )?;
        }
        Ok(())
    }
}

/// Dataset generation, training and reconstruction; the dataset noise and
/// the network initialization both derive from `setup.train.seed`.
pub fn run_inverse(setup: &InverseSetup) -> Result<InverseRun, InverseError> {
    let seed = setup.train.seed;
    let grid = setup.template.grid;
    let dataset = generate_dataset(&setup.family, &setup.template, setup.n_t, setup.n_x, setup.sigma, seed)?;
    let scaling = input_scaling(&setup.family, &grid);
    let batch = dataset.to_batch(&scaling)?;
    let outcome = neural::train(&batch, &setup.train)?;
    let (u0_nn, v0_nn) = reconstruct_initial(&outcome.params, &scaling, &setup.family, &grid);
    let (u0_true, v0_true) = family_initials(setup.family.target_omega(), &grid);
    let (mse_u0, mse_v0) = evaluate(&u0_nn, &v0_nn, &u0_true, &v0_true)?;
    let report = InverseReport {
        n_t: setup.n_t,
        n_x: setup.n_x,
        epochs: outcome.epochs,
        loss_eta: outcome.final_loss.components[0],
        loss_eta_t: outcome.final_loss.components[1],
        mse_u0,
        mse_v0,
        noise_sigma: setup.sigma,
        seed,
    };
    Ok(InverseRun {
        report,
        dataset,
        outcome,
        scaling,
        u0_nn,
        v0_nn,
        u0_true,
        v0_true,
    })
}
