//! `sg-lab` subcommands.
//!
//! Every command reads one JSON config, writes its outputs into `--out`,
//! and starts by writing `effective_config.json` (the parsed config with
//! defaults filled in and `--seed` applied).
//!
//! Exit codes: 0 success, 1 config or I/O error, 2 solver blow-up,
//! 3 training diverged.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::{self, ConfigError, DiagnoseConfig, InvertConfig, RenderConfig, RunConfig, SimulateConfig};
use crate::diagnostics;
use crate::inverse::{self, InverseError};
use crate::neural::{write_checkpoint, Checkpoint, StopReason, TrainError};
use crate::render::{colormap, render_colormap};
use crate::solver::{read_history_binary, reconstruct, solve, ProblemKind, SolveError, StateHistory};

#[derive(Debug, Parser)]
#[command(name = "sg-lab", version, about = "Perturbed sine-Gordon kinks: simulation, diagnostics and inversion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the configured problem kinds and write histories, snapshots and colormaps.
    Simulate(CommonArgs),
    /// Generate a dataset, train the network and reconstruct the initial data.
    Invert(CommonArgs),
    /// Check energy bounds and continuous dependence on a configured run.
    Diagnose(CommonArgs),
    /// Turn a binary history into a PPM colormap.
    Render(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    BlowUp(String),
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Failed(_) => 1,
            CliError::BlowUp(_) => 2,
            CliError::Diverged(_) => 3,
        }
    }
}

trait IoContext<T> {
    fn ctx(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn ctx(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Io { context: what(), source })
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).ctx(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .ctx(|| format!("cannot write {}", path.display()))
}

fn prepare<C: RunConfig>(args: &CommonArgs) -> Result<C, CliError> {
    let mut cfg: C = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        *cfg.seed_mut() = seed;
    }
    fs::create_dir_all(&args.out).ctx(|| format!("cannot create {}", args.out.display()))?;
    let text = config::to_pretty_json(&cfg);
    write_file(&args.out.join("effective_config.json"), |w| w.write_all(text.as_bytes()))?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Render(a) => cmd_render(a),
    }
}

/// `2` → `"2"`, `2.5` → `"2.5"`.
fn time_tag(t: f64) -> String {
    format!("{t}")
}

fn write_snapshot(path: &Path, h: &StateHistory, n: usize) -> Result<(), CliError> {
    let xs = h.grid.xs();
    let row = h.row(n);
    write_file(path, |w| {
        writeln!(w, "x,value")?;
        for (x, v) in xs.iter().zip(row) {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    })
}

fn write_history_outputs(out: &Path, name: &str, h: &StateHistory, cfg: &SimulateConfig) -> Result<(), CliError> {
    if cfg.write_csv {
        write_file(&out.join(format!("{name}_history.csv")), |w| h.write_csv(w))?;
    }
    if cfg.write_binary {
        write_file(&out.join(format!("{name}.sgh")), |w| h.write_binary(w))?;
    }
    for &t in &cfg.snapshots {
        let n = h.grid.nearest_step(t).min(h.rows() - 1);
        write_snapshot(&out.join(format!("{name}_t{}.csv", time_tag(t))), h, n)?;
    }
    if cfg.colormap {
        let img = render_colormap(h);
        write_file(&out.join(format!("{name}.ppm")), |w| img.write_ppm(w))?;
    }
    let (lo, hi) = h.min_max();
    log::info!("{name}: {} levels x {} points, range [{lo:.6}, {hi:.6}]", h.rows(), h.grid.nx);
    Ok(())
}

pub fn cmd_simulate(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: SimulateConfig = prepare(args)?;
    for &kind in &cfg.kinds {
        let problem = cfg.problem.problem(kind)?;
        let name = kind.name();
        match solve(&problem) {
            Ok(h) => {
                write_history_outputs(&args.out, name, &h, &cfg)?;
                if kind != ProblemKind::Full && cfg.reconstruct {
                    let u = reconstruct(&h, &problem.soliton, problem.epsilon);
                    write_history_outputs(&args.out, &format!("{name}_u"), &u, &cfg)?;
                }
            }
            Err(SolveError::BlowUp { step, time, partial }) => {
                if cfg.write_csv {
                    write_file(&args.out.join(format!("{name}_partial.csv")), |w| partial.write_csv(w))?;
                }
                return Err(CliError::BlowUp(format!(
                    "{name} solve blew up at step {step} (t = {time}); partial history kept"
                )));
            }
            Err(e) => return Err(ConfigError::from(e).into()),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainingSummary {
    stop: StopReason,
    epochs: usize,
    /// Epoch of the saved parameters.
    best_epoch: usize,
    loss: f64,
    unstable: bool,
}

fn write_loss_history(path: &Path, history: &[f64]) -> Result<(), CliError> {
    write_file(path, |w| {
        writeln!(w, "epoch,loss")?;
        for (i, l) in history.iter().enumerate() {
            writeln!(w, "{i},{l}")?;
        }
        Ok(())
    })
}

pub fn cmd_invert(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: InvertConfig = prepare(args)?;
    let setup = cfg.setup()?;
    let out = &args.out;
    let run = match inverse::run_inverse(&setup) {
        Ok(r) => r,
        Err(InverseError::Solve { omega, source }) => {
            return Err(CliError::BlowUp(format!("forward solve for omega = {omega} failed: {source}")));
        }
        Err(InverseError::Train(TrainError::Diverged { epoch, history })) => {
            write_loss_history(&out.join("loss_history.csv"), &history)?;
            return Err(CliError::Diverged(format!("training diverged at epoch {epoch}")));
        }
        Err(e) => return Err(CliError::Failed(e.to_string())),
    };
    if cfg.write_dataset {
        write_file(&out.join("dataset.csv"), |w| run.dataset.write_csv(w))?;
    }
    write_file(&out.join("report.csv"), |w| run.report.write_csv(w))?;
    write_loss_history(&out.join("loss_history.csv"), &run.outcome.history)?;
    write_file(&out.join("overlay.csv"), |w| run.write_overlay_csv(w))?;
    let ck = Checkpoint {
        params: run.outcome.params.clone(),
        scaling: run.scaling.clone(),
        epoch: run.outcome.best_epoch as u64,
        loss: run.outcome.final_loss.total(),
    };
    write_file(&out.join("model.sgnn"), |w| write_checkpoint(&ck, w))?;
    let summary = TrainingSummary {
        stop: run.outcome.stop,
        epochs: run.outcome.epochs,
        best_epoch: run.outcome.best_epoch,
        loss: run.outcome.final_loss.total(),
        unstable: run.outcome.unstable,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&out.join("training.json"), |w| w.write_all(text.as_bytes()))?;
    if run.outcome.unstable {
        log::warn!("loss envelope rose at some point during training");
    }
    let r = &run.report;
    log::info!(
        "stopped ({:?}) after {} epochs: loss {:.3e} + {:.3e}, MSE u0 {:.3e}, v0 {:.3e}",
        run.outcome.stop,
        r.epochs,
        r.loss_eta,
        r.loss_eta_t,
        r.mse_u0,
        r.mse_v0
    );
    Ok(())
}

#[derive(Serialize)]
struct StabilityRow {
    delta: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct DiagnoseSummary {
    kind: ProblemKind,
    probe: diagnostics::Probe,
    /// Undamped deviation runs: envelope holds at every level.
    energy_bound_holds: Option<bool>,
    energy_min_margin: Option<f64>,
    /// Damped runs.
    damped_bound_holds: Option<bool>,
    damped_constant: Option<f64>,
    /// Full runs: relative drift of the conserved sine-Gordon energy.
    sine_gordon_energy_drift: Option<f64>,
    stability: Vec<StabilityRow>,
    stability_spread: f64,
}

fn solved(p: &crate::solver::ProblemConfig) -> Result<StateHistory, CliError> {
    solve(p).map_err(|e| match e {
        SolveError::BlowUp { step, time, .. } => CliError::BlowUp(format!("solve blew up at step {step} (t = {time})")),
        other => ConfigError::from(other).into(),
    })
}

pub fn cmd_diagnose(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: DiagnoseConfig = prepare(args)?;
    let out = &args.out;
    let base = cfg.problem.problem(cfg.kind)?;
    let h = solved(&base)?;
    let diag = |e: diagnostics::DiagError| CliError::Failed(e.to_string());

    let mut summary = DiagnoseSummary {
        kind: cfg.kind,
        probe: cfg.probe,
        energy_bound_holds: None,
        energy_min_margin: None,
        damped_bound_holds: None,
        damped_constant: None,
        sine_gordon_energy_drift: None,
        stability: Vec::new(),
        stability_spread: 0.0,
    };
    if cfg.kind == ProblemKind::Full {
        let e = diagnostics::sine_gordon_energy(&h).map_err(diag)?;
        let times = h.times();
        write_file(&out.join("sine_gordon_energy.csv"), |w| {
            writeln!(w, "t,H")?;
            for (t, v) in times.iter().zip(&e) {
                writeln!(w, "{t},{v}")?;
            }
            Ok(())
        })?;
        let drift = e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max) / e[0].abs().max(f64::MIN_POSITIVE);
        summary.sine_gordon_energy_drift = Some(drift);
    } else if base.lambda > 0.0 {
        let r = diagnostics::damped_energy_check(&h, base.lambda).map_err(diag)?;
        write_file(&out.join("damped_energy.csv"), |w| r.write_csv(w))?;
        summary.damped_bound_holds = Some(r.satisfied);
        summary.damped_constant = Some(r.constant);
    } else {
        let r = diagnostics::energy_series(&h).map_err(diag)?;
        write_file(&out.join("energy.csv"), |w| r.write_csv(w))?;
        summary.energy_bound_holds = Some(r.all_satisfied());
        summary.energy_min_margin = Some(r.min_margin());
        if !r.all_satisfied() {
            log::warn!("energy envelope violated");
        }
    }

    for &delta in &cfg.deltas {
        let ratio = diagnostics::stability_probe(&base, &h, delta, cfg.probe).map_err(|e| match e {
            diagnostics::ProbeError::Solve(SolveError::BlowUp { step, time, .. }) => {
                CliError::BlowUp(format!("perturbed solve blew up at step {step} (t = {time})"))
            }
            other => CliError::Failed(other.to_string()),
        })?;
        summary.stability.push(StabilityRow { delta, ratio });
    }
    let ratios: Vec<f64> = summary.stability.iter().map(|r| r.ratio).collect();
    summary.stability_spread = if ratios.is_empty() { 0.0 } else { diagnostics::spread(&ratios) };
    write_file(&out.join("stability.csv"), |w| {
        writeln!(w, "delta,ratio")?;
        for r in &summary.stability {
            writeln!(w, "{},{}", r.delta, r.ratio)?;
        }
        Ok(())
    })?;
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&out.join("diagnostics.json"), |w| w.write_all(text.as_bytes()))?;
    Ok(())
}

pub fn cmd_render(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: RenderConfig = prepare(args)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let input = base.join(&cfg.input);
    let file = File::open(&input).ctx(|| format!("cannot open {}", input.display()))?;
    let (nt, nx, values) = read_history_binary(io::BufReader::new(file)).map_err(|e| match e {
        crate::solver::HistoryIoError::Io(source) => CliError::Io {
            context: format!("cannot read {}", input.display()),
            source,
        },
        other => CliError::Failed(format!("{}: {other}", input.display())),
    })?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Failed(format!("{}: history holds non-finite values", input.display())));
    }
    let img = colormap(&values, nt, nx);
    write_file(&args.out.join(&cfg.output), |w| img.write_ppm(w))
}

/// Entry point for the binary: configures logging and the thread pool,
/// runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    if let Some(n) = std::env::var("SG_LAB_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot cap threads at {n}: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
