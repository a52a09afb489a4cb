//! Energy functionals and a-priori bounds evaluated on computed trajectories.
//!
//! The energy of a deviation `η` is `E(t) = |η'(t)|² + ‖η(t)‖²_{H¹}`. For the
//! undamped problem it is checked against the Gronwall-type envelope
//! `e^{2t} (E(0) + ∫₀ᵗ |g(s)|² ds)`; for the damped problem against
//! `e^{2T} max(1, 1/λ) (‖u0‖² + |v0|² + ‖g‖²_{L²(0,T;L²)})`. Both constants are
//! sufficient, not sharp; a violation points at a solver or quadrature bug.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{gradient_norm_sq_slice, h1_norm_sq_slice, inner_slices, trapezoid, GridSpec};
use crate::solver::{solve, ProblemConfig, RunMeta, SolveError, StateHistory};
use crate::soliton::{kink_dx, SolitonParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("histories are not comparable: {0}")]
    Mismatch(&'static str),
    #[error("history needs at least two time levels")]
    TooShort,
    #[error("stability bound violated: numerator {numerator} with zero data and forcing gap")]
    Violation { numerator: f64 },
    #[error("convergence fit needs {0}")]
    BadErrors(&'static str),
    #[error("damping coefficient must be positive, got {0}")]
    NonPositiveDamping(f64),
}

/// Relative slack allowed when comparing an energy against its envelope.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub bound: Vec<f64>,
    pub satisfied: Vec<bool>,
}

impl EnergyReport {
    /// Bound holds at every level except the two endpoints.
    pub fn interior_satisfied(&self) -> bool {
        let n = self.satisfied.len();
        n < 3 || self.satisfied[1..n - 1].iter().all(|&s| s)
    }

    pub fn all_satisfied(&self) -> bool {
        self.satisfied.iter().all(|&s| s)
    }

    /// Smallest `bound - energy` over the interior levels.
    pub fn min_margin(&self) -> f64 {
        let n = self.times.len();
        let range = if n < 3 { 0..n } else { 1..n - 1 };
        range.map(|i| self.bound[i] - self.energy[i]).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,E,bound,satisfied")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.times[i], self.energy[i], self.bound[i], self.satisfied[i] as u8
            )?;
        }
        Ok(())
    }
}

/// `|g(t)|²` in L² for each stored level of `h`.
fn forcing_norms_sq(meta: &RunMeta, grid: &GridSpec, rows: usize) -> Vec<f64> {
    let xs = grid.xs();
    let mut buf = vec![0.0; grid.nx];
    (0..rows)
        .map(|n| {
            let t = grid.t(n);
            for (b, &x) in buf.iter_mut().zip(&xs) {
                *b = meta.applied_forcing(x, t);
            }
            inner_slices(&buf, &buf, grid.dx)
        })
        .collect()
}

/// Running trapezoid integral in time.
fn cumulative(samples: &[f64], dt: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(samples.len());
    for (i, &s) in samples.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * dt * (samples[i - 1] + s);
        }
        out.push(acc);
    }
    out
}

/// `|η'|² + ‖η‖²_{H¹}` at every stored level.
pub fn deviation_energy(h: &StateHistory) -> Result<Vec<f64>, DiagError> {
    if h.rows() < 2 {
        return Err(DiagError::TooShort);
    }
    let dx = h.grid.dx;
    Ok((0..h.rows())
        .map(|n| {
            let d = h.time_derivative(n);
            inner_slices(&d, &d, dx) + h1_norm_sq_slice(h.row(n), dx)
        })
        .collect())
}

pub fn energy_series(h: &StateHistory) -> Result<EnergyReport, DiagError> {
    let energy = deviation_energy(h)?;
    let times = h.times();
    let forcing = cumulative(&forcing_norms_sq(&h.meta, &h.grid, h.rows()), h.grid.dt);
    let e0 = energy[0];
    let bound: Vec<f64> = times
        .iter()
        .zip(&forcing)
        .map(|(&t, &g)| (2.0 * t).exp() * (e0 + g))
        .collect();
    let satisfied = energy
        .iter()
        .zip(&bound)
        .map(|(&e, &b)| e <= b * (1.0 + BOUND_SLACK))
        .collect();
    Ok(EnergyReport {
        times,
        energy,
        bound,
        satisfied,
    })
}

/// `|v0b - v0a|² + ‖u0b - u0a‖²_{H¹}`.
pub fn data_gap(u0a: &[f64], v0a: &[f64], u0b: &[f64], v0b: &[f64], dx: f64) -> f64 {
    let du: Vec<f64> = u0b.iter().zip(u0a).map(|(b, a)| b - a).collect();
    let dv: Vec<f64> = v0b.iter().zip(v0a).map(|(b, a)| b - a).collect();
    inner_slices(&dv, &dv, dx) + h1_norm_sq_slice(&du, dx)
}

/// `‖g_b - g_a‖²` in `L²(0,T; L²)` over the levels of `grid`.
pub fn forcing_gap_sq(a: &RunMeta, b: &RunMeta, grid: &GridSpec) -> f64 {
    let xs = grid.xs();
    let per_level: Vec<f64> = (0..grid.nt)
        .map(|n| {
            let t = grid.t(n);
            let d: Vec<f64> = xs.iter().map(|&x| b.applied_forcing(x, t) - a.applied_forcing(x, t)).collect();
            inner_slices(&d, &d, grid.dx)
        })
        .collect();
    trapezoid(&per_level, grid.dt)
}

/// Empirical continuous-dependence constant:
/// `max_t (|z'|² + ‖z‖²_{H¹}) / (data_gap + forcing_gap)` with `z = h2 - h1`.
pub fn stability_gap(h1: &StateHistory, h2: &StateHistory, data_gap: f64, forcing_gap: f64) -> Result<f64, DiagError> {
    if h1.grid != h2.grid {
        return Err(DiagError::Mismatch("different grids"));
    }
    if h1.kind != h2.kind {
        return Err(DiagError::Mismatch("different problem kinds"));
    }
    if h1.rows() != h2.rows() {
        return Err(DiagError::Mismatch("different lengths"));
    }
    let diff: Vec<f64> = h2.data.iter().zip(&h1.data).map(|(b, a)| b - a).collect();
    let mut z = h1.clone();
    z.data = diff;
    let numerator = deviation_energy(&z)?.into_iter().fold(0.0, f64::max);
    let denominator = data_gap + forcing_gap;
    if denominator == 0.0 {
        return if numerator == 0.0 {
            Ok(0.0)
        } else {
            Err(DiagError::Violation { numerator })
        };
    }
    Ok(numerator / denominator)
}

/// Which inputs a continuous-dependence probe moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Probe {
    Data,
    Forcing,
    Both,
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Diag(#[from] DiagError),
}

/// Stability ratio between `base` (solved as `h`) and a copy whose initial
/// data move by `δ cos(πx/L)` and/or whose forcing amplitudes move by `δ`.
pub fn stability_probe(base: &ProblemConfig, h: &StateHistory, delta: f64, probe: Probe) -> Result<f64, ProbeError> {
    let grid = base.grid;
    let mut p = base.clone();
    if probe != Probe::Forcing {
        let bump = grid.sample(|x| (std::f64::consts::PI * x / grid.half_length).cos());
        p.u0 = p.u0.axpy(delta, &bump).map_err(SolveError::from)?;
        p.v0 = p.v0.axpy(delta, &bump).map_err(SolveError::from)?;
    }
    if probe != Probe::Data {
        p.forcing.amplitude_x += delta;
        p.forcing.amplitude_t += delta;
    }
    let h2 = solve(&p)?;
    let dg = data_gap(&base.u0.values, &base.v0.values, &p.u0.values, &p.v0.values, grid.dx);
    let fg = forcing_gap_sq(&h.meta, &h2.meta, &grid);
    Ok(stability_gap(h, &h2, dg, fg)?)
}

/// Largest over smallest of `ratios`; infinite if any is zero.
pub fn spread(ratios: &[f64]) -> f64 {
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Least-squares slope of `log err` against `log h`.
pub fn convergence_order(errors: &[(f64, f64)]) -> Result<f64, DiagError> {
    if errors.len() < 2 {
        return Err(DiagError::BadErrors("at least two refinement levels"));
    }
    if errors.iter().any(|&(h, e)| !(h > 0.0 && e > 0.0)) {
        return Err(DiagError::BadErrors("positive spacings and errors"));
    }
    let pts: Vec<(f64, f64)> = errors.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(DiagError::BadErrors("distinct spacings"));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DampedEnergyReport {
    pub times: Vec<f64>,
    /// `|η'|² + ‖η‖² + ∫₀ᵗ ‖η'‖² ds`.
    pub lhs: Vec<f64>,
    pub dissipated: Vec<f64>,
    pub rhs: f64,
    pub constant: f64,
    pub margin: f64,
    pub satisfied: bool,
}

impl DampedEnergyReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,lhs,dissipated,rhs")?;
        for i in 0..self.times.len() {
            writeln!(out, "{},{},{},{}", self.times[i], self.lhs[i], self.dissipated[i], self.rhs)?;
        }
        Ok(())
    }
}

pub fn damped_energy_check(h: &StateHistory, lambda: f64) -> Result<DampedEnergyReport, DiagError> {
    if !(lambda > 0.0) {
        return Err(DiagError::NonPositiveDamping(lambda));
    }
    if h.rows() < 2 {
        return Err(DiagError::TooShort);
    }
    let dx = h.grid.dx;
    let derivs: Vec<Vec<f64>> = (0..h.rows()).map(|n| h.time_derivative(n)).collect();
    let energy: Vec<f64> = (0..h.rows())
        .map(|n| inner_slices(&derivs[n], &derivs[n], dx) + h1_norm_sq_slice(h.row(n), dx))
        .collect();
    let rate: Vec<f64> = derivs.iter().map(|d| h1_norm_sq_slice(d, dx)).collect();
    let dissipated = cumulative(&rate, h.grid.dt);
    let lhs: Vec<f64> = energy.iter().zip(&dissipated).map(|(e, d)| e + d).collect();

    let g_sq = trapezoid(&forcing_norms_sq(&h.meta, &h.grid, h.rows()), h.grid.dt);
    let data = h1_norm_sq_slice(h.row(0), dx) + inner_slices(&derivs[0], &derivs[0], dx);
    let horizon = h.grid.t(h.rows() - 1);
    let constant = (2.0 * horizon).exp() * f64::max(1.0, 1.0 / lambda);
    let rhs = constant * (data + g_sq);
    let worst = lhs.iter().copied().fold(0.0, f64::max);
    Ok(DampedEnergyReport {
        times: h.times(),
        lhs,
        dissipated,
        rhs,
        constant,
        margin: rhs - worst,
        satisfied: worst <= rhs * (1.0 + BOUND_SLACK),
    })
}

/// Conserved energy of the unforced, undamped full equation,
/// `∫ ½u_t² + ½u_x² + (1 - cos u) dx`, at every stored level.
pub fn sine_gordon_energy(h: &StateHistory) -> Result<Vec<f64>, DiagError> {
    if h.rows() < 2 {
        return Err(DiagError::TooShort);
    }
    let dx = h.grid.dx;
    Ok((0..h.rows())
        .map(|n| {
            let ut = h.time_derivative(n);
            let u = h.row(n);
            let potential: Vec<f64> = u.iter().map(|v| 1.0 - v.cos()).collect();
            0.5 * inner_slices(&ut, &ut, dx) + 0.5 * gradient_norm_sq_slice(u, dx) + trapezoid(&potential, dx)
        })
        .collect())
}

/// L² norms `(|f(η₁) - f(η₂)|, |η₁ - η₂|)` for the deviation nonlinearity
/// `f(η) = ε⁻¹(sin φ - sin(φ + εη))`; the first never exceeds the second.
pub fn perturbation_lipschitz(phi: &[f64], eta1: &[f64], eta2: &[f64], epsilon: f64, dx: f64) -> (f64, f64) {
    let f = |p: f64, e: f64| (p.sin() - (p + epsilon * e).sin()) / epsilon;
    let df: Vec<f64> = phi
        .iter()
        .zip(eta1.iter().zip(eta2))
        .map(|(&p, (&a, &b))| f(p, a) - f(p, b))
        .collect();
    let de: Vec<f64> = eta1.iter().zip(eta2).map(|(a, b)| a - b).collect();
    (inner_slices(&df, &df, dx).sqrt(), inner_slices(&de, &de, dx).sqrt())
}

/// Largest `|φ_x(±L, t)|` over the run: how far the kink is from satisfying
/// the homogeneous Neumann condition on the truncated domain.
pub fn neumann_mismatch(grid: &GridSpec, soliton: &SolitonParams) -> f64 {
    let l = grid.half_length;
    (0..grid.nt)
        .map(|n| {
            let t = grid.t(n);
            f64::max(kink_dx(-l, t, soliton).abs(), kink_dx(l, t, soliton).abs())
        })
        .fold(0.0, f64::max)
}
