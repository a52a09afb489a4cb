//! Explicit leapfrog integration of the forced sine-Gordon equation and of
//! the equations for the deviation `η` from a travelling kink.
//!
//! All three variants share one scheme,
//!
//! ```text
//! w[n+1] = 2 w[n] - w[n-1] + dt² (Dxx w[n] - N(w[n]) + G[n])
//!          + λ dt (Dxx w[n] - Dxx w[n-1])
//! ```
//!
//! and differ only in the zeroth-order term `N` and in how the forcing is
//! scaled. The background kink is evaluated analytically at every level.

mod history;

pub use history::{read_history_binary, HistoryIoError, RunMeta, StateHistory, HISTORY_MAGIC};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::grid::{diff2_into, BoundaryKind, Field, GridError, GridSpec};
use crate::soliton::{kink, kink_dt_field, kink_field, SolitonError, SolitonParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    /// `u_tt - u_xx + sin u = ε g`.
    Full,
    /// `η_tt - η_xx + ε⁻¹(sin(φ + εη) - sin φ) = g`.
    Perturbation,
    /// `η_tt - η_xx + cos φ · η = g`.
    Linearized,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Full => "full",
            ProblemKind::Perturbation => "perturbation",
            ProblemKind::Linearized => "linearized",
        }
    }
}

/// `A cos(nπx/L) + B cos(nπt/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub amplitude_x: f64,
    pub amplitude_t: f64,
    pub mode: u32,
    pub half_length: f64,
    pub final_time: f64,
}

impl ForcingSpec {
    pub fn new(amplitude_x: f64, amplitude_t: f64, mode: u32, grid: &GridSpec) -> Self {
        ForcingSpec {
            amplitude_x,
            amplitude_t,
            mode,
            half_length: grid.half_length,
            final_time: grid.final_time,
        }
    }

    pub fn zero(grid: &GridSpec) -> Self {
        Self::new(0.0, 0.0, 0, grid)
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude_x == 0.0 && self.amplitude_t == 0.0
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        forcing_eval(self, x, t)
    }
}

pub fn forcing_eval(f: &ForcingSpec, x: f64, t: f64) -> f64 {
    let n = f.mode as f64;
    f.amplitude_x * (n * PI * x / f.half_length).cos() + f.amplitude_t * (n * PI * t / f.final_time).cos()
}

/// Zeroth-order term of each variant.
///
/// The perturbation quotient is evaluated as `2 cos(φ + εη/2) sin(εη/2) / ε`,
/// which equals `(sin(φ + εη) - sin φ) / ε` without the cancellation at small ε.
pub fn nonlinear_term(kind: ProblemKind, phi: f64, eta: f64, epsilon: f64) -> f64 {
    match kind {
        ProblemKind::Full => eta.sin(),
        ProblemKind::Perturbation => {
            let half = 0.5 * epsilon * eta;
            2.0 * (phi + half).cos() * half.sin() / epsilon
        }
        ProblemKind::Linearized => phi.cos() * eta,
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid problem parameter `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("scheme is unstable: cfl² + 2λ·dt/dx² = {value:.4} must stay below 1")]
    Unstable { value: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Soliton(#[from] SolitonError),
    #[error("non-finite state at step {step} (t = {time})")]
    BlowUp {
        step: usize,
        time: f64,
        partial: Box<StateHistory>,
    },
}

/// Everything needed to run one integration.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub epsilon: f64,
    pub soliton: SolitonParams,
    pub forcing: ForcingSpec,
    pub bc: BoundaryKind,
    pub lambda: f64,
    pub u0: Field,
    pub v0: Field,
    pub grid: GridSpec,
}

impl ProblemConfig {
    /// Deviation problem with zero initial data and zero forcing.
    pub fn quiet(kind: ProblemKind, grid: GridSpec) -> Self {
        ProblemConfig {
            kind,
            epsilon: 1.0,
            soliton: SolitonParams::at_rest(),
            forcing: ForcingSpec::zero(&grid),
            bc: BoundaryKind::Neumann,
            lambda: 0.0,
            u0: Field::zeros(grid),
            v0: Field::zeros(grid),
            grid,
        }
    }

    /// Full-equation data `φ(·,0) + ε η0`, `φ_t(·,0) + ε η1` matching a
    /// deviation problem with initial data `(eta0, eta1)`.
    pub fn full_from_deviation(
        epsilon: f64,
        soliton: SolitonParams,
        eta0: &Field,
        eta1: &Field,
    ) -> Result<(Field, Field), GridError> {
        let grid = eta0.grid;
        let u0 = kink_field(&grid, 0.0, &soliton).axpy(epsilon, eta0)?;
        let v0 = kink_dt_field(&grid, 0.0, &soliton).axpy(epsilon, eta1)?;
        Ok((u0, v0))
    }

    /// Multiplier applied to `forcing` in the update.
    pub fn forcing_scale(&self) -> f64 {
        match self.kind {
            ProblemKind::Full => self.epsilon,
            ProblemKind::Perturbation | ProblemKind::Linearized => 1.0,
        }
    }

    /// Amplification bound of the scheme for a Fourier mode, `< 1` is stable.
    pub fn stability_number(&self) -> f64 {
        let g = &self.grid;
        g.cfl * g.cfl + 2.0 * self.lambda * g.dt / (g.dx * g.dx)
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |field, reason: String| Err(SolveError::InvalidConfig { field, reason });
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad("epsilon", format!("must lie in (0, 1], got {}", self.epsilon));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.forcing.amplitude_x.is_finite() && self.forcing.amplitude_t.is_finite()) {
            return bad("forcing", "amplitudes must be finite".into());
        }
        if !(self.grid.cfl > 0.0 && self.grid.cfl < 1.0) {
            return bad("cfl", format!("must lie in (0, 1), got {}", self.grid.cfl));
        }
        self.soliton.validate()?;
        for (name, f) in [("u0", &self.u0), ("v0", &self.v0)] {
            if !f.grid.same_space(&self.grid) || f.len() != self.grid.nx {
                return bad(name, "initial data does not match the grid".into());
            }
            if f.values.iter().any(|v| !v.is_finite()) {
                return bad(name, "initial data must be finite".into());
            }
        }
        let s = self.stability_number();
        if s >= 1.0 {
            return Err(SolveError::Unstable { value: s });
        }
        Ok(())
    }

    fn meta(&self) -> RunMeta {
        RunMeta {
            epsilon: self.epsilon,
            soliton: self.soliton,
            forcing: self.forcing,
            forcing_scale: self.forcing_scale(),
            bc: self.bc,
            lambda: self.lambda,
        }
    }
}

/// Integrates `cfg` over the whole grid horizon.
pub fn solve(cfg: &ProblemConfig) -> Result<StateHistory, SolveError> {
    cfg.validate()?;
    let grid = cfg.grid;
    let (nx, nt, dt, dx) = (grid.nx, grid.nt, grid.dt, grid.dx);
    let xs = grid.xs();
    let scale = cfg.forcing_scale();
    let dt2 = dt * dt;
    let lambda = cfg.lambda;

    let mut data = Vec::with_capacity(nt * nx);
    data.extend_from_slice(&cfg.u0.values);

    let mut phi = vec![0.0; nx];
    let fill_phi = |t: f64, phi: &mut [f64]| {
        if cfg.kind != ProblemKind::Full {
            for (p, &x) in phi.iter_mut().zip(&xs) {
                *p = kink(x, t, &cfg.soliton);
            }
        }
    };
    // acceleration without the damping term: Dxx w - N + G
    let accel = |w: &[f64], lap: &[f64], phi: &[f64], t: f64, i: usize| {
        lap[i] - nonlinear_term(cfg.kind, phi[i], w[i], cfg.epsilon) + scale * cfg.forcing.eval(xs[i], t)
    };

    let mut prev = cfg.u0.values.clone();
    let mut lap_prev = vec![0.0; nx];
    diff2_into(&prev, dx, cfg.bc, &mut lap_prev);
    fill_phi(0.0, &mut phi);

    let mut lap_v = vec![0.0; nx];
    if lambda > 0.0 {
        diff2_into(&cfg.v0.values, dx, cfg.bc, &mut lap_v);
    }
    let mut cur: Vec<f64> = (0..nx)
        .map(|i| {
            let a = accel(&prev, &lap_prev, &phi, 0.0, i) + lambda * lap_v[i];
            prev[i] + dt * cfg.v0.values[i] + 0.5 * dt2 * a
        })
        .collect();
    if cfg.bc == BoundaryKind::Dirichlet {
        cur[0] = prev[0];
        cur[nx - 1] = prev[nx - 1];
    }

    let blow_up = |step: usize, data: Vec<f64>| {
        let rows = data.len() / nx;
        SolveError::BlowUp {
            step,
            time: grid.t(step),
            partial: Box::new(StateHistory::from_parts(grid, rows, cfg.kind, data, cfg.meta())),
        }
    };
    if nt < 2 {
        return Ok(StateHistory::from_parts(grid, 1, cfg.kind, data, cfg.meta()));
    }
    if cur.iter().any(|v| !v.is_finite()) {
        return Err(blow_up(1, data));
    }
    data.extend_from_slice(&cur);

    let mut lap = vec![0.0; nx];
    let mut next = vec![0.0; nx];
    for n in 1..nt - 1 {
        let t = grid.t(n);
        diff2_into(&cur, dx, cfg.bc, &mut lap);
        fill_phi(t, &mut phi);
        for i in 0..nx {
            let a = accel(&cur, &lap, &phi, t, i);
            next[i] = 2.0 * cur[i] - prev[i] + dt2 * a + lambda * dt * (lap[i] - lap_prev[i]);
        }
        if cfg.bc == BoundaryKind::Dirichlet {
            next[0] = cfg.u0.values[0];
            next[nx - 1] = cfg.u0.values[nx - 1];
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(blow_up(n + 1, data));
        }
        data.extend_from_slice(&next);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        std::mem::swap(&mut lap_prev, &mut lap);
    }
    Ok(StateHistory::from_parts(grid, nt, cfg.kind, data, cfg.meta()))
}

/// `u = φ + ε η` sampled at every time level of `eta`.
pub fn reconstruct(eta: &StateHistory, soliton: &SolitonParams, epsilon: f64) -> StateHistory {
    let grid = eta.grid;
    let xs = grid.xs();
    let mut data = Vec::with_capacity(eta.data.len());
    for n in 0..eta.rows() {
        let t = grid.t(n);
        data.extend(eta.row(n).iter().zip(&xs).map(|(e, &x)| kink(x, t, soliton) + epsilon * e));
    }
    let mut meta = eta.meta;
    meta.soliton = *soliton;
    meta.forcing_scale = epsilon * eta.meta.forcing_scale;
    StateHistory::from_parts(grid, eta.rows(), ProblemKind::Full, data, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn standard_forcing(grid: &GridSpec) -> ForcingSpec {
        ForcingSpec::new(1.0, 2.0, 4, grid)
    }

    #[test]
    fn forcing_examples() {
        let g = make_grid(13.0, 201, 20.0, 0.2).unwrap();
        let f = standard_forcing(&g);
        assert!((forcing_eval(&f, 0.0, 0.0) - 3.0).abs() < 1e-15);
        assert!((forcing_eval(&f, 13.0, 0.0) - 3.0).abs() < 1e-14);
        assert!((forcing_eval(&f, 13.0 / 8.0, 0.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn nonlinear_term_examples() {
        for y in [-2.0, -0.1, 0.0, 0.4, 3.0] {
            let got = nonlinear_term(ProblemKind::Perturbation, 0.0, y, 1.0);
            assert!((got - f64::sin(y)).abs() < 1e-15);
        }
        let small = nonlinear_term(ProblemKind::Perturbation, 0.7, 0.3, 1e-6);
        let lin = nonlinear_term(ProblemKind::Linearized, 0.7, 0.3, 1e-6);
        assert!((small - lin).abs() < 1e-6);
        assert!((small - f64::cos(0.7) * 0.3).abs() < 1e-6);
        assert!(nonlinear_term(ProblemKind::Linearized, PI / 2.0, 5.0, 1.0).abs() < 1e-15);
        assert_eq!(nonlinear_term(ProblemKind::Full, 9.0, 0.5, 0.1), f64::sin(0.5));
    }

    #[test]
    fn perturbation_quotient_matches_direct_form() {
        for &(phi, eta, eps) in &[(0.3, 1.2, 0.05), (2.0, -0.7, 0.5), (5.5, 3.0, 1.0)] {
            let direct = (f64::sin(phi + eps * eta) - f64::sin(phi)) / eps;
            let got = nonlinear_term(ProblemKind::Perturbation, phi, eta, eps);
            assert!((got - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = make_grid(13.0, 101, 20.0, 0.2).unwrap();
        let mut cfg = ProblemConfig::quiet(ProblemKind::Perturbation, g);
        cfg.soliton = SolitonParams::new(0.5, 0.0).unwrap();
        cfg.epsilon = 0.05;
        let h = solve(&cfg).unwrap();
        assert_eq!(h.rows(), g.nt);
        assert!(h.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirichlet_pins_boundary() {
        let g = make_grid(13.0, 101, 5.0, 0.2).unwrap();
        let mut cfg = ProblemConfig::quiet(ProblemKind::Linearized, g);
        cfg.bc = BoundaryKind::Dirichlet;
        cfg.forcing = standard_forcing(&g);
        let h = solve(&cfg).unwrap();
        for n in 0..h.rows() {
            assert_eq!(h.row(n)[0], 0.0);
            assert_eq!(h.row(n)[g.nx - 1], 0.0);
        }
        assert!(h.row(h.rows() - 1)[50].abs() > 0.1);
    }

    #[test]
    fn rejects_bad_config() {
        let g = make_grid(13.0, 101, 5.0, 0.2).unwrap();
        let mut cfg = ProblemConfig::quiet(ProblemKind::Perturbation, g);
        cfg.epsilon = 0.0;
        assert!(matches!(solve(&cfg), Err(SolveError::InvalidConfig { field: "epsilon", .. })));
        cfg.epsilon = 1.5;
        assert!(matches!(solve(&cfg), Err(SolveError::InvalidConfig { field: "epsilon", .. })));
        cfg.epsilon = 0.5;
        cfg.lambda = -1.0;
        assert!(matches!(solve(&cfg), Err(SolveError::InvalidConfig { field: "lambda", .. })));
        cfg.lambda = 10.0;
        assert!(matches!(solve(&cfg), Err(SolveError::Unstable { .. })));
        cfg.lambda = 0.0;
        cfg.grid.cfl = 1.5;
        assert!(matches!(solve(&cfg), Err(SolveError::InvalidConfig { field: "cfl", .. })));
        cfg.grid = g;
        cfg.u0 = Field::zeros(make_grid(13.0, 51, 5.0, 0.2).unwrap());
        assert!(matches!(solve(&cfg), Err(SolveError::InvalidConfig { field: "u0", .. })));
    }

    #[test]
    fn blow_up_reports_step_and_partial_history() {
        // huge forcing in the full equation overflows within a few steps
        let g = make_grid(1.0, 11, 50.0, 0.5).unwrap();
        let mut cfg = ProblemConfig::quiet(ProblemKind::Linearized, g);
        cfg.soliton = SolitonParams::at_rest();
        cfg.forcing = ForcingSpec::new(0.0, 1e306, 0, &g);
        match solve(&cfg) {
            Err(SolveError::BlowUp { step, partial, .. }) => {
                assert!(step >= 1);
                assert_eq!(partial.rows(), step);
                assert!(partial.data.iter().all(|v| v.is_finite()));
            }
            other => panic!("expected blow-up, got {:?}", other.map(|h| h.rows())),
        }
    }

    #[test]
    fn reconstruct_of_zero_is_kink() {
        let g = make_grid(13.0, 51, 2.0, 0.2).unwrap();
        let cfg = ProblemConfig::quiet(ProblemKind::Perturbation, g);
        let eta = solve(&cfg).unwrap();
        let p = SolitonParams::new(0.5, 1.0).unwrap();
        for eps in [0.0, 0.05] {
            let u = reconstruct(&eta, &p, eps);
            for n in [0, 3, u.rows() - 1] {
                assert_eq!(u.row(n), &kink_field(&g, g.t(n), &p).values[..]);
            }
        }
    }

    #[test]
    fn damping_first_step_uses_initial_velocity_curvature() {
        // with pure damping and u0 = 0 the first step sees λ Dxx v0
        let g = make_grid(13.0, 101, 1.0, 0.1).unwrap();
        let w = 4.0 * PI / 13.0;
        let mut cfg = ProblemConfig::quiet(ProblemKind::Linearized, g);
        cfg.soliton = SolitonParams::at_rest();
        cfg.v0 = g.sample(|x| (w * x).cos());
        cfg.lambda = 0.1;
        let h = solve(&cfg).unwrap();
        let i = 50;
        let expected = g.dt * 1.0 + 0.5 * g.dt * g.dt * (-0.1 * w * w * ((w * g.x(i)).cos()));
        assert!((h.row(1)[i] - expected).abs() < 1e-6);
    }
}
