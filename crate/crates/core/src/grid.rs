//! Uniform space-time grids, finite-difference operators and discrete norms.
//!
//! Space is `[-L, L]` sampled at `Nx` equispaced points; time steps are
//! derived from the Courant number, `dt = cfl * dx`. All integrals use the
//! composite trapezoid rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("field length {got} does not match grid point count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field contains a non-finite value at index {index}")]
    NonFinite { index: usize },
}

/// Boundary condition at `x = ±L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    /// Homogeneous Dirichlet, boundary values pinned.
    Dirichlet,
    /// Homogeneous Neumann via mirror ghost points.
    Neumann,
}

/// Uniform discretization of `[-L, L] x [0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_length: f64,
    pub nx: usize,
    pub dx: f64,
    pub final_time: f64,
    pub cfl: f64,
    pub dt: f64,
    pub nt: usize,
}

fn check(field: &'static str, ok: bool, reason: impl Into<String>) -> Result<(), GridError> {
    if ok {
        Ok(())
    } else {
        Err(GridError::InvalidParameter {
            field,
            reason: reason.into(),
        })
    }
}

/// Builds a grid from the half length, point count, horizon and Courant number.
pub fn make_grid(half_length: f64, nx: usize, final_time: f64, cfl: f64) -> Result<GridSpec, GridError> {
    check(
        "L",
        half_length.is_finite() && half_length > 0.0,
        format!("must be finite and positive, got {half_length}"),
    )?;
    check("nx", nx >= 3, format!("must be at least 3, got {nx}"))?;
    check(
        "T",
        final_time.is_finite() && final_time > 0.0,
        format!("must be finite and positive, got {final_time}"),
    )?;
    check(
        "cfl",
        cfl.is_finite() && cfl > 0.0 && cfl < 1.0,
        format!("must lie in (0, 1), got {cfl}"),
    )?;
    let dx = 2.0 * half_length / (nx - 1) as f64;
    let dt = cfl * dx;
    let steps = (final_time / dt).ceil();
    check(
        "cfl",
        steps < 1e8,
        format!("implies {steps} time steps, which is unreasonably many"),
    )?;
    // ceil guarantees (nt-1)*dt >= T; guard the case where T/dt rounds up
    // by one ulp past an exact integer.
    let mut steps = steps as usize;
    if steps > 1 && ((steps - 1) as f64) * dt >= final_time {
        steps -= 1;
    }
    Ok(GridSpec {
        half_length,
        nx,
        dx,
        final_time,
        cfl,
        dt,
        nt: steps + 1,
    })
}

impl GridSpec {
    /// Position of spatial index `i`.
    pub fn x(&self, i: usize) -> f64 {
        // exact at both ends and, for odd nx, at the center
        let m = (self.nx - 1) as f64;
        self.half_length * ((2.0 * i as f64 - m) / m)
    }

    /// Time of step index `n`.
    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nt).map(|n| self.t(n)).collect()
    }

    /// Index of the time level nearest to `t`, clamped to the run.
    pub fn nearest_step(&self, t: f64) -> usize {
        let n = (t / self.dt).round();
        if n <= 0.0 {
            0
        } else {
            (n as usize).min(self.nt - 1)
        }
    }

    /// True when both grids describe the same spatial sampling.
    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.nx == other.nx && self.half_length == other.half_length
    }

    /// Evaluates `f` at every grid point.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            values: (0..self.nx).map(|i| f(self.x(i))).collect(),
            grid: *self,
        }
    }
}

/// Spatial samples at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub grid: GridSpec,
}

impl Field {
    pub fn new(values: Vec<f64>, grid: GridSpec) -> Result<Self, GridError> {
        if values.len() != grid.nx {
            return Err(GridError::LengthMismatch {
                expected: grid.nx,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Field { values, grid })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Field {
            values: vec![0.0; grid.nx],
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `self + scale * other`, pointwise.
    pub fn axpy(&self, scale: f64, other: &Field) -> Result<Field, GridError> {
        if !self.grid.same_space(&other.grid) {
            return Err(GridError::GridMismatch);
        }
        Ok(Field {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + scale * b)
                .collect(),
            grid: self.grid,
        })
    }
}

/// Second difference of `f` written into `out`, with boundary handling per `bc`.
///
/// Dirichlet boundary rows are zero; Neumann uses mirror ghosts `f[-1] = f[1]`
/// and `f[nx] = f[nx-2]`.
pub fn diff2_into(f: &[f64], dx: f64, bc: BoundaryKind, out: &mut [f64]) {
    let n = f.len();
    debug_assert!(n >= 3 && out.len() == n);
    let inv = 1.0 / (dx * dx);
    for i in 1..n - 1 {
        out[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) * inv;
    }
    match bc {
        BoundaryKind::Dirichlet => {
            out[0] = 0.0;
            out[n - 1] = 0.0;
        }
        BoundaryKind::Neumann => {
            out[0] = 2.0 * (f[1] - f[0]) * inv;
            out[n - 1] = 2.0 * (f[n - 2] - f[n - 1]) * inv;
        }
    }
}

pub fn diff2_x(f: &Field, bc: BoundaryKind) -> Field {
    let mut out = vec![0.0; f.len()];
    diff2_into(&f.values, f.grid.dx, bc, &mut out);
    Field {
        values: out,
        grid: f.grid,
    }
}

/// Trapezoid quadrature of a slice sampled with spacing `dx`.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => 0.0,
        n => {
            let interior: f64 = values[1..n - 1].iter().sum();
            dx * (0.5 * values[0] + interior + 0.5 * values[n - 1])
        }
    }
}

/// Trapezoid inner product of two sampled functions.
pub fn inner_slices(f: &[f64], g: &[f64], dx: f64) -> f64 {
    let n = f.len();
    debug_assert_eq!(n, g.len());
    if n < 2 {
        return 0.0;
    }
    let interior: f64 = f[1..n - 1].iter().zip(&g[1..n - 1]).map(|(a, b)| a * b).sum();
    dx * (0.5 * f[0] * g[0] + interior + 0.5 * f[n - 1] * g[n - 1])
}

/// L² inner product on `[-L, L]`.
pub fn l2_inner(f: &Field, g: &Field) -> Result<f64, GridError> {
    if !f.grid.same_space(&g.grid) || f.len() != g.len() {
        return Err(GridError::GridMismatch);
    }
    Ok(inner_slices(&f.values, &g.values, f.grid.dx))
}

/// `|Dx f|^2` with forward differences, integrated by the midpoint rule.
pub fn gradient_norm_sq_slice(f: &[f64], dx: f64) -> f64 {
    f.windows(2)
        .map(|w| {
            let d = (w[1] - w[0]) / dx;
            d * d
        })
        .sum::<f64>()
        * dx
}

/// Squared H¹ norm as a slice operation.
pub fn h1_norm_sq_slice(f: &[f64], dx: f64) -> f64 {
    inner_slices(f, f, dx) + gradient_norm_sq_slice(f, dx)
}

/// Squared H¹ norm: `|f|^2 + |f_x|^2`.
pub fn h1_norm_sq(f: &Field) -> f64 {
    h1_norm_sq_slice(&f.values, f.grid.dx)
}
