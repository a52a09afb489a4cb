use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ForcingSpec, ProblemKind};
use crate::grid::{BoundaryKind, Field, GridSpec};
use crate::soliton::SolitonParams;

/// Leading bytes of the binary history format.
pub const HISTORY_MAGIC: &[u8; 4] = b"SGH1";

/// Physical parameters a history was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub epsilon: f64,
    pub soliton: SolitonParams,
    pub forcing: ForcingSpec,
    /// Factor multiplying `forcing` in the equation this history solves.
    pub forcing_scale: f64,
    pub bc: BoundaryKind,
    pub lambda: f64,
}

impl RunMeta {
    /// The forcing actually applied, at `(x, t)`.
    pub fn applied_forcing(&self, x: f64, t: f64) -> f64 {
        self.forcing_scale * self.forcing.eval(x, t)
    }
}

/// Row-major `rows × nx` trajectory, one row per time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHistory {
    pub grid: GridSpec,
    pub kind: ProblemKind,
    pub meta: RunMeta,
    pub data: Vec<f64>,
    rows: usize,
}

#[derive(Debug, Error)]
pub enum HistoryIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a history file (bad magic)")]
    BadMagic,
    #[error("history header declares {nt}x{nx} but payload holds {got} values")]
    Truncated { nt: u64, nx: u64, got: usize },
}

impl StateHistory {
    pub(crate) fn from_parts(grid: GridSpec, rows: usize, kind: ProblemKind, data: Vec<f64>, meta: RunMeta) -> Self {
        debug_assert_eq!(data.len(), rows * grid.nx);
        StateHistory {
            grid,
            kind,
            meta,
            data,
            rows,
        }
    }

    /// Number of stored time levels; equals `grid.nt` for a complete run.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let nx = self.grid.nx;
        &self.data[n * nx..(n + 1) * nx]
    }

    pub fn field(&self, n: usize) -> Field {
        Field {
            values: self.row(n).to_vec(),
            grid: self.grid,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.rows).map(|n| self.grid.t(n)).collect()
    }

    /// Largest pointwise gap to another history on the same grid.
    pub fn sup_distance(&self, other: &StateHistory) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "histories differ in shape");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Time derivative at level `n`: centered inside, second-order one-sided
    /// at the first and last stored levels.
    pub fn time_derivative(&self, n: usize) -> Vec<f64> {
        let dt = self.grid.dt;
        let rows = self.rows;
        assert!(rows >= 2, "time derivative needs at least two levels");
        if rows == 2 {
            return self.row(1).iter().zip(self.row(0)).map(|(b, a)| (b - a) / dt).collect();
        }
        let (a, b, c, w) = if n == 0 {
            (0, 1, 2, [-3.0, 4.0, -1.0])
        } else if n + 1 == rows {
            (n - 2, n - 1, n, [1.0, -4.0, 3.0])
        } else {
            (n - 1, n, n + 1, [-1.0, 0.0, 1.0])
        };
        let (ra, rb, rc) = (self.row(a), self.row(b), self.row(c));
        (0..self.grid.nx)
            .map(|i| (w[0] * ra[i] + w[1] * rb[i] + w[2] * rc[i]) / (2.0 * dt))
            .collect()
    }

    /// CSV with header `t,<x_0>,...,<x_{nx-1}>` and one row per time level.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "t")?;
        for x in self.grid.xs() {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
        for n in 0..self.rows {
            write!(out, "{}", self.grid.t(n))?;
            for v in self.row(n) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Binary layout: `b"SGH1"`, 4 zero bytes, `nt: u64`, `nx: u64`, then
    /// `nt * nx` f64 values row-major; everything little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(HISTORY_MAGIC)?;
        out.write_all(&[0u8; 4])?;
        out.write_all(&(self.rows as u64).to_le_bytes())?;
        out.write_all(&(self.grid.nx as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)
    }
}

/// Reads a binary history back as `(nt, nx, values)`.
pub fn read_history_binary<R: Read>(mut input: R) -> Result<(usize, usize, Vec<f64>), HistoryIoError> {
    let mut header = [0u8; 24];
    input.read_exact(&mut header)?;
    if &header[..4] != HISTORY_MAGIC {
        return Err(HistoryIoError::BadMagic);
    }
    let nt = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let nx = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    let expected = nt.checked_mul(nx).and_then(|c| c.checked_mul(8));
    if expected != Some(payload.len() as u64) {
        return Err(HistoryIoError::Truncated {
            nt,
            nx,
            got: payload.len() / 8,
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((nt as usize, nx as usize, values))
}
