//! The travelling kink `4 atan(exp(γ(x - vt - x0)))` and its derivatives.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::grid::{Field, GridSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolitonError {
    #[error("kink velocity must satisfy |v| < 1, got {0}")]
    Superluminal(f64),
}

/// Past this argument `exp` is replaced by the tail asymptotics.
const ASYMPTOTIC_ARG: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonParams {
    /// Velocity, `|v| < 1`.
    pub v: f64,
    /// Center at `t = 0`.
    #[serde(default)]
    pub x0: f64,
}

impl SolitonParams {
    pub fn new(v: f64, x0: f64) -> Result<Self, SolitonError> {
        gamma(v)?;
        Ok(SolitonParams { v, x0 })
    }

    pub fn at_rest() -> Self {
        SolitonParams { v: 0.0, x0: 0.0 }
    }

    pub fn validate(&self) -> Result<(), SolitonError> {
        gamma(self.v).map(|_| ())
    }

    fn lorentz(&self) -> f64 {
        1.0 / (1.0 - self.v * self.v).sqrt()
    }

    fn phase(&self, x: f64, t: f64) -> f64 {
        self.lorentz() * ((x - self.x0) - self.v * t)
    }
}

/// Lorentz factor `1/sqrt(1 - v^2)`.
pub fn gamma(v: f64) -> Result<f64, SolitonError> {
    if !(v.abs() < 1.0) {
        return Err(SolitonError::Superluminal(v));
    }
    Ok(1.0 / (1.0 - v * v).sqrt())
}

fn kink_of_phase(s: f64) -> f64 {
    if s > ASYMPTOTIC_ARG {
        2.0 * PI - 4.0 * (-s).exp()
    } else if s < -ASYMPTOTIC_ARG {
        4.0 * s.exp()
    } else {
        4.0 * s.exp().atan2(1.0)
    }
}

/// Kink profile at `(x, t)`, a value in `(0, 2π)`.
pub fn kink(x: f64, t: f64, p: &SolitonParams) -> f64 {
    kink_of_phase(p.phase(x, t))
}

/// `∂t` of the kink: `-2γv / cosh(γ(x - vt - x0))`.
pub fn kink_dt(x: f64, t: f64, p: &SolitonParams) -> f64 {
    let g = p.lorentz();
    -2.0 * g * p.v / p.phase(x, t).cosh()
}

/// `∂x` of the kink: `2γ / cosh(γ(x - vt - x0))`.
pub fn kink_dx(x: f64, t: f64, p: &SolitonParams) -> f64 {
    let g = p.lorentz();
    2.0 * g / p.phase(x, t).cosh()
}

/// Kink sampled on the grid at time `t`.
pub fn kink_field(grid: &GridSpec, t: f64, p: &SolitonParams) -> Field {
    grid.sample(|x| kink(x, t, p))
}

pub fn kink_dt_field(grid: &GridSpec, t: f64, p: &SolitonParams) -> Field {
    grid.sample(|x| kink_dt(x, t, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(0.0).unwrap(), 1.0);
        assert!((gamma(0.6).unwrap() - 1.25).abs() < 1e-15);
        // 1/sqrt(1 - 0.9801) = 1/sqrt(0.0199)
        assert!((gamma(0.99).unwrap() - 7.088_812_050_083_358).abs() < 1e-12);
        assert!(gamma(1.0).is_err());
        assert!(gamma(-1.2).is_err());
        assert!(gamma(f64::NAN).is_err());
    }

    #[test]
    fn kink_values() {
        let p = SolitonParams::new(0.3, 1.5).unwrap();
        let t = 2.0;
        assert!((kink(p.v * t + p.x0, t, &p) - PI).abs() < 1e-15);
        let rest = SolitonParams::at_rest();
        assert!((kink(1.0, 7.0, &rest) - 4.0 * 1f64.exp().atan()).abs() < 1e-15);
        assert!((kink(1.0, 0.0, &rest) - 4.873_131_620_069_111).abs() < 1e-12);
        assert!(kink(-1e3, 0.0, &rest) >= 0.0 && kink(-1e3, 0.0, &rest) < 1e-300);
        assert_eq!(kink(1e3, 0.0, &rest), 2.0 * PI);
        let fast = SolitonParams::new(0.999_999, 0.0).unwrap();
        assert!(kink(13.0, 0.0, &fast).is_finite());
    }

    #[test]
    fn asymptotic_switch_is_continuous() {
        let rest = SolitonParams::at_rest();
        for s in [ASYMPTOTIC_ARG, -ASYMPTOTIC_ARG] {
            let a = kink(s - 1e-9, 0.0, &rest);
            let b = kink(s + 1e-9, 0.0, &rest);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kink_dt_values() {
        let rest = SolitonParams::at_rest();
        assert_eq!(kink_dt(3.0, 1.0, &rest), 0.0);
        let p = SolitonParams::new(0.5, 0.0).unwrap();
        let g = gamma(0.5).unwrap();
        assert!((kink_dt(0.0, 0.0, &p) + 2.0 * g * 0.5).abs() < 1e-15);
        assert!((kink_dt(0.0, 0.0, &p) + 1.154_700_538_379_251_5).abs() < 1e-12);
        assert!((kink_dt(p.v * 3.0, 3.0, &p) + 2.0 * g * p.v).abs() < 1e-14);
    }

    #[test]
    fn kink_dt_matches_centered_difference() {
        let p = SolitonParams::new(0.5, -1.0).unwrap();
        let h = 1e-4;
        for i in 0..50 {
            let x = -6.0 + 0.25 * i as f64;
            let fd = (kink(x, 0.7 + h, &p) - kink(x, 0.7 - h, &p)) / (2.0 * h);
            assert!((fd - kink_dt(x, 0.7, &p)).abs() < 1e-7);
            let fdx = (kink(x + h, 0.7, &p) - kink(x - h, 0.7, &p)) / (2.0 * h);
            assert!((fdx - kink_dx(x, 0.7, &p)).abs() < 1e-7);
        }
    }

    #[test]
    fn translation_covariance() {
        let p = SolitonParams::new(0.4, 2.25).unwrap();
        let q = SolitonParams::new(0.4, 0.0).unwrap();
        for i in 0..40 {
            let x = -10.0 + 0.5 * i as f64;
            assert_eq!(kink(x, 1.5, &p), kink(x - 2.25, 1.5, &q));
        }
    }

    #[test]
    fn kink_field_samples() {
        let g = make_grid(13.0, 3, 1.0, 0.5).unwrap();
        let f = kink_field(&g, 0.0, &SolitonParams::at_rest());
        assert!((f.values[0] - 4.0 * (-13f64).exp().atan()).abs() < 1e-18);
        assert_eq!(f.values[1], PI);
        assert!((f.values[2] - 2.0 * PI).abs() < 1e-5);

        let g = make_grid(13.0, 201, 1.0, 0.2).unwrap();
        let f = kink_field(&g, 0.0, &SolitonParams::new(0.5, 0.0).unwrap());
        assert_eq!(f.values[100], PI);
        assert!(f.values.windows(2).all(|w| w[0] < w[1]));
    }
}
