//! Colormap images of space-time histories as binary PPM (P6).
//!
//! One pixel per grid value: width `nx`, height `nt`, first image row is
//! the first time level. Values are mapped linearly from `[min, max]` onto a
//! five-stop palette close to viridis.

use std::io::{self, Write};

use crate::solver::StateHistory;

/// Palette stops, low to high.
pub const PALETTE: [[u8; 3]; 5] = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
];

/// Color at `s ∈ [0, 1]`; values outside are clamped.
pub fn palette_color(s: f64) -> [u8; 3] {
    let s = if s.is_nan() { 0.5 } else { s.clamp(0.0, 1.0) };
    let pos = s * (PALETTE.len() - 1) as f64;
    let k = (pos.floor() as usize).min(PALETTE.len() - 2);
    let frac = pos - k as f64;
    let (a, b) = (PALETTE[k], PALETTE[k + 1]);
    let mut c = [0u8; 3];
    for j in 0..3 {
        c[j] = (a[j] as f64 + frac * (b[j] as f64 - a[j] as f64)).round() as u8;
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// RGB triples, row-major.
    pub pixels: Vec<u8>,
    /// True when all values were equal and the image is the mid color.
    pub degenerate: bool,
}

impl Image {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let o = 3 * (row * self.width + col);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn write_ppm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }
}

/// Colors a `rows × cols` row-major array.
pub fn colormap(values: &[f64], rows: usize, cols: usize) -> Image {
    assert_eq!(values.len(), rows * cols, "colormap shape mismatch");
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let degenerate = !(hi > lo);
    if degenerate {
        log::warn!("colormap range is degenerate ({lo} .. {hi}); writing a uniform image");
    }
    let mut pixels = Vec::with_capacity(3 * values.len());
    for &v in values {
        let s = if degenerate { 0.5 } else { (v - lo) / (hi - lo) };
        pixels.extend_from_slice(&palette_color(s));
    }
    Image {
        width: cols,
        height: rows,
        pixels,
        degenerate,
    }
}

pub fn render_colormap(h: &StateHistory) -> Image {
    colormap(&h.data, h.rows(), h.grid.nx)
}
