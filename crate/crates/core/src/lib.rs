//! Numerical laboratory for kinks of the perturbed sine-Gordon equation.
//!
//! * [`grid`]: uniform grids, finite differences, trapezoid norms
//! * [`soliton`]: the analytic travelling kink
//! * [`solver`]: leapfrog integration of the full, deviation and linearized equations
//! * [`diagnostics`]: energies, a-priori bounds and convergence orders
//! * [`neural`]: a small ReLU network with backpropagation and Adam
//! * [`inverse`]: dataset generation and recovery of initial data
//! * [`render`]: PPM colormaps of histories
//! * [`config`], [`cli`]: JSON run configurations and the `sg-lab` commands

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod grid;
pub mod inverse;
pub mod neural;
pub mod render;
pub mod soliton;
pub mod solver;
