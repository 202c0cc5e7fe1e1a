//! Fourier phase retrieval toolkit.
//!
//! Recovers an `N1 x N2` image from the magnitudes of its oversampled
//! `M1 x M2` unitary DFT. The crate provides the matrix-free measurement
//! model, classical alternating projections (ER, GS, HIO), the PhaseCut
//! support-leakage loss with a projected-gradient torus solver, the
//! unsupervised relaxation losses with a per-instance solver, and
//! registration-aware PSNR/SSIM.

pub mod error;
pub mod fourier;
pub mod grid;
pub mod metrics;
pub mod phasecut;
pub mod projections;
pub mod relaxation;
pub mod rng;

pub use error::{Error, Result};
pub use grid::{ComplexGrid, GridShape, MagnitudeMeasurement, PhaseVector, RealGrid, SupportMask};
pub use num_complex::Complex64;
