//! Alternating-projection solvers sharing one iteration template:
//!
//! ```text
//! u(i)   = phase(A x(i))
//! z(i)   = F^H (b * u(i))
//! x(i+1) = H(z(i))
//! ```
//!
//! Error reduction, Gerchberg-Saxton and hybrid input-output differ only in
//! the image update `H`. Iterates live on the full measurement grid.

use num_complex::Complex64;

use crate::error::{check_shape, Error, Result};
use crate::fourier::{dft2_slice, idft2_slice, restrict_to_mask};
use crate::grid::{
    unit_phase, ComplexGrid, MagnitudeMeasurement, PhaseVector, RealGrid, SupportMask,
};
use crate::rng::InstanceRng;

/// Image-domain constraint set behind the update `H`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialConstraint {
    /// Complex-valued signal known to vanish outside the mask.
    SupportOnly(SupportMask),
    /// Real-valued, nonnegative signal inside the mask. The imaginary part is
    /// a violation everywhere.
    SupportNonnegative(SupportMask),
    /// Known image-domain magnitude (zero outside the mask).
    KnownMagnitude {
        mask: SupportMask,
        magnitude: RealGrid,
    },
}

impl SpatialConstraint {
    pub fn known_magnitude(mask: SupportMask, magnitude: RealGrid) -> Result<Self> {
        check_shape(mask.shape(), magnitude.shape())?;
        if magnitude.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(
                "known magnitude has negative entries".into(),
            ));
        }
        Ok(Self::KnownMagnitude { mask, magnitude })
    }

    pub fn mask(&self) -> &SupportMask {
        match self {
            Self::SupportOnly(m) | Self::SupportNonnegative(m) => m,
            Self::KnownMagnitude { mask, .. } => mask,
        }
    }

    pub fn is_real_valued(&self) -> bool {
        matches!(self, Self::SupportNonnegative(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    GerchbergSaxton,
    ErrorReduction,
    Hio,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GerchbergSaxton => "gs",
            Self::ErrorReduction => "er",
            Self::Hio => "hio",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HioConfig {
    pub beta: f64,
    /// Iterations of a plain run, or continuation iterations after restarts.
    pub iterations: usize,
    pub restarts: usize,
    pub restart_iterations: usize,
    pub seed: u64,
}

impl Default for HioConfig {
    /// beta = 0.9, 10 restarts of 50 iterations, then 1000 iterations.
    fn default() -> Self {
        Self {
            beta: 0.9,
            iterations: 1000,
            restarts: 10,
            restart_iterations: 50,
            seed: 0,
        }
    }
}

impl HioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 2.0) {
            return Err(Error::Config(format!("beta {} outside (0, 2]", self.beta)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.restarts == 0 || self.restart_iterations == 0 {
            return Err(Error::Config(
                "restarts and restart_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    /// `||b - |A x(i)|||_2` for the constraint-satisfying estimate after each iteration.
    pub residuals: Vec<f64>,
    /// Residual of the starting estimate.
    pub initial_residual: f64,
    /// Last estimate on the measurement grid.
    pub final_image: ComplexGrid,
    pub iterations_run: usize,
}

impl SolverTrace {
    pub fn final_residual(&self) -> f64 {
        self.residuals
            .last()
            .copied()
            .unwrap_or(self.initial_residual)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRestartOutcome {
    pub trace: SolverTrace,
    pub selected_restart: usize,
    /// Final residual of each restart before continuation.
    pub restart_residuals: Vec<f64>,
}

/// `x / |x|` per cell, `1 + 0i` at zeros.
pub fn phase_of_spectrum(spectrum: &ComplexGrid) -> PhaseVector {
    let (rows, cols) = spectrum.shape();
    PhaseVector::normalize(rows, cols, spectrum.as_slice())
}

/// Gerchberg-Saxton image update: impose the known magnitude, keep the phase of `z`.
pub fn gs_image_update(z: &ComplexGrid, constraint: &SpatialConstraint) -> Result<ComplexGrid> {
    let SpatialConstraint::KnownMagnitude { magnitude, .. } = constraint else {
        return Err(Error::Config(
            "Gerchberg-Saxton needs a known-magnitude constraint".into(),
        ));
    };
    check_shape(magnitude.shape(), z.shape())?;
    let (rows, cols) = z.shape();
    let data = z
        .as_slice()
        .iter()
        .zip(magnitude.as_slice())
        .map(|(&v, &m)| unit_phase(v) * m)
        .collect();
    Ok(ComplexGrid::from_raw(rows, cols, data))
}

/// Projection onto the constraint set (the error-reduction update).
pub fn er_image_update(z: &ComplexGrid, constraint: &SpatialConstraint) -> Result<ComplexGrid> {
    check_shape(constraint.mask().shape(), z.shape())?;
    let (rows, cols) = z.shape();
    let mut out = z.as_slice().to_vec();
    project_in_place(&mut out, constraint);
    Ok(ComplexGrid::from_raw(rows, cols, out))
}

fn project_in_place(data: &mut [Complex64], constraint: &SpatialConstraint) {
    match constraint {
        SpatialConstraint::SupportOnly(mask) => restrict_to_mask(data, mask),
        SpatialConstraint::SupportNonnegative(mask) => {
            for (v, &keep) in data.iter_mut().zip(mask.cells()) {
                *v = Complex64::new(if keep { v.re.max(0.0) } else { 0.0 }, 0.0);
            }
        }
        SpatialConstraint::KnownMagnitude { magnitude, .. } => {
            for (v, &m) in data.iter_mut().zip(magnitude.as_slice()) {
                *v = unit_phase(*v) * m;
            }
        }
    }
}

/// Cells where `z` violates the spatial constraint (the set Gamma).
///
/// For [`SpatialConstraint::SupportNonnegative`] this covers the real part
/// only; the imaginary part is always fed back.
pub fn violation_set(z: &ComplexGrid, constraint: &SpatialConstraint) -> Result<Vec<bool>> {
    check_shape(constraint.mask().shape(), z.shape())?;
    let cells = constraint.mask().cells();
    Ok(match constraint {
        SpatialConstraint::SupportOnly(_) => cells.iter().map(|&c| !c).collect(),
        SpatialConstraint::SupportNonnegative(_) => z
            .as_slice()
            .iter()
            .zip(cells)
            .map(|(v, &c)| !c || v.re < 0.0)
            .collect(),
        SpatialConstraint::KnownMagnitude { .. } => {
            return Err(Error::Config(
                "HIO is defined for support constraints only".into(),
            ))
        }
    })
}

/// Hybrid input-output update: `z` where the constraint holds, `x_prev - beta z` on Gamma.
pub fn hio_image_update(
    z: &ComplexGrid,
    x_prev: &ComplexGrid,
    constraint: &SpatialConstraint,
    beta: f64,
) -> Result<ComplexGrid> {
    check_shape(z.shape(), x_prev.shape())?;
    let gamma = violation_set(z, constraint)?;
    let (rows, cols) = z.shape();
    let mut out = z.as_slice().to_vec();
    hio_in_place(
        &mut out,
        x_prev.as_slice(),
        &gamma,
        constraint.is_real_valued(),
        beta,
    );
    Ok(ComplexGrid::from_raw(rows, cols, out))
}

fn hio_in_place(
    z: &mut [Complex64],
    x_prev: &[Complex64],
    gamma: &[bool],
    real_valued: bool,
    beta: f64,
) {
    for ((v, &x), &violated) in z.iter_mut().zip(x_prev).zip(gamma) {
        if real_valued {
            let re = if violated { x.re - beta * v.re } else { v.re };
            *v = Complex64::new(re, x.im - beta * v.im);
        } else if violated {
            *v = x - *v * beta;
        }
    }
}

/// `||b - |A x|||_2` for an iterate `x` already on the measurement grid.
pub fn magnitude_residual(b: &MagnitudeMeasurement, x: &ComplexGrid) -> Result<f64> {
    check_shape(b.shape(), x.shape())?;
    let (rows, cols) = x.shape();
    let mut spectrum = x.as_slice().to_vec();
    dft2_slice(&mut spectrum, rows, cols);
    Ok(residual_of_spectrum(b.values(), &spectrum))
}

fn residual_of_spectrum(b: &[f64], spectrum: &[Complex64]) -> f64 {
    b.iter()
        .zip(spectrum)
        .map(|(&bm, s)| (bm - s.norm_sqr().sqrt()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Starting phase of restart `restart` for the multi-restart protocol.
pub fn restart_phase(seed: u64, restart: usize, rows: usize, cols: usize) -> PhaseVector {
    InstanceRng::with_stream(seed, restart as u64).phase_vector(rows, cols)
}

enum Start<'a> {
    Phase(&'a PhaseVector),
    Iterate(Vec<Complex64>),
}

struct Run {
    trace: SolverTrace,
    iterate: Vec<Complex64>,
}

fn run_core(
    b: &MagnitudeMeasurement,
    constraint: &SpatialConstraint,
    algorithm: Algorithm,
    beta: f64,
    iterations: usize,
    start: Start<'_>,
) -> Result<Run> {
    let (rows, cols) = b.shape();
    check_shape((rows, cols), constraint.mask().shape())?;
    match (algorithm, constraint) {
        (Algorithm::GerchbergSaxton, SpatialConstraint::KnownMagnitude { .. }) => {}
        (Algorithm::GerchbergSaxton, _) => {
            return Err(Error::Config(
                "Gerchberg-Saxton needs a known-magnitude constraint".into(),
            ))
        }
        (Algorithm::Hio, SpatialConstraint::KnownMagnitude { .. }) => {
            return Err(Error::Config(
                "HIO is defined for support constraints only".into(),
            ))
        }
        _ => {}
    }
    let bv = b.values();

    let (mut iterate, mut first_phase) = match start {
        Start::Phase(u0) => {
            check_shape((rows, cols), u0.shape())?;
            let mut z: Vec<Complex64> =
                bv.iter().zip(u0.as_slice()).map(|(&m, &u)| u * m).collect();
            idft2_slice(&mut z, rows, cols);
            restrict_to_mask(&mut z, constraint.mask());
            (z, Some(u0))
        }
        Start::Iterate(x) => (x, None),
    };

    let mut spectrum = iterate.clone();
    dft2_slice(&mut spectrum, rows, cols);
    // like every recorded residual, measured on the constraint-satisfying estimate
    let initial_residual = {
        let mut est = iterate.clone();
        project_in_place(&mut est, constraint);
        dft2_slice(&mut est, rows, cols);
        residual_of_spectrum(bv, &est)
    };
    if !initial_residual.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }

    let mut residuals = Vec::with_capacity(iterations);
    let mut estimate = iterate.clone();
    let mut z = vec![Complex64::new(0.0, 0.0); rows * cols];
    let mut gamma = vec![false; rows * cols];

    for i in 0..iterations {
        // Fourier magnitude replacement
        match first_phase.take() {
            Some(u0) => {
                for ((zm, &m), &u) in z.iter_mut().zip(bv).zip(u0.as_slice()) {
                    *zm = u * m;
                }
            }
            None => {
                for ((zm, &m), s) in z.iter_mut().zip(bv).zip(&spectrum) {
                    *zm = unit_phase(*s) * m;
                }
            }
        }
        idft2_slice(&mut z, rows, cols);

        estimate.copy_from_slice(&z);
        project_in_place(&mut estimate, constraint);
        let mut est_spectrum = estimate.clone();
        dft2_slice(&mut est_spectrum, rows, cols);
        let r = residual_of_spectrum(bv, &est_spectrum);
        if !r.is_finite() {
            return Err(Error::Divergence { iteration: i + 1 });
        }
        residuals.push(r);

        if algorithm == Algorithm::Hio {
            let real_valued = constraint.is_real_valued();
            for ((g, v), &keep) in gamma.iter_mut().zip(&z).zip(constraint.mask().cells()) {
                *g = !keep || (real_valued && v.re < 0.0);
            }
            hio_in_place(&mut z, &iterate, &gamma, real_valued, beta);
            iterate.copy_from_slice(&z);
            spectrum.copy_from_slice(&iterate);
            dft2_slice(&mut spectrum, rows, cols);
        } else {
            iterate.copy_from_slice(&estimate);
            spectrum = est_spectrum;
        }
    }

    if iterations == 0 {
        project_in_place(&mut estimate, constraint);
    }
    Ok(Run {
        trace: SolverTrace {
            residuals,
            initial_residual,
            final_image: ComplexGrid::from_raw(rows, cols, estimate),
            iterations_run: iterations,
        },
        iterate,
    })
}

/// Runs `config.iterations` iterations of `algorithm` from the phase `u0`.
///
/// The starting image is `x(0) = mask * F^H (b * u0)` and the first Fourier
/// step uses `u0` itself.
pub fn run_alternating(
    b: &MagnitudeMeasurement,
    constraint: &SpatialConstraint,
    algorithm: Algorithm,
    config: &HioConfig,
    u0: &PhaseVector,
) -> Result<SolverTrace> {
    config.validate()?;
    run_core(
        b,
        constraint,
        algorithm,
        config.beta,
        config.iterations,
        Start::Phase(u0),
    )
    .map(|r| r.trace)
}

/// HIO with random restarts: `restarts` runs of `restart_iterations` from
/// seeded random phases, then `iterations` more on the run with the smallest
/// residual (ties go to the lowest restart index).
pub fn multi_restart_hio(
    b: &MagnitudeMeasurement,
    constraint: &SpatialConstraint,
    config: &HioConfig,
) -> Result<MultiRestartOutcome> {
    config.validate()?;
    let (rows, cols) = b.shape();
    let mut best: Option<(usize, Run)> = None;
    let mut restart_residuals = Vec::with_capacity(config.restarts);
    for restart in 0..config.restarts {
        let u0 = restart_phase(config.seed, restart, rows, cols);
        let run = run_core(
            b,
            constraint,
            Algorithm::Hio,
            config.beta,
            config.restart_iterations,
            Start::Phase(&u0),
        )?;
        let r = run.trace.final_residual();
        restart_residuals.push(r);
        if best
            .as_ref()
            .is_none_or(|(_, b)| r < b.trace.final_residual())
        {
            best = Some((restart, run));
        }
    }
    let (selected_restart, chosen) = best.expect("at least one restart");
    let cont = run_core(
        b,
        constraint,
        Algorithm::Hio,
        config.beta,
        config.iterations,
        Start::Iterate(chosen.iterate),
    )?;

    let mut residuals = chosen.trace.residuals;
    residuals.extend_from_slice(&cont.trace.residuals);
    let iterations_run = residuals.len();
    Ok(MultiRestartOutcome {
        trace: SolverTrace {
            residuals,
            initial_residual: chosen.trace.initial_residual,
            final_image: cont.trace.final_image,
            iterations_run,
        },
        selected_restart,
        restart_residuals,
    })
}
