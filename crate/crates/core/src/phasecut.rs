//! PhaseCut machinery.
//!
//! The quadratic `u^H M u` with `M = diag(b) (I - A A^+) diag(b)` equals the
//! energy that `z(u) = F^H (b * u)` leaks outside the support. The leakage
//! form costs two FFTs and never builds `M`; the dense matrix is kept as a
//! test oracle for small grids.
//!
//! Gradients follow the Wirtinger convention: for a real loss `l(u)` the
//! returned `g` satisfies `l(u + d) = l(u) + 2 Re<g, d> + O(|d|^2)`, which for
//! the PhaseCut quadratic is `g = M u`.

use num_complex::Complex64;

use crate::error::{check_shape, Error, Result};
use crate::fourier::{
    apply_range_projector, crop_unchecked, dft2_slice, forward_magnitude, idft2_slice,
    restrict_to_mask,
};
use crate::grid::{
    unit_phase, ComplexGrid, GridShape, MagnitudeMeasurement, PhaseVector, SupportMask,
};
use crate::rng::InstanceRng;

pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Dense `M = diag(b) (I - A A^+) diag(b)`, row-major, test scale only.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCutMatrix {
    grid: (usize, usize),
    dim: usize,
    entries: Vec<Complex64>,
}

impl PhaseCutMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.grid
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Dense product `M v`.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.dim {
            return Err(Error::Shape {
                expected: (self.dim, 1),
                found: (v.len(), 1),
            });
        }
        Ok(self
            .entries
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `max |M - M^H|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }
}

pub fn build_phasecut_matrix(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
) -> Result<PhaseCutMatrix> {
    build_phasecut_matrix_capped(b, mask, DEFAULT_DENSE_CAP)
}

/// Builds `M` column by column by probing the range projector with basis vectors.
pub fn build_phasecut_matrix_capped(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    cap: usize,
) -> Result<PhaseCutMatrix> {
    check_shape(b.shape(), mask.shape())?;
    let (rows, cols) = b.shape();
    let dim = rows * cols;
    if dim > cap {
        return Err(Error::Capacity { dim, cap });
    }
    let bv = b.values();
    let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
    let mut probe = ComplexGrid::zeros(rows, cols);
    for j in 0..dim {
        probe.as_mut_slice()[j] = Complex64::new(1.0, 0.0);
        let projected = apply_range_projector(&probe, mask)?;
        probe.as_mut_slice()[j] = Complex64::new(0.0, 0.0);
        for (i, p) in projected.as_slice().iter().enumerate() {
            let identity = if i == j { 1.0 } else { 0.0 };
            entries[i * dim + j] = (Complex64::new(identity, 0.0) - p) * (bv[i] * bv[j]);
        }
    }
    Ok(PhaseCutMatrix {
        grid: (rows, cols),
        dim,
        entries,
    })
}

/// `Re(u^H M u)`.
pub fn phasecut_quadratic(matrix: &PhaseCutMatrix, u: &PhaseVector) -> Result<f64> {
    check_shape(matrix.grid, u.shape())?;
    let mu = matrix.apply(u.as_slice())?;
    Ok(u.as_slice()
        .iter()
        .zip(&mu)
        .map(|(a, b)| (a.conj() * b).re)
        .sum())
}

/// `z(u) = F^H (b * u)` for an arbitrary (not necessarily unit) `u`.
pub(crate) fn back_projection(
    b: &[f64],
    u: &[Complex64],
    rows: usize,
    cols: usize,
) -> Vec<Complex64> {
    let mut z: Vec<Complex64> = b.iter().zip(u).map(|(&m, &v)| v * m).collect();
    idft2_slice(&mut z, rows, cols);
    z
}

pub(crate) fn leakage(z: &[Complex64], mask: &SupportMask) -> f64 {
    z.iter()
        .zip(mask.cells())
        .filter(|(_, &inside)| !inside)
        .map(|(v, _)| v.norm_sqr())
        .sum()
}

pub(crate) fn support_loss_raw(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    u: &[Complex64],
) -> f64 {
    let (rows, cols) = b.shape();
    leakage(&back_projection(b.values(), u, rows, cols), mask)
}

/// `b * (I - A A^+)(b * u)`, i.e. `M u`, for an arbitrary `u`.
pub(crate) fn support_loss_gradient_raw(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    u: &[Complex64],
) -> Vec<Complex64> {
    let (rows, cols) = b.shape();
    let mut z = back_projection(b.values(), u, rows, cols);
    // keep only the leaked part: (I - P_N P_N^T) z
    for (v, &inside) in z.iter_mut().zip(mask.cells()) {
        if inside {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    dft2_slice(&mut z, rows, cols);
    for (v, &m) in z.iter_mut().zip(b.values()) {
        *v *= m;
    }
    z
}

fn check_loss_shapes(b: &MagnitudeMeasurement, mask: &SupportMask, u: &PhaseVector) -> Result<()> {
    check_shape(b.shape(), mask.shape())?;
    check_shape(b.shape(), u.shape())
}

/// Energy of `F^H (b * u)` outside the support; equals `u^H M u`.
pub fn phasecut_support_loss(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    u: &PhaseVector,
) -> Result<f64> {
    check_loss_shapes(b, mask, u)?;
    Ok(support_loss_raw(b, mask, u.as_slice()))
}

/// Wirtinger gradient `M u` of the support loss, computed matrix-free.
pub fn phasecut_support_loss_gradient(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    u: &PhaseVector,
) -> Result<ComplexGrid> {
    check_loss_shapes(b, mask, u)?;
    let (rows, cols) = b.shape();
    Ok(ComplexGrid::from_raw(
        rows,
        cols,
        support_loss_gradient_raw(b, mask, u.as_slice()),
    ))
}

/// Removes the radial component `Re(conj(u_m) g_m) u_m` from every cell,
/// leaving the gradient in the tangent space of the torus.
pub fn tangential_component(g: &ComplexGrid, u: &PhaseVector) -> Result<ComplexGrid> {
    check_shape(g.shape(), u.shape())?;
    let (rows, cols) = g.shape();
    Ok(ComplexGrid::from_raw(
        rows,
        cols,
        tangential_raw(g.as_slice(), u.as_slice()),
    ))
}

pub(crate) fn tangential_raw(g: &[Complex64], u: &[Complex64]) -> Vec<Complex64> {
    g.iter()
        .zip(u)
        .map(|(&gm, &um)| gm - um * (um.conj() * gm).re)
        .collect()
}

/// Least-squares signal for a phase: `A^+ (b * u)`, i.e. the back-projection
/// restricted to the support and cropped to the support's extent.
pub fn recover_signal(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    u: &PhaseVector,
) -> Result<ComplexGrid> {
    check_loss_shapes(b, mask, u)?;
    let (rows, cols) = b.shape();
    let mut z = back_projection(b.values(), u.as_slice(), rows, cols);
    restrict_to_mask(&mut z, mask);
    let shape = GridShape::new(mask.extent(), (rows, cols))?;
    Ok(crop_unchecked(&z, &shape))
}

/// Two-term PhaseCut loss over the measured magnitudes `b` and the synthetic
/// magnitudes `|A x|` of an image `x`, with explicit phase variables standing
/// in for the phase estimator's outputs.
pub fn composite_phasecut_loss(
    b: &MagnitudeMeasurement,
    x: &ComplexGrid,
    shape: &GridShape,
    mask: &SupportMask,
    u_b: &PhaseVector,
    u_x: &PhaseVector,
) -> Result<f64> {
    let bx = forward_magnitude(x, shape)?;
    Ok(phasecut_support_loss(b, mask, u_b)? + phasecut_support_loss(&bx, mask, u_x)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Constant step.
    Fixed { step: f64 },
    /// Halve (by `shrink`) until the loss does not increase; the accepted
    /// step is grown by `1/shrink` for the next iteration, up to `initial`.
    Backtracking { shrink: f64, initial: f64 },
}

/// Projected-gradient settings. Steps are measured in units of `1 / max(b)^2`,
/// the reciprocal of the curvature bound of the quadratic, so the same
/// settings work at any intensity scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusSolverConfig {
    pub max_iterations: usize,
    pub step_rule: StepRule,
    /// Stop when the relative loss decrease of an accepted step falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for TorusSolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            step_rule: StepRule::Backtracking {
                shrink: 0.5,
                initial: 4.0,
            },
            tolerance: 1e-9,
            seed: 0,
        }
    }
}

impl TorusSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        match self.step_rule {
            StepRule::Fixed { step } if !(step > 0.0 && step.is_finite()) => {
                Err(Error::Config(format!("fixed step {step} must be positive")))
            }
            StepRule::Backtracking { shrink, initial }
                if !(shrink > 0.0 && shrink < 1.0) || !(initial > 0.0 && initial.is_finite()) =>
            {
                Err(Error::Config(format!(
                    "backtracking needs shrink in (0,1) and a positive initial step, got {shrink}, {initial}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorusSolution {
    pub phase: PhaseVector,
    /// Loss of the starting point followed by the loss after every accepted step.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
}

impl TorusSolution {
    pub fn final_loss(&self) -> f64 {
        *self
            .loss_history
            .last()
            .expect("history holds the starting loss")
    }
}

/// Losses at or below `ZERO_LOSS_FLOOR * ||b||^2` are treated as exact zeros.
pub(crate) const ZERO_LOSS_FLOOR: f64 = 1e-24;

/// Minimizes the support loss over unit-modulus phases by projected
/// gradient descent: `u <- normalize(u - eta * M u)`.
pub fn solve_phasecut_torus(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    config: &TorusSolverConfig,
    u0: &PhaseVector,
) -> Result<TorusSolution> {
    config.validate()?;
    check_loss_shapes(b, mask, u0)?;
    let (rows, cols) = b.shape();
    let scale = {
        let peak = b.max();
        if peak > 0.0 {
            1.0 / (peak * peak)
        } else {
            1.0
        }
    };
    let floor = ZERO_LOSS_FLOOR * b.norm_sqr();

    let mut u = u0.as_slice().to_vec();
    let mut loss = support_loss_raw(b, mask, &u);
    if !loss.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    let mut history = vec![loss];
    let mut iterations = 0;
    let mut step = match config.step_rule {
        StepRule::Fixed { step } => step,
        StepRule::Backtracking { initial, .. } => initial,
    };

    let retract = |u: &[Complex64], g: &[Complex64], eta: f64| -> Vec<Complex64> {
        u.iter()
            .zip(g)
            .map(|(&um, &gm)| unit_phase(um - gm * eta))
            .collect()
    };

    while iterations < config.max_iterations && loss > floor {
        let g = support_loss_gradient_raw(b, mask, &u);
        let (candidate, candidate_loss) = match config.step_rule {
            StepRule::Fixed { .. } => {
                let c = retract(&u, &g, step * scale);
                let l = support_loss_raw(b, mask, &c);
                (c, l)
            }
            StepRule::Backtracking { shrink, initial } => {
                let mut accepted = None;
                while step >= initial * 1e-12 {
                    let c = retract(&u, &g, step * scale);
                    let l = support_loss_raw(b, mask, &c);
                    if !l.is_finite() {
                        return Err(Error::Divergence {
                            iteration: iterations + 1,
                        });
                    }
                    if l <= loss {
                        accepted = Some((c, l));
                        break;
                    }
                    step *= shrink;
                }
                match accepted {
                    Some(a) => {
                        step = (step / shrink).min(initial);
                        a
                    }
                    // no non-increasing step left: stationary to working precision
                    None => break,
                }
            }
        };
        iterations += 1;
        if !candidate_loss.is_finite() {
            return Err(Error::Divergence {
                iteration: iterations,
            });
        }
        let decrease = (loss - candidate_loss).abs() / loss.max(f64::MIN_POSITIVE);
        u = candidate;
        loss = candidate_loss;
        history.push(loss);
        if decrease < config.tolerance {
            break;
        }
    }

    Ok(TorusSolution {
        phase: PhaseVector::normalize(rows, cols, &u),
        loss_history: history,
        iterations,
    })
}

/// Best of `starts` torus solves from seeded random phases (ChaCha stream
/// `k` of `config.seed` for start `k`). Returns the index of the winning
/// start with its solution; ties go to the lower index.
pub fn solve_phasecut_torus_multistart(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    config: &TorusSolverConfig,
    starts: usize,
) -> Result<(usize, TorusSolution)> {
    if starts == 0 {
        return Err(Error::Config("starts must be >= 1".into()));
    }
    let (rows, cols) = b.shape();
    let mut best: Option<(usize, TorusSolution)> = None;
    for k in 0..starts {
        let u0 = InstanceRng::with_stream(config.seed, k as u64).phase_vector(rows, cols);
        let sol = solve_phasecut_torus(b, mask, config, &u0)?;
        if best
            .as_ref()
            .is_none_or(|(_, s)| sol.final_loss() < s.final_loss())
        {
            best = Some((k, sol));
        }
    }
    Ok(best.expect("starts >= 1"))
}
