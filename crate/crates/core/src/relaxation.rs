//! Unsupervised relaxation losses and a per-instance solver.
//!
//! The phase estimator and refinement network of the two-generator pipeline
//!
//! ```text
//! u = G(b),   z(u) = F^H (b * u),   x_hat = H(z(u))
//! ```
//!
//! are replaced by explicit variables held in a [`RelaxationState`]: a phase
//! vector `u` on the measurement grid and an image `x_hat` on the signal grid.
//! Discriminators are pluggable [`Scorer`]s. `|.|` on complex grids is the
//! element-wise modulus throughout; its subgradient at zero is taken as zero.

use num_complex::Complex64;

use crate::error::{check_shape, Error, Result};
use crate::fourier::{
    crop_unchecked, dft2_slice, forward, forward_magnitude, idft2_slice, zero_pad,
};
use crate::grid::{
    unit_phase, ComplexGrid, GridShape, MagnitudeMeasurement, PhaseVector, RealGrid, SupportMask,
};
use crate::phasecut::{
    back_projection, support_loss_gradient_raw, support_loss_raw, StepRule, TorusSolverConfig,
    ZERO_LOSS_FLOOR,
};
use crate::rng::InstanceRng;

/// Phase estimate and refined image for one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationState {
    pub u: PhaseVector,
    pub x_hat: ComplexGrid,
}

impl RelaxationState {
    pub fn new(u: PhaseVector, x_hat: ComplexGrid) -> Result<Self> {
        if !x_hat.is_finite() {
            return Err(Error::InvalidInput("x_hat has non-finite entries".into()));
        }
        Ok(Self { u, x_hat })
    }

    fn check(&self, shape: &GridShape) -> Result<()> {
        check_shape(shape.outer(), self.u.shape())?;
        check_shape(shape.inner(), self.x_hat.shape())
    }
}

/// Weights of the cycle (`kappa`) and PhaseCut (`rho`) terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    kappa: f64,
    rho: f64,
}

impl LossWeights {
    pub fn new(kappa: f64, rho: f64) -> Result<Self> {
        for (name, w) in [("kappa", kappa), ("rho", rho)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} = {w} must be finite and >= 0"
                )));
            }
        }
        Ok(Self { kappa, rho })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

impl Default for LossWeights {
    /// `kappa = rho = 20`.
    fn default() -> Self {
        Self {
            kappa: 20.0,
            rho: 20.0,
        }
    }
}

/// Discriminator stand-in: scores a real magnitude image.
pub trait Scorer: Sync {
    fn score(&self, image: &RealGrid) -> f64;
}

impl<F> Scorer for F
where
    F: Fn(&RealGrid) -> f64 + Sync,
{
    fn score(&self, image: &RealGrid) -> f64 {
        self(image)
    }
}

/// `z_Lambda(u)`: back-projection `F^H (b * u)` cropped to the signal grid.
pub fn phase_path_image(
    b: &MagnitudeMeasurement,
    u: &PhaseVector,
    shape: &GridShape,
) -> Result<ComplexGrid> {
    check_shape(shape.outer(), b.shape())?;
    check_shape(shape.outer(), u.shape())?;
    let (m1, m2) = shape.outer();
    Ok(crop_unchecked(
        &back_projection(b.values(), u.as_slice(), m1, m2),
        shape,
    ))
}

fn modulus_mismatch(a: &ComplexGrid, b: &ComplexGrid) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, q)| (p.norm() - q.norm()).powi(2))
        .sum()
}

/// `||b - |A x_hat|||^2`.
pub fn symmetry_breaking_loss(
    b: &MagnitudeMeasurement,
    state: &RelaxationState,
    shape: &GridShape,
) -> Result<f64> {
    check_shape(shape.outer(), b.shape())?;
    check_shape(shape.inner(), state.x_hat.shape())?;
    let y = forward(&state.x_hat, shape)?;
    Ok(b.values()
        .iter()
        .zip(y.as_slice())
        .map(|(&m, v)| (m - v.norm()).powi(2))
        .sum())
}

/// Image-domain self-consistency for a training image `x`, whose path runs
/// on the synthetic measurement `|A x|`:
/// `|| |x| - |z_Lambda(u_x)| ||^2 + || |x| - |x_hat_x| ||^2`.
pub fn self_consistency_loss(
    x: &ComplexGrid,
    state_x: &RelaxationState,
    shape: &GridShape,
) -> Result<f64> {
    state_x.check(shape)?;
    let bx = forward_magnitude(x, shape)?;
    let z = phase_path_image(&bx, &state_x.u, shape)?;
    Ok(modulus_mismatch(x, &z) + modulus_mismatch(x, &state_x.x_hat))
}

/// Cycle loss: self-consistency of the image path plus the symmetry-breaking
/// term of the measurement path.
pub fn cycle_consistency_loss(
    x: &ComplexGrid,
    b: &MagnitudeMeasurement,
    state_b: &RelaxationState,
    state_x: &RelaxationState,
    shape: &GridShape,
) -> Result<f64> {
    state_b.check(shape)?;
    Ok(self_consistency_loss(x, state_x, shape)? + symmetry_breaking_loss(b, state_b, shape)?)
}

/// Least-squares GAN discriminator loss with empirical means in place of
/// the data measures: `mean (s(real) - 1)^2 + mean s(fake)^2`.
pub fn lsgan_discriminator_loss(
    scorer: &dyn Scorer,
    real_batch: &[RealGrid],
    fake_batch: &[RealGrid],
) -> Result<f64> {
    if real_batch.is_empty() || fake_batch.is_empty() {
        return Err(Error::Config("LS-GAN batches must be non-empty".into()));
    }
    let real = real_batch
        .iter()
        .map(|r| (scorer.score(r) - 1.0).powi(2))
        .sum::<f64>()
        / real_batch.len() as f64;
    let fake = fake_batch
        .iter()
        .map(|f| scorer.score(f).powi(2))
        .sum::<f64>()
        / fake_batch.len() as f64;
    Ok(real + fake)
}

/// Generator side: `mean (s(fake) - 1)^2`.
pub fn lsgan_generator_loss(scorer: &dyn Scorer, fake_batch: &[RealGrid]) -> Result<f64> {
    if fake_batch.is_empty() {
        return Err(Error::Config("LS-GAN batches must be non-empty".into()));
    }
    Ok(fake_batch
        .iter()
        .map(|f| (scorer.score(f) - 1.0).powi(2))
        .sum::<f64>()
        / fake_batch.len() as f64)
}

/// Plain `||x_label - x_pred||^2`. Blind to the equivalence class.
pub fn supervised_l2_loss(x_label: &ComplexGrid, x_pred: &ComplexGrid) -> Result<f64> {
    x_label.distance_sqr(x_pred)
}

/// Discriminators for the phase path (`phase`) and the refinement path (`refine`).
#[derive(Clone, Copy)]
pub struct Adversaries<'a> {
    pub phase: &'a dyn Scorer,
    pub refine: &'a dyn Scorer,
}

/// Everything the total loss looks at for one (measurement, training image) pair.
#[derive(Clone, Copy)]
pub struct LossInputs<'a> {
    pub b: &'a MagnitudeMeasurement,
    pub x: &'a ComplexGrid,
    /// State for the measured `b`.
    pub state_b: &'a RelaxationState,
    /// State for the synthetic measurement `|A x|`.
    pub state_x: &'a RelaxationState,
    pub shape: &'a GridShape,
    pub mask: &'a SupportMask,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLoss {
    pub adversarial: f64,
    pub cycle: f64,
    pub pcut: f64,
    pub total: f64,
}

/// `l_adv + kappa * l_cycle + rho * l_pcut`, itemized. Without adversaries the
/// adversarial term is zero.
pub fn total_loss_terms(
    inputs: &LossInputs<'_>,
    weights: &LossWeights,
    adversaries: Option<Adversaries<'_>>,
) -> Result<TotalLoss> {
    let LossInputs {
        b,
        x,
        state_b,
        state_x,
        shape,
        mask,
    } = *inputs;
    check_shape(shape.outer(), mask.shape())?;
    let cycle = cycle_consistency_loss(x, b, state_b, state_x, shape)?;
    let bx = forward_magnitude(x, shape)?;
    let pcut = support_loss_raw(b, mask, state_b.u.as_slice())
        + support_loss_raw(&bx, mask, state_x.u.as_slice());

    let adversarial = match adversaries {
        None => 0.0,
        Some(adv) => {
            let real = [x.modulus()];
            let phase_fake = [phase_path_image(b, &state_b.u, shape)?.modulus()];
            let refine_fake = [state_b.x_hat.modulus()];
            lsgan_discriminator_loss(adv.phase, &real, &phase_fake)?
                + lsgan_discriminator_loss(adv.refine, &real, &refine_fake)?
        }
    };
    Ok(TotalLoss {
        adversarial,
        cycle,
        pcut,
        total: adversarial + weights.kappa * cycle + weights.rho * pcut,
    })
}

pub fn total_loss(
    inputs: &LossInputs<'_>,
    weights: &LossWeights,
    adversaries: Option<Adversaries<'_>>,
) -> Result<f64> {
    total_loss_terms(inputs, weights, adversaries).map(|t| t.total)
}

/// `phase0(z) = z / |z|`, zero at zero (modulus subgradient).
fn modulus_direction(z: Complex64) -> Complex64 {
    if z.norm() > 0.0 {
        unit_phase(z)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

fn check_instance(b: &MagnitudeMeasurement, mask: &SupportMask, shape: &GridShape) -> Result<()> {
    check_shape(shape.outer(), b.shape())?;
    check_shape(shape.outer(), mask.shape())
}

/// Per-instance objective minimized by [`solve_deep_relaxation`]: the
/// measurement-path part of the non-adversarial total loss,
///
/// ```text
/// J(u, x_hat) = rho   * ||z(u) outside the support||^2
///             + kappa * ( ||b - |A x_hat|||^2 + || |x_hat| - |z_Lambda(u)| ||^2 )
/// ```
pub fn relaxation_objective(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    shape: &GridShape,
    weights: &LossWeights,
    state: &RelaxationState,
) -> Result<f64> {
    check_instance(b, mask, shape)?;
    state.check(shape)?;
    Ok(objective_raw(
        b,
        mask,
        shape,
        weights,
        state.u.as_slice(),
        &state.x_hat,
    ))
}

fn objective_raw(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    shape: &GridShape,
    weights: &LossWeights,
    u: &[Complex64],
    x_hat: &ComplexGrid,
) -> f64 {
    let (m1, m2) = shape.outer();
    let z = back_projection(b.values(), u, m1, m2);
    let pcut = crate::phasecut::leakage(&z, mask);
    let z_lambda = crop_unchecked(&z, shape);
    let mut y = zero_pad(x_hat, shape).expect("state shape checked");
    dft2_slice(y.as_mut_slice(), m1, m2);
    let symb: f64 = b
        .values()
        .iter()
        .zip(y.as_slice())
        .map(|(&m, v)| (m - v.norm()).powi(2))
        .sum();
    weights.rho * pcut + weights.kappa * (symb + modulus_mismatch(x_hat, &z_lambda))
}

/// Wirtinger gradients of [`relaxation_objective`] with respect to `u`
/// (ambient, before tangential projection) and `x_hat`.
pub fn relaxation_gradients(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    shape: &GridShape,
    weights: &LossWeights,
    state: &RelaxationState,
) -> Result<(ComplexGrid, ComplexGrid)> {
    check_instance(b, mask, shape)?;
    state.check(shape)?;
    let (gu, gx) = gradients_raw(b, mask, shape, weights, state.u.as_slice(), &state.x_hat);
    let (m1, m2) = shape.outer();
    let (n1, n2) = shape.inner();
    Ok((
        ComplexGrid::from_raw(m1, m2, gu),
        ComplexGrid::from_raw(n1, n2, gx),
    ))
}

fn gradients_raw(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    shape: &GridShape,
    weights: &LossWeights,
    u: &[Complex64],
    x_hat: &ComplexGrid,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let (m1, m2) = shape.outer();
    let bv = b.values();
    let z_lambda = crop_unchecked(&back_projection(bv, u, m1, m2), shape);

    // image consistency term, shared residual |x_hat| - |z_Lambda|
    let diff: Vec<f64> = x_hat
        .as_slice()
        .iter()
        .zip(z_lambda.as_slice())
        .map(|(a, z)| a.norm() - z.norm())
        .collect();

    // u: rho * M u  -  kappa * b * A[(|x_hat| - |z|) * phase0(z)]
    let mut gu = support_loss_gradient_raw(b, mask, u);
    let (n1, n2) = shape.inner();
    let weighted = ComplexGrid::from_raw(
        n1,
        n2,
        z_lambda
            .as_slice()
            .iter()
            .zip(&diff)
            .map(|(&z, &d)| modulus_direction(z) * d)
            .collect(),
    );
    let mut through = zero_pad(&weighted, shape).expect("shape checked");
    dft2_slice(through.as_mut_slice(), m1, m2);
    for ((g, t), &m) in gu.iter_mut().zip(through.as_slice()).zip(bv) {
        *g = *g * weights.rho - t * (weights.kappa * m);
    }

    // x_hat: kappa * ( A^H[y - b phase0(y)] + (|x_hat| - |z|) phase0(x_hat) )
    let mut y = zero_pad(x_hat, shape).expect("shape checked");
    dft2_slice(y.as_mut_slice(), m1, m2);
    for (v, &m) in y.as_mut_slice().iter_mut().zip(bv) {
        *v -= modulus_direction(*v) * m;
    }
    idft2_slice(y.as_mut_slice(), m1, m2);
    let symb_grad = crop_unchecked(y.as_slice(), shape);
    let gx = symb_grad
        .as_slice()
        .iter()
        .zip(x_hat.as_slice())
        .zip(&diff)
        .map(|((&s, &a), &d)| (s + modulus_direction(a) * d) * weights.kappa)
        .collect();
    (gu, gx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationSolution {
    pub state: RelaxationState,
    /// Objective at the start, then after every outer iteration.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
}

impl RelaxationSolution {
    pub fn final_loss(&self) -> f64 {
        *self
            .loss_history
            .last()
            .expect("history holds the starting objective")
    }
}

/// Minimizes [`relaxation_objective`] from a seeded start: random phases
/// `u0` and `x_hat0 = z_Lambda(u0)`.
pub fn solve_deep_relaxation(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    shape: &GridShape,
    weights: &LossWeights,
    config: &TorusSolverConfig,
) -> Result<RelaxationSolution> {
    check_instance(b, mask, shape)?;
    let (m1, m2) = shape.outer();
    let u0 = InstanceRng::new(config.seed).phase_vector(m1, m2);
    let x0 = phase_path_image(b, &u0, shape)?;
    solve_deep_relaxation_from(
        b,
        mask,
        shape,
        weights,
        config,
        RelaxationState::new(u0, x0)?,
    )
}

/// Alternating descent from a given state. Each outer iteration takes one
/// projected step on `u` (retracted to the torus) followed by one plain
/// gradient step on `x_hat`. Step sizes are measured in units of the inverse
/// curvature of each block.
pub fn solve_deep_relaxation_from(
    b: &MagnitudeMeasurement,
    mask: &SupportMask,
    shape: &GridShape,
    weights: &LossWeights,
    config: &TorusSolverConfig,
    start: RelaxationState,
) -> Result<RelaxationSolution> {
    config.validate()?;
    check_instance(b, mask, shape)?;
    start.check(shape)?;
    let (m1, m2) = shape.outer();
    let (n1, n2) = shape.inner();

    let peak = b.max();
    let u_scale = {
        let curvature = peak * peak * (weights.rho + weights.kappa);
        if curvature > 0.0 {
            1.0 / curvature
        } else {
            1.0
        }
    };
    let x_scale = if weights.kappa > 0.0 {
        0.5 / weights.kappa
    } else {
        0.0
    };
    let floor = ZERO_LOSS_FLOOR * b.norm_sqr() * (weights.rho + weights.kappa).max(1.0);

    let mut u = start.u.as_slice().to_vec();
    let mut x_hat = start.x_hat;
    let mut loss = objective_raw(b, mask, shape, weights, &u, &x_hat);
    if !loss.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    let mut history = vec![loss];
    let (mut u_step, mut x_step) = match config.step_rule {
        StepRule::Fixed { step } => (step, step),
        StepRule::Backtracking { initial, .. } => (initial, initial),
    };
    let mut iterations = 0;

    while iterations < config.max_iterations && loss > floor {
        let start_loss = loss;
        let mut moved = false;

        // u block
        let (gu, _) = gradients_raw(b, mask, shape, weights, &u, &x_hat);
        let try_u = |eta: f64| -> (Vec<Complex64>, f64) {
            let cand: Vec<Complex64> = u
                .iter()
                .zip(&gu)
                .map(|(&v, &g)| unit_phase(v - g * eta))
                .collect();
            let l = objective_raw(b, mask, shape, weights, &cand, &x_hat);
            (cand, l)
        };
        if let Some((cand, l)) = take_step(
            config.step_rule,
            &mut u_step,
            loss,
            |s| try_u(s * u_scale),
            iterations,
        )? {
            u = cand;
            loss = l;
            moved = true;
        }

        // x_hat block
        if x_scale > 0.0 {
            let (_, gx) = gradients_raw(b, mask, shape, weights, &u, &x_hat);
            let try_x = |eta: f64| -> (ComplexGrid, f64) {
                let cand = ComplexGrid::from_raw(
                    n1,
                    n2,
                    x_hat
                        .as_slice()
                        .iter()
                        .zip(&gx)
                        .map(|(&v, &g)| v - g * eta)
                        .collect(),
                );
                let l = objective_raw(b, mask, shape, weights, &u, &cand);
                (cand, l)
            };
            if let Some((cand, l)) = take_step(
                config.step_rule,
                &mut x_step,
                loss,
                |s| try_x(s * x_scale),
                iterations,
            )? {
                x_hat = cand;
                loss = l;
                moved = true;
            }
        }

        if !moved {
            break;
        }
        iterations += 1;
        history.push(loss);
        let decrease = (start_loss - loss).abs() / start_loss.max(f64::MIN_POSITIVE);
        if decrease < config.tolerance {
            break;
        }
    }

    let state = RelaxationState::new(PhaseVector::normalize(m1, m2, &u), x_hat)?;
    Ok(RelaxationSolution {
        state,
        loss_history: history,
        iterations,
    })
}

/// One block step under `rule`. Returns `None` when backtracking finds no
/// non-increasing step.
fn take_step<T>(
    rule: StepRule,
    step: &mut f64,
    current: f64,
    mut attempt: impl FnMut(f64) -> (T, f64),
    iteration: usize,
) -> Result<Option<(T, f64)>> {
    match rule {
        StepRule::Fixed { step } => {
            let (cand, l) = attempt(step);
            if !l.is_finite() {
                return Err(Error::Divergence {
                    iteration: iteration + 1,
                });
            }
            Ok(Some((cand, l)))
        }
        StepRule::Backtracking { shrink, initial } => {
            while *step >= initial * 1e-12 {
                let (cand, l) = attempt(*step);
                if !l.is_finite() {
                    return Err(Error::Divergence {
                        iteration: iteration + 1,
                    });
                }
                if l <= current {
                    *step = (*step / shrink).min(initial);
                    return Ok(Some((cand, l)));
                }
                *step *= shrink;
            }
            // reset so a later block update can unlock this one again
            *step = initial;
            Ok(None)
        }
    }
}
