//! PSNR, global SSIM, and registration over the ambiguity group of Fourier
//! magnitudes: circular shifts, the two-axis reversal `n -> -n`, and a global
//! phase factor.
//!
//! For complex signals the reversal only preserves `|A x|` when paired with
//! conjugation (`x[n] -> conj(x[-n])`), so complex-mode registration also
//! scans the conjugated reversal.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{check_shape, Error, Result};
use crate::fourier::{dft2_slice, idft2_slice};
use crate::grid::{ComplexGrid, RealGrid};

/// Reported PSNR never exceeds this, including for zero MSE.
pub const PSNR_CAP_DB: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ValueMode {
    /// Real-valued images; global phase restricted to `{0, pi}`, metrics on the real part.
    #[default]
    Real,
    /// Complex-valued images; metrics on the modulus.
    Complex,
}

impl ValueMode {
    pub fn name(&self) -> &'static str {
        match self {
            ValueMode::Real => "real",
            ValueMode::Complex => "complex",
        }
    }
}

/// `out[n] = g[n - shift]` with wrap-around.
pub fn circular_shift(g: &ComplexGrid, shift: (usize, usize)) -> ComplexGrid {
    let (rows, cols) = g.shape();
    let (s1, s2) = (shift.0 % rows.max(1), shift.1 % cols.max(1));
    ComplexGrid::from_fn(rows, cols, |r, c| {
        g.get((r + rows - s1) % rows, (c + cols - s2) % cols)
    })
}

/// `out[n] = g[-n]` on both axes (index 0 stays in place).
pub fn flip(g: &ComplexGrid) -> ComplexGrid {
    let (rows, cols) = g.shape();
    ComplexGrid::from_fn(rows, cols, |r, c| {
        g.get((rows - r) % rows, (cols - c) % cols)
    })
}

/// Group element `r -> e^{i phase} S_shift F^flipped C^conjugated r`, mapping
/// a reference onto a candidate (`C` is complex conjugation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    pub shift: (usize, usize),
    pub flipped: bool,
    pub conjugated: bool,
    /// Radians in `[0, 2 pi)`.
    pub global_phase: f64,
    /// Peak cross-correlation magnitude that selected this element.
    pub correlation: f64,
}

fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

impl Registration {
    pub fn identity() -> Self {
        Self {
            shift: (0, 0),
            flipped: false,
            conjugated: false,
            global_phase: 0.0,
            correlation: 0.0,
        }
    }

    pub fn new(
        shift: (usize, usize),
        flipped: bool,
        global_phase: f64,
        grid: (usize, usize),
    ) -> Self {
        Self {
            shift: (shift.0 % grid.0, shift.1 % grid.1),
            flipped,
            conjugated: false,
            global_phase: wrap_angle(global_phase),
            correlation: 0.0,
        }
    }

    pub fn with_conjugation(mut self, conjugated: bool) -> Self {
        self.conjugated = conjugated;
        self
    }

    /// `e^{i phase} S_shift F^flipped C^conjugated g`.
    pub fn transform(&self, g: &ComplexGrid) -> ComplexGrid {
        let mut base = if self.flipped { flip(g) } else { g.clone() };
        if self.conjugated {
            base = base.map(|v| v.conj());
        }
        circular_shift(&base, self.shift).scale(Complex64::from_polar(1.0, self.global_phase))
    }

    /// `self` after `first`: `self.transform(first.transform(g))`.
    pub fn compose(&self, first: &Registration, grid: (usize, usize)) -> Registration {
        // F S_s = S_{-s} F and C e^{i t} = e^{-i t} C
        let (r2, c2) = if self.flipped {
            negate(first.shift, grid)
        } else {
            first.shift
        };
        let phase2 = if self.conjugated {
            -first.global_phase
        } else {
            first.global_phase
        };
        Registration::new(
            (self.shift.0 + r2, self.shift.1 + c2),
            self.flipped ^ first.flipped,
            self.global_phase + phase2,
            grid,
        )
        .with_conjugation(self.conjugated ^ first.conjugated)
    }

    pub fn inverse(&self, grid: (usize, usize)) -> Registration {
        // (e^{it} S_s F^f C^c)^-1 = C^c F^f S_-s e^{-it} = e^{-i (-1)^c t} S_{-(-1)^f s} F^f C^c
        let shift = if self.flipped {
            self.shift
        } else {
            negate(self.shift, grid)
        };
        let phase = if self.conjugated {
            self.global_phase
        } else {
            -self.global_phase
        };
        Registration::new(shift, self.flipped, phase, grid).with_conjugation(self.conjugated)
    }
}

fn negate(s: (usize, usize), grid: (usize, usize)) -> (usize, usize) {
    (
        (grid.0 - s.0 % grid.0) % grid.0,
        (grid.1 - s.1 % grid.1) % grid.1,
    )
}

/// `cross[s] = sum_n c[n] conj(r[n - s])` for every circular shift `s`.
fn cross_correlation(candidate: &ComplexGrid, reference: &ComplexGrid) -> Vec<Complex64> {
    let (rows, cols) = candidate.shape();
    let mut c = candidate.as_slice().to_vec();
    let mut r = reference.as_slice().to_vec();
    dft2_slice(&mut c, rows, cols);
    dft2_slice(&mut r, rows, cols);
    let scale = ((rows * cols) as f64).sqrt();
    for (cv, rv) in c.iter_mut().zip(&r) {
        *cv = *cv * rv.conj() * scale;
    }
    idft2_slice(&mut c, rows, cols);
    c
}

const TIE_RTOL: f64 = 1e-12;

/// Finds the group element that best maps `reference` onto `candidate`.
///
/// Both flip states are scanned (plus the conjugated reversal in complex
/// mode); for each the shift maximizing the correlation magnitude wins, and
/// the global phase is the argument of the correlation there. Ties go to the
/// unflipped state, then to the lexicographically smallest shift.
pub fn register(
    candidate: &ComplexGrid,
    reference: &ComplexGrid,
    mode: ValueMode,
) -> Result<Registration> {
    check_shape(reference.shape(), candidate.shape())?;
    if reference.norm_sqr() == 0.0 {
        return Err(Error::Degenerate("reference has zero energy".into()));
    }
    let grid = reference.shape();
    let score = |v: Complex64| match mode {
        ValueMode::Complex => v.norm(),
        ValueMode::Real => v.re.abs(),
    };

    let states: &[(bool, bool)] = match mode {
        ValueMode::Real => &[(false, false), (true, false)],
        ValueMode::Complex => &[(false, false), (true, false), (true, true)],
    };
    let mut best: Option<Registration> = None;
    for &(flipped, conjugated) in states {
        let mut base = if flipped {
            flip(reference)
        } else {
            reference.clone()
        };
        if conjugated {
            base = base.map(|v| v.conj());
        }
        let cross = cross_correlation(candidate, &base);
        let mut peak = (0usize, score(cross[0]));
        for (i, &v) in cross.iter().enumerate().skip(1) {
            let s = score(v);
            if s > peak.1 * (1.0 + TIE_RTOL) + f64::MIN_POSITIVE {
                peak = (i, s);
            }
        }
        let value = cross[peak.0];
        let phase = match mode {
            ValueMode::Complex => value.arg(),
            ValueMode::Real if value.re < 0.0 => PI,
            ValueMode::Real => 0.0,
        };
        let mut reg = Registration::new((peak.0 / grid.1, peak.0 % grid.1), flipped, phase, grid)
            .with_conjugation(conjugated);
        reg.correlation = peak.1;
        best = match best {
            Some(b) if reg.correlation <= b.correlation * (1.0 + TIE_RTOL) + f64::MIN_POSITIVE => {
                Some(b)
            }
            _ => Some(reg),
        };
    }
    Ok(best.expect("at least one state scanned"))
}

/// Undoes `reg` on a candidate so it lines up with the reference.
pub fn apply_registration(candidate: &ComplexGrid, reg: &Registration) -> ComplexGrid {
    reg.inverse(candidate.shape()).transform(candidate)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `20 log10(MAX / sqrt(MSE))` with `MAX` the reference maximum; capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(reference: &RealGrid, candidate: &RealGrid) -> Result<f64> {
    check_shape(reference.shape(), candidate.shape())?;
    let peak = reference.max();
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::Degenerate(
            "reference maximum must be positive".into(),
        ));
    }
    let mse = mean(
        &reference
            .as_slice()
            .iter()
            .zip(candidate.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .collect::<Vec<_>>(),
    );
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((20.0 * (peak / mse.sqrt()).log10()).min(PSNR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConstants {
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConstants {
    fn default() -> Self {
        Self { k1: 0.01, k2: 0.03 }
    }
}

/// Global (single-window) SSIM with default constants.
pub fn ssim(reference: &RealGrid, candidate: &RealGrid) -> Result<f64> {
    ssim_with(reference, candidate, &SsimConstants::default())
}

/// Global SSIM. `R` is the reference's dynamic range `max - min`; a flat
/// reference falls back to `R = 1`, the normalized intensity range.
pub fn ssim_with(
    reference: &RealGrid,
    candidate: &RealGrid,
    constants: &SsimConstants,
) -> Result<f64> {
    check_shape(reference.shape(), candidate.shape())?;
    let x = reference.as_slice();
    let y = candidate.as_slice();
    if x.is_empty() {
        return Err(Error::Degenerate("empty image".into()));
    }
    let range = match reference.max() - reference.min() {
        r if r > 0.0 => r,
        _ => 1.0,
    };
    let c1 = (constants.k1 * range).powi(2);
    let c2 = (constants.k2 * range).powi(2);
    let (mx, my) = (mean(x), mean(y));
    let n = x.len() as f64;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        vx += da * da;
        vy += db * db;
        cov += da * db;
    }
    let (vx, vy, cov) = (vx / n, vy / n, cov / n);
    Ok(((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    /// PSNR without registration.
    pub raw_psnr_db: f64,
    pub registration: Registration,
}

fn scored_image(g: &ComplexGrid, mode: ValueMode) -> RealGrid {
    match mode {
        ValueMode::Real => g.real_part(),
        ValueMode::Complex => g.modulus(),
    }
}

/// Registers `candidate` onto `reference`, then scores it.
pub fn registered_metrics(
    reference: &ComplexGrid,
    candidate: &ComplexGrid,
    mode: ValueMode,
) -> Result<MetricReport> {
    let registration = register(candidate, reference, mode)?;
    let aligned = apply_registration(candidate, &registration);
    let ref_img = scored_image(reference, mode);
    let aligned_img = scored_image(&aligned, mode);
    Ok(MetricReport {
        psnr_db: psnr(&ref_img, &aligned_img)?,
        ssim: ssim(&ref_img, &aligned_img)?,
        raw_psnr_db: psnr(&ref_img, &scored_image(candidate, mode))?,
        registration,
    })
}
