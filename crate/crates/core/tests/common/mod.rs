#![allow(dead_code)]

use std::f64::consts::TAU;

use prkit_core::fourier::forward;
use prkit_core::projections::phase_of_spectrum;
use prkit_core::rng::InstanceRng;
use prkit_core::{
    Complex64, ComplexGrid, GridShape, MagnitudeMeasurement, PhaseVector, SupportMask,
};

pub struct Instance {
    pub shape: GridShape,
    pub mask: SupportMask,
    pub x: ComplexGrid,
    pub b: MagnitudeMeasurement,
    /// Phase of `A x`.
    pub u_true: PhaseVector,
}

pub fn instance_from(x: ComplexGrid, outer: (usize, usize)) -> Instance {
    let shape = GridShape::new(x.shape(), outer).unwrap();
    let y = forward(&x, &shape).unwrap();
    let b = MagnitudeMeasurement::from_vec(
        outer.0,
        outer.1,
        y.as_slice().iter().map(|v| v.norm()).collect(),
    )
    .unwrap();
    Instance {
        mask: SupportMask::rectangular(&shape),
        u_true: phase_of_spectrum(&y),
        shape,
        x,
        b,
    }
}

pub fn nonneg_instance(
    rng: &mut InstanceRng,
    inner: (usize, usize),
    outer: (usize, usize),
) -> Instance {
    instance_from(rng.nonnegative_grid(inner.0, inner.1), outer)
}

pub fn complex_instance(
    rng: &mut InstanceRng,
    inner: (usize, usize),
    outer: (usize, usize),
) -> Instance {
    instance_from(rng.complex_grid(inner.0, inner.1), outer)
}

/// Textbook O(M^2 N^2) DFT of the zero-padded `x`, unitary scaling.
pub fn naive_forward(x: &ComplexGrid, outer: (usize, usize)) -> Vec<Complex64> {
    let (n1, n2) = x.shape();
    let (m1, m2) = outer;
    let scale = 1.0 / ((m1 * m2) as f64).sqrt();
    let mut out = Vec::with_capacity(m1 * m2);
    for k1 in 0..m1 {
        for k2 in 0..m2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..n1 {
                for c in 0..n2 {
                    let angle = -TAU * ((k1 * a) as f64 / m1 as f64 + (k2 * c) as f64 / m2 as f64);
                    acc += x.get(a, c) * Complex64::from_polar(1.0, angle);
                }
            }
            out.push(acc * scale);
        }
    }
    out
}

/// Naive inverse DFT over the full grid.
pub fn naive_inverse(g: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let scale = 1.0 / ((rows * cols) as f64).sqrt();
    let mut out = Vec::with_capacity(rows * cols);
    for n1 in 0..rows {
        for n2 in 0..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for k1 in 0..rows {
                for k2 in 0..cols {
                    let angle =
                        TAU * ((k1 * n1) as f64 / rows as f64 + (k2 * n2) as f64 / cols as f64);
                    acc += g[k1 * cols + k2] * Complex64::from_polar(1.0, angle);
                }
            }
            out.push(acc * scale);
        }
    }
    out
}

/// Dense `A` as an `M x N` column-major-agnostic row-major table.
pub fn dense_a(shape: &GridShape) -> nalgebra::DMatrix<Complex64> {
    let (n1, n2) = shape.inner();
    let (m1, m2) = shape.outer();
    let scale = 1.0 / ((m1 * m2) as f64).sqrt();
    nalgebra::DMatrix::from_fn(m1 * m2, n1 * n2, |k, n| {
        let (k1, k2) = (k / m2, k % m2);
        let (a, c) = (n / n2, n % n2);
        let angle = -TAU * ((k1 * a) as f64 / m1 as f64 + (k2 * c) as f64 / m2 as f64);
        Complex64::from_polar(scale, angle)
    })
}

pub fn random_direction(rng: &mut InstanceRng, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::new(rng.normal(), rng.normal()))
        .collect()
}

/// Real angles for a tangential perturbation `u * exp(i t theta)`.
pub fn random_angles(rng: &mut InstanceRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.normal()).collect()
}

pub fn perturb_phase(u: &PhaseVector, theta: &[f64], t: f64) -> PhaseVector {
    let (rows, cols) = u.shape();
    let values = u
        .as_slice()
        .iter()
        .zip(theta)
        .map(|(&v, &th)| v * Complex64::from_polar(1.0, t * th))
        .collect();
    PhaseVector::new(rows, cols, values).unwrap()
}

/// `Re <g, d>` summed over cells.
pub fn real_inner(g: &[Complex64], d: &[Complex64]) -> f64 {
    g.iter().zip(d).map(|(a, b)| (a.conj() * b).re).sum()
}

pub fn max_abs(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}
