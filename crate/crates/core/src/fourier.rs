//! Oversampled DFT measurement model.
//!
//! The measurement operator is `A = F_M P_N`: zero-pad the `N1 x N2` signal
//! into the top-left corner of the `M1 x M2` grid, then apply the unitary 2-D
//! DFT (scaled by `1/sqrt(M1 M2)`). Because `F_M` is unitary and `P_N` has
//! orthonormal columns, the pseudo-inverse is the adjoint: `A^+ = P_N^T F_M^H`.
//! Every map here is matrix-free.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{check_shape, Result};
use crate::grid::{ComplexGrid, GridShape, MagnitudeMeasurement, RealGrid, SupportMask};

thread_local! {
    // Planners cache plans internally; one per thread keeps them lock-free.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// In-place unitary 2-D DFT of a row-major buffer.
fn fft2_in_place(data: &mut [Complex64], rows: usize, cols: usize, direction: Direction) {
    debug_assert_eq!(data.len(), rows * cols);
    if data.is_empty() {
        return;
    }
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        match direction {
            Direction::Forward => (p.plan_fft_forward(cols), p.plan_fft_forward(rows)),
            Direction::Inverse => (p.plan_fft_inverse(cols), p.plan_fft_inverse(rows)),
        }
    });

    let scratch_len = row_fft
        .get_inplace_scratch_len()
        .max(col_fft.get_inplace_scratch_len());
    let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];

    // rows are contiguous: one batched call
    row_fft.process_with_scratch(data, &mut scratch[..row_fft.get_inplace_scratch_len()]);

    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        col_fft.process_with_scratch(
            &mut column,
            &mut scratch[..col_fft.get_inplace_scratch_len()],
        );
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }

    let norm = 1.0 / ((rows * cols) as f64).sqrt();
    for z in data.iter_mut() {
        *z *= norm;
    }
}

pub(crate) fn dft2_slice(data: &mut [Complex64], rows: usize, cols: usize) {
    fft2_in_place(data, rows, cols, Direction::Forward);
}

pub(crate) fn idft2_slice(data: &mut [Complex64], rows: usize, cols: usize) {
    fft2_in_place(data, rows, cols, Direction::Inverse);
}

/// Unitary forward 2-D DFT.
pub fn dft2_normalized(g: &ComplexGrid) -> ComplexGrid {
    let mut out = g.clone();
    let (rows, cols) = g.shape();
    dft2_slice(out.as_mut_slice(), rows, cols);
    out
}

/// Unitary inverse 2-D DFT; exact inverse of [`dft2_normalized`].
pub fn idft2_normalized(g: &ComplexGrid) -> ComplexGrid {
    let mut out = g.clone();
    let (rows, cols) = g.shape();
    idft2_slice(out.as_mut_slice(), rows, cols);
    out
}

/// `P_N x`: embed an inner-sized grid in the top-left of a zero outer grid.
pub fn zero_pad(x: &ComplexGrid, shape: &GridShape) -> Result<ComplexGrid> {
    check_shape(shape.inner(), x.shape())?;
    let (n1, n2) = shape.inner();
    let (m1, m2) = shape.outer();
    let mut out = ComplexGrid::zeros(m1, m2);
    let dst = out.as_mut_slice();
    for (r, row) in x.as_slice().chunks(n2).enumerate().take(n1) {
        dst[r * m2..r * m2 + n2].copy_from_slice(row);
    }
    Ok(out)
}

/// `P_N^T g`: the inner top-left rectangle of an outer-sized grid.
pub fn crop(g: &ComplexGrid, shape: &GridShape) -> Result<ComplexGrid> {
    check_shape(shape.outer(), g.shape())?;
    Ok(crop_unchecked(g.as_slice(), shape))
}

pub(crate) fn crop_unchecked(data: &[Complex64], shape: &GridShape) -> ComplexGrid {
    let (n1, n2) = shape.inner();
    let m2 = shape.outer().1;
    let mut out = Vec::with_capacity(n1 * n2);
    for r in 0..n1 {
        out.extend_from_slice(&data[r * m2..r * m2 + n2]);
    }
    ComplexGrid::from_raw(n1, n2, out)
}

/// `A x = F_M P_N x`.
pub fn forward(x: &ComplexGrid, shape: &GridShape) -> Result<ComplexGrid> {
    let mut padded = zero_pad(x, shape)?;
    let (m1, m2) = shape.outer();
    dft2_slice(padded.as_mut_slice(), m1, m2);
    Ok(padded)
}

/// `A^+ g = A^H g = P_N^T F_M^H g`.
pub fn pseudo_inverse(g: &ComplexGrid, shape: &GridShape) -> Result<ComplexGrid> {
    check_shape(shape.outer(), g.shape())?;
    let z = idft2_normalized(g);
    Ok(crop_unchecked(z.as_slice(), shape))
}

/// `T(x) = |A x|`.
pub fn forward_magnitude(x: &ComplexGrid, shape: &GridShape) -> Result<MagnitudeMeasurement> {
    let spectrum = forward(x, shape)?;
    let (m1, m2) = shape.outer();
    let values = spectrum.as_slice().iter().map(|z| z.norm()).collect();
    Ok(MagnitudeMeasurement::from_raw(RealGrid::from_raw(
        m1, m2, values,
    )))
}

/// Zeroes every cell outside the mask, in place.
pub(crate) fn restrict_to_mask(data: &mut [Complex64], mask: &SupportMask) {
    for (z, &keep) in data.iter_mut().zip(mask.cells()) {
        if !keep {
            *z = Complex64::new(0.0, 0.0);
        }
    }
}

/// `A A^+ g` for the support given by `mask`, evaluated as
/// `dft2(mask * idft2(g))`. Idempotent, Hermitian, and a contraction.
pub fn apply_range_projector(g: &ComplexGrid, mask: &SupportMask) -> Result<ComplexGrid> {
    check_shape(mask.shape(), g.shape())?;
    let (rows, cols) = g.shape();
    let mut out = g.clone();
    idft2_slice(out.as_mut_slice(), rows, cols);
    restrict_to_mask(out.as_mut_slice(), mask);
    dft2_slice(out.as_mut_slice(), rows, cols);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::InstanceRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn one_point_dft_is_identity() {
        let g = ComplexGrid::from_vec(1, 1, vec![c(2.5, -1.0)]).unwrap();
        assert_eq!(dft2_normalized(&g), g);
    }

    #[test]
    fn delta_transforms_to_constant() {
        let g = ComplexGrid::from_fn(4, 4, |r, cc| {
            if r == 0 && cc == 0 {
                c(3.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let f = dft2_normalized(&g);
        for z in f.as_slice() {
            assert!((z - c(0.75, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn non_square_round_trip() {
        let mut rng = InstanceRng::new(7);
        let g = rng.complex_grid(5, 12);
        let back = idft2_normalized(&dft2_normalized(&g));
        assert!(back.max_abs_diff(&g).unwrap() < 1e-12);
        assert!((dft2_normalized(&g).norm() - g.norm()).abs() < 1e-12 * g.norm());
    }

    #[test]
    fn zero_pad_places_signal_top_left() {
        let shape = GridShape::new((2, 2), (4, 4)).unwrap();
        let x = ComplexGrid::from_fn(2, 2, |_, _| c(1.0, 0.0));
        let p = zero_pad(&x, &shape).unwrap();
        for r in 0..4 {
            for cc in 0..4 {
                let expected = if r < 2 && cc < 2 { 1.0 } else { 0.0 };
                assert_eq!(p.get(r, cc), c(expected, 0.0));
            }
        }
        let zero = zero_pad(&ComplexGrid::zeros(2, 2), &shape).unwrap();
        assert_eq!(zero.norm_sqr(), 0.0);
    }

    #[test]
    fn crop_of_constant_is_constant() {
        let shape = GridShape::new((2, 2), (4, 4)).unwrap();
        let g = ComplexGrid::from_fn(4, 4, |_, _| c(0.5, 2.0));
        let x = crop(&g, &shape).unwrap();
        assert_eq!(x.shape(), (2, 2));
        assert!(x.as_slice().iter().all(|&z| z == c(0.5, 2.0)));
    }

    #[test]
    fn shape_errors() {
        let shape = GridShape::new((2, 2), (4, 4)).unwrap();
        assert!(zero_pad(&ComplexGrid::zeros(3, 2), &shape).is_err());
        assert!(crop(&ComplexGrid::zeros(2, 2), &shape).is_err());
        assert!(forward_magnitude(&ComplexGrid::zeros(4, 4), &shape).is_err());
        let mask = SupportMask::rectangular(&shape);
        assert!(apply_range_projector(&ComplexGrid::zeros(2, 4), &mask).is_err());
    }

    #[test]
    fn delta_measurement_is_flat() {
        let shape = GridShape::new((2, 2), (4, 4)).unwrap();
        let x = ComplexGrid::from_fn(2, 2, |r, cc| {
            if r == 0 && cc == 0 {
                c(4.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let b = forward_magnitude(&x, &shape).unwrap();
        assert!(b.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn projector_fixes_its_range() {
        let shape = GridShape::new((3, 3), (8, 8)).unwrap();
        let mask = SupportMask::rectangular(&shape);
        let mut rng = InstanceRng::new(11);
        let x = rng.complex_grid(3, 3);
        let g = forward(&x, &shape).unwrap();
        let p = apply_range_projector(&g, &mask).unwrap();
        assert!(p.max_abs_diff(&g).unwrap() < 1e-12);
    }
}
