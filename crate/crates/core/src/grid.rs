//! Value types shared by every solver: grid geometry, complex and real grids,
//! support masks, magnitude measurements and unit-modulus phase vectors.
//!
//! All grids are stored row-major in double precision.

use num_complex::Complex64;

use crate::error::{check_shape, Error, Result};

/// Tolerance on `| |u_m| - 1 |` accepted by [`PhaseVector::new`].
pub const UNIT_MODULUS_TOL: f64 = 1e-12;

/// Signal (inner) and measurement (outer) grid dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    inner: (usize, usize),
    outer: (usize, usize),
}

impl GridShape {
    pub fn new(inner: (usize, usize), outer: (usize, usize)) -> Result<Self> {
        if inner.0 == 0 || inner.1 == 0 {
            return Err(Error::InvalidInput(format!(
                "inner shape {inner:?} has a zero axis"
            )));
        }
        if outer.0 < inner.0 || outer.1 < inner.1 {
            return Err(Error::InvalidInput(format!(
                "outer shape {outer:?} is smaller than inner shape {inner:?}"
            )));
        }
        Ok(Self { inner, outer })
    }

    /// Outer shape `M_i = round(ratio * N_i)`, bumped up to the next even number.
    pub fn with_ratio(inner: (usize, usize), ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio >= 1.0) {
            return Err(Error::Config(format!(
                "oversampling ratio {ratio} must be >= 1"
            )));
        }
        let scale = |n: usize| {
            let m = (ratio * n as f64).round() as usize;
            m + (m % 2)
        };
        Self::new(inner, (scale(inner.0), scale(inner.1)))
    }

    pub fn inner(&self) -> (usize, usize) {
        self.inner
    }

    pub fn outer(&self) -> (usize, usize) {
        self.outer
    }

    pub fn inner_len(&self) -> usize {
        self.inner.0 * self.inner.1
    }

    pub fn outer_len(&self) -> usize {
        self.outer.0 * self.outer.1
    }

    /// True when `M_i >= 2 N_i - 1` on both axes.
    pub fn uniqueness_satisfied(&self) -> bool {
        self.outer.0 + 1 >= 2 * self.inner.0 && self.outer.1 + 1 >= 2 * self.inner.1
    }
}

/// Dense row-major complex grid with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} values for a {rows}x{cols} grid",
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real(grid: &RealGrid) -> Self {
        Self {
            rows: grid.rows,
            cols: grid.cols,
            data: grid.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// Used by solver internals whose arithmetic keeps values finite;
    /// callers that may produce NaN check with [`ComplexGrid::is_finite`].
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self, other> = sum conj(self_m) * other_m`.
    pub fn inner_product(&self, other: &ComplexGrid) -> Result<Complex64> {
        check_shape(self.shape(), other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn scale(&self, factor: Complex64) -> ComplexGrid {
        self.map(|z| z * factor)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexGrid {
        Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|&z| f(z)).collect(),
        )
    }

    pub fn modulus(&self) -> RealGrid {
        RealGrid::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|z| z.norm()).collect(),
        )
    }

    pub fn real_part(&self) -> RealGrid {
        RealGrid::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|z| z.re).collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &ComplexGrid) -> Result<f64> {
        check_shape(self.shape(), other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn distance_sqr(&self, other: &ComplexGrid) -> Result<f64> {
        check_shape(self.shape(), other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }
}

/// Dense row-major real grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} values for a {rows}x{cols} grid",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Binary mask over the measurement grid marking the support set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl SupportMask {
    /// Top-left `N1 x N2` rectangle of the outer grid.
    pub fn rectangular(shape: &GridShape) -> Self {
        let (m1, m2) = shape.outer();
        let (n1, n2) = shape.inner();
        let cells = (0..m1 * m2).map(|i| i / m2 < n1 && i % m2 < n2).collect();
        Self {
            rows: m1,
            cols: m2,
            cells,
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![true; rows * cols],
        }
    }

    pub fn from_cells(rows: usize, cols: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} cells for a {rows}x{cols} mask",
                cells.len()
            )));
        }
        if !cells.iter().any(|&c| c) {
            return Err(Error::InvalidInput("support mask is empty".into()));
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Smallest `(rows, cols)` such that every in-support cell lies in the
    /// top-left rectangle of that size.
    pub fn extent(&self) -> (usize, usize) {
        let mut extent = (0, 0);
        for (i, _) in self.cells.iter().enumerate().filter(|(_, &c)| c) {
            extent.0 = extent.0.max(i / self.cols + 1);
            extent.1 = extent.1.max(i % self.cols + 1);
        }
        extent
    }
}

/// Nonnegative Fourier magnitudes `b = |A x|` on the measurement grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeMeasurement(RealGrid);

impl MagnitudeMeasurement {
    pub fn new(values: RealGrid) -> Result<Self> {
        if let Some(i) = values.data.iter().position(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "measurement value {} at index {i} is negative or non-finite",
                values.data[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(RealGrid::from_vec(rows, cols, values)?)
    }

    pub(crate) fn from_raw(grid: RealGrid) -> Self {
        Self(grid)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn values(&self) -> &[f64] {
        &self.0.data
    }

    pub fn grid(&self) -> &RealGrid {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.data.iter().map(|v| v * v).sum()
    }

    pub fn max(&self) -> f64 {
        self.0.max()
    }

    /// Uniformly rescaled copy, `c * b` for `c >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let data = self.0.data.iter().map(|v| v * factor).collect();
        Self::new(RealGrid::from_raw(self.0.rows, self.0.cols, data))
    }
}

/// Unit-modulus complex grid on the measurement grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    rows: usize,
    cols: usize,
    values: Vec<Complex64>,
}

impl PhaseVector {
    pub fn new(rows: usize, cols: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} values for a {rows}x{cols} phase vector",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|u| {
            let gap = (u.norm() - 1.0).abs();
            gap.is_nan() || gap > UNIT_MODULUS_TOL
        }) {
            return Err(Error::InvalidInput(format!(
                "entry {i} has modulus {}, expected 1",
                values[i].norm()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// All entries equal to `1 + 0i`.
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![Complex64::new(1.0, 0.0); rows * cols],
        }
    }

    /// `e^{i theta_m}` per cell.
    pub fn from_angles(rows: usize, cols: usize, angles: &[f64]) -> Result<Self> {
        if angles.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} angles for a {rows}x{cols} phase vector",
                angles.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            values: angles
                .iter()
                .map(|&t| Complex64::from_polar(1.0, t))
                .collect(),
        })
    }

    /// Rescales every cell of `values` to unit modulus; zero (or non-finite)
    /// cells become `1 + 0i`.
    pub fn normalize(rows: usize, cols: usize, values: &[Complex64]) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            values: values.iter().map(|&z| unit_phase(z)).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn to_grid(&self) -> ComplexGrid {
        ComplexGrid::from_raw(self.rows, self.cols, self.values.clone())
    }

    /// Rotates every entry by the same global phase.
    pub fn rotated(&self, theta: f64) -> Self {
        let w = Complex64::from_polar(1.0, theta);
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&u| u * w).collect(),
        }
    }
}

/// `z / |z|`, or `1 + 0i` when `z` is zero or not finite.
///
/// Moduli whose square under- or overflows take a slower path that
/// renormalizes the quotient once more, so the result is unit to within a
/// couple of ulps for any finite input.
pub fn unit_phase(z: Complex64) -> Complex64 {
    let r2 = z.norm_sqr();
    if (f64::MIN_POSITIVE..f64::MAX).contains(&r2) {
        return z / r2.sqrt();
    }
    let r = z.norm();
    if r > 0.0 && r.is_finite() {
        let u = z / r;
        u / u.norm()
    } else {
        Complex64::new(1.0, 0.0)
    }
}
