//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha stream keyed by a seed
//! derived from `(master seed, labels...)`; restarts select the ChaCha stream
//! id, so runs replay bit-for-bit independent of scheduling.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{ComplexGrid, PhaseVector};

/// Label for [`derive_seed`].
#[derive(Debug, Clone, Copy)]
pub enum SeedLabel<'a> {
    Str(&'a str),
    Index(u64),
}

impl<'a> From<&'a str> for SeedLabel<'a> {
    fn from(s: &'a str) -> Self {
        SeedLabel::Str(s)
    }
}

impl From<u64> for SeedLabel<'_> {
    fn from(i: u64) -> Self {
        SeedLabel::Index(i)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a sequence of labels into a child seed.
///
/// Stable across platforms and releases: FNV-1a over the label bytes,
/// folded through splitmix64.
pub fn derive_seed<'a>(master: u64, labels: impl IntoIterator<Item = SeedLabel<'a>>) -> u64 {
    let mut state = splitmix64(master);
    for label in labels {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        match label {
            SeedLabel::Str(s) => {
                eat(&[0]);
                eat(s.as_bytes());
            }
            SeedLabel::Index(i) => {
                eat(&[1]);
                eat(&i.to_le_bytes());
            }
        }
        state = splitmix64(state ^ h);
    }
    state
}

/// Thin wrapper over a ChaCha8 stream with the draws the solvers need.
#[derive(Debug, Clone)]
pub struct InstanceRng {
    inner: ChaCha8Rng,
}

impl InstanceRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn index(&mut self, bound: usize) -> usize {
        self.inner.random_range(0..bound)
    }

    /// Standard normal draw (Box-Muller).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    /// i.i.d. phases `e^{i theta}`, `theta ~ U[0, 2 pi)`.
    pub fn phase_vector(&mut self, rows: usize, cols: usize) -> PhaseVector {
        let angles: Vec<f64> = (0..rows * cols).map(|_| TAU * self.uniform()).collect();
        PhaseVector::from_angles(rows, cols, &angles).expect("angle count matches shape")
    }

    /// Entries with independent standard normal real and imaginary parts.
    pub fn complex_grid(&mut self, rows: usize, cols: usize) -> ComplexGrid {
        ComplexGrid::from_fn(rows, cols, |_, _| {
            Complex64::new(self.normal(), self.normal())
        })
    }

    /// Real entries uniform on `[0, 1)`.
    pub fn nonnegative_grid(&mut self, rows: usize, cols: usize) -> ComplexGrid {
        ComplexGrid::from_fn(rows, cols, |_, _| Complex64::new(self.uniform(), 0.0))
    }
}
