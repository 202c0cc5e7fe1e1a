//! Test instances: synthetic images or files on disk, each paired with its
//! noiseless magnitude measurement.

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use prkit_core::fourier::forward_magnitude;
use prkit_core::rng::{derive_seed, InstanceRng, SeedLabel};
use prkit_core::{Complex64, ComplexGrid, GridShape, MagnitudeMeasurement, RealGrid, SupportMask};

use crate::config::{ExperimentConfig, InstanceSource, Mode, SyntheticKind};
use crate::imageio::{read_image, Image};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    /// Ground truth on the inner grid.
    pub image: ComplexGrid,
    pub shape: GridShape,
    pub mask: SupportMask,
    pub measurement: MagnitudeMeasurement,
}

impl Instance {
    pub fn new(id: String, image: ComplexGrid, shape: GridShape) -> Result<Self> {
        let measurement = forward_magnitude(&image, &shape)?;
        Ok(Self {
            id,
            mask: SupportMask::rectangular(&shape),
            image,
            shape,
            measurement,
        })
    }
}

fn normalize_peak(values: &mut [f64]) {
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v /= peak);
    }
}

/// A nonnegative image with intensities in `[0, 1]`.
pub fn synthesize(kind: SyntheticKind, inner: (usize, usize), rng: &mut InstanceRng) -> RealGrid {
    let (rows, cols) = inner;
    let mut values = vec![0.0; rows * cols];
    match kind {
        SyntheticKind::RandomNonneg => values.iter_mut().for_each(|v| *v = rng.uniform()),
        SyntheticKind::Beads => {
            // discs of random radius and brightness, overlaps add up
            let beads = 3 + rng.index(6);
            let max_radius = (rows.min(cols) as f64 / 5.0).max(1.0);
            for _ in 0..beads {
                let (c1, c2) = (
                    rng.uniform_range(0.0, rows as f64),
                    rng.uniform_range(0.0, cols as f64),
                );
                let radius = rng.uniform_range(0.75, max_radius.max(0.75));
                let brightness = rng.uniform_range(0.5, 1.0);
                for r in 0..rows {
                    for c in 0..cols {
                        let d2 = (r as f64 + 0.5 - c1).powi(2) + (c as f64 + 0.5 - c2).powi(2);
                        if d2 <= radius * radius {
                            values[r * cols + c] += brightness;
                        }
                    }
                }
            }
            if values.iter().all(|&v| v == 0.0) {
                values[rng.index(rows * cols)] = 1.0;
            }
        }
        SyntheticKind::Sparse => {
            let spikes = (rows * cols / 16).max(1);
            for _ in 0..spikes {
                values[rng.index(rows * cols)] = rng.uniform_range(0.5, 1.0);
            }
        }
    }
    if kind != SyntheticKind::RandomNonneg {
        normalize_peak(&mut values);
    }
    RealGrid::from_vec(rows, cols, values).expect("sized from the shape")
}

/// Multiplies `x` by a slowly varying phase: a random tilt plus a random
/// quadratic bowl.
pub fn with_smooth_phase(x: &RealGrid, rng: &mut InstanceRng) -> ComplexGrid {
    let (rows, cols) = x.shape();
    let tilt = (rng.uniform_range(-0.5, 0.5), rng.uniform_range(-0.5, 0.5));
    let bowl = rng.uniform_range(0.0, PI);
    ComplexGrid::from_fn(rows, cols, |r, c| {
        let (p, q) = (r as f64 / rows as f64, c as f64 / cols as f64);
        let phi = TAU * (tilt.0 * p + tilt.1 * q) + bowl * ((p - 0.5).powi(2) + (q - 0.5).powi(2));
        Complex64::from_polar(x.get(r, c), phi)
    })
}

fn phase_rng(config: &ExperimentConfig, id: &str) -> InstanceRng {
    InstanceRng::new(derive_seed(
        config.seed,
        [SeedLabel::Str("phase"), SeedLabel::Str(id)],
    ))
}

fn file_instances(config: &ExperimentConfig, pattern: &str) -> Result<Vec<(String, ComplexGrid)>> {
    let paths =
        glob::glob(pattern).map_err(|e| Error::Config(format!("bad glob {pattern:?}: {e}")))?;
    let mut paths: Vec<PathBuf> = paths
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("glob {pattern:?}: {e}")))?;
    paths.sort();
    let mut out: Vec<(String, ComplexGrid)> = Vec::with_capacity(paths.len());
    for path in paths {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        if out.iter().any(|(seen, _)| *seen == id) {
            return Err(Error::Config(format!(
                "two input files share the name {id:?}"
            )));
        }
        let image = match (read_image(&path)?, config.mode) {
            (Image::Real(g), Mode::Real) => ComplexGrid::from_real(&g),
            (Image::Real(g), Mode::Complex) => with_smooth_phase(&g, &mut phase_rng(config, &id)),
            (Image::Complex(g), Mode::Complex) => g,
            (Image::Complex(g), Mode::Real) => {
                if g.as_slice().iter().any(|v| v.im != 0.0) {
                    return Err(Error::Config(format!(
                        "{} holds complex values; use --mode complex",
                        path.display()
                    )));
                }
                g
            }
        };
        out.push((id, image));
    }
    Ok(out)
}

/// Builds every configured instance. Synthetic instance `i` draws from a
/// stream keyed by `(seed, kind, i)`, so instances do not depend on `count`.
pub fn generate_instances(config: &ExperimentConfig) -> Result<Vec<Instance>> {
    let images = match &config.instances {
        InstanceSource::Synthetic {
            kind,
            count,
            inner_shape,
        } => (0..*count)
            .map(|i| {
                let id = format!("{}-{i:04}", kind.name());
                let mut rng = InstanceRng::new(derive_seed(
                    config.seed,
                    [
                        SeedLabel::Str("instance"),
                        SeedLabel::Str(kind.name()),
                        SeedLabel::Index(i as u64),
                    ],
                ));
                let x = synthesize(*kind, (inner_shape[0], inner_shape[1]), &mut rng);
                let image = match config.mode {
                    Mode::Real => ComplexGrid::from_real(&x),
                    Mode::Complex => with_smooth_phase(&x, &mut phase_rng(config, &id)),
                };
                (id, image)
            })
            .collect(),
        InstanceSource::Files { path } => file_instances(config, path)?,
    };
    images
        .into_iter()
        .map(|(id, image)| {
            let shape = config.grid_for(image.shape())?;
            Instance::new(id, image, shape)
        })
        .collect()
}
