//! Solver dispatch and report emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use prkit_core::fourier::{crop, zero_pad};
use prkit_core::metrics::{apply_registration, registered_metrics, MetricReport, ValueMode};
use prkit_core::phasecut::{recover_signal, solve_phasecut_torus_multistart};
use prkit_core::projections::{
    magnitude_residual, multi_restart_hio, restart_phase, run_alternating, Algorithm,
    SpatialConstraint,
};
use prkit_core::relaxation::{solve_deep_relaxation, LossWeights};
use prkit_core::rng::{derive_seed, SeedLabel};
use prkit_core::{ComplexGrid, RealGrid};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Mode, SolverSpec};
use crate::imageio::{write_cpgf, write_pgm};
use crate::instances::{generate_instances, Instance};
use crate::{io_error, Error, Result};

pub const CSV_SCHEMA: &str = "prkit-report-v1";

pub const CSV_HEADER: [&str; 11] = [
    "schema",
    "instance_id",
    "solver",
    "seed",
    "status",
    "iterations",
    "final_residual",
    "registered_psnr_db",
    "registered_ssim",
    "raw_psnr_db",
    "wall_time_ms",
];

/// Index of the column excluded from replay comparisons.
pub const WALL_TIME_COLUMN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    /// The solver produced non-finite values.
    Diverged,
    /// The solver or the scoring returned an error.
    Failed,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Diverged => "diverged",
            RowStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(RowStatus::Ok),
            "diverged" => Some(RowStatus::Diverged),
            "failed" => Some(RowStatus::Failed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMetrics {
    pub iterations: usize,
    pub final_residual: f64,
    pub registered_psnr_db: f64,
    pub registered_ssim: f64,
    pub raw_psnr_db: f64,
}

/// One CSV row. `metrics` is present exactly when `status` is `Ok`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub instance_id: String,
    pub solver: String,
    pub seed: u64,
    pub status: RowStatus,
    pub metrics: Option<RowMetrics>,
    pub wall_time_ms: f64,
    /// Error text for rows that did not finish.
    pub detail: Option<String>,
}

/// A finished solver call, reduced to an inner-grid image.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub image: ComplexGrid,
    pub iterations: usize,
    /// `||b - |A x||_2` of the returned image.
    pub final_residual: f64,
    /// How the image is scored. Torus and relaxation outputs carry an
    /// arbitrary global phase, so they are always compared by modulus.
    pub scoring: ValueMode,
}

/// Seed for one solver on one instance; restarts branch from it by stream.
pub fn job_seed(master: u64, instance_id: &str, solver: &str) -> u64 {
    derive_seed(
        master,
        [SeedLabel::Str(instance_id), SeedLabel::Str(solver)],
    )
}

fn constraint_for(instance: &Instance, mode: Mode) -> SpatialConstraint {
    match mode {
        Mode::Real => SpatialConstraint::SupportNonnegative(instance.mask.clone()),
        Mode::Complex => SpatialConstraint::SupportOnly(instance.mask.clone()),
    }
}

fn residual_of(instance: &Instance, image: &ComplexGrid) -> prkit_core::Result<f64> {
    magnitude_residual(&instance.measurement, &zero_pad(image, &instance.shape)?)
}

pub fn run_solver(
    spec: &SolverSpec,
    instance: &Instance,
    mode: Mode,
    seed: u64,
) -> prkit_core::Result<SolverOutput> {
    let b = &instance.measurement;
    let (m1, m2) = instance.shape.outer();
    let scoring = mode.value_mode();
    if let Some(config) = spec.hio_config(seed) {
        let trace = match spec {
            SolverSpec::HioRestart { .. } => {
                multi_restart_hio(b, &constraint_for(instance, mode), &config)?.trace
            }
            _ => {
                let (algorithm, constraint) = match spec {
                    SolverSpec::Er { .. } => {
                        (Algorithm::ErrorReduction, constraint_for(instance, mode))
                    }
                    SolverSpec::Hio { .. } => (Algorithm::Hio, constraint_for(instance, mode)),
                    _ => {
                        let magnitude = zero_pad(&instance.image, &instance.shape)?.modulus();
                        (
                            Algorithm::GerchbergSaxton,
                            SpatialConstraint::known_magnitude(instance.mask.clone(), magnitude)?,
                        )
                    }
                };
                run_alternating(
                    b,
                    &constraint,
                    algorithm,
                    &config,
                    &restart_phase(seed, 0, m1, m2),
                )?
            }
        };
        return Ok(SolverOutput {
            image: crop(&trace.final_image, &instance.shape)?,
            iterations: trace.iterations_run,
            final_residual: trace.final_residual(),
            scoring,
        });
    }
    let config = spec
        .torus_config(seed)
        .expect("every solver is projection- or descent-based");
    let (image, iterations) = match *spec {
        SolverSpec::PhasecutTorus { starts, .. } => {
            let (_, solution) =
                solve_phasecut_torus_multistart(b, &instance.mask, &config, starts)?;
            (
                recover_signal(b, &instance.mask, &solution.phase)?,
                solution.iterations,
            )
        }
        SolverSpec::DeepRelaxation { kappa, rho, .. } => {
            let weights = LossWeights::new(kappa, rho)?;
            let solution =
                solve_deep_relaxation(b, &instance.mask, &instance.shape, &weights, &config)?;
            (solution.state.x_hat, solution.iterations)
        }
        _ => unreachable!("alternating solvers handled above"),
    };
    Ok(SolverOutput {
        final_residual: residual_of(instance, &image)?,
        image,
        iterations,
        scoring: ValueMode::Complex,
    })
}

/// Runs and scores one solver on one instance. Never fails: problems become
/// the row status.
pub fn evaluate(
    spec: &SolverSpec,
    instance: &Instance,
    mode: Mode,
    master: u64,
) -> (ReconstructionReport, Option<SolverOutput>) {
    let seed = job_seed(master, &instance.id, spec.name());
    let started = Instant::now();
    let result = run_solver(spec, instance, mode, seed);
    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    let mut report = ReconstructionReport {
        instance_id: instance.id.clone(),
        solver: spec.name().to_string(),
        seed,
        status: RowStatus::Ok,
        metrics: None,
        wall_time_ms,
        detail: None,
    };
    let output = match result {
        Ok(out) => out,
        Err(e) => {
            report.status = match e {
                prkit_core::Error::Divergence { .. } => RowStatus::Diverged,
                _ => RowStatus::Failed,
            };
            report.detail = Some(e.to_string());
            return (report, None);
        }
    };
    if !output.image.is_finite() || !output.final_residual.is_finite() {
        report.status = RowStatus::Diverged;
        report.detail = Some("non-finite reconstruction".into());
        return (report, None);
    }
    match registered_metrics(&instance.image, &output.image, output.scoring) {
        Ok(m)
            if [m.psnr_db, m.ssim, m.raw_psnr_db]
                .iter()
                .all(|v| v.is_finite()) =>
        {
            report.metrics = Some(RowMetrics {
                iterations: output.iterations,
                final_residual: output.final_residual,
                registered_psnr_db: m.psnr_db,
                registered_ssim: m.ssim,
                raw_psnr_db: m.raw_psnr_db,
            });
            (report, Some(output))
        }
        Ok(_) => {
            report.status = RowStatus::Diverged;
            report.detail = Some("non-finite metric".into());
            (report, Some(output))
        }
        Err(e) => {
            report.status = RowStatus::Failed;
            report.detail = Some(format!("scoring: {e}"));
            (report, Some(output))
        }
    }
}

/// Worker count: `PRKIT_THREADS` if set to a positive integer, capped by the
/// available cores.
pub fn worker_threads() -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("PRKIT_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
    {
        Some(n) if n > 0 => n.min(cores),
        _ => cores,
    }
}

/// Every (instance, solver) pair, in instance-major order regardless of
/// which worker finishes first.
pub fn run_jobs(
    config: &ExperimentConfig,
    instances: &[Instance],
) -> Result<Vec<(ReconstructionReport, Option<SolverOutput>)>> {
    let jobs: Vec<(&Instance, &SolverSpec)> = instances
        .iter()
        .flat_map(|inst| config.solvers.iter().map(move |spec| (inst, spec)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|(inst, spec)| evaluate(spec, inst, config.mode, config.seed))
            .collect()
    }))
}

fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

impl ReconstructionReport {
    pub fn csv_record(&self) -> [String; 11] {
        let m = self.metrics;
        let field = |f: fn(&RowMetrics) -> String| m.as_ref().map(f).unwrap_or_default();
        [
            CSV_SCHEMA.to_string(),
            self.instance_id.clone(),
            self.solver.clone(),
            self.seed.to_string(),
            self.status.as_str().to_string(),
            field(|m| m.iterations.to_string()),
            field(|m| sci(m.final_residual)),
            field(|m| sci(m.registered_psnr_db)),
            field(|m| sci(m.registered_ssim)),
            field(|m| sci(m.raw_psnr_db)),
            sci(self.wall_time_ms),
        ]
    }
}

/// Header plus one record per report, comma-separated with LF line endings.
pub fn write_csv<W: Write>(out: W, reports: &[ReconstructionReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// File-name stem for a reconstruction.
pub fn reconstruction_stem(instance_id: &str, solver: &str) -> String {
    format!("{instance_id}__{solver}")
}

/// The image shown in PGM previews: registered to the ground truth, then the
/// real part or the modulus depending on how the row was scored.
fn preview(instance: &Instance, image: &ComplexGrid, scoring: ValueMode) -> Option<RealGrid> {
    let MetricReport { registration, .. } =
        registered_metrics(&instance.image, image, scoring).ok()?;
    let aligned = apply_registration(image, &registration);
    Some(match scoring {
        ValueMode::Real => aligned.real_part(),
        ValueMode::Complex => aligned.modulus(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub reports: Vec<ReconstructionReport>,
    pub csv_path: PathBuf,
    pub reconstruction_dir: PathBuf,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_error(path))
}

/// Generates the instances, runs every solver on every instance, and writes
/// `report.csv` plus `recon/<instance>__<solver>.{cpgf,pgm}` under the
/// output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let instances = generate_instances(config)?;
    run_experiment_on(config, &instances)
}

pub fn run_experiment_on(
    config: &ExperimentConfig,
    instances: &[Instance],
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let recon_dir = config.output_dir.join("recon");
    create_dir(&recon_dir)?;
    let rows = run_jobs(config, instances)?;

    let per_instance = config.solvers.len();
    for (k, (report, output)) in rows.iter().enumerate() {
        let Some(output) = output else { continue };
        let instance = &instances[k / per_instance];
        let stem = reconstruction_stem(&report.instance_id, &report.solver);
        write_cpgf(&recon_dir.join(format!("{stem}.cpgf")), &output.image)?;
        if let Some(view) = preview(instance, &output.image, output.scoring) {
            write_pgm(&recon_dir.join(format!("{stem}.pgm")), &view, 65535)?;
        }
    }

    let reports: Vec<ReconstructionReport> = rows.into_iter().map(|(r, _)| r).collect();
    let csv_path = config.output_dir.join("report.csv");
    let file = fs::File::create(&csv_path).map_err(io_error(&csv_path))?;
    write_csv(std::io::BufWriter::new(file), &reports)?;
    Ok(ExperimentOutcome {
        reports,
        csv_path,
        reconstruction_dir: recon_dir,
    })
}

/// Writes each instance's ground truth (`instances/<id>.cpgf` and `.pgm`) and
/// measurement (`measurements/<id>.cpgf`) under the output directory.
pub fn write_instances(config: &ExperimentConfig, instances: &[Instance]) -> Result<()> {
    let image_dir = config.output_dir.join("instances");
    let meas_dir = config.output_dir.join("measurements");
    create_dir(&image_dir)?;
    create_dir(&meas_dir)?;
    for inst in instances {
        write_cpgf(&image_dir.join(format!("{}.cpgf", inst.id)), &inst.image)?;
        let view = match config.mode {
            Mode::Real => inst.image.real_part(),
            Mode::Complex => inst.image.modulus(),
        };
        write_pgm(&image_dir.join(format!("{}.pgm", inst.id)), &view, 65535)?;
        let b = ComplexGrid::from_real(inst.measurement.grid());
        write_cpgf(&meas_dir.join(format!("{}.cpgf", inst.id)), &b)?;
    }
    Ok(())
}
