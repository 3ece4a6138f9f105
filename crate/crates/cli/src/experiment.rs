//! Trial execution and artifact output: runs the configured method over
//! derived per-trial seeds, scores against ground truth when available and
//! writes results.csv / summary.csv / sweep.csv plus optional raw matrix
//! dumps.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use spdc_core::clustering::{affinity, spectral_cluster, DEFAULT_RESTARTS};
use spdc_core::descriptors::{grid_regions, region_covariance, texture_features, GrayImage};
use spdc_core::error::Error as CoreError;
use spdc_core::kernels::gram;
use spdc_core::metrics::{accuracy, nmi};
use spdc_core::solver::solve;
use spdc_core::spd::SpdMatrix;
use spdc_core::synth::generate;

use crate::config::{DataSource, ExperimentConfig, Method};
use crate::dataset::{read_dataset, write_matrix_f64};
use crate::{CliError, CliResult};

/// Fallback eigenvalue floor for descriptor covariances when the config
/// does not set one.
const DESCRIPTOR_FLOOR: f64 = 1e-6;

/// One row of results.csv.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: &'static str,
    pub kernel: Option<&'static str>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub iters: usize,
    pub converged: bool,
    pub accuracy: Option<f64>,
    pub nmi: Option<f64>,
    pub wall_ms: f64,
}

/// Mean and sample standard deviation of the scored trials.
#[derive(Debug, Clone, Copy, Default)]
pub struct Summary {
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    pub mean_nmi: Option<f64>,
    pub std_nmi: Option<f64>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
    pub warnings: Vec<String>,
}

/// One row of sweep.csv.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub gamma: f64,
    pub mean_accuracy: Option<f64>,
    pub mean_nmi: Option<f64>,
}

/// Runs every trial of the configured experiment and writes results.csv
/// and summary.csv (plus optional coeff.f64 / affinity.f64 dumps from the
/// last trial) into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> CliResult<ExperimentOutcome> {
    let mut warnings = Vec::new();

    // Fixed data sources are loaded once; synthetic data is drawn per
    // trial from the derived seed.
    let fixed: Option<(Vec<SpdMatrix>, Option<Vec<usize>>)> = match &config.data {
        DataSource::Synthetic(_) => None,
        DataSource::Images { dir, tile } => {
            let (data, labels) = load_image_descriptors(dir, *tile, config.floor)?;
            Some((data, Some(labels)))
        }
        DataSource::Dataset { path } => {
            let dataset = read_dataset(path, config.floor)?;
            Some((dataset.matrices, dataset.labels))
        }
    };

    let dim = match (&fixed, &config.data) {
        (Some((data, _)), _) => data.first().map(|m| m.dim()).unwrap_or(0),
        (None, DataSource::Synthetic(spec)) => spec.dim,
        _ => 0,
    };
    if let Some(kernel) = &config.kernel {
        if config.method.uses_kernel() && kernel.positive_definiteness_warning(dim) {
            warnings.push(format!(
                "Stein beta is outside the positive definiteness range for d={dim}; \
                 the Gram matrix may be indefinite"
            ));
        }
    }

    let results: CliResult<Vec<(TrialRecord, Option<TrialDump>, Option<usize>)>> = (0
        ..config.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = config.base_seed.wrapping_add(trial as u64);
            let want_dump = config.dump_matrices
                && trial + 1 == config.trials
                && config.method.uses_kernel();

            let owned;
            let (data, truth): (&[SpdMatrix], Option<&[usize]>) = match &fixed {
                Some((data, labels)) => (data, labels.as_deref()),
                None => {
                    let DataSource::Synthetic(spec) = &config.data else {
                        unreachable!("non-synthetic sources are preloaded")
                    };
                    let mut spec = *spec;
                    spec.seed = seed;
                    owned = generate(&spec).map_err(|e| stage_error("synth", e))?;
                    (&owned.0, Some(&owned.1))
                }
            };

            let started = Instant::now();
            let output = execute_trial(config, data, seed, want_dump)?;
            let wall_ms = started.elapsed().as_secs_f64() * 1e3;

            let (acc, mi) = match truth {
                Some(truth) => (
                    Some(accuracy(&output.labels, truth).map_err(|e| stage_error("score", e))?),
                    Some(nmi(&output.labels, truth).map_err(|e| stage_error("score", e))?),
                ),
                None => (None, None),
            };

            let record = TrialRecord {
                trial,
                method: config.method.name(),
                kernel: config
                    .method
                    .uses_kernel()
                    .then(|| config.kernel.as_ref().map(|k| k.name()))
                    .flatten(),
                gamma: config.method.uses_kernel().then(|| config.gamma()).flatten(),
                lambda: config.method.uses_kernel().then_some(config.solver.lambda),
                rho: config.method.uses_kernel().then_some(config.solver.rho),
                iters: output.iters,
                converged: output.converged,
                accuracy: acc,
                nmi: mi,
                wall_ms,
            };
            let degenerate = output.degenerate_affinity.then_some(trial);
            Ok((record, output.dump, degenerate))
        })
        .collect();

    let results = results?;
    let mut records = Vec::with_capacity(results.len());
    let mut dump = None;
    for (record, trial_dump, degenerate) in results {
        if let Some(trial) = degenerate {
            warnings.push(format!(
                "trial {trial}: affinity matrix is all zero (coefficients fully \
                 shrunk); labels fall back to a single cluster"
            ));
        }
        if trial_dump.is_some() {
            dump = trial_dump;
        }
        records.push(record);
    }

    let summary = summarize(&records);
    write_results_csv(&config.output_dir.join("results.csv"), &records)?;
    write_summary_csv(&config.output_dir.join("summary.csv"), &summary)?;
    if let Some(d) = dump {
        write_matrix_f64(&config.output_dir.join("coeff.f64"), &d.coefficients)?;
        write_matrix_f64(&config.output_dir.join("affinity.f64"), &d.affinity)?;
    }

    Ok(ExperimentOutcome {
        records,
        summary,
        warnings,
    })
}

/// Runs the experiment once per γ value, each into its own subdirectory,
/// and writes sweep.csv (gamma, mean accuracy, mean NMI) at the top level.
pub fn gamma_sweep(
    config: &ExperimentConfig,
    gammas: &[f64],
) -> CliResult<Vec<SweepRow>> {
    if gammas.is_empty() {
        return Err(CliError::Config("gamma sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(gammas.len());
    for (index, &gamma) in gammas.iter().enumerate() {
        let mut run = config.with_gamma(gamma)?;
        run.output_dir = config.output_dir.join(format!("gamma_{index:02}"));
        let outcome = run_experiment(&run)?;
        rows.push(SweepRow {
            gamma,
            mean_accuracy: outcome.summary.mean_accuracy,
            mean_nmi: outcome.summary.mean_nmi,
        });
    }

    let mut text = String::from("gamma,mean_accuracy,mean_nmi\n");
    for row in &rows {
        text.push_str(&format!(
            "{},{},{}\n",
            row.gamma,
            fmt_opt(row.mean_accuracy),
            fmt_opt(row.mean_nmi)
        ));
    }
    write_text(&config.output_dir.join("sweep.csv"), &text)?;
    Ok(rows)
}

struct TrialDump {
    coefficients: DMatrix<f64>,
    affinity: DMatrix<f64>,
}

struct TrialOutput {
    labels: Vec<usize>,
    iters: usize,
    converged: bool,
    degenerate_affinity: bool,
    dump: Option<TrialDump>,
}

fn execute_trial(
    config: &ExperimentConfig,
    data: &[SpdMatrix],
    seed: u64,
    want_dump: bool,
) -> CliResult<TrialOutput> {
    match config.method {
        Method::Ksscr | Method::Kssce => {
            let kernel = config
                .kernel
                .as_ref()
                .expect("validated: kernel methods carry a kernel spec");
            let k = gram(data, kernel).map_err(|e| stage_error("gram", e))?;
            let report = solve(&k, &config.solver).map_err(|e| stage_error("solve", e))?;
            let w = affinity(&report.c);

            // A fully shrunk coefficient matrix leaves nothing to segment;
            // fall back to one cluster so extreme kernel widths degrade to
            // chance-level scores instead of aborting the run.
            let (labels, degenerate) = match spectral_cluster(&w, config.clusters, seed) {
                Ok(result) => (result.labels, false),
                Err(CoreError::Degenerate(_)) => (vec![0; data.len()], true),
                Err(e) => return Err(stage_error("spectral", e)),
            };

            let dump = want_dump.then(|| TrialDump {
                coefficients: report.c.entries().clone(),
                affinity: w.entries().clone(),
            });
            Ok(TrialOutput {
                labels,
                iters: report.iters_used,
                converged: report.converged,
                degenerate_affinity: degenerate,
                dump,
            })
        }
        Method::KmeansLog | Method::KmeansRaw => {
            let points = match config.method {
                Method::KmeansLog => vectorize_logs(data)?,
                _ => vectorize_raw(data),
            };
            let result =
                spdc_core::clustering::kmeans(&points, config.clusters, seed, DEFAULT_RESTARTS)
                    .map_err(|e| stage_error("kmeans", e))?;
            Ok(TrialOutput {
                labels: result.labels,
                iters: 0,
                converged: true,
                degenerate_affinity: false,
                dump: None,
            })
        }
    }
}

fn vectorize_logs(data: &[SpdMatrix]) -> CliResult<DMatrix<f64>> {
    let logs = data
        .iter()
        .map(|m| m.log())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| stage_error("log", e))?;
    Ok(flatten_rows(&logs))
}

fn vectorize_raw(data: &[SpdMatrix]) -> DMatrix<f64> {
    let raw: Vec<DMatrix<f64>> = data.iter().map(|m| m.matrix().clone()).collect();
    flatten_rows(&raw)
}

fn flatten_rows(matrices: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d2 = matrices[0].len();
    let mut points = DMatrix::zeros(matrices.len(), d2);
    for (i, m) in matrices.iter().enumerate() {
        for (j, &v) in m.iter().enumerate() {
            points[(i, j)] = v;
        }
    }
    points
}

/// Loads every `.pgm`/`.rcmf` image in the directory (sorted by file
/// name), tiles each into square regions and computes one region
/// covariance descriptor per tile. Each image is one class; its tiles
/// inherit its label.
pub fn load_image_descriptors(
    dir: &Path,
    tile: usize,
    floor: Option<f64>,
) -> CliResult<(Vec<SpdMatrix>, Vec<usize>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("rcmf")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no .pgm or .rcmf images found",
            dir.display()
        )));
    }

    let mut descriptors = Vec::new();
    let mut labels = Vec::new();
    for (class, file) in files.iter().enumerate() {
        let bytes =
            fs::read(file).map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
        let image = GrayImage::from_bytes(&bytes)
            .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
        let stack = texture_features(&image)
            .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
        let regions = grid_regions(&image, tile)
            .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
        for region in regions {
            let descriptor =
                region_covariance(&stack, region, floor.unwrap_or(DESCRIPTOR_FLOOR))
                    .map_err(|e| stage_error("descriptor", e))?;
            descriptors.push(descriptor);
            labels.push(class);
        }
    }
    Ok((descriptors, labels))
}

fn stage_error(stage: &'static str, error: CoreError) -> CliError {
    match error {
        CoreError::Numeric(message) => CliError::Numeric { stage, message },
        other => CliError::Config(format!("{stage}: {other}")),
    }
}

fn summarize(records: &[TrialRecord]) -> Summary {
    let accs: Vec<f64> = records.iter().filter_map(|r| r.accuracy).collect();
    let nmis: Vec<f64> = records.iter().filter_map(|r| r.nmi).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    let (mean_nmi, std_nmi) = mean_std(&nmis);
    Summary {
        mean_accuracy,
        std_accuracy,
        mean_nmi,
        std_nmi,
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

fn write_results_csv(path: &Path, records: &[TrialRecord]) -> CliResult<()> {
    let mut text = String::from(
        "trial,method,kernel,gamma,lambda,rho,iters,converged,accuracy,nmi,wall_ms\n",
    );
    for r in records {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.trial,
            r.method,
            r.kernel.unwrap_or(""),
            fmt_opt(r.gamma),
            fmt_opt(r.lambda),
            fmt_opt(r.rho),
            r.iters,
            r.converged,
            fmt_opt(r.accuracy),
            fmt_opt(r.nmi),
            r.wall_ms
        ));
    }
    write_text(path, &text)
}

fn write_summary_csv(path: &Path, summary: &Summary) -> CliResult<()> {
    let mut text = String::from("metric,mean,std\n");
    if let (Some(mean), Some(std)) = (summary.mean_accuracy, summary.std_accuracy) {
        text.push_str(&format!("accuracy,{mean},{std}\n"));
    }
    if let (Some(mean), Some(std)) = (summary.mean_nmi, summary.std_nmi) {
        text.push_str(&format!("nmi,{mean},{std}\n"));
    }
    write_text(path, &text)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Input(format!("{}: {e}", parent.display())))?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
