//! Experiment configuration: a flat UTF-8 key-value format with dotted
//! section keys (`solver.lambda = 0.04`), `#` comments and blank lines.

use std::collections::BTreeMap;
use std::path::PathBuf;

use spdc_core::kernels::KernelSpec;
use spdc_core::solver::SolverConfig;
use spdc_core::synth::SynthSpec;

use crate::{CliError, CliResult};

/// Clustering method to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Kernel sparse subspace clustering with a Riemannian kernel.
    Ksscr,
    /// The same solver under the Euclidean Gaussian kernel baseline.
    Kssce,
    /// K-means on log-vectorized matrices.
    KmeansLog,
    /// K-means on raw vectorized matrices.
    KmeansRaw,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ksscr => "ksscr",
            Method::Kssce => "kssce",
            Method::KmeansLog => "kmeans_log",
            Method::KmeansRaw => "kmeans_raw",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "ksscr" => Ok(Method::Ksscr),
            "kssce" => Ok(Method::Kssce),
            "kmeans_log" => Ok(Method::KmeansLog),
            "kmeans_raw" => Ok(Method::KmeansRaw),
            other => Err(CliError::Config(format!(
                "unknown method '{other}' (expected ksscr, kssce, kmeans_log or kmeans_raw)"
            ))),
        }
    }

    pub fn uses_kernel(&self) -> bool {
        matches!(self, Method::Ksscr | Method::Kssce)
    }
}

/// Where the SPD data points come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Freshly generated per trial; the spec's seed is overridden by the
    /// trial seed.
    Synthetic(SynthSpec),
    /// A directory of P5 PGM / RCMF images; each image is one class and
    /// contributes one region covariance descriptor per tile.
    Images { dir: PathBuf, tile: usize },
    /// A serialized SPDS dataset file.
    Dataset { path: PathBuf },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub kernel: Option<KernelSpec>,
    pub solver: SolverConfig,
    pub clusters: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub method: Method,
    pub output_dir: PathBuf,
    pub dump_matrices: bool,
    /// Eigenvalue floor for loading datasets and building descriptors;
    /// scale-aware default when absent.
    pub floor: Option<f64>,
}

impl ExperimentConfig {
    /// Parses the flat key-value text and validates cross-field
    /// consistency.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut keys: BTreeMap<String, String> = BTreeMap::new();
        for (number, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected 'key = value'", number + 1))
            })?;
            keys.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_keys(keys)
    }

    fn from_keys(mut keys: BTreeMap<String, String>) -> CliResult<Self> {
        let mut take = |key: &str| keys.remove(key);

        let source = take("data.source")
            .ok_or_else(|| CliError::Config("missing key data.source".into()))?;
        let data = match source.as_str() {
            "synthetic" => {
                let spec = SynthSpec {
                    clusters: parse_field(&mut take, "synth.clusters")?,
                    points_per_cluster: parse_field(&mut take, "synth.points_per_cluster")?,
                    dim: parse_field(&mut take, "synth.dim")?,
                    center_spread: parse_field(&mut take, "synth.center_spread")?,
                    noise: parse_field(&mut take, "synth.noise")?,
                    // Replaced by the derived per-trial seed.
                    seed: 0,
                };
                spec.validate()
                    .map_err(|e| CliError::Config(e.to_string()))?;
                DataSource::Synthetic(spec)
            }
            "images" => DataSource::Images {
                dir: PathBuf::from(require(&mut take, "data.path")?),
                tile: parse_opt_field(&mut take, "data.tile")?.unwrap_or(32),
            },
            "dataset" => DataSource::Dataset {
                path: PathBuf::from(require(&mut take, "data.path")?),
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown data.source '{other}' (expected synthetic, images or dataset)"
                )))
            }
        };

        let method = Method::parse(&require(&mut take, "method")?)?;

        let kernel = match take("kernel.kind") {
            Some(kind) => Some(match kind.as_str() {
                "log_euclidean_gaussian" => KernelSpec::LogEuclideanGaussian {
                    gamma: parse_field(&mut take, "kernel.gamma")?,
                },
                "stein" => KernelSpec::Stein {
                    beta: parse_field(&mut take, "kernel.beta")?,
                },
                "euclidean_gaussian" => KernelSpec::EuclideanGaussian {
                    gamma: parse_field(&mut take, "kernel.gamma")?,
                },
                other => {
                    return Err(CliError::Config(format!(
                        "unknown kernel.kind '{other}'"
                    )))
                }
            }),
            None => None,
        };
        if let Some(spec) = &kernel {
            spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }

        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            lambda: parse_opt_field(&mut take, "solver.lambda")?.unwrap_or(defaults.lambda),
            rho: parse_opt_field(&mut take, "solver.rho")?.unwrap_or(defaults.rho),
            epsilon: parse_opt_field(&mut take, "solver.epsilon")?.unwrap_or(defaults.epsilon),
            max_iters: parse_opt_field(&mut take, "solver.max_iters")?
                .unwrap_or(defaults.max_iters),
        };
        solver
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;

        let config = ExperimentConfig {
            data,
            kernel,
            solver,
            clusters: parse_field(&mut take, "clusters")?,
            trials: parse_opt_field(&mut take, "trials")?.unwrap_or(1),
            base_seed: parse_opt_field(&mut take, "base_seed")?.unwrap_or(0),
            method,
            output_dir: PathBuf::from(
                take("output_dir").unwrap_or_else(|| "out".to_string()),
            ),
            dump_matrices: parse_opt_field(&mut take, "dump_matrices")?.unwrap_or(false),
            floor: parse_opt_field(&mut take, "data.floor")?,
        };

        if let Some(unknown) = keys.keys().next() {
            return Err(CliError::Config(format!("unknown key '{unknown}'")));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.trials < 1 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.clusters < 2 {
            return Err(CliError::Config("clusters must be at least 2".into()));
        }
        match (self.method, &self.kernel) {
            (Method::Ksscr, Some(KernelSpec::LogEuclideanGaussian { .. }))
            | (Method::Ksscr, Some(KernelSpec::Stein { .. }))
            | (Method::Kssce, Some(KernelSpec::EuclideanGaussian { .. })) => {}
            (Method::Ksscr, Some(other)) => {
                return Err(CliError::Config(format!(
                    "ksscr needs a Riemannian kernel (log_euclidean_gaussian or stein), got {}",
                    other.name()
                )))
            }
            (Method::Kssce, Some(other)) => {
                return Err(CliError::Config(format!(
                    "kssce needs the euclidean_gaussian kernel, got {}",
                    other.name()
                )))
            }
            (m, None) if m.uses_kernel() => {
                return Err(CliError::Config(format!(
                    "method {} needs kernel.kind",
                    m.name()
                )))
            }
            // K-means baselines ignore any configured kernel.
            (_, _) => {}
        }
        if let Some(f) = self.floor {
            if !(f > 0.0) {
                return Err(CliError::Config(format!(
                    "data.floor must be positive, got {f}"
                )));
            }
        }
        if let DataSource::Images { tile, .. } = &self.data {
            if *tile < 3 {
                return Err(CliError::Config(
                    "data.tile must be at least 3 for derivative stencils".into(),
                ));
            }
        }
        Ok(())
    }

    /// Returns the kernel's width parameter when the kernel has one.
    pub fn gamma(&self) -> Option<f64> {
        match self.kernel {
            Some(KernelSpec::LogEuclideanGaussian { gamma })
            | Some(KernelSpec::EuclideanGaussian { gamma }) => Some(gamma),
            _ => None,
        }
    }

    /// Replaces the kernel width, used by gamma sweeps.
    pub fn with_gamma(&self, gamma: f64) -> CliResult<Self> {
        let kernel = match self.kernel {
            Some(KernelSpec::LogEuclideanGaussian { .. }) => {
                KernelSpec::LogEuclideanGaussian { gamma }
            }
            Some(KernelSpec::EuclideanGaussian { .. }) => {
                KernelSpec::EuclideanGaussian { gamma }
            }
            _ => {
                return Err(CliError::Config(
                    "gamma sweep needs a Gaussian-type kernel".into(),
                ))
            }
        };
        kernel
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut out = self.clone();
        out.kernel = Some(kernel);
        Ok(out)
    }
}

fn require(
    take: &mut impl FnMut(&str) -> Option<String>,
    key: &str,
) -> CliResult<String> {
    take(key).ok_or_else(|| CliError::Config(format!("missing key {key}")))
}

fn parse_field<T: std::str::FromStr>(
    take: &mut impl FnMut(&str) -> Option<String>,
    key: &str,
) -> CliResult<T> {
    parse_value(&require(take, key)?, key)
}

fn parse_opt_field<T: std::str::FromStr>(
    take: &mut impl FnMut(&str) -> Option<String>,
    key: &str,
) -> CliResult<Option<T>> {
    take(key).map(|v| parse_value(&v, key)).transpose()
}

fn parse_value<T: std::str::FromStr>(value: &str, key: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse {key} = '{value}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# synthetic two-cluster run
data.source = synthetic
synth.clusters = 2
synth.points_per_cluster = 20
synth.dim = 5
synth.center_spread = 1.0
synth.noise = 0.05

kernel.kind = log_euclidean_gaussian
kernel.gamma = 0.5
solver.lambda = 0.04
clusters = 2
trials = 20
base_seed = 7
method = ksscr
output_dir = out
";

    #[test]
    fn parses_a_full_config() {
        let config = ExperimentConfig::parse(GOOD).unwrap();
        assert_eq!(config.method, Method::Ksscr);
        assert_eq!(config.trials, 20);
        assert_eq!(config.clusters, 2);
        assert_eq!(config.gamma(), Some(0.5));
        assert_eq!(config.solver.lambda, 0.04);
        assert_eq!(config.solver.rho, 1.0);
        assert!(matches!(config.data, DataSource::Synthetic(_)));
        assert!(!config.dump_matrices);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let bad = format!("{GOOD}\nbogus_key = 1\n");
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(CliError::Config(_))
        ));
        let bad = GOOD.replace("kernel.gamma = 0.5", "kernel.gamma = banana");
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(CliError::Config(_))
        ));
        let bad = GOOD.replace("kernel.gamma = 0.5", "kernel.gamma = -2");
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn rejects_inconsistent_method_kernel_pairs() {
        let bad = GOOD.replace(
            "kernel.kind = log_euclidean_gaussian",
            "kernel.kind = euclidean_gaussian",
        );
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(CliError::Config(_))
        ));

        let bad = GOOD
            .replace("method = ksscr", "method = kssce")
            .replace("kernel.kind = log_euclidean_gaussian", "kernel.kind = stein")
            .replace("kernel.gamma = 0.5", "kernel.beta = 1.0");
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn kmeans_method_needs_no_kernel() {
        let text = "\
data.source = synthetic
synth.clusters = 2
synth.points_per_cluster = 5
synth.dim = 3
synth.center_spread = 1.0
synth.noise = 0.1
clusters = 2
method = kmeans_log
";
        let config = ExperimentConfig::parse(text).unwrap();
        assert_eq!(config.method, Method::KmeansLog);
        assert!(config.kernel.is_none());
        assert_eq!(config.trials, 1);
    }

    #[test]
    fn gamma_sweep_replacement_respects_kernel_kind() {
        let config = ExperimentConfig::parse(GOOD).unwrap();
        let swapped = config.with_gamma(2e-3).unwrap();
        assert_eq!(swapped.gamma(), Some(2e-3));

        let stein = GOOD
            .replace("kernel.kind = log_euclidean_gaussian", "kernel.kind = stein")
            .replace("kernel.gamma = 0.5", "kernel.beta = 1.0");
        let config = ExperimentConfig::parse(&stein).unwrap();
        assert!(config.with_gamma(0.1).is_err());
    }
}
