//! Command-line front end: configuration files, curve output and the
//! self-check battery.
//!
//! Exit codes: `0` success, `1` configuration or I/O error, `2` more than 1%
//! of the trials at some sigma failed, `3` a self-check failed.

pub mod checks;
pub mod output;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{self, ExperimentConfig, ExperimentError, MonteCarloResult};

pub use checks::{run_oracle_checks, CheckOutcome, CheckReport, Fault};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_TRIAL_FAILURES: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Name of the manifest written next to the curve files.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Experiment(ExperimentError),

    #[error("{failed} of {total} self-checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Experiment(ExperimentError::ExcessiveFailures { .. }) => EXIT_TRIAL_FAILURES,
            CliError::Experiment(_) => EXIT_CONFIG,
            CliError::ChecksFailed { .. } => EXIT_CHECK_FAILED,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidConfig(msg) => CliError::Config(msg),
            ExperimentError::DegenerateWeights => CliError::Config(e.to_string()),
            other => CliError::Experiment(other),
        }
    }
}

/// Which curve families to write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSelection {
    /// p1/p2 against lambda, one file per sigma.
    pub lambda_axis: bool,
    /// p1/p2 against sigma, one file per listed lambda.
    pub sigma_axis: bool,
    /// Lambdas (members of the lambda grid) for the sigma-axis family.
    pub sigma_axis_lambdas: Vec<f64>,
    /// p3/p4 against sigma.
    pub path: bool,
}

/// A full run description. Every field is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub plots: PlotSelection,
}

impl RunConfig {
    /// The standard experiment with every family and sigma-axis curves at
    /// lambda = 1, 5, 10.
    pub fn standard(n: usize) -> Self {
        Self {
            experiment: ExperimentConfig::standard(n),
            plots: PlotSelection {
                lambda_axis: true,
                sigma_axis: true,
                sigma_axis_lambdas: vec![1.0, 5.0, 10.0],
                path: true,
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.experiment.validate()?;
        self.sigma_axis_indices().map(|_| ())
    }

    /// Grid positions of `sigma_axis_lambdas`.
    pub fn sigma_axis_indices(&self) -> Result<Vec<usize>, CliError> {
        let grid = &self.experiment.lambda_grid;
        self.plots
            .sigma_axis_lambdas
            .iter()
            .map(|&l| {
                grid.iter()
                    .position(|&g| (g - l).abs() <= 1e-12 * g.abs().max(1.0))
                    .ok_or_else(|| {
                        CliError::Config(format!("sigma_axis_lambdas: {l} is not in lambda_grid"))
                    })
            })
            .collect()
    }
}

/// Reads a run configuration, or the configuration echoed in a manifest.
pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let body = match value.get("manifest_version") {
        Some(_) => value
            .get("config")
            .cloned()
            .ok_or_else(|| CliError::Config("manifest has no config".into()))?,
        None => value,
    };
    let config: RunConfig = serde_json::from_value(body)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Command-line overrides for [`run_curves`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub svg: bool,
}

/// One written curve file as listed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub family: String,
    pub fixed: Option<(String, f64)>,
}

/// Provenance record written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub version: String,
    pub rng_scheme: String,
    pub config: RunConfig,
    pub threads: Option<usize>,
    pub duration_seconds: f64,
    pub status: String,
    pub failed_trials: Vec<usize>,
    pub zero_sign_trials: Vec<usize>,
    pub files: Vec<FileEntry>,
}

/// Runs the Monte Carlo experiment and writes the selected curve files plus
/// a manifest into `out_dir`.
pub fn run_curves(
    config: &RunConfig,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<Manifest, CliError> {
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        config.experiment.seed = seed;
    }
    config.validate()?;
    if options.threads == Some(0) {
        return Err(CliError::Config("threads must be at least 1".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;

    let start = Instant::now();
    let result = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(|| experiment::simulate(&config.experiment)),
        None => experiment::simulate(&config.experiment),
    }?;

    let mut manifest = Manifest {
        manifest_version: 1,
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        rng_scheme: experiment::RNG_SCHEME.into(),
        config: config.clone(),
        threads: options.threads,
        duration_seconds: 0.0,
        status: "ok".into(),
        failed_trials: result.failed_trials.clone(),
        zero_sign_trials: result.zero_sign_trials.clone(),
        files: Vec::new(),
    };

    let failures = result.check_failures();
    if failures.is_ok() {
        manifest.files = write_curves(&config, &result, out_dir, options.svg)?;
    } else {
        manifest.status = "excessive trial failures".into();
    }
    manifest.duration_seconds = start.elapsed().as_secs_f64();
    output::write_manifest(&out_dir.join(MANIFEST_FILE), &manifest)?;
    failures?;
    Ok(manifest)
}

fn write_curves(
    config: &RunConfig,
    result: &MonteCarloResult,
    out_dir: &Path,
    svg: bool,
) -> Result<Vec<FileEntry>, CliError> {
    let mut files = Vec::new();
    let mut emit =
        |stem: String, family: &str, fixed: Option<(String, f64)>, table: output::CurveTable| {
            let csv = format!("{stem}.csv");
            output::write_csv(&out_dir.join(&csv), &table)?;
            files.push(FileEntry {
                path: csv,
                family: family.into(),
                fixed: fixed.clone(),
            });
            if svg {
                let name = format!("{stem}.svg");
                let path = out_dir.join(&name);
                fs::write(&path, svg::line_chart(&table)).map_err(|e| CliError::io(&path, e))?;
                files.push(FileEntry {
                    path: name,
                    family: family.into(),
                    fixed,
                });
            }
            Ok::<(), CliError>(())
        };

    let exp = &config.experiment;
    if config.plots.lambda_axis {
        for (s, &sigma) in exp.sigma_grid.iter().enumerate() {
            emit(
                format!("lambda_axis_sigma_{s:03}"),
                "lambda_axis",
                Some(("sigma".into(), sigma)),
                output::CurveTable::pointwise(result, output::Axis::Lambda, s),
            )?;
        }
    }
    if config.plots.sigma_axis {
        for l in config.sigma_axis_indices()? {
            emit(
                format!("sigma_axis_lambda_{l:03}"),
                "sigma_axis",
                Some(("lambda".into(), exp.lambda_grid[l])),
                output::CurveTable::pointwise(result, output::Axis::Sigma, l),
            )?;
        }
    }
    if config.plots.path {
        emit(
            "path".into(),
            "path",
            None,
            output::CurveTable::path(result),
        )?;
    }
    Ok(files)
}

/// Writes `RunConfig::standard(n)` as pretty JSON.
pub fn write_default_config(path: &Path, n: usize) -> Result<(), CliError> {
    let config = RunConfig::standard(n);
    config.validate()?;
    let text =
        serde_json::to_string_pretty(&config).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
