//! Strong-noise recovery experiment.
//!
//! Data follow `y = B delta_j + e` where `e_I ~ N(0, 1)` and every other
//! component is `N(0, sigma^2)`. For each smoothing parameter the residual
//! `e_hat(lambda) = (I - B H(lambda, M, L)) y` is scanned for its largest
//! absolute entry; the experiment counts how often that position differs from
//! `I` and how often its sign differs from `sign(e_I)`.
//!
//! Positions are 1-based throughout this module, basis indices are signed
//! (see [`crate::bspline::basis_column`]).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspline::{self, basis_column, BasisError, KnotVector};
use crate::estimator::{EstimatorError, PenalizedLeastSquares, WeightMatrix};

/// Identifies the generator and stream layout used by [`trial_rng`].
pub const RNG_SCHEME: &str = "rand_chacha 0.9 ChaCha8Rng::seed_from_u64(seed), \
set_stream((sigma_index << 32) | trial_index); normals from rand_distr 0.5 StandardNormal";

/// Monte Carlo runs abort when more than this fraction of trials fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("oracle weights need sigma > 0")]
    DegenerateWeights,

    #[error("residual is identically zero; detection is undefined")]
    ZeroResidual,

    #[error("residual has non-finite entries")]
    NonFiniteResidual,

    #[error("noise vector has length {found}, expected {expected}")]
    NoiseLength { expected: usize, found: usize },

    #[error("{failed} of {trials} trials failed at sigma = {sigma}")]
    ExcessiveFailures {
        sigma: f64,
        failed: usize,
        trials: usize,
    },

    #[error(transparent)]
    Basis(#[from] BasisError),

    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// One dominant noise at `strong_index` with unit variance; all others have
/// standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    n: usize,
    strong_index: usize,
    sigma: f64,
}

impl NoiseModel {
    pub fn new(n: usize, strong_index: usize, sigma: f64) -> Result<Self, ExperimentError> {
        if n == 0 || strong_index == 0 || strong_index > n {
            return Err(ExperimentError::InvalidConfig(format!(
                "strong index {strong_index} outside 1..={n}"
            )));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(ExperimentError::InvalidConfig(format!(
                "sigma must be finite and non-negative, got {sigma}"
            )));
        }
        Ok(Self {
            n,
            strong_index,
            sigma,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn strong_index(&self) -> usize {
        self.strong_index
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Dominance ratio `1 / sigma^2`.
    pub fn ratio(&self) -> f64 {
        1.0 / (self.sigma * self.sigma)
    }
}

pub fn sample_noise<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(model.n, |i, _| {
        let z: f64 = rng.sample(StandardNormal);
        if i + 1 == model.strong_index {
            z
        } else {
            model.sigma * z
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `M = I`.
    Identity,
    /// `M = C^{-1/2}`: 1 at the strong position, `1 / sigma` elsewhere.
    Oracle,
}

pub fn weight_matrix(
    model: &NoiseModel,
    mode: WeightMode,
) -> Result<WeightMatrix, ExperimentError> {
    match mode {
        WeightMode::Identity => Ok(WeightMatrix::identity(model.n)),
        WeightMode::Oracle => {
            if model.sigma == 0.0 {
                return Err(ExperimentError::DegenerateWeights);
            }
            let diag = (1..=model.n)
                .map(|i| {
                    if i == model.strong_index {
                        1.0
                    } else {
                        1.0 / model.sigma
                    }
                })
                .collect();
            Ok(WeightMatrix::new(diag)?)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Positive,
}

impl Sign {
    /// Sign of `x`, with `sign(0) = +1`. The flag reports that `x` was zero.
    pub fn of(x: f64) -> (Self, bool) {
        if x < 0.0 {
            (Sign::Negative, false)
        } else {
            (Sign::Positive, x == 0.0)
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Negative => -1,
            Sign::Positive => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionOutcome {
    /// 1-based position of the largest absolute residual.
    pub index: usize,
    pub sign: Sign,
    /// The residual at `index` was exactly zero.
    pub zero_sign: bool,
}

/// Position (lowest on ties) and sign of the largest absolute residual.
pub fn detect(residual: &[f64]) -> Result<DetectionOutcome, ExperimentError> {
    if residual.iter().any(|r| !r.is_finite()) {
        return Err(ExperimentError::NonFiniteResidual);
    }
    let mut best = 0;
    for (i, r) in residual.iter().enumerate() {
        if r.abs() > residual[best].abs() {
            best = i;
        }
    }
    if residual.is_empty() || residual[best] == 0.0 {
        return Err(ExperimentError::ZeroResidual);
    }
    let (sign, zero_sign) = Sign::of(residual[best]);
    Ok(DetectionOutcome {
        index: best + 1,
        sign,
        zero_sign,
    })
}

/// Everything that defines a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of interior knots `K`.
    pub interior_knots: usize,
    /// Signed index `j` of the true signal `delta_j`, in `-3..=K`.
    pub signal_index: i64,
    /// 1-based position `I` of the dominant noise.
    pub strong_index: usize,
    /// Number of observations.
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub lambda_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub weight_mode: WeightMode,
}

impl ExperimentConfig {
    /// `K = 4`, `j = 3`, `I = 1` on `[0, 1]`, `lambda_k = k / 10` for
    /// `k = 1..=100`, `sigma = 0.1, 0.2, .., 1.5`, 100 trials, oracle weights.
    pub fn standard(n: usize) -> Self {
        Self {
            interior_knots: 4,
            signal_index: 3,
            strong_index: 1,
            n,
            a: 0.0,
            b: 1.0,
            lambda_grid: (1..=100).map(|k| k as f64 / 10.0).collect(),
            sigma_grid: (1..=15).map(|k| k as f64 / 10.0).collect(),
            trials: 100,
            seed: 20_240_601,
            weight_mode: WeightMode::Oracle,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::InvalidConfig(msg));
        if self.interior_knots == 0 {
            return bad("interior_knots must be at least 1".into());
        }
        let max_j = self.interior_knots as i64;
        if !(-3..=max_j).contains(&self.signal_index) {
            return bad(format!("signal_index must lie in -3..={max_j}"));
        }
        if self.n < 2 {
            return bad("n must be at least 2".into());
        }
        if self.strong_index == 0 || self.strong_index > self.n {
            return bad(format!("strong_index must lie in 1..={}", self.n));
        }
        if !(self.a.is_finite() && self.b.is_finite() && self.a < self.b) {
            return bad(format!("need a < b, got [{}, {}]", self.a, self.b));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        check_grid("lambda_grid", &self.lambda_grid, |l| l > 0.0)?;
        check_grid("sigma_grid", &self.sigma_grid, |s| s >= 0.0)?;
        if self.weight_mode == WeightMode::Oracle && self.sigma_grid.contains(&0.0) {
            return bad("oracle weights need every sigma > 0".into());
        }
        Ok(())
    }

    pub fn knots(&self) -> Result<KnotVector, ExperimentError> {
        Ok(KnotVector::uniform(self.a, self.b, self.interior_knots)?)
    }

    pub fn abscissae(&self) -> Result<Vec<f64>, ExperimentError> {
        Ok(bspline::uniform_abscissae(self.a, self.b, self.n)?)
    }
}

fn check_grid(
    name: &str,
    grid: &[f64],
    admissible: impl Fn(f64) -> bool,
) -> Result<(), ExperimentError> {
    if grid.is_empty() {
        return Err(ExperimentError::InvalidConfig(format!("{name} is empty")));
    }
    if grid.iter().any(|&v| !(v.is_finite() && admissible(v))) {
        return Err(ExperimentError::InvalidConfig(format!(
            "{name} has an inadmissible value"
        )));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::InvalidConfig(format!(
            "{name} must be strictly increasing"
        )));
    }
    Ok(())
}

/// The fixed ingredients of a run: design `B`, penalty `L` and signal `B delta_j`.
#[derive(Debug, Clone)]
pub struct SplineSetup {
    design: DMatrix<f64>,
    penalty: DMatrix<f64>,
    signal: DVector<f64>,
}

impl SplineSetup {
    pub fn new(config: &ExperimentConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        let knots = config.knots()?;
        let design = bspline::design_matrix(&knots, &config.abscissae()?)?.into_inner();
        let penalty = bspline::penalty_operator(&knots)?.l().clone();
        let signal = design
            .column(basis_column(config.signal_index))
            .into_owned();
        Ok(Self {
            design,
            penalty,
            signal,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    /// `B delta_j`.
    pub fn signal(&self) -> &DVector<f64> {
        &self.signal
    }
}

/// Residual operators `I - B H(lambda)` for every grid point at one sigma.
#[derive(Debug, Clone)]
pub struct TrialRunner {
    signal: DVector<f64>,
    residual_ops: Vec<DMatrix<f64>>,
}

impl TrialRunner {
    pub fn new(
        setup: &SplineSetup,
        weights: &WeightMatrix,
        lambda_grid: &[f64],
    ) -> Result<Self, ExperimentError> {
        let pls = PenalizedLeastSquares::new(&setup.design, weights, &setup.penalty)?;
        let residual_ops = lambda_grid
            .iter()
            .map(|&lambda| pls.residual_operator(lambda))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            signal: setup.signal.clone(),
            residual_ops,
        })
    }

    /// Detection path over the grid for noise realization `e`.
    pub fn run(&self, e: &DVector<f64>) -> Result<Vec<DetectionOutcome>, ExperimentError> {
        if e.len() != self.signal.len() {
            return Err(ExperimentError::NoiseLength {
                expected: self.signal.len(),
                found: e.len(),
            });
        }
        let y = &self.signal + e;
        self.residual_ops
            .iter()
            .map(|op| detect((op * &y).as_slice()))
            .collect()
    }
}

/// Fits `y = B delta_j + e` at every grid `lambda` and detects on each
/// residual. Any failing grid point fails the whole trial.
pub fn run_trial(
    config: &ExperimentConfig,
    design: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    sigma: f64,
    e: &DVector<f64>,
) -> Result<Vec<DetectionOutcome>, ExperimentError> {
    let model = NoiseModel::new(config.n, config.strong_index, sigma)?;
    let weights = weight_matrix(&model, config.weight_mode)?;
    let setup = SplineSetup {
        design: design.clone(),
        penalty: penalty.clone(),
        signal: design
            .column(basis_column(config.signal_index))
            .into_owned(),
    };
    TrialRunner::new(&setup, &weights, &config.lambda_grid)?.run(e)
}

/// Independent generator for trial `trial` at sigma position `sigma_index`.
pub fn trial_rng(seed: u64, sigma_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((sigma_index as u64) << 32) | trial as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    P1,
    P2,
    P3,
    P4,
}

impl CurveKind {
    pub fn label(self) -> &'static str {
        match self {
            CurveKind::P1 => "p1",
            CurveKind::P2 => "p2",
            CurveKind::P3 => "p3",
            CurveKind::P4 => "p4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveAxis {
    Lambda,
    Sigma,
}

impl CurveAxis {
    pub fn label(self) -> &'static str {
        match self {
            CurveAxis::Lambda => "lambda",
            CurveAxis::Sigma => "sigma",
        }
    }
}

/// One estimated failure probability as a function of lambda or sigma.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityCurve {
    pub kind: CurveKind,
    pub axis: CurveAxis,
    /// The parameter held fixed along the curve (`None` for p3/p4).
    pub fixed: Option<(CurveAxis, f64)>,
    pub points: Vec<(f64, f64)>,
    pub config: Arc<ExperimentConfig>,
}

/// Aggregated Monte Carlo counts, indexed `[sigma][lambda]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub config: Arc<ExperimentConfig>,
    /// Position failure rate per (sigma, lambda).
    pub p1: Vec<Vec<f64>>,
    /// Sign failure rate per (sigma, lambda).
    pub p2: Vec<Vec<f64>>,
    /// Path position failure rate per sigma.
    pub p3: Vec<f64>,
    /// Path sign failure rate per sigma.
    pub p4: Vec<f64>,
    pub failed_trials: Vec<usize>,
    /// Trials in which some detected residual was exactly zero.
    pub zero_sign_trials: Vec<usize>,
}

#[derive(Debug, Default, Clone)]
struct Tally {
    position: Vec<usize>,
    sign: Vec<usize>,
    path_position: usize,
    path_sign: usize,
    valid: usize,
    failed: usize,
    zero_sign: usize,
}

/// Runs every trial at every sigma and aggregates p1..p4.
///
/// Each trial draws from its own substream, and results are gathered into
/// preallocated per-trial slots before counting, so the output does not
/// depend on the rayon pool size.
pub fn simulate(config: &ExperimentConfig) -> Result<MonteCarloResult, ExperimentError> {
    let setup = SplineSetup::new(config)?;
    let lambdas = config.lambda_grid.len();
    let config = Arc::new(config.clone());
    let strong = config.strong_index;

    let mut result = MonteCarloResult {
        config: Arc::clone(&config),
        p1: Vec::new(),
        p2: Vec::new(),
        p3: Vec::new(),
        p4: Vec::new(),
        failed_trials: Vec::new(),
        zero_sign_trials: Vec::new(),
    };

    for (sigma_index, &sigma) in config.sigma_grid.iter().enumerate() {
        let model = NoiseModel::new(config.n, strong, sigma)?;
        let weights = weight_matrix(&model, config.weight_mode)?;
        let runner = TrialRunner::new(&setup, &weights, &config.lambda_grid)?;

        let outcomes: Vec<_> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = trial_rng(config.seed, sigma_index, trial);
                let e = sample_noise(&model, &mut rng);
                let (truth, _) = Sign::of(e[strong - 1]);
                runner.run(&e).map(|path| (truth, path))
            })
            .collect();

        let mut tally = Tally {
            position: vec![0; lambdas],
            sign: vec![0; lambdas],
            ..Tally::default()
        };
        for outcome in &outcomes {
            let Ok((truth, path)) = outcome else {
                tally.failed += 1;
                continue;
            };
            tally.valid += 1;
            let mut missed_position = false;
            let mut missed_sign = false;
            for (k, d) in path.iter().enumerate() {
                if d.index != strong {
                    tally.position[k] += 1;
                    missed_position = true;
                }
                if d.sign != *truth {
                    tally.sign[k] += 1;
                    missed_sign = true;
                }
            }
            tally.path_position += usize::from(missed_position);
            tally.path_sign += usize::from(missed_sign);
            tally.zero_sign += usize::from(path.iter().any(|d| d.zero_sign));
        }

        let denom = tally.valid.max(1) as f64;
        let rate = |count: usize| count as f64 / denom;
        result
            .p1
            .push(tally.position.iter().map(|&c| rate(c)).collect());
        result
            .p2
            .push(tally.sign.iter().map(|&c| rate(c)).collect());
        result.p3.push(rate(tally.path_position));
        result.p4.push(rate(tally.path_sign));
        result.failed_trials.push(tally.failed);
        result.zero_sign_trials.push(tally.zero_sign);
    }
    Ok(result)
}

/// [`simulate`], failing when more than 1% of the trials at some sigma
/// could not be evaluated.
pub fn monte_carlo(config: &ExperimentConfig) -> Result<MonteCarloResult, ExperimentError> {
    let result = simulate(config)?;
    result.check_failures()?;
    Ok(result)
}

impl MonteCarloResult {
    pub fn check_failures(&self) -> Result<(), ExperimentError> {
        let trials = self.config.trials;
        for (&sigma, &failed) in self.config.sigma_grid.iter().zip(&self.failed_trials) {
            if failed as f64 > MAX_FAILURE_FRACTION * trials as f64 {
                return Err(ExperimentError::ExcessiveFailures {
                    sigma,
                    failed,
                    trials,
                });
            }
        }
        Ok(())
    }

    /// p1 or p2 against lambda at the `sigma_index`-th sigma.
    pub fn lambda_curve(&self, kind: CurveKind, sigma_index: usize) -> ProbabilityCurve {
        let table = self.pointwise(kind);
        ProbabilityCurve {
            kind,
            axis: CurveAxis::Lambda,
            fixed: Some((CurveAxis::Sigma, self.config.sigma_grid[sigma_index])),
            points: self
                .config
                .lambda_grid
                .iter()
                .zip(&table[sigma_index])
                .map(|(&l, &p)| (l, p))
                .collect(),
            config: Arc::clone(&self.config),
        }
    }

    /// p1 or p2 against sigma at the `lambda_index`-th lambda.
    pub fn sigma_curve(&self, kind: CurveKind, lambda_index: usize) -> ProbabilityCurve {
        let table = self.pointwise(kind);
        ProbabilityCurve {
            kind,
            axis: CurveAxis::Sigma,
            fixed: Some((CurveAxis::Lambda, self.config.lambda_grid[lambda_index])),
            points: self
                .config
                .sigma_grid
                .iter()
                .zip(table)
                .map(|(&s, row)| (s, row[lambda_index]))
                .collect(),
            config: Arc::clone(&self.config),
        }
    }

    /// p3 or p4 against sigma.
    pub fn path_curve(&self, kind: CurveKind) -> ProbabilityCurve {
        let values = match kind {
            CurveKind::P3 => &self.p3,
            CurveKind::P4 => &self.p4,
            _ => panic!("path curves are p3 or p4, got {}", kind.label()),
        };
        ProbabilityCurve {
            kind,
            axis: CurveAxis::Sigma,
            fixed: None,
            points: self
                .config
                .sigma_grid
                .iter()
                .zip(values)
                .map(|(&s, &p)| (s, p))
                .collect(),
            config: Arc::clone(&self.config),
        }
    }

    /// Every curve family: p1/p2 against lambda per sigma, p1/p2 against
    /// sigma per lambda, and p3/p4 against sigma.
    pub fn curves(&self) -> Vec<ProbabilityCurve> {
        let mut out = Vec::new();
        for s in 0..self.config.sigma_grid.len() {
            out.push(self.lambda_curve(CurveKind::P1, s));
            out.push(self.lambda_curve(CurveKind::P2, s));
        }
        for l in 0..self.config.lambda_grid.len() {
            out.push(self.sigma_curve(CurveKind::P1, l));
            out.push(self.sigma_curve(CurveKind::P2, l));
        }
        out.push(self.path_curve(CurveKind::P3));
        out.push(self.path_curve(CurveKind::P4));
        out
    }

    fn pointwise(&self, kind: CurveKind) -> &Vec<Vec<f64>> {
        match kind {
            CurveKind::P1 => &self.p1,
            CurveKind::P2 => &self.p2,
            _ => panic!("pointwise curves are p1 or p2, got {}", kind.label()),
        }
    }
}
