//! Multi-trial campaign statistics, utility/yield correlation, and random
//! search over percentile schedules.

mod report;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{correlation_json, curve_csv, curves_svg, report_json, scatter_svg, search_csv, search_json};

use crate::acq::PercentileSchedule;
use crate::bo::{derive_seed, run_bo, Acquisition, BoConfig, BoError, BoTrace};
use crate::domain::YieldDataset;
use crate::stats::{mean_se, pearson};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Bo(#[from] BoError),
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("{got} utility values for {expected} experiments")]
    Coverage { got: usize, expected: usize },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub mean: Option<f64>,
    pub se: Option<f64>,
}

impl Metric {
    fn of(values: &[f64]) -> Self {
        match mean_se(values) {
            Some((m, s)) => Self { mean: Some(m), se: Some(s) },
            None => Self { mean: None, se: None },
        }
    }
}

/// Mean and standard error over the trials that reached the target, with the
/// number that did not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredMetric {
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub censored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub mean_best: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct CampaignStats {
    pub dataset: String,
    pub acquisition: Acquisition,
    pub budget: usize,
    pub traces: Vec<BoTrace>,
    pub curve: Vec<CurvePoint>,
    pub n_to_max: CensoredMetric,
    pub n_to_99: CensoredMetric,
    pub initial_yield_norm: Metric,
}

impl CampaignStats {
    pub fn trials(&self) -> usize {
        self.traces.len()
    }

    fn from_traces(dataset: &YieldDataset, config: &BoConfig, traces: Vec<BoTrace>) -> Self {
        let max = dataset.max_yield();
        let curve = (0..config.budget)
            .map(|j| {
                let v: Vec<f64> = traces.iter().map(|t| t.steps[j].running_best).collect();
                let (mean_best, se) = mean_se(&v).expect("at least one trial");
                CurvePoint { n: j + 1, mean_best, se }
            })
            .collect();
        let censored = |frac: f64| {
            let hits: Vec<Option<usize>> = traces.iter().map(|t| n_to_fraction(t, max, frac)).collect();
            let reached: Vec<f64> = hits.iter().flatten().map(|&n| n as f64).collect();
            let m = Metric::of(&reached);
            CensoredMetric { mean: m.mean, se: m.se, censored: hits.len() - reached.len() }
        };
        let initial: Vec<f64> = traces.iter().map(|t| t.steps[0].yield_value / max).collect();
        Self {
            dataset: dataset.name().to_string(),
            acquisition: config.acquisition,
            budget: config.budget,
            n_to_max: censored(1.0),
            n_to_99: censored(0.99),
            initial_yield_norm: Metric::of(&initial),
            curve,
            traces,
        }
    }
}

/// Seed of trial `t` under master seed `seed`.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, 1 << 32 | t as u64)
}

/// Runs `n_trials` independent campaigns in parallel. Trial `t` uses
/// [`trial_seed`]`(config.seed, t)`, so two arms sharing a master seed are
/// paired trial by trial.
pub fn run_campaigns(
    dataset: &YieldDataset,
    utilities: Option<&[f64]>,
    config: &BoConfig,
    n_trials: usize,
) -> Result<CampaignStats, BenchError> {
    if n_trials == 0 {
        return Err(BenchError::InvalidOptions("n_trials must be >= 1".into()));
    }
    let traces = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let cfg = BoConfig { seed: trial_seed(config.seed, t), ..*config };
            run_bo(dataset, utilities, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CampaignStats::from_traces(dataset, config, traces))
}

/// 1-based number of experiments until the running best first reaches
/// `frac · dataset_max`.
pub fn n_to_fraction(trace: &BoTrace, dataset_max: f64, frac: f64) -> Option<usize> {
    let target = frac * dataset_max;
    trace.steps.iter().position(|s| s.running_best >= target).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson_r: f64,
    pub p_value: f64,
    pub n: usize,
    /// `(utility, yield)` per experiment in dataset order.
    pub scatter: Vec<(f64, f64)>,
}

/// Pearson correlation between utilities (aligned to dataset order) and yields.
pub fn correlation_report(utilities: &[f64], dataset: &YieldDataset) -> Result<CorrelationReport, BenchError> {
    if utilities.len() != dataset.len() {
        return Err(BenchError::Coverage { got: utilities.len(), expected: dataset.len() });
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(utilities) {
        return Err(BenchError::ZeroVariance("utility"));
    }
    if constant(dataset.yields()) {
        return Err(BenchError::ZeroVariance("yield"));
    }
    let p = pearson(utilities, dataset.yields()).ok_or(BenchError::ZeroVariance("utility"))?;
    Ok(CorrelationReport {
        pearson_r: p.r,
        p_value: p.p_value,
        n: p.n,
        scatter: utilities.iter().copied().zip(dataset.yields().iter().copied()).collect(),
    })
}

/// `(1 / trials) Σ_i Σ_j` running best of trial `i` at iteration `j`.
pub fn schedule_objective(traces: &[BoTrace]) -> f64 {
    let total: f64 = traces.iter().flat_map(|t| t.steps.iter().map(|s| s.running_best)).sum();
    total / traces.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub n_search: usize,
    pub n_trials: usize,
    pub budget: usize,
    pub seed: u64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self { n_search: 100, n_trials: 50, budget: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTrial {
    pub v1: f64,
    pub v2: f64,
    pub c1: usize,
    pub c2: usize,
    pub objective: f64,
}

impl ScheduleTrial {
    pub fn schedule(&self) -> PercentileSchedule {
        PercentileSchedule::new(self.v1, self.v2, self.c1, self.c2).expect("sampled within range")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSearchResult {
    pub trials: Vec<ScheduleTrial>,
    pub best: ScheduleTrial,
}

/// Uniform draw from the search ranges: `v1 ∈ (50, 100)`, `v2 ∈ (0, v1)`,
/// integer `c1 ∈ (0, 100)` and `c2 ∈ (c1, 100)`.
pub fn sample_schedule(rng: &mut ChaCha8Rng) -> (f64, f64, usize, usize) {
    let open = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| loop {
        let v = rng.gen_range(lo..hi);
        if v > lo {
            return v;
        }
    };
    let v1 = open(rng, 50.0, 100.0);
    let v2 = open(rng, 0.0, v1);
    let c1 = rng.gen_range(1..=98);
    let c2 = rng.gen_range(c1 + 1..=99);
    (v1, v2, c1, c2)
}

/// Random search over schedules. Each candidate runs `n_trials` util-ei
/// campaigns per dataset with the same trial seeds; the objective is the
/// running-best sum averaged over trials and then over datasets.
pub fn tune_schedule(
    datasets: &[(&YieldDataset, &[f64])],
    base: &BoConfig,
    options: &TuneOptions,
) -> Result<ScheduleSearchResult, BenchError> {
    if options.n_search == 0 || options.n_trials == 0 || datasets.is_empty() {
        return Err(BenchError::InvalidOptions("need >= 1 search trial, BO trial and dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let params: Vec<_> = (0..options.n_search).map(|_| sample_schedule(&mut rng)).collect();
    let trials = params
        .par_iter()
        .map(|&(v1, v2, c1, c2)| {
            let schedule = PercentileSchedule::new(v1, v2, c1, c2).expect("sampled within range");
            let cfg = BoConfig {
                acquisition: Acquisition::UtilEi,
                schedule,
                budget: options.budget,
                seed: derive_seed(options.seed, 7),
                ..*base
            };
            let mut total = 0.0;
            for (ds, g) in datasets {
                total += schedule_objective(&run_campaigns(ds, Some(g), &cfg, options.n_trials)?.traces);
            }
            Ok(ScheduleTrial { v1, v2, c1, c2, objective: total / datasets.len() as f64 })
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    let best = *trials
        .iter()
        .fold(None, |b: Option<&ScheduleTrial>, t| match b {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .expect("n_search >= 1");
    Ok(ScheduleSearchResult { trials, best })
}
