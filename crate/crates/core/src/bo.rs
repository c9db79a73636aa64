//! The Bayesian-optimization campaign over an enumerated dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::acq::{expected_improvement, gate_threshold, schedule_value, AcqError, PercentileSchedule};
use crate::domain::{DomainError, Experiment, ParameterSpace, YieldDataset};
use crate::gp::{fit_gp, GpError};
use crate::kernel::KernelConfig;

#[derive(Debug, thiserror::Error)]
pub enum BoError {
    #[error("budget {budget} exceeds the {candidates} candidates")]
    BudgetTooLarge { budget: usize, candidates: usize },
    #[error("budget must be >= 1")]
    ZeroBudget,
    #[error("util-ei needs a utility table")]
    MissingUtility,
    #[error("utility table has {got} values for {expected} candidates")]
    UtilityLength { got: usize, expected: usize },
    #[error("trace invariant violated: {0}")]
    Invariant(String),
    #[error("surrogate: {0}")]
    Gp(#[from] GpError),
    #[error(transparent)]
    Acq(#[from] AcqError),
    #[error("trace line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acquisition {
    Ei,
    UtilEi,
}

impl Acquisition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ei => "ei",
            Self::UtilEi => "util-ei",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub acquisition: Acquisition,
    pub schedule: PercentileSchedule,
    pub budget: usize,
    pub seed: u64,
    pub surrogate: KernelConfig,
    pub restarts: usize,
}

impl BoConfig {
    pub fn new(acquisition: Acquisition, budget: usize, seed: u64) -> Self {
        Self {
            acquisition,
            schedule: PercentileSchedule::paper_default(),
            budget,
            seed,
            surrogate: KernelConfig::default(),
            restarts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoStep {
    /// Observations available before this query.
    pub n: usize,
    /// Position of the queried experiment in the dataset.
    pub index: usize,
    pub experiment: Experiment,
    pub yield_value: f64,
    pub running_best: f64,
    pub percentile: f64,
    pub gate_size: usize,
    pub gate_forced_open: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoTrace {
    pub config: BoConfig,
    pub dataset_name: String,
    pub dataset_hash: String,
    pub steps: Vec<BoStep>,
}

/// Splits a seed into independent streams by mixing in `salt`.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Gate {
    sorted: Vec<f64>,
}

impl Gate {
    fn admissible(&self, utilities: &[f64], p: f64) -> Vec<bool> {
        let t = gate_threshold(&self.sorted, p);
        utilities.iter().map(|g| *g >= t).collect()
    }
}

/// Draws the first experiment: uniform over the admissible set at `p(0)` in
/// util-ei mode, over every candidate in ei mode. Returns the index, the
/// percentile used and the admissible count.
pub fn seed_experiment(
    n_candidates: usize,
    utilities: Option<&[f64]>,
    schedule: &PercentileSchedule,
    rng: &mut ChaCha8Rng,
) -> (usize, f64, usize) {
    match utilities {
        None => (rng.gen_range(0..n_candidates), 0.0, n_candidates),
        Some(g) => {
            let mut sorted = g.to_vec();
            sorted.sort_by(f64::total_cmp);
            let p = schedule_value(schedule, 0);
            let gate = Gate { sorted }.admissible(g, p);
            let admissible: Vec<usize> = (0..g.len()).filter(|&i| gate[i]).collect();
            (admissible[rng.gen_range(0..admissible.len())], p, admissible.len())
        }
    }
}

/// One BO campaign. `utilities` are the table values aligned with the
/// dataset's experiment order; required in util-ei mode.
pub fn run_bo(dataset: &YieldDataset, utilities: Option<&[f64]>, config: &BoConfig) -> Result<BoTrace, BoError> {
    let n_x = dataset.len();
    if config.budget == 0 {
        return Err(BoError::ZeroBudget);
    }
    if config.budget > n_x {
        return Err(BoError::BudgetTooLarge { budget: config.budget, candidates: n_x });
    }
    let utilities = match config.acquisition {
        Acquisition::Ei => None,
        Acquisition::UtilEi => {
            let g = utilities.ok_or(BoError::MissingUtility)?;
            if g.len() != n_x {
                return Err(BoError::UtilityLength { got: g.len(), expected: n_x });
            }
            Some(g)
        }
    };
    let gate = utilities.map(|g| {
        let mut sorted = g.to_vec();
        sorted.sort_by(f64::total_cmp);
        Gate { sorted }
    });
    let encoded = dataset.encode_all();
    let yields = dataset.yields();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut queried = vec![false; n_x];
    let mut xs = Vec::with_capacity(config.budget);
    let mut ys = Vec::with_capacity(config.budget);
    let mut steps: Vec<BoStep> = Vec::with_capacity(config.budget);

    let record = |steps: &mut Vec<BoStep>, index: usize, n: usize, percentile: f64, gate_size: usize, forced: bool| {
        let y = yields[index];
        let best = steps.last().map_or(y, |s| s.running_best.max(y));
        steps.push(BoStep {
            n,
            index,
            experiment: dataset.experiments()[index].clone(),
            yield_value: y,
            running_best: best,
            percentile,
            gate_size,
            gate_forced_open: forced,
        });
    };

    let (first, p0, size0) = seed_experiment(n_x, utilities, &config.schedule, &mut rng);
    queried[first] = true;
    xs.push(encoded[first].clone());
    ys.push(yields[first]);
    record(&mut steps, first, 0, p0, size0, false);

    for n in 1..config.budget {
        let model = fit_gp(&xs, &ys, &config.surrogate, config.restarts, derive_seed(config.seed, n as u64))?;
        let (p, admissible) = match (&gate, utilities) {
            (Some(gate), Some(g)) => {
                let p = schedule_value(&config.schedule, n);
                (p, gate.admissible(g, p))
            }
            _ => (0.0, vec![true; n_x]),
        };
        let gate_size = admissible.iter().filter(|a| **a).count();
        let forced = !(0..n_x).any(|i| admissible[i] && !queried[i]);
        if forced {
            log::debug!("iteration {n}: every admissible candidate already queried; gate opened");
        }
        let open: Vec<usize> = (0..n_x).filter(|&i| !queried[i] && (forced || admissible[i])).collect();
        let open_x: Vec<_> = open.iter().map(|&i| encoded[i].clone()).collect();
        let preds = model.predict_batch(&open_x)?;
        let y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut best: Option<(usize, f64)> = None;
        for (&i, pred) in open.iter().zip(&preds) {
            let a = expected_improvement(pred, y_max)?;
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
        let (next, _) = best.expect("budget <= |X| leaves an open candidate");
        queried[next] = true;
        xs.push(encoded[next].clone());
        ys.push(yields[next]);
        record(&mut steps, next, n, p, gate_size, forced);
    }
    let trace = BoTrace {
        config: *config,
        dataset_name: dataset.name().to_string(),
        dataset_hash: dataset.content_hash(),
        steps,
    };
    trace.check_invariants()?;
    Ok(trace)
}

impl BoTrace {
    pub fn check_invariants(&self) -> Result<(), BoError> {
        if self.steps.len() > self.config.budget {
            return Err(BoError::Invariant(format!(
                "{} steps exceed budget {}",
                self.steps.len(),
                self.config.budget
            )));
        }
        let mut seen = std::collections::HashSet::new();
        let mut best = f64::NEG_INFINITY;
        for s in &self.steps {
            if !seen.insert(&s.experiment) {
                return Err(BoError::Invariant(format!("experiment queried twice at n = {}", s.n)));
            }
            if s.running_best < best || s.running_best < s.yield_value {
                return Err(BoError::Invariant(format!("running best decreased at n = {}", s.n)));
            }
            best = s.running_best;
        }
        Ok(())
    }

    pub fn running_best(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.running_best).collect()
    }

    /// Index of the best measured experiment (first on ties).
    pub fn recommendation(&self) -> Option<&BoStep> {
        self.steps
            .iter()
            .fold(None, |best: Option<&BoStep>, s| match best {
                Some(b) if b.yield_value >= s.yield_value => Some(b),
                _ => Some(s),
            })
    }

    pub fn to_jsonl(&self, space: &ParameterSpace) -> String {
        let header = json!({
            "kind": "header",
            "dataset": self.dataset_name,
            "dataset_hash": self.dataset_hash,
            "config": self.config,
        });
        let mut out = header.to_string();
        out.push('\n');
        for s in &self.steps {
            let line = json!({
                "n": s.n,
                "index": s.index,
                "experiment": space.experiment_to_json(&s.experiment),
                "yield": s.yield_value,
                "running_best": s.running_best,
                "percentile": s.percentile,
                "gate_size": s.gate_size,
                "gate_forced_open": s.gate_forced_open,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, space: &ParameterSpace) -> Result<Self, BoError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, message: String| BoError::Format { line: line + 1, message };
        let (i, head) = lines.next().ok_or_else(|| err(0, "empty trace".into()))?;
        let head: Value = serde_json::from_str(head).map_err(|e| err(i, e.to_string()))?;
        if head.get("kind").and_then(Value::as_str) != Some("header") {
            return Err(err(i, "first line must be the campaign header".into()));
        }
        let config: BoConfig =
            serde_json::from_value(head["config"].clone()).map_err(|e| err(i, e.to_string()))?;
        let text_field = |v: &Value, k: &str| v.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        let mut steps = Vec::new();
        for (i, line) in lines {
            let v: Value = serde_json::from_str(line).map_err(|e| err(i, e.to_string()))?;
            let num = |k: &str| v.get(k).and_then(Value::as_f64).ok_or_else(|| err(i, format!("missing `{k}`")));
            let int = |k: &str| v.get(k).and_then(Value::as_u64).ok_or_else(|| err(i, format!("missing `{k}`")));
            steps.push(BoStep {
                n: int("n")? as usize,
                index: int("index")? as usize,
                experiment: space.experiment_from_json(&v["experiment"]).map_err(|e| err(i, e.to_string()))?,
                yield_value: num("yield")?,
                running_best: num("running_best")?,
                percentile: num("percentile")?,
                gate_size: int("gate_size")? as usize,
                gate_forced_open: v.get("gate_forced_open").and_then(Value::as_bool).unwrap_or(false),
            });
        }
        Ok(Self {
            config,
            dataset_name: text_field(&head, "dataset"),
            dataset_hash: text_field(&head, "dataset_hash"),
            steps,
        })
    }
}
