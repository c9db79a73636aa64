//! Synthetic yield landscapes for offline verification.
//!
//! Yield of an experiment is
//! `clamp(base + Σ main effects + Σ pairwise interactions + noise, 0, 100)`.
//! Categorical main effects are per level; continuous parameters contribute a
//! linear and a quadratic term in their `[0, 1]`-scaled value. Every pair of
//! parameters gets an interaction term.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::space::{CategoricalParam, Experiment, ParameterSpace};
use super::{DomainError, YieldDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    pub base: f64,
    /// Standard deviation of the sampled main effects.
    pub main_sd: f64,
    /// Standard deviation of the sampled pairwise interaction terms.
    pub interaction_strength: f64,
    /// Measurement noise added once per experiment.
    pub noise_sd: f64,
}

impl Default for EffectSpec {
    fn default() -> Self {
        Self {
            base: 40.0,
            main_sd: 10.0,
            interaction_strength: 4.0,
            noise_sd: 2.0,
        }
    }
}

/// Interaction term between parameters `a < b` (canonical indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Interaction {
    /// `table[level_a][level_b]`.
    CatCat { a: usize, b: usize, table: Vec<Vec<f64>> },
    /// `slopes[level_a] * scaled_b`.
    CatCont { a: usize, b: usize, slopes: Vec<f64> },
    /// `coef * scaled_a * scaled_b`.
    ContCont { a: usize, b: usize, coef: f64 },
}

/// Retrievable effect table behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEffects {
    pub base: f64,
    /// One vector of level effects per categorical parameter.
    pub categorical: Vec<Vec<f64>>,
    /// `(linear, quadratic)` coefficients per continuous parameter.
    pub continuous: Vec<(f64, f64)>,
    pub interactions: Vec<Interaction>,
}

impl SyntheticEffects {
    /// Effects with only categorical main effects and no interactions.
    pub fn main_only(base: f64, categorical: Vec<Vec<f64>>, n_continuous: usize) -> Self {
        Self {
            base,
            categorical,
            continuous: vec![(0.0, 0.0); n_continuous],
            interactions: Vec::new(),
        }
    }

    pub fn sample(space: &ParameterSpace, spec: &EffectSpec, rng: &mut ChaCha8Rng) -> Self {
        let main = Normal::new(0.0, spec.main_sd.max(0.0)).expect("sd >= 0");
        let inter = Normal::new(0.0, spec.interaction_strength.max(0.0)).expect("sd >= 0");
        let categorical = space
            .categoricals()
            .iter()
            .map(|c| c.levels.iter().map(|_| main.sample(rng)).collect())
            .collect();
        let continuous = space
            .continuous()
            .iter()
            .map(|_| (main.sample(rng), main.sample(rng)))
            .collect();
        let n_cat = space.categoricals().len();
        let n = space.n_params();
        let levels = |p: usize| space.categoricals()[p].levels.len();
        let mut interactions = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                interactions.push(match (a < n_cat, b < n_cat) {
                    (true, true) => Interaction::CatCat {
                        a,
                        b,
                        table: (0..levels(a))
                            .map(|_| (0..levels(b)).map(|_| inter.sample(rng)).collect())
                            .collect(),
                    },
                    (true, false) => Interaction::CatCont {
                        a,
                        b,
                        slopes: (0..levels(a)).map(|_| inter.sample(rng)).collect(),
                    },
                    _ => Interaction::ContCont {
                        a,
                        b,
                        coef: inter.sample(rng),
                    },
                });
            }
        }
        Self {
            base: spec.base,
            categorical,
            continuous,
            interactions,
        }
    }

    /// Yield before noise and clamping.
    pub fn noiseless_yield(&self, space: &ParameterSpace, x: &Experiment) -> Result<f64, DomainError> {
        let levels = space.level_indices(x)?;
        let scaled = space.scaled_continuous(x)?;
        let n_cat = levels.len();
        let mut y = self.base;
        for (effects, &l) in self.categorical.iter().zip(&levels) {
            y += effects[l];
        }
        for (&(lin, quad), &s) in self.continuous.iter().zip(&scaled) {
            y += lin * s + quad * s * s;
        }
        for term in &self.interactions {
            y += match term {
                Interaction::CatCat { a, b, table } => table[levels[*a]][levels[*b]],
                Interaction::CatCont { a, b, slopes } => slopes[levels[*a]] * scaled[*b - n_cat],
                Interaction::ContCont { a, b, coef } => coef * scaled[*a - n_cat] * scaled[*b - n_cat],
            };
        }
        Ok(y)
    }
}

/// A generated dataset together with the effects that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: YieldDataset,
    pub effects: SyntheticEffects,
}

/// Samples effects from `spec` and evaluates them over the full factorial of
/// `space` (continuous parameters use their declared grids).
pub fn gen_synthetic_dataset(
    space: &ParameterSpace,
    spec: &EffectSpec,
    seed: u64,
) -> Result<SyntheticDataset, DomainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let effects = SyntheticEffects::sample(space, spec, &mut rng);
    let dataset = dataset_from_effects(space, &effects, spec.noise_sd, seed, &format!("synthetic-{seed}"))?;
    Ok(SyntheticDataset { dataset, effects })
}

pub fn dataset_from_effects(
    space: &ParameterSpace,
    effects: &SyntheticEffects,
    noise_sd: f64,
    seed: u64,
    name: &str,
) -> Result<YieldDataset, DomainError> {
    let experiments = space.enumerate()?;
    // separate stream from effect sampling so the noise does not depend on
    // how many effects were drawn
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let noise = Normal::new(0.0, noise_sd.max(0.0)).expect("sd >= 0");
    let yields = experiments
        .iter()
        .map(|x| {
            let e = if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            effects
                .noiseless_yield(space, x)
                .map(|y| (y + e).clamp(0.0, 100.0))
        })
        .collect::<Result<Vec<_>, _>>()?;
    YieldDataset::new(name, space.clone(), experiments, yields)
}

/// An all-categorical space `name: [name-1, name-2, ...]` with the given level counts.
pub fn reaction_space(params: &[(&str, usize)]) -> Result<ParameterSpace, DomainError> {
    let cats = params
        .iter()
        .map(|(name, k)| CategoricalParam {
            name: name.to_string(),
            levels: (1..=*k).map(|i| format!("{name}-{i}")).collect(),
        })
        .collect();
    ParameterSpace::new(cats, Vec::new())
}
