//! Yield-driven synthetic oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::YieldDataset;
use crate::stats::logistic;
use crate::survey::{generate_survey, grade_survey, Answer, AnsweredSurvey, Choice, Question, Survey};

use super::OracleError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub tau: f64,
    pub seed: u64,
}

/// `P(choose A) = logistic((y_a - y_b) / tau)`; a step function at `tau = 0`.
pub fn synthetic_choice_probability(y_a: f64, y_b: f64, tau: f64) -> f64 {
    let d = y_a - y_b;
    if tau == 0.0 {
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            0.0
        } else {
            0.5
        }
    } else {
        logistic(d / tau)
    }
}

/// The uniform draw for question `id`. Each question has its own stream, so
/// a given seed uses the same draws at every `tau`.
fn draw(seed: u64, id: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng.gen::<f64>()
}

pub(crate) fn synthetic_answer(
    q: &Question,
    config: &SyntheticConfig,
    dataset: &YieldDataset,
) -> Result<(Choice, String), OracleError> {
    let ya = dataset.yield_of(&q.option_a).ok_or(OracleError::MissingYield(q.id))?;
    let yb = dataset.yield_of(&q.option_b).ok_or(OracleError::MissingYield(q.id))?;
    let p = synthetic_choice_probability(ya, yb, config.tau);
    let choice = if draw(config.seed, q.id) < p { Choice::A } else { Choice::B };
    Ok((choice, format!("P(A) = {p:.4}")))
}

pub(crate) fn synthetic_tag(config: &SyntheticConfig) -> String {
    format!("synthetic(tau={},seed={})", config.tau, config.seed)
}

fn answers_at(survey: &Survey, dataset: &YieldDataset, config: &SyntheticConfig) -> Result<AnsweredSurvey, OracleError> {
    let tag = synthetic_tag(config);
    let answers = survey
        .questions()
        .iter()
        .map(|q| {
            let (choice, rationale) = synthetic_answer(q, config, dataset)?;
            Ok(Answer {
                question_id: q.id,
                choice,
                rationale,
                oracle_tag: tag.clone(),
            })
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    Ok(AnsweredSurvey::new(answers)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tau: f64,
    pub accuracy: f64,
}

/// Bisects `ln tau` until the synthetic oracle's graded accuracy on `survey`
/// is within `tol` of `target` (or the bracket collapses).
pub fn calibrate_tau(
    survey: &Survey,
    dataset: &YieldDataset,
    target: f64,
    seed: u64,
    tol: f64,
) -> Result<Calibration, OracleError> {
    if !(0.5..=1.0).contains(&target) {
        return Err(OracleError::InvalidConfig(format!("target accuracy {target} outside [0.5, 1]")));
    }
    let accuracy = |tau: f64| -> Result<f64, OracleError> {
        let a = answers_at(survey, dataset, &SyntheticConfig { tau, seed })?;
        Ok(grade_survey(survey, &a, dataset)?.accuracy)
    };
    let yields = dataset.yields();
    let span = yields.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - yields.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = if span > 0.0 { span } else { 1.0 };
    let (mut lo, mut hi) = ((span * 1e-4).ln(), (span * 1e4).ln());
    let mut best = Calibration { tau: lo.exp(), accuracy: accuracy(lo.exp())? };
    for _ in 0..60 {
        if (best.accuracy - target).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let acc = accuracy(mid.exp())?;
        if (acc - target).abs() < (best.accuracy - target).abs() {
            best = Calibration { tau: mid.exp(), accuracy: acc };
        }
        if acc > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Calibrates on a fresh survey of the dataset generated with `survey_seed`.
pub fn calibrate_tau_for_dataset(
    dataset: &YieldDataset,
    repeats: usize,
    survey_seed: u64,
    oracle_seed: u64,
    target: f64,
    tol: f64,
) -> Result<Calibration, OracleError> {
    let survey = generate_survey(dataset, repeats, survey_seed)?;
    calibrate_tau(&survey, dataset, target, oracle_seed, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{gen_synthetic_dataset, reaction_space, EffectSpec};

    fn setup() -> (YieldDataset, Survey) {
        let space = reaction_space(&[("a", 8), ("b", 5), ("c", 5)]).unwrap();
        let ds = gen_synthetic_dataset(&space, &EffectSpec::default(), 11).unwrap().dataset;
        let s = generate_survey(&ds, 10, 3).unwrap();
        (ds, s)
    }

    #[test]
    fn probability_reference_values() {
        assert_eq!(synthetic_choice_probability(3.0, 3.0, 0.0), 0.5);
        assert_eq!(synthetic_choice_probability(3.0, 3.0, 7.0), 0.5);
        assert_eq!(synthetic_choice_probability(60.0, 40.0, 0.0), 1.0);
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((synthetic_choice_probability(12.5, 10.0, 2.5) - expected).abs() < 1e-15);
        assert!((expected - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn accuracy_is_monotone_in_tau() {
        let (ds, s) = setup();
        for seed in 0..5 {
            let mut prev = f64::INFINITY;
            for tau in [0.0, 5.0, 20.0, 100.0] {
                let a = answers_at(&s, &ds, &SyntheticConfig { tau, seed }).unwrap();
                let acc = grade_survey(&s, &a, &ds).unwrap().accuracy;
                assert!(acc <= prev, "seed {seed} tau {tau}: {acc} > {prev}");
                prev = acc;
            }
        }
    }

    #[test]
    fn large_tau_is_a_coin_flip() {
        let (ds, s) = setup();
        let n = s.len() as f64;
        for seed in 0..5 {
            let a = answers_at(&s, &ds, &SyntheticConfig { tau: 1e9, seed }).unwrap();
            let acc = grade_survey(&s, &a, &ds).unwrap().accuracy;
            assert!((acc - 0.5).abs() <= 2.0 * (0.25 / n).sqrt(), "seed {seed}: {acc}");
        }
    }

    #[test]
    fn calibration_hits_paper_band() {
        let (ds, s) = setup();
        for target in [0.64, 0.685, 0.731] {
            let c = calibrate_tau(&s, &ds, target, 1, 0.005).unwrap();
            assert!((c.accuracy - target).abs() <= 0.005, "{c:?}");
            assert!(c.tau > 0.0);
        }
    }
}
