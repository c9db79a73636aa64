//! Pairwise surveys: generation, conversion to preferences, and grading.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domain::{DomainError, Experiment, ParameterSpace, YieldDataset};
use crate::pref::PreferencePair;
use crate::stats::binomial_upper_tail_half;

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("L must be >= 1")]
    InvalidRepeats,
    #[error("a survey needs at least two experiments")]
    TooFewExperiments,
    #[error("answer references unknown question {0}")]
    UnknownQuestion(usize),
    #[error("question {0} answered more than once")]
    DuplicateAnswer(usize),
    #[error("question {0} has no yield in the dataset")]
    MissingYield(usize),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub id: usize,
    pub option_a: Experiment,
    pub option_b: Experiment,
}

/// How a survey was generated; absent for surveys read back from a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyOrigin {
    pub repeats: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Survey {
    dataset_name: String,
    origin: Option<SurveyOrigin>,
    questions: Vec<Question>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub question_id: usize,
    pub choice: Choice,
    pub rationale: String,
    pub oracle_tag: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnsweredSurvey {
    answers: Vec<Answer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyGrade {
    pub n_questions: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub binomial_p: f64,
    pub n_ties_excluded: usize,
}

/// Two arrays holding `repeats` copies of every experiment are shuffled and
/// paired position by position; self-pairs and repeated unordered pairs are
/// dropped.
pub fn generate_survey(dataset: &YieldDataset, repeats: usize, seed: u64) -> Result<Survey, SurveyError> {
    if repeats == 0 {
        return Err(SurveyError::InvalidRepeats);
    }
    let n = dataset.len();
    if n < 2 {
        return Err(SurveyError::TooFewExperiments);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<usize> = (0..repeats).flat_map(|_| 0..n).collect();
    let mut first = base.clone();
    let mut second = base;
    first.shuffle(&mut rng);
    second.shuffle(&mut rng);
    let mut seen = HashSet::new();
    let mut questions = Vec::new();
    for (&a, &b) in first.iter().zip(&second) {
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        questions.push(Question {
            id: questions.len(),
            option_a: dataset.experiments()[a].clone(),
            option_b: dataset.experiments()[b].clone(),
        });
    }
    Ok(Survey {
        dataset_name: dataset.name().to_string(),
        origin: Some(SurveyOrigin { repeats, seed }),
        questions,
    })
}

impl Survey {
    /// Validates ids (dense from 0), distinct options and unordered uniqueness.
    pub fn new(dataset_name: impl Into<String>, questions: Vec<Question>) -> Result<Self, SurveyError> {
        let mut seen = HashSet::new();
        for (i, q) in questions.iter().enumerate() {
            let bad = |message: &str| SurveyError::Format { line: i + 1, message: message.into() };
            if q.id != i {
                return Err(bad("question ids must be dense from 0"));
            }
            if q.option_a == q.option_b {
                return Err(bad("option_a equals option_b"));
            }
            if seen.contains(&(&q.option_b, &q.option_a)) || !seen.insert((&q.option_a, &q.option_b)) {
                return Err(bad("repeated unordered pair"));
            }
        }
        Ok(Self {
            dataset_name: dataset_name.into(),
            origin: None,
            questions,
        })
    }

    pub fn dataset_name(&self) -> &str {
        &self.dataset_name
    }

    pub fn origin(&self) -> Option<SurveyOrigin> {
        self.origin
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn question(&self, id: usize) -> Option<&Question> {
        self.questions.get(id)
    }

    pub fn to_jsonl(&self, space: &ParameterSpace) -> String {
        let mut out = String::new();
        for q in &self.questions {
            let line = json!({
                "id": q.id,
                "option_a": space.experiment_to_json(&q.option_a),
                "option_b": space.experiment_to_json(&q.option_b),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, space: &ParameterSpace, dataset_name: &str) -> Result<Self, SurveyError> {
        let mut questions = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| SurveyError::Format { line: i + 1, message };
            let v: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let id = v
                .get("id")
                .and_then(Value::as_u64)
                .ok_or_else(|| err("missing integer `id`".into()))? as usize;
            let option = |key: &str| -> Result<Experiment, SurveyError> {
                let o = v.get(key).ok_or_else(|| err(format!("missing `{key}`")))?;
                space.experiment_from_json(o).map_err(|e| err(e.to_string()))
            };
            questions.push(Question {
                id,
                option_a: option("option_a")?,
                option_b: option("option_b")?,
            });
        }
        Self::new(dataset_name, questions)
    }

    /// Number of questions in which each dataset experiment appears.
    pub fn appearances(&self, dataset: &YieldDataset) -> Vec<usize> {
        let mut counts = vec![0; dataset.len()];
        for q in &self.questions {
            for x in [&q.option_a, &q.option_b] {
                if let Some(i) = dataset.index_of(x) {
                    counts[i] += 1;
                }
            }
        }
        counts
    }
}

impl Answer {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("answers serialize")
    }
}

impl AnsweredSurvey {
    /// Answers must carry distinct question ids.
    pub fn new(answers: Vec<Answer>) -> Result<Self, SurveyError> {
        let mut seen = HashSet::new();
        for a in &answers {
            if !seen.insert(a.question_id) {
                return Err(SurveyError::DuplicateAnswer(a.question_id));
            }
        }
        Ok(Self { answers })
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    /// Checks every answer refers to a question of `survey`.
    pub fn validate_against(&self, survey: &Survey) -> Result<(), SurveyError> {
        match self.answers.iter().find(|a| a.question_id >= survey.len()) {
            Some(a) => Err(SurveyError::UnknownQuestion(a.question_id)),
            None => Ok(()),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.answers {
            out.push_str(&a.to_json_line());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SurveyError> {
        let answers = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<Answer>(l).map_err(|e| SurveyError::Format {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(answers)
    }
}

/// Preference pairs from the answered questions and the number of questions
/// left unanswered.
pub fn to_preferences(
    survey: &Survey,
    answers: &AnsweredSurvey,
) -> Result<(Vec<PreferencePair>, usize), SurveyError> {
    answers.validate_against(survey)?;
    let mut pairs = Vec::with_capacity(answers.len());
    for a in &answers.answers {
        let q = &survey.questions[a.question_id];
        let (w, l) = match a.choice {
            Choice::A => (&q.option_a, &q.option_b),
            Choice::B => (&q.option_b, &q.option_a),
        };
        pairs.push(
            PreferencePair::new(w.clone(), l.clone())
                .expect("survey questions never pair an experiment with itself"),
        );
    }
    Ok((pairs, survey.len() - answers.len()))
}

/// Scores answers against measured yields; equal-yield questions are excluded.
pub fn grade_survey(
    survey: &Survey,
    answers: &AnsweredSurvey,
    dataset: &YieldDataset,
) -> Result<SurveyGrade, SurveyError> {
    answers.validate_against(survey)?;
    let mut n = 0usize;
    let mut correct = 0usize;
    let mut ties = 0usize;
    for a in &answers.answers {
        let q = &survey.questions[a.question_id];
        let ya = dataset.yield_of(&q.option_a).ok_or(SurveyError::MissingYield(q.id))?;
        let yb = dataset.yield_of(&q.option_b).ok_or(SurveyError::MissingYield(q.id))?;
        if ya == yb {
            ties += 1;
            continue;
        }
        n += 1;
        let (chosen, other) = match a.choice {
            Choice::A => (ya, yb),
            Choice::B => (yb, ya),
        };
        if chosen > other {
            correct += 1;
        }
    }
    Ok(SurveyGrade {
        n_questions: n,
        n_correct: correct,
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        binomial_p: binomial_upper_tail_half(n as u64, correct as u64),
        n_ties_excluded: ties,
    })
}

/// Answers keyed by question id.
pub fn answers_by_id(answers: &AnsweredSurvey) -> HashMap<usize, &Answer> {
    answers.answers.iter().map(|a| (a.question_id, a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{gen_synthetic_dataset, reaction_space, EffectSpec};

    fn dataset(levels: &[(&str, usize)], seed: u64) -> YieldDataset {
        let space = reaction_space(levels).unwrap();
        gen_synthetic_dataset(&space, &EffectSpec::default(), seed).unwrap().dataset
    }

    fn perfect(survey: &Survey, ds: &YieldDataset) -> AnsweredSurvey {
        let answers = survey
            .questions()
            .iter()
            .map(|q| Answer {
                question_id: q.id,
                choice: if ds.yield_of(&q.option_a) > ds.yield_of(&q.option_b) { Choice::A } else { Choice::B },
                rationale: String::new(),
                oracle_tag: "test".into(),
            })
            .collect();
        AnsweredSurvey::new(answers).unwrap()
    }

    #[test]
    fn structure_and_count_bound() {
        let ds = dataset(&[("a", 8), ("b", 5), ("c", 5)], 1);
        for seed in 0..3 {
            let s = generate_survey(&ds, 10, seed).unwrap();
            assert!(s.len() <= 10 * ds.len());
            let mut seen = HashSet::new();
            for (i, q) in s.questions().iter().enumerate() {
                assert_eq!(q.id, i);
                assert_ne!(q.option_a, q.option_b);
                let (a, b) = (ds.index_of(&q.option_a).unwrap(), ds.index_of(&q.option_b).unwrap());
                assert!(seen.insert((a.min(b), a.max(b))));
            }
            assert!(s.appearances(&ds).iter().all(|&c| c >= 1));
            assert_eq!(s, generate_survey(&ds, 10, seed).unwrap());
        }
    }

    #[test]
    fn two_experiments_one_repeat() {
        let ds = dataset(&[("a", 2)], 0);
        for seed in 0..20 {
            let s = generate_survey(&ds, 1, seed).unwrap();
            assert!(s.len() <= 1);
            assert!(s.questions().iter().all(|q| q.option_a != q.option_b));
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let ds = dataset(&[("a", 3)], 0);
        assert!(matches!(generate_survey(&ds, 0, 0), Err(SurveyError::InvalidRepeats)));
    }

    #[test]
    fn preferences_follow_choices() {
        let ds = dataset(&[("a", 4), ("b", 3)], 2);
        let s = generate_survey(&ds, 2, 0).unwrap();
        let q = &s.questions()[0];
        let one = AnsweredSurvey::new(vec![Answer { question_id: 0, choice: Choice::A, rationale: "r".into(), oracle_tag: "t".into() }]).unwrap();
        let (pairs, skipped) = to_preferences(&s, &one).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].winner(), &q.option_a);
        assert_eq!(skipped, s.len() - 1);

        let (pairs, skipped) = to_preferences(&s, &AnsweredSurvey::default()).unwrap();
        assert!(pairs.is_empty());
        assert_eq!(skipped, s.len());

        let bad = AnsweredSurvey::new(vec![Answer { question_id: 10_000, choice: Choice::B, rationale: String::new(), oracle_tag: String::new() }]).unwrap();
        assert!(matches!(to_preferences(&s, &bad), Err(SurveyError::UnknownQuestion(10_000))));
    }

    #[test]
    fn grading() {
        let ds = dataset(&[("a", 6), ("b", 4)], 3);
        assert!(ds.is_tie_free());
        let s = generate_survey(&ds, 5, 1).unwrap();
        let g = grade_survey(&s, &perfect(&s, &ds), &ds).unwrap();
        assert_eq!(g.accuracy, 1.0);
        assert_eq!(g.n_ties_excluded, 0);
        assert!(g.binomial_p < 1e-6);
    }

    #[test]
    fn ties_are_excluded() {
        let space = reaction_space(&[("a", 3)]).unwrap();
        let xs = space.enumerate().unwrap();
        let ds = YieldDataset::new("t", space, xs.clone(), vec![10.0, 10.0, 20.0]).unwrap();
        let q = |id, a: usize, b: usize| Question { id, option_a: xs[a].clone(), option_b: xs[b].clone() };
        let s = Survey::new("t", vec![q(0, 0, 1), q(1, 0, 2), q(2, 2, 1)]).unwrap();
        let ans = |id, choice| Answer { question_id: id, choice, rationale: String::new(), oracle_tag: String::new() };
        let a = AnsweredSurvey::new(vec![ans(0, Choice::A), ans(1, Choice::B), ans(2, Choice::B)]).unwrap();
        let g = grade_survey(&s, &a, &ds).unwrap();
        assert_eq!((g.n_questions, g.n_correct, g.n_ties_excluded), (2, 1, 1));
        assert_eq!(g.accuracy, 0.5);
        assert!((g.binomial_p - 0.75).abs() < 1e-12);
    }

    #[test]
    fn jsonl_round_trips() {
        let ds = dataset(&[("a", 4), ("b", 3)], 4);
        let s = generate_survey(&ds, 3, 9).unwrap();
        let text = s.to_jsonl(ds.space());
        let back = Survey::from_jsonl(&text, ds.space(), ds.name()).unwrap();
        assert_eq!(back.questions(), s.questions());
        assert_eq!(back.to_jsonl(ds.space()), text);

        let a = perfect(&s, &ds);
        let text = a.to_jsonl();
        assert_eq!(AnsweredSurvey::from_jsonl(&text).unwrap(), a);
        assert!(text.lines().next().unwrap().contains("\"choice\":\"A\"") || text.contains("\"choice\":\"B\""));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let ds = dataset(&[("a", 3)], 0);
        assert!(Survey::from_jsonl("{\"id\":0}\n", ds.space(), "x").is_err());
        assert!(Survey::from_jsonl("not json\n", ds.space(), "x").is_err());
        let dup = "{\"question_id\":0,\"choice\":\"A\",\"rationale\":\"\",\"oracle_tag\":\"\"}\n".repeat(2);
        assert!(matches!(AnsweredSurvey::from_jsonl(&dup), Err(SurveyError::DuplicateAnswer(0))));
        assert!(AnsweredSurvey::from_jsonl("{\"question_id\":0,\"choice\":\"C\",\"rationale\":\"\",\"oracle_tag\":\"\"}").is_err());
    }
}
