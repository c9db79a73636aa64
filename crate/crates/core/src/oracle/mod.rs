//! Survey-answering backends: a live LLM, a yield-driven synthetic model, and
//! replay of stored answers.

mod llm;
mod parse;
mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

pub use llm::{Completion, LlmClient, LlmConfig, DEFAULT_API_KEY_ENV};
pub use parse::{completion_text, parse_choice, parse_yield, YieldParse};
pub use synthetic::{
    calibrate_tau, calibrate_tau_for_dataset, synthetic_choice_probability, Calibration, SyntheticConfig,
};

use crate::domain::{Experiment, ParameterSpace, YieldDataset};
use crate::survey::{Answer, AnsweredSurvey, Choice, Question, Survey, SurveyError};

pub const ZERO_SHOT_TEMPLATE: &str = "yield-v1";

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("invalid oracle configuration: {0}")]
    InvalidConfig(String),
    #[error("the synthetic oracle needs the dataset with ground-truth yields")]
    MissingDataset,
    #[error("question {0} has no ground-truth yield")]
    MissingYield(usize),
    #[error("environment variable {0} holding the API key is not set")]
    MissingCredentials(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limit retries exhausted")]
    RateLimited,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unparseable response: {0}")]
    Unparseable(String),
    #[error("predicted yield {0} is outside [0, 100]")]
    OutOfRange(f64),
    #[error("replay file has no answer for question {0}")]
    ReplayMissing(usize),
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("{} of {total} questions unanswered", .unanswered.len())]
    TooManyUnanswered {
        unanswered: Vec<usize>,
        total: usize,
        partial: Box<AnsweredSurvey>,
    },
    #[error("checkpoint: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Survey(#[from] SurveyError),
}

impl OracleError {
    /// Whether the failure came from talking to a remote service.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            Self::Transport(_) | Self::RateLimited | Self::Http { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub answer_file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum OracleConfig {
    Llm(LlmConfig),
    Synthetic(SyntheticConfig),
    Replay(ReplayConfig),
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        match self {
            Self::Llm(c) => c.validate(),
            Self::Synthetic(c) if !(c.tau >= 0.0) => {
                Err(OracleError::InvalidConfig(format!("tau {} must be >= 0", c.tau)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleAnswer {
    pub choice: Choice,
    pub rationale: String,
    pub raw_response: String,
    pub latency_ms: u64,
    pub oracle_tag: String,
}

pub fn prompt_template(id: &str) -> Result<&'static str, OracleError> {
    match id {
        "survey-v1" => Ok(include_str!("../../assets/prompts/survey-v1.txt")),
        "yield-v1" => Ok(include_str!("../../assets/prompts/yield-v1.txt")),
        other => Err(OracleError::UnknownTemplate(other.to_string())),
    }
}

pub fn render_survey_prompt(template: &str, context: &str, space: &ParameterSpace, q: &Question) -> String {
    template
        .replace("{context}", context.trim())
        .replace("{option_a}", &space.describe(&q.option_a))
        .replace("{option_b}", &space.describe(&q.option_b))
}

pub fn render_yield_prompt(template: &str, context: &str, space: &ParameterSpace, x: &Experiment) -> String {
    template
        .replace("{context}", context.trim())
        .replace("{experiment}", &space.describe(x))
}

enum Backend<'a> {
    Llm { client: LlmClient, template: &'static str },
    Synthetic { config: SyntheticConfig, dataset: &'a YieldDataset },
    Replay(HashMap<usize, Answer>),
}

/// A configured backend ready to answer questions.
pub struct Oracle<'a> {
    backend: Backend<'a>,
    space: &'a ParameterSpace,
    context: String,
}

impl<'a> Oracle<'a> {
    pub fn new(
        config: &OracleConfig,
        space: &'a ParameterSpace,
        dataset: Option<&'a YieldDataset>,
        context: &str,
    ) -> Result<Self, OracleError> {
        config.validate()?;
        let backend = match config {
            OracleConfig::Llm(c) => Backend::Llm {
                template: prompt_template(&c.prompt_template_id)?,
                client: LlmClient::new(c)?,
            },
            OracleConfig::Synthetic(c) => Backend::Synthetic {
                config: *c,
                dataset: dataset.ok_or(OracleError::MissingDataset)?,
            },
            OracleConfig::Replay(r) => {
                let text = std::fs::read_to_string(&r.answer_file)?;
                let stored = AnsweredSurvey::from_jsonl(&text)?;
                Backend::Replay(stored.answers().iter().map(|a| (a.question_id, a.clone())).collect())
            }
        };
        Ok(Self {
            backend,
            space,
            context: context.to_string(),
        })
    }

    fn parallelism(&self) -> usize {
        match &self.backend {
            Backend::Llm { client, .. } => client.config().max_in_flight,
            _ => 1,
        }
    }

    pub fn answer(&self, q: &Question) -> Result<OracleAnswer, OracleError> {
        match &self.backend {
            Backend::Llm { client, template } => {
                let prompt = render_survey_prompt(template, &self.context, self.space, q);
                let c = client.complete(&prompt)?;
                let (choice, rationale) =
                    parse_choice(&c.text).ok_or_else(|| OracleError::Unparseable(c.text.clone()))?;
                Ok(OracleAnswer {
                    choice,
                    rationale,
                    raw_response: c.text,
                    latency_ms: c.latency_ms,
                    oracle_tag: format!("llm({},{})", client.config().model_name, client.config().prompt_template_id),
                })
            }
            Backend::Synthetic { config, dataset } => {
                let (choice, rationale) = synthetic::synthetic_answer(q, config, dataset)?;
                Ok(OracleAnswer {
                    choice,
                    raw_response: rationale.clone(),
                    rationale,
                    latency_ms: 0,
                    oracle_tag: synthetic::synthetic_tag(config),
                })
            }
            Backend::Replay(stored) => {
                let a = stored.get(&q.id).ok_or(OracleError::ReplayMissing(q.id))?;
                Ok(OracleAnswer {
                    choice: a.choice,
                    rationale: a.rationale.clone(),
                    raw_response: a.rationale.clone(),
                    latency_ms: 0,
                    oracle_tag: a.oracle_tag.clone(),
                })
            }
        }
    }
}

pub fn answer_question(
    q: &Question,
    config: &OracleConfig,
    space: &ParameterSpace,
    dataset: Option<&YieldDataset>,
    context: &str,
) -> Result<OracleAnswer, OracleError> {
    Oracle::new(config, space, dataset, context)?.answer(q)
}

/// Runs `f` over `items` on up to `workers` threads, handing each result to
/// `on_result` on the calling thread as it completes.
fn run_pool<T, R, F, C>(items: &[T], workers: usize, f: F, mut on_result: C)
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
    C: FnMut(usize, R),
{
    if workers <= 1 || items.len() <= 1 {
        for (i, item) in items.iter().enumerate() {
            on_result(i, f(item));
        }
        return;
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        for _ in 0..workers.min(items.len()) {
            let tx = tx.clone();
            let (next, f) = (&next, &f);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() || tx.send((i, f(&items[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, r) in rx {
            on_result(i, r);
        }
    });
}

#[derive(Debug, Clone)]
pub struct AnswerOptions {
    pub context: String,
    /// Append-only JSON-lines checkpoint; existing answers are reused.
    pub checkpoint: Option<PathBuf>,
    pub max_unanswered_fraction: f64,
    pub sync_every: usize,
}

impl Default for AnswerOptions {
    fn default() -> Self {
        Self {
            context: String::new(),
            checkpoint: None,
            max_unanswered_fraction: 0.05,
            sync_every: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurveyRun {
    pub answers: AnsweredSurvey,
    /// Questions that failed, with the reason.
    pub unanswered: Vec<(usize, String)>,
    pub resumed: usize,
}

/// Reads a checkpoint, dropping a torn final line left by an interrupted write.
fn load_checkpoint(path: &Path) -> Result<Vec<Answer>, OracleError> {
    let Ok(mut text) = std::fs::read_to_string(path) else {
        return Ok(Vec::new());
    };
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        text.truncate(keep);
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(keep as u64)?;
    }
    Ok(AnsweredSurvey::from_jsonl(&text)?.answers().to_vec())
}

struct Checkpoint {
    file: File,
    written: usize,
    sync_every: usize,
}

impl Checkpoint {
    fn append(&mut self, a: &Answer) -> Result<(), OracleError> {
        let mut line = a.to_json_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.written += 1;
        if self.sync_every > 0 && self.written % self.sync_every == 0 {
            self.file.sync_data()?;
        }
        Ok(())
    }
}

/// Answers every question of `survey`, committing answers in question order.
pub fn answer_survey(
    survey: &Survey,
    config: &OracleConfig,
    space: &ParameterSpace,
    dataset: Option<&YieldDataset>,
    options: &AnswerOptions,
) -> Result<SurveyRun, OracleError> {
    let oracle = Oracle::new(config, space, dataset, &options.context)?;
    let mut done: BTreeMap<usize, Answer> = BTreeMap::new();
    let mut checkpoint = None;
    if let Some(path) = &options.checkpoint {
        for a in load_checkpoint(path)? {
            if a.question_id >= survey.len() {
                return Err(SurveyError::UnknownQuestion(a.question_id).into());
            }
            done.insert(a.question_id, a);
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        checkpoint = Some(Checkpoint { file, written: 0, sync_every: options.sync_every });
    }
    let resumed = done.len();
    let pending: Vec<&Question> = survey.questions().iter().filter(|q| !done.contains_key(&q.id)).collect();

    let mut slots: Vec<Option<Result<OracleAnswer, OracleError>>> = (0..pending.len()).map(|_| None).collect();
    let mut next_commit = 0;
    let mut unanswered = Vec::new();
    let mut io_error = None;
    run_pool(&pending, oracle.parallelism(), |q| oracle.answer(q), |i, r| {
        slots[i] = Some(r);
        while next_commit < slots.len() {
            let Some(r) = slots[next_commit].take() else { break };
            let q = pending[next_commit];
            next_commit += 1;
            match r {
                Ok(a) => {
                    let answer = Answer {
                        question_id: q.id,
                        choice: a.choice,
                        rationale: a.rationale,
                        oracle_tag: a.oracle_tag,
                    };
                    if let Some(c) = checkpoint.as_mut() {
                        if let Err(e) = c.append(&answer) {
                            io_error.get_or_insert(e);
                        }
                    }
                    done.insert(q.id, answer);
                }
                Err(e) => {
                    log::warn!("question {} unanswered: {e}", q.id);
                    unanswered.push((q.id, e.to_string()));
                }
            }
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    if let Some(c) = checkpoint.as_mut() {
        c.file.sync_data()?;
    }
    let answers = AnsweredSurvey::new(done.into_values().collect())?;
    let total = survey.len();
    if total > 0 && unanswered.len() as f64 > options.max_unanswered_fraction * total as f64 {
        return Err(OracleError::TooManyUnanswered {
            unanswered: unanswered.into_iter().map(|(id, _)| id).collect(),
            total,
            partial: Box::new(answers),
        });
    }
    Ok(SurveyRun { answers, unanswered, resumed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroShotYield {
    pub value: f64,
    pub raw_response: String,
    pub latency_ms: u64,
}

/// Asks the LLM for a percent yield directly.
pub fn zero_shot_yield(
    x: &Experiment,
    config: &LlmConfig,
    space: &ParameterSpace,
    context: &str,
) -> Result<ZeroShotYield, OracleError> {
    let client = LlmClient::new(config)?;
    zero_shot_with(&client, x, space, context)
}

fn zero_shot_with(
    client: &LlmClient,
    x: &Experiment,
    space: &ParameterSpace,
    context: &str,
) -> Result<ZeroShotYield, OracleError> {
    let prompt = render_yield_prompt(prompt_template(ZERO_SHOT_TEMPLATE)?, context, space, x);
    let c = client.complete(&prompt)?;
    match parse_yield(&c.text) {
        YieldParse::Value(value) => Ok(ZeroShotYield { value, raw_response: c.text, latency_ms: c.latency_ms }),
        YieldParse::OutOfRange(v) => Err(OracleError::OutOfRange(v)),
        YieldParse::NoNumber => Err(OracleError::Unparseable(c.text)),
    }
}

/// Zero-shot predictions for many experiments with bounded concurrency; the
/// output is in input order.
pub fn zero_shot_yields(
    xs: &[Experiment],
    config: &LlmConfig,
    space: &ParameterSpace,
    context: &str,
) -> Result<Vec<Result<ZeroShotYield, OracleError>>, OracleError> {
    let client = LlmClient::new(config)?;
    let mut out: Vec<Option<Result<ZeroShotYield, OracleError>>> = (0..xs.len()).map(|_| None).collect();
    run_pool(xs, config.max_in_flight, |x| zero_shot_with(&client, x, space, context), |i, r| {
        out[i] = Some(r);
    });
    Ok(out.into_iter().map(|r| r.expect("every item completes")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{gen_synthetic_dataset, reaction_space, EffectSpec};
    use crate::survey::{generate_survey, grade_survey};

    fn setup() -> (YieldDataset, Survey) {
        let space = reaction_space(&[("a", 6), ("b", 4)]).unwrap();
        let ds = gen_synthetic_dataset(&space, &EffectSpec::default(), 5).unwrap().dataset;
        let s = generate_survey(&ds, 5, 2).unwrap();
        (ds, s)
    }

    #[test]
    fn perfect_synthetic_oracle() {
        let (ds, s) = setup();
        let cfg = OracleConfig::Synthetic(SyntheticConfig { tau: 0.0, seed: 1 });
        let run = answer_survey(&s, &cfg, ds.space(), Some(&ds), &AnswerOptions::default()).unwrap();
        assert_eq!(run.answers.len(), s.len());
        assert_eq!(grade_survey(&s, &run.answers, &ds).unwrap().accuracy, 1.0);
    }

    #[test]
    fn synthetic_requires_dataset() {
        let (ds, s) = setup();
        let cfg = OracleConfig::Synthetic(SyntheticConfig { tau: 1.0, seed: 1 });
        assert!(matches!(
            answer_survey(&s, &cfg, ds.space(), None, &AnswerOptions::default()),
            Err(OracleError::MissingDataset)
        ));
        let bad = OracleConfig::Synthetic(SyntheticConfig { tau: -1.0, seed: 1 });
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tie_resolution_is_seeded() {
        let space = reaction_space(&[("a", 2)]).unwrap();
        let xs = space.enumerate().unwrap();
        let ds = YieldDataset::new("tie", space, xs.clone(), vec![5.0, 5.0]).unwrap();
        let choices: Vec<Choice> = (0..64)
            .map(|seed| {
                let q = Question { id: 0, option_a: xs[0].clone(), option_b: xs[1].clone() };
                let cfg = OracleConfig::Synthetic(SyntheticConfig { tau: 0.0, seed });
                answer_question(&q, &cfg, ds.space(), Some(&ds), "").unwrap().choice
            })
            .collect();
        let n_a = choices.iter().filter(|c| **c == Choice::A).count();
        assert!(n_a > 16 && n_a < 48, "{n_a}");
    }

    #[test]
    fn replay_reproduces_answers_bytewise() {
        let (ds, s) = setup();
        let dir = tempfile::tempdir().unwrap();
        let cfg = OracleConfig::Synthetic(SyntheticConfig { tau: 3.0, seed: 4 });
        let run = answer_survey(&s, &cfg, ds.space(), Some(&ds), &AnswerOptions::default()).unwrap();
        let path = dir.path().join("answers.jsonl");
        std::fs::write(&path, run.answers.to_jsonl()).unwrap();
        let replay = OracleConfig::Replay(ReplayConfig { answer_file: path });
        let again = answer_survey(&s, &replay, ds.space(), None, &AnswerOptions::default()).unwrap();
        assert_eq!(again.answers.to_jsonl(), run.answers.to_jsonl());
    }

    #[test]
    fn checkpoint_resume_skips_done_and_repairs_torn_line() {
        let (ds, s) = setup();
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("ck.jsonl");
        let cfg = OracleConfig::Synthetic(SyntheticConfig { tau: 2.0, seed: 9 });
        let full = answer_survey(&s, &cfg, ds.space(), Some(&ds), &AnswerOptions::default()).unwrap();
        let text = full.answers.to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        let mut partial = lines[..7].join("\n");
        partial.push('\n');
        partial.push_str(&lines[7][..10]);
        std::fs::write(&ck, partial).unwrap();
        let opts = AnswerOptions { checkpoint: Some(ck.clone()), ..Default::default() };
        let run = answer_survey(&s, &cfg, ds.space(), Some(&ds), &opts).unwrap();
        assert_eq!(run.resumed, 7);
        assert_eq!(run.answers, full.answers);
        assert_eq!(std::fs::read_to_string(&ck).unwrap(), full.answers.to_jsonl());
    }

    #[test]
    fn prompts_render_both_options() {
        let (ds, s) = setup();
        let q = &s.questions()[0];
        let p = render_survey_prompt(prompt_template("survey-v1").unwrap(), "Context here.", ds.space(), q);
        assert!(p.contains("Context here."));
        assert!(p.contains(&ds.space().describe(&q.option_a)));
        assert!(p.contains(&ds.space().describe(&q.option_b)));
        assert!(!p.contains('{'));
        assert!(prompt_template("nope").is_err());
        let y = render_yield_prompt(prompt_template(ZERO_SHOT_TEMPLATE).unwrap(), "", ds.space(), &q.option_a);
        assert!(!y.contains('{'));
    }
}
