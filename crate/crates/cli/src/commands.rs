use std::path::Path;

use log::info;
use prefbo::acq::PercentileSchedule;
use prefbo::bench::{
    correlation_json, correlation_report, curve_csv, curves_svg, report_json, run_campaigns, scatter_svg,
    search_csv, search_json, tune_schedule, CampaignStats, TuneOptions,
};
use prefbo::bo::{run_bo, Acquisition, BoConfig};
use prefbo::domain::{
    gen_synthetic_dataset, parse_dataset, reaction_space, EffectSpec, ParameterSpace, SpaceSource, YieldDataset,
};
use prefbo::oracle::{
    answer_survey, calibrate_tau, zero_shot_yields, AnswerOptions, LlmConfig, OracleConfig, OracleError,
    ReplayConfig, SyntheticConfig, ZERO_SHOT_TEMPLATE,
};
use prefbo::pref::{fit_preference_gp, utility_table, PreferenceConfig, UtilityTable};
use prefbo::survey::{grade_survey, generate_survey, to_preferences, AnsweredSurvey, Survey};
use serde_json::json;

use crate::args::*;
use crate::error::CliError;
use crate::manifest::Run;

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

fn load_space(run: &mut Run, path: &Path) -> Result<ParameterSpace, CliError> {
    Ok(ParameterSpace::from_json(&run.read(path)?)?)
}

fn load_dataset(run: &mut Run, dataset: &Path, space: Option<&Path>) -> Result<YieldDataset, CliError> {
    let declared = space.map(|p| load_space(run, p)).transpose()?;
    let text = run.read(dataset)?;
    let source = declared.as_ref().map_or(SpaceSource::Infer, SpaceSource::Declared);
    Ok(parse_dataset(&text, source, &stem(dataset))?)
}

fn load_data(run: &mut Run, d: &DatasetArgs) -> Result<YieldDataset, CliError> {
    let ds = load_dataset(run, &d.dataset, d.space.as_deref())?;
    run.resolve("dataset", json!({ "name": ds.name(), "hash": ds.content_hash(), "size": ds.len() }));
    Ok(ds)
}

fn load_survey(run: &mut Run, path: &Path, space: &ParameterSpace, name: &str) -> Result<Survey, CliError> {
    Ok(Survey::from_jsonl(&run.read(path)?, space, name)?)
}

fn load_answers(run: &mut Run, path: &Path) -> Result<AnsweredSurvey, CliError> {
    Ok(AnsweredSurvey::from_jsonl(&run.read(path)?)?)
}

fn load_utilities(run: &mut Run, path: &Path, ds: &YieldDataset) -> Result<Vec<f64>, CliError> {
    let table = UtilityTable::from_csv(&run.read(path)?, ds.space())?;
    Ok(table.aligned_to(ds)?)
}

pub fn parse_schedule(text: &str) -> Result<PercentileSchedule, CliError> {
    if text.trim() == "zero" {
        return Ok(PercentileSchedule::zero());
    }
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("schedule `{text}` must be `v1,v2,c1,c2` or `zero`"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let v1: f64 = parts[0].parse().map_err(|_| bad())?;
    let v2: f64 = parts[1].parse().map_err(|_| bad())?;
    let c1: usize = parts[2].parse().map_err(|_| bad())?;
    let c2: usize = parts[3].parse().map_err(|_| bad())?;
    PercentileSchedule::new(v1, v2, c1, c2).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_levels(text: &str) -> Result<ParameterSpace, CliError> {
    let mut params = Vec::new();
    for item in text.split(',').filter(|s| !s.trim().is_empty()) {
        let (name, k) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("`{item}` must be `name=levels`")))?;
        let k: usize = k.trim().parse().map_err(|_| CliError::Usage(format!("`{item}`: level count")))?;
        params.push((name.trim().to_string(), k));
    }
    let refs: Vec<(&str, usize)> = params.iter().map(|(n, k)| (n.as_str(), *k)).collect();
    reaction_space(&refs).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn gen_dataset(run: &mut Run, a: &GenDatasetArgs) -> Result<(), CliError> {
    let space = match (&a.levels, &a.space) {
        (Some(l), None) => parse_levels(l)?,
        (None, Some(p)) => load_space(run, p)?,
        _ => return Err(CliError::Usage("give exactly one of --levels or --space".into())),
    };
    let spec = EffectSpec { base: a.base, main_sd: a.main_sd, interaction_strength: a.interaction, noise_sd: a.noise_sd };
    let gen = gen_synthetic_dataset(&space, &spec, run.seed())?;
    let ds = gen.dataset.with_name(&a.name);
    run.resolve("effect_spec", spec);
    run.write("dataset.csv", &ds.to_csv())?;
    run.write("space.json", &space.to_json())?;
    run.write("effects.json", &(serde_json::to_string_pretty(&gen.effects).expect("serializable") + "\n"))?;
    info!("{} experiments, max yield {:.2}", ds.len(), ds.max_yield());
    Ok(())
}

pub fn survey_gen(run: &mut Run, a: &SurveyGenArgs) -> Result<(), CliError> {
    if a.repeats == 0 {
        return Err(CliError::Usage("--L must be >= 1".into()));
    }
    let ds = load_data(run, &a.data)?;
    let s = generate_survey(&ds, a.repeats, run.seed())?;
    run.write("survey.jsonl", &s.to_jsonl(ds.space()))?;
    info!("{} questions", s.len());
    Ok(())
}

fn context(run: &mut Run, a: &LlmArgs) -> Result<String, CliError> {
    match (&a.context, &a.context_file) {
        (Some(c), _) => Ok(c.clone()),
        (None, Some(p)) => Ok(run.read(p)?.trim().to_string()),
        (None, None) => Ok(String::new()),
    }
}

fn llm_config(a: &LlmArgs, default_template: &str) -> Result<LlmConfig, CliError> {
    let endpoint = a.endpoint.clone().ok_or_else(|| CliError::Usage("--endpoint is required".into()))?;
    let model = a.model.clone().ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let cfg = LlmConfig {
        temperature: a.temperature,
        max_in_flight: a.max_in_flight,
        max_retries: a.max_retries,
        api_key_env: a.api_key_env.clone(),
        prompt_template_id: a.template.clone().unwrap_or_else(|| default_template.into()),
        ..LlmConfig::new(endpoint, model)
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn survey_answer(run: &mut Run, a: &SurveyAnswerArgs) -> Result<(), CliError> {
    let ds = a.dataset.as_deref().map(|p| load_dataset(run, p, a.space.as_deref())).transpose()?;
    let space = match (&ds, &a.space) {
        (Some(d), _) => d.space().clone(),
        (None, Some(p)) => load_space(run, p)?,
        (None, None) => return Err(CliError::Usage("--dataset or --space is needed to read the survey".into())),
    };
    let name = a.dataset.as_deref().map_or_else(|| stem(&a.survey), stem);
    let survey = load_survey(run, &a.survey, &space, &name)?;
    let config = match a.oracle {
        OracleKind::Synthetic => {
            let ds = ds.as_ref().ok_or_else(|| CliError::Usage("the synthetic oracle needs --dataset".into()))?;
            let tau = match (a.tau, a.target_accuracy) {
                (Some(t), None) => t,
                (None, Some(target)) => {
                    let cal = calibrate_tau(&survey, ds, target, run.seed(), 0.005)?;
                    run.resolve("calibration", cal);
                    cal.tau
                }
                _ => return Err(CliError::Usage("give exactly one of --tau or --target-accuracy".into())),
            };
            OracleConfig::Synthetic(SyntheticConfig { tau, seed: run.seed() })
        }
        OracleKind::Llm => OracleConfig::Llm(llm_config(&a.llm, "survey-v1")?),
        OracleKind::Replay => {
            let path = a.answers.clone().ok_or_else(|| CliError::Usage("the replay oracle needs --answers".into()))?;
            run.read(&path)?;
            OracleConfig::Replay(ReplayConfig { answer_file: path })
        }
    };
    config.validate()?;
    run.resolve("oracle", &config);
    let checkpoint = run.out_path("answers.checkpoint.jsonl");
    if !a.resume && checkpoint.exists() {
        std::fs::remove_file(&checkpoint).map_err(|e| CliError::output(&checkpoint, e))?;
    }
    let opts = AnswerOptions {
        context: context(run, &a.llm)?,
        checkpoint: matches!(a.oracle, OracleKind::Llm).then_some(checkpoint),
        ..Default::default()
    };
    if opts.checkpoint.is_some() {
        run.produced("answers.checkpoint.jsonl");
    }
    match answer_survey(&survey, &config, &space, ds.as_ref(), &opts) {
        Ok(r) => {
            run.write("answers.jsonl", &r.answers.to_jsonl())?;
            if !r.unanswered.is_empty() {
                let lines: String = r
                    .unanswered
                    .iter()
                    .map(|(id, why)| json!({ "question_id": id, "error": why }).to_string() + "\n")
                    .collect();
                run.write("unanswered.jsonl", &lines)?;
            }
            info!("{} answered, {} resumed, {} unanswered", r.answers.len(), r.resumed, r.unanswered.len());
            Ok(())
        }
        Err(OracleError::TooManyUnanswered { unanswered, total, partial }) => {
            run.write("answers.partial.jsonl", &partial.to_jsonl())?;
            Err(CliError::Transport(format!("{} of {total} questions unanswered", unanswered.len())))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn grade(run: &mut Run, a: &GradeArgs) -> Result<(), CliError> {
    let ds = load_data(run, &a.data)?;
    let survey = load_survey(run, &a.survey, ds.space(), ds.name())?;
    let answers = load_answers(run, &a.answers)?;
    let g = grade_survey(&survey, &answers, &ds)?;
    run.write("grade.json", &(serde_json::to_string_pretty(&g).expect("serializable") + "\n"))?;
    info!("accuracy {:.4} over {} questions (p = {:.3e})", g.accuracy, g.n_questions, g.binomial_p);
    Ok(())
}

pub fn fit_utility(run: &mut Run, a: &FitUtilityArgs) -> Result<(), CliError> {
    let ds = load_data(run, &a.data)?;
    let survey = load_survey(run, &a.survey, ds.space(), ds.name())?;
    let answers = load_answers(run, &a.answers)?;
    let (pairs, skipped) = to_preferences(&survey, &answers)?;
    let config = PreferenceConfig { restarts: a.restarts, ..Default::default() };
    run.resolve("preference", config);
    let model = fit_preference_gp(&pairs, ds.space(), &config, run.seed())?;
    let table = utility_table(&model, ds.experiments())?;
    run.write("utility.csv", &table.to_csv(ds.space()))?;
    let summary = json!({
        "hyperparams": model.hyperparams(),
        "log_marginal": model.log_marginal(),
        "jitter": model.jitter(),
        "pairs": pairs.len(),
        "unanswered": skipped,
        "train_accuracy": model.pairwise_accuracy(&pairs)?,
        "newton_trace": model.newton_trace(),
    });
    run.write("model.json", &(serde_json::to_string_pretty(&summary).expect("serializable") + "\n"))?;
    Ok(())
}

fn acquisitions(acq: AcqArg) -> Vec<Acquisition> {
    match acq {
        AcqArg::Ei => vec![Acquisition::Ei],
        AcqArg::UtilEi => vec![Acquisition::UtilEi],
        AcqArg::Both => vec![Acquisition::Ei, Acquisition::UtilEi],
    }
}

fn campaign_setup(
    run: &mut Run,
    c: &CampaignArgs,
    acq: AcqArg,
) -> Result<(YieldDataset, Option<Vec<f64>>, PercentileSchedule), CliError> {
    let schedule = parse_schedule(&c.schedule)?;
    if acq != AcqArg::Ei && c.utility.is_none() {
        return Err(CliError::Usage("util-ei needs --utility".into()));
    }
    let ds = load_data(run, &c.data)?;
    let g = c.utility.as_deref().map(|p| load_utilities(run, p, &ds)).transpose()?;
    Ok((ds, g, schedule))
}

fn bo_config(acq: Acquisition, c: &CampaignArgs, schedule: PercentileSchedule, seed: u64) -> BoConfig {
    BoConfig { schedule, restarts: c.gp_restarts, ..BoConfig::new(acq, c.budget, seed) }
}

pub fn bo_run(run: &mut Run, a: &BoRunArgs) -> Result<(), CliError> {
    if a.acq == AcqArg::Both {
        return Err(CliError::Usage("bo run takes --acq ei or --acq util-ei".into()));
    }
    let (ds, g, schedule) = campaign_setup(run, &a.campaign, a.acq)?;
    let config = bo_config(acquisitions(a.acq)[0], &a.campaign, schedule, run.seed());
    run.resolve("bo", config);
    let trace = run_bo(&ds, g.as_deref(), &config)?;
    run.write("trace.jsonl", &trace.to_jsonl(ds.space()))?;
    if let Some(best) = trace.recommendation() {
        info!("best yield {:.2} at step {}", best.yield_value, best.n);
    }
    Ok(())
}

pub fn bench(run: &mut Run, a: &BenchArgs) -> Result<(), CliError> {
    let (ds, g, schedule) = campaign_setup(run, &a.campaign, a.acq)?;
    let mut arms: Vec<CampaignStats> = Vec::new();
    for acq in acquisitions(a.acq) {
        let config = bo_config(acq, &a.campaign, schedule, run.seed());
        run.resolve(&format!("bo_{}", acq.as_str()), config);
        let utilities = (acq == Acquisition::UtilEi).then_some(g.as_deref()).flatten();
        info!("{}: {} trials", acq.as_str(), a.trials);
        let stats = run_campaigns(&ds, utilities, &config, a.trials)?;
        for (t, trace) in stats.traces.iter().enumerate() {
            run.write(&format!("traces/{}-{t:03}.jsonl", acq.as_str()), &trace.to_jsonl(ds.space()))?;
        }
        arms.push(stats);
    }
    let refs: Vec<&CampaignStats> = arms.iter().collect();
    run.write("report.json", &report_json(&refs))?;
    run.write("curve.csv", &curve_csv(&refs))?;
    run.write("curves.svg", &curves_svg(&refs))?;
    Ok(())
}

pub fn tune_pn(run: &mut Run, a: &TunePnArgs) -> Result<(), CliError> {
    if a.dataset.len() != a.utility.len() {
        return Err(CliError::Usage("give one --utility per --dataset".into()));
    }
    let mut data = Vec::new();
    for (d, u) in a.dataset.iter().zip(&a.utility) {
        let ds = load_dataset(run, d, None)?;
        let g = load_utilities(run, u, &ds)?;
        data.push((ds, g));
    }
    let pairs: Vec<(&YieldDataset, &[f64])> = data.iter().map(|(d, g)| (d, g.as_slice())).collect();
    let base = BoConfig { restarts: a.gp_restarts, ..BoConfig::new(Acquisition::UtilEi, a.budget, run.seed()) };
    let opts = TuneOptions { n_search: a.n_search, n_trials: a.trials, budget: a.budget, seed: run.seed() };
    run.resolve("search", opts);
    let result = tune_schedule(&pairs, &base, &opts)?;
    run.write("search.json", &search_json(&result))?;
    run.write("search.csv", &search_csv(&result))?;
    let b = result.best;
    info!("best {:.1},{:.1},{},{} objective {:.2}", b.v1, b.v2, b.c1, b.c2, b.objective);
    Ok(())
}

pub fn report(run: &mut Run, a: &ReportArgs) -> Result<(), CliError> {
    let ds = load_data(run, &a.data)?;
    let table = UtilityTable::from_csv(&run.read(&a.utility)?, ds.space())?;
    // predictions may cover only part of the dataset (failed zero-shot queries)
    let lookup: std::collections::HashMap<_, _> = table.entries().iter().map(|(x, v)| (x, *v)).collect();
    let (mut xs, mut ys, mut gs) = (Vec::new(), Vec::new(), Vec::new());
    for (x, y) in ds.experiments().iter().zip(ds.yields()) {
        if let Some(g) = lookup.get(x) {
            xs.push(x.clone());
            ys.push(*y);
            gs.push(*g);
        }
    }
    let covered = YieldDataset::new(ds.name(), ds.space().clone(), xs, ys)?;
    let r = correlation_report(&gs, &covered)?;
    run.resolve("coverage", json!({ "covered": covered.len(), "dataset": ds.len() }));
    run.write("correlation.json", &correlation_json(&r))?;
    run.write("scatter.svg", &scatter_svg(ds.name(), &r))?;
    info!("r = {:.4} (p = {:.3e}, n = {})", r.pearson_r, r.p_value, r.n);
    Ok(())
}

pub fn zero_shot(run: &mut Run, a: &ZeroShotArgs) -> Result<(), CliError> {
    let ds = load_data(run, &a.data)?;
    let cfg = llm_config(&a.llm, ZERO_SHOT_TEMPLATE)?;
    run.resolve("llm", &cfg);
    let ctx = context(run, &a.llm)?;
    let results = zero_shot_yields(ds.experiments(), &cfg, ds.space(), &ctx)?;
    let mut entries = Vec::new();
    let mut failures = String::new();
    for (i, (x, r)) in ds.experiments().iter().zip(results).enumerate() {
        match r {
            Ok(z) => entries.push((x.clone(), z.value)),
            Err(e) => failures.push_str(&(json!({ "index": i, "error": e.to_string() }).to_string() + "\n")),
        }
    }
    if !failures.is_empty() {
        run.write("zero_shot_failures.jsonl", &failures)?;
    }
    if entries.is_empty() {
        return Err(CliError::Transport("no zero-shot prediction succeeded".into()));
    }
    run.write("zero_shot.csv", &UtilityTable::new(entries).to_csv(ds.space()))?;
    Ok(())
}
