use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn prefbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefbo")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = prefbo(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Self { dir: tempfile::tempdir().unwrap() };
        ok(&["gen-dataset", "--levels", "halide=4,ligand=3,base=3", "--seed", "1", "--out", p(&f.path("data"))]);
        ok(&["survey", "gen", "--dataset", p(&f.dataset()), "--L", "4", "--seed", "2", "--out", p(&f.path("survey"))]);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn dataset(&self) -> PathBuf {
        self.path("data/dataset.csv")
    }

    fn survey(&self) -> PathBuf {
        self.path("survey/survey.jsonl")
    }

    fn answer(&self, out: &str, extra: &[&str]) -> PathBuf {
        let (dir, survey, dataset) = (self.path(out), self.survey(), self.dataset());
        let mut args = vec!["survey", "answer", "--survey", p(&survey), "--dataset", p(&dataset)];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--seed", "3", "--out", p(&dir)]);
        ok(&args);
        dir.join("answers.jsonl")
    }
}

#[test]
fn survey_gen_is_deterministic_and_validates_l() {
    let f = Fixture::new();
    let again = f.path("again");
    ok(&["survey", "gen", "--dataset", p(&f.dataset()), "--L", "4", "--seed", "2", "--out", p(&again)]);
    assert_eq!(read(f.survey()), read(again.join("survey.jsonl")));
    let bad = prefbo(&["survey", "gen", "--dataset", p(&f.dataset()), "--L", "0", "--out", p(&f.path("bad"))]);
    assert_eq!(bad.status.code(), Some(64));
}

#[test]
fn perfect_oracle_grades_to_one_and_replay_is_identical() {
    let f = Fixture::new();
    let answers = f.answer("perfect", &["--oracle", "synthetic", "--tau", "0"]);
    ok(&[
        "grade", "--survey", p(&f.survey()), "--answers", p(&answers), "--dataset", p(&f.dataset()),
        "--out", p(&f.path("grade")),
    ]);
    assert_eq!(json(f.path("grade/grade.json"))["accuracy"], 1.0);
    let replayed = f.answer("replay", &["--oracle", "replay", "--answers", p(&answers)]);
    assert_eq!(read(answers), read(replayed));
}

#[test]
fn fit_bench_report_pipeline() {
    let f = Fixture::new();
    let answers = f.answer("noisy", &["--oracle", "synthetic", "--target-accuracy", "0.8"]);
    let manifest = json(f.path("noisy/manifest.json"));
    let acc = manifest["config"]["resolved"]["calibration"]["accuracy"].as_f64().unwrap();
    assert!((acc - 0.8).abs() <= 0.02, "{acc}");

    let fit = f.path("fit");
    ok(&[
        "fit-utility", "--survey", p(&f.survey()), "--answers", p(&answers), "--dataset", p(&f.dataset()),
        "--seed", "4", "--out", p(&fit),
    ]);
    let utility = fit.join("utility.csv");
    assert_eq!(read(utility.clone()).lines().count(), 37);

    let bench = f.path("bench");
    ok(&[
        "bench", "--dataset", p(&f.dataset()), "--utility", p(&utility), "--trials", "3", "--budget", "8",
        "--gp-restarts", "2", "--seed", "5", "--out", p(&bench),
    ]);
    let report = json(bench.join("report.json"));
    let arms = report.as_array().unwrap();
    assert_eq!(arms.len(), 2);
    for arm in arms {
        for key in ["dataset", "acquisition", "trials", "budget", "curve", "n_to_max", "n_to_99", "initial_yield_norm"] {
            assert!(arm.get(key).is_some(), "missing {key}");
        }
        assert_eq!(arm["curve"].as_array().unwrap().len(), 8);
    }
    assert_eq!(read(bench.join("curve.csv")).lines().count(), 9);
    assert!(bench.join("traces/util-ei-002.jsonl").exists());

    let report_dir = f.path("report");
    ok(&["report", "--dataset", p(&f.dataset()), "--utility", p(&utility), "--out", p(&report_dir)]);
    let r = json(report_dir.join("correlation.json"))["pearson_r"].as_f64().unwrap();
    assert!(r > 0.3, "{r}");
    assert!(read(report_dir.join("scatter.svg")).starts_with("<svg"));
}

#[test]
fn bo_run_is_idempotent_and_needs_utility_for_util_ei() {
    let f = Fixture::new();
    let run = |out: &str| {
        let dir = f.path(out);
        ok(&["bo", "run", "--acq", "ei", "--dataset", p(&f.dataset()), "--budget", "6", "--gp-restarts", "2",
            "--seed", "9", "--out", p(&dir)]);
        read(dir.join("trace.jsonl"))
    };
    assert_eq!(run("a"), run("b"));
    let out = prefbo(&["bo", "run", "--acq", "util-ei", "--dataset", p(&f.dataset()), "--out", p(&f.path("c"))]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn manifest_records_inputs_and_random_seed() {
    let f = Fixture::new();
    let out = f.path("seedless");
    ok(&["survey", "gen", "--dataset", p(&f.dataset()), "--out", p(&out)]);
    let m = json(out.join("manifest.json"));
    assert_eq!(m["subcommand"], "survey gen");
    assert_eq!(m["seed_source"], "random");
    assert!(m["seed"].is_u64());
    assert_eq!(m["inputs"].as_object().unwrap().len(), 1);
    assert_eq!(m["status"], "ok");
    let files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.iter().filter(|n| *n == "manifest.json").count(), 1);
}

#[test]
fn malformed_inputs_and_usage_errors() {
    let f = Fixture::new();
    let bad = f.path("bad.csv");
    std::fs::write(&bad, "a,b\nx,1\n").unwrap();
    let out = prefbo(&["survey", "gen", "--dataset", p(&bad), "--out", p(&f.path("o1"))]);
    assert_eq!(out.status.code(), Some(65));
    assert_eq!(json(f.path("o1/manifest.json"))["status"], "failed");
    let out = prefbo(&["survey", "gen", "--dataset", p(&f.path("missing.csv")), "--out", p(&f.path("o2"))]);
    assert_eq!(out.status.code(), Some(66));
    assert_eq!(prefbo(&["bench", "--nonsense"]).status.code(), Some(64));
    let out = prefbo(&["bo", "run", "--acq", "ei", "--dataset", p(&f.dataset()), "--schedule", "1,2", "--out", p(&f.path("o3"))]);
    assert_eq!(out.status.code(), Some(64));
    let out = prefbo(&["survey", "answer", "--survey", p(&f.survey()), "--dataset", p(&f.dataset()), "--oracle", "llm",
        "--endpoint", "http://127.0.0.1:9", "--model", "m", "--api-key-env", "PREFBO_CLI_TEST_UNSET_KEY",
        "--out", p(&f.path("o4"))]);
    assert_eq!(out.status.code(), Some(64));
}
