//! Acceptance gate. Each criterion prints one PASS/FAIL line with its wall time
//! and fails the test when the check or the time limit is not met.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use prefbo::acq::{expected_improvement, PercentileSchedule};
use prefbo::bench::{run_campaigns, tune_schedule, TuneOptions};
use prefbo::bo::{Acquisition, BoConfig};
use prefbo::domain::{gen_synthetic_dataset, reaction_space, EffectSpec, EncodedPoint, ParameterSpace, YieldDataset};
use prefbo::gp::{log_marginal_likelihood_grad, GpHyperparams, GpModel, PosteriorPrediction};
use prefbo::kernel::KernelConfig;
use prefbo::oracle::{answer_survey, calibrate_tau, AnswerOptions, LlmConfig, OracleConfig, SyntheticConfig};
use prefbo::pref::{
    fit_preference_gp, fit_preference_gp_fixed, utility_table, PrefHyperparams, PreferenceConfig, PreferencePair,
};
use prefbo::stats::{binomial_upper_tail_half, pearson};
use prefbo::survey::{generate_survey, grade_survey, to_preferences, Survey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

static SERIAL: Mutex<()> = Mutex::new(());

/// Bypasses libtest output capture so every line shows up in the run log.
fn status(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn criterion(id: &str, name: &str, limit: Duration, check: impl FnOnce() -> Result<String, String>) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
        .unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(msg.unwrap_or_else(|| "panicked".into()))
        });
    let elapsed = start.elapsed();
    let outcome = match outcome {
        Ok(_) if elapsed > limit => Err(format!("took {elapsed:.1?}, limit {limit:?}")),
        other => other,
    };
    match &outcome {
        Ok(detail) => status(&format!("PASS {id} {name} ({elapsed:.2?} / {limit:?}): {detail}")),
        Err(why) => status(&format!("FAIL {id} {name} ({elapsed:.2?} / {limit:?}): {why}")),
    }
    if let Err(why) = outcome {
        panic!("{id} {name}: {why}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dataset(levels: &[(&str, usize)], seed: u64) -> YieldDataset {
    let space = reaction_space(levels).unwrap();
    gen_synthetic_dataset(&space, &EffectSpec::default(), seed).unwrap().dataset
}

fn dataset_200(seed: u64) -> YieldDataset {
    dataset(&[("halide", 8), ("ligand", 5), ("base", 5)], seed)
}

fn dataset_300(seed: u64) -> YieldDataset {
    dataset(&[("halide", 10), ("ligand", 6), ("base", 5)], seed)
}

/// Survey, synthetic answers, preference fit, utilities in dataset order.
fn oracle_utilities(ds: &YieldDataset, tau: f64, seed: u64) -> Vec<f64> {
    let survey = generate_survey(ds, 10, seed).unwrap();
    oracle_utilities_on(ds, &survey, tau, seed)
}

fn oracle_utilities_on(ds: &YieldDataset, survey: &Survey, tau: f64, seed: u64) -> Vec<f64> {
    let oracle = OracleConfig::Synthetic(SyntheticConfig { tau, seed });
    let run = answer_survey(survey, &oracle, ds.space(), Some(ds), &AnswerOptions::default()).unwrap();
    let (pairs, _) = to_preferences(survey, &run.answers).unwrap();
    let model = fit_preference_gp(&pairs, ds.space(), &PreferenceConfig::default(), seed).unwrap();
    utility_table(&model, ds.experiments()).unwrap().aligned_to(ds).unwrap()
}

fn matern52(a: &[f64], b: &[f64], ls: &[f64], s2: f64) -> f64 {
    let r = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum::<f64>().sqrt();
    let t = 5f64.sqrt() * r;
    s2 * (1.0 + t + t * t / 3.0) * (-t).exp()
}

fn gram(xs: &[Vec<f64>], ls: &[f64], s2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), xs.len(), |i, j| matern52(&xs[i], &xs[j], ls, s2))
}

#[test]
fn c01_gp_correctness() {
    criterion("C1", "gp gradients and posterior", Duration::from_secs(10), || {
        let config = KernelConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst_grad: f64 = 0.0;
        let mut worst_post: f64 = 0.0;
        for _ in 0..10 {
            let dim = 3;
            let xs: Vec<Vec<f64>> = (0..8).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
            let ys: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let enc: Vec<EncodedPoint> = xs.iter().cloned().map(EncodedPoint).collect();
            let hp = GpHyperparams {
                lengthscales: (0..dim).map(|_| rng.gen_range(0.3..2.0)).collect(),
                outputscale: rng.gen_range(0.5..2.0),
                noise: rng.gen_range(0.01..0.5),
            };
            let (_, grad) = log_marginal_likelihood_grad(&hp, &enc, &ys, &config).unwrap();
            let mut u: Vec<f64> = hp.lengthscales.iter().map(|l| l.ln()).collect();
            u.push(hp.outputscale.ln());
            u.push(hp.noise.ln());
            let at = |u: &[f64]| {
                let hp = GpHyperparams {
                    lengthscales: u[..dim].iter().map(|v| v.exp()).collect(),
                    outputscale: u[dim].exp(),
                    noise: u[dim + 1].exp(),
                };
                log_marginal_likelihood_grad(&hp, &enc, &ys, &config).unwrap().0
            };
            let h = 1e-5;
            for k in 0..u.len() {
                let (mut up, mut dn) = (u.clone(), u.clone());
                up[k] += h;
                dn[k] -= h;
                let fd = (at(&up) - at(&dn)) / (2.0 * h);
                worst_grad = worst_grad.max((grad[k] - fd).abs() / fd.abs().max(1e-6));
            }

            let model = GpModel::with_hyperparams(&enc, &ys, hp.clone(), &config).unwrap();
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let ystd = DVector::from_iterator(8, ys.iter().map(|y| (y - mean) / sd));
            let mut a = gram(&xs, &hp.lengthscales, hp.outputscale);
            for i in 0..8 {
                a[(i, i)] += hp.noise + model.jitter();
            }
            let lu = a.lu();
            let weights = lu.solve(&ystd).unwrap();
            let mut queries: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
            queries.extend(xs.iter().take(3).cloned());
            for q in &queries {
                let ks = DVector::from_iterator(8, xs.iter().map(|x| matern52(x, q, &hp.lengthscales, hp.outputscale)));
                let want_mean = mean + sd * ks.dot(&weights);
                let want_var = sd * sd * (hp.outputscale - ks.dot(&lu.solve(&ks).unwrap()));
                let got: PosteriorPrediction = model.predict(&EncodedPoint(q.clone())).unwrap();
                worst_post = worst_post
                    .max((got.mean - want_mean).abs() / want_mean.abs().max(1.0))
                    .max((got.variance - want_var).abs() / want_var.abs().max(1.0));
            }
        }
        ensure(worst_grad <= 1e-4, || format!("gradient rel error {worst_grad:.2e}"))?;
        ensure(worst_post <= 1e-8, || format!("posterior error {worst_post:.2e}"))?;
        Ok(format!("max grad rel err {worst_grad:.2e}, max posterior err {worst_post:.2e}"))
    });
}

#[test]
fn c02_ei_matches_monte_carlo() {
    criterion("C2", "expected improvement", Duration::from_secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut points = Vec::new();
        for (i, sd) in [0.3, 1.0, 2.0, 5.0].into_iter().enumerate() {
            for z in [-1.0, 0.0, 0.7, 2.0] {
                let y_max = 1.0 + 0.5 * i as f64;
                points.push((y_max + z * sd, sd, y_max));
            }
        }
        let mut worst: f64 = 0.0;
        for &(mean, sd, y_max) in &points {
            let ei = expected_improvement(&PosteriorPrediction { mean, variance: sd * sd }, y_max).unwrap();
            let normal = Normal::new(mean, sd).unwrap();
            let n = 1_000_000;
            let mc = (0..n).map(|_| (normal.sample(&mut rng) - y_max).max(0.0)).sum::<f64>() / n as f64;
            worst = worst.max((ei - mc).abs() / mc);
        }
        ensure(worst < 0.01, || format!("MC rel error {worst:.4}"))?;
        let limits = [(3.0, 1.0), (1.0, 3.0), (2.0, 2.0), (-1.0, 0.5)];
        for (mean, y_max) in limits {
            let exact = expected_improvement(&PosteriorPrediction { mean, variance: 0.0 }, y_max).unwrap();
            ensure(exact == (mean - y_max).max(0.0), || format!("s = 0 at ({mean}, {y_max}) gave {exact}"))?;
            let near = expected_improvement(&PosteriorPrediction { mean, variance: 1e-24 }, y_max).unwrap();
            ensure((near - exact).abs() < 1e-11, || format!("s -> 0 at ({mean}, {y_max}) gave {near}"))?;
        }
        Ok(format!("{} MC points, max rel err {worst:.4}; {} exact limits", points.len(), limits.len()))
    });
}

fn chain_pairs(space: &ParameterSpace, order: &[usize]) -> Vec<PreferencePair> {
    let xs = space.enumerate().unwrap();
    let mut pairs = Vec::new();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            pairs.push(PreferencePair::new(xs[order[i]].clone(), xs[order[j]].clone()).unwrap());
        }
    }
    pairs
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn c03_preference_ordering() {
    criterion("C3", "preference gp ordering", Duration::from_secs(60), || {
        let mut chains = 0;
        for n in 2..=5 {
            let space = reaction_space(&[("c", n)]).unwrap();
            let xs = space.enumerate().unwrap();
            for order in permutations(n) {
                let pairs = chain_pairs(&space, &order);
                let model = fit_preference_gp(&pairs, &space, &PreferenceConfig::default(), 0)
                    .map_err(|e| format!("{order:?}: {e}"))?;
                let u = model.utility_batch(&xs).unwrap();
                for w in order.windows(2) {
                    ensure(u[w[0]] > u[w[1]], || format!("order {order:?} not reproduced: {u:?}"))?;
                }
                chains += 1;
            }
        }

        let space = reaction_space(&[("c", 3)]).unwrap();
        let pairs = chain_pairs(&space, &[2, 0, 1]);
        let hp = PrefHyperparams { lengthscales: vec![1.2], outputscale: 1.5, sigma: 0.4 };
        let config = PreferenceConfig::default();
        let model = fit_preference_gp_fixed(&pairs, &space, hp.clone(), &config).unwrap();
        let enc: Vec<Vec<f64>> = model.train_inputs().iter().map(|p| p.0.clone()).collect();
        let ls = vec![hp.lengthscales[0]; enc[0].len()];
        let mut k = gram(&enc, &ls, hp.outputscale);
        for i in 0..3 {
            k[(i, i)] += model.jitter();
        }
        let kinv = k.try_inverse().unwrap();
        let index = |x| model.train_experiments().iter().position(|e| e == x).unwrap();
        let idx: Vec<(usize, usize)> = pairs.iter().map(|p| (index(p.winner()), index(p.loser()))).collect();
        let scale = 1.0 / (2f64.sqrt() * hp.sigma);
        let log_post = |f: [f64; 3]| {
            let v = DVector::from_column_slice(&f);
            let prior = -0.5 * v.dot(&(&kinv * &v));
            let lik: f64 = idx
                .iter()
                .map(|&(w, l)| (0.5 * libm::erfc(-(f[w] - f[l]) * scale / 2f64.sqrt())).ln())
                .sum();
            prior + lik
        };
        let search = |center: [f64; 3], half: f64, step: f64| {
            let m = (half / step).round() as i64;
            let mut best = (f64::NEG_INFINITY, center);
            for i in -m..=m {
                for j in -m..=m {
                    for l in -m..=m {
                        let f = [
                            center[0] + i as f64 * step,
                            center[1] + j as f64 * step,
                            center[2] + l as f64 * step,
                        ];
                        let v = log_post(f);
                        if v > best.0 {
                            best = (v, f);
                        }
                    }
                }
            }
            best.1
        };
        let coarse = search([0.0; 3], 3.0, 0.02);
        let fine = search(coarse, 0.04, 0.001);
        let dev = model.f_map().iter().zip(fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(dev <= 1e-2, || format!("f_map {:?} vs grid {fine:?}", model.f_map()))?;
        Ok(format!("{chains} chains ordered; 3-point mode within {dev:.1e} of grid argmax"))
    });
}

#[test]
fn c04_survey_generator() {
    criterion("C4", "survey generator", Duration::from_secs(5), || {
        let ds = dataset_200(4);
        ensure(ds.len() == 200, || format!("|X| = {}", ds.len()))?;
        let mut counts = Vec::new();
        for seed in 0..5 {
            let s = generate_survey(&ds, 10, seed).unwrap();
            ensure(s.len() <= 2000, || format!("seed {seed}: {} questions", s.len()))?;
            let mut seen = std::collections::HashSet::new();
            for q in s.questions() {
                ensure(q.option_a != q.option_b, || format!("seed {seed}: self-pair at {}", q.id))?;
                let (a, b) = (ds.index_of(&q.option_a).unwrap(), ds.index_of(&q.option_b).unwrap());
                ensure(seen.insert((a.min(b), a.max(b))), || format!("seed {seed}: duplicate pair at {}", q.id))?;
            }
            let again = generate_survey(&ds, 10, seed).unwrap();
            ensure(s.to_jsonl(ds.space()) == again.to_jsonl(ds.space()), || format!("seed {seed} not reproducible"))?;
            counts.push(s.len());
        }
        Ok(format!("question counts {counts:?}"))
    });
}

#[test]
fn c05_oracle_calibration() {
    criterion("C5", "oracle calibration", Duration::from_secs(60), || {
        let ds = dataset_200(5);
        ensure(ds.is_tie_free(), || "dataset has ties".into())?;
        let survey = generate_survey(&ds, 10, 1).unwrap();
        let mut got = Vec::new();
        for target in [0.55, 0.65, 0.75, 0.85, 0.95] {
            let cal = calibrate_tau(&survey, &ds, target, 3, 0.005).unwrap();
            let oracle = OracleConfig::Synthetic(SyntheticConfig { tau: cal.tau, seed: 3 });
            let run = answer_survey(&survey, &oracle, ds.space(), Some(&ds), &AnswerOptions::default()).unwrap();
            let acc = grade_survey(&survey, &run.answers, &ds).unwrap().accuracy;
            ensure((acc - target).abs() <= 0.02, || format!("target {target}: graded {acc}"))?;
            got.push(format!("{target}->{acc:.3}"));
        }
        let oracle = OracleConfig::Synthetic(SyntheticConfig { tau: f64::INFINITY, seed: 3 });
        let run = answer_survey(&survey, &oracle, ds.space(), Some(&ds), &AnswerOptions::default()).unwrap();
        let grade = grade_survey(&survey, &run.answers, &ds).unwrap();
        let sd = (0.25 / grade.n_questions as f64).sqrt();
        ensure((grade.accuracy - 0.5).abs() <= 2.0 * sd, || format!("tau = inf accuracy {}", grade.accuracy))?;
        Ok(format!("{}; tau=inf {:.3} (2sd {:.3})", got.join(" "), grade.accuracy, 2.0 * sd))
    });
}

#[test]
fn c06_end_to_end_correlation() {
    criterion("C6", "utility/yield correlation", Duration::from_secs(300), || {
        let mut perfect = Vec::new();
        let mut random = Vec::new();
        for seed in 0..5 {
            let ds = dataset_200(60 + seed);
            let r = |tau| {
                let g = oracle_utilities(&ds, tau, seed);
                pearson(&g, ds.yields()).map_or(0.0, |p| p.r)
            };
            perfect.push(r(0.0));
            random.push(r(f64::INFINITY));
        }
        let fmt = |v: &[f64]| v.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(",");
        ensure(perfect.iter().all(|r| *r >= 0.8), || format!("perfect r = [{}]", fmt(&perfect)))?;
        ensure(random.iter().all(|r| r.abs() <= 0.2), || format!("random r = [{}]", fmt(&random)))?;
        Ok(format!("perfect r [{}], random r [{}]", fmt(&perfect), fmt(&random)))
    });
}

#[test]
fn c07_zero_schedule_is_ei() {
    criterion("C7", "gate reduction", Duration::from_secs(120), || {
        let ds = dataset_200(7);
        let g: Vec<f64> = ds.yields().iter().map(|y| -y).collect();
        let ei = BoConfig::new(Acquisition::Ei, 20, 9);
        let util = BoConfig { schedule: PercentileSchedule::zero(), ..BoConfig::new(Acquisition::UtilEi, 20, 9) };
        let a = run_campaigns(&ds, None, &ei, 10).unwrap();
        let b = run_campaigns(&ds, Some(&g), &util, 10).unwrap();
        for (t, (x, y)) in a.traces.iter().zip(&b.traces).enumerate() {
            let key = |s: &prefbo::bo::BoStep| (s.index, s.yield_value.to_bits(), s.running_best.to_bits(), s.gate_size);
            let kx: Vec<_> = x.steps.iter().map(key).collect();
            let ky: Vec<_> = y.steps.iter().map(key).collect();
            ensure(kx == ky, || format!("trial {t} diverged"))?;
        }
        Ok("10 paired traces identical".into())
    });
}

#[test]
fn c08_end_to_end_optimization() {
    criterion("C8", "end-to-end optimization", Duration::from_secs(900), || {
        let ds = dataset_300(8);
        let survey = generate_survey(&ds, 10, 8).unwrap();
        let cal = calibrate_tau(&survey, &ds, 0.70, 8, 0.005).unwrap();
        let g = oracle_utilities_on(&ds, &survey, cal.tau, 8);
        let ei = run_campaigns(&ds, None, &BoConfig::new(Acquisition::Ei, 60, 80), 50).unwrap();
        let util = run_campaigns(&ds, Some(&g), &BoConfig::new(Acquisition::UtilEi, 60, 80), 50).unwrap();
        let (e99, u99) = (ei.n_to_99.mean.unwrap_or(f64::INFINITY), util.n_to_99.mean.unwrap_or(f64::INFINITY));
        let (e0, u0) = (ei.initial_yield_norm.mean.unwrap(), util.initial_yield_norm.mean.unwrap());
        let detail = format!(
            "accuracy {:.3}; n_to_99 ei {e99:.2} (cens {}) util-ei {u99:.2} (cens {}); initial ei {e0:.3} util-ei {u0:.3}",
            cal.accuracy, ei.n_to_99.censored, util.n_to_99.censored
        );
        ensure(u99 < e99 && u0 > e0, || detail.clone())?;
        Ok(detail)
    });
}

/// `Σ_{i >= k} C(n, i) / 2^n` in exact integer arithmetic.
fn exact_tail(n: u32, k: u32) -> f64 {
    let mut c: u128 = 1;
    let mut total: u128 = 0;
    for i in 0..=n {
        if i >= k {
            total += c;
        }
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    total as f64 / 2f64.powi(n as i32)
}

#[test]
fn c09_binomial_grading() {
    criterion("C9", "binomial grading", Duration::from_secs(1), || {
        let mut worst: f64 = 0.0;
        for k in 0..=100 {
            let want = exact_tail(100, k);
            let got = binomial_upper_tail_half(100, k as u64);
            worst = worst.max((got - want).abs() / want);
        }
        ensure(worst < 1e-10, || format!("n = 100 rel error {worst:.2e}"))?;
        let n = 7792u64;
        let k = (0.64 * n as f64).round() as u64;
        let p = binomial_upper_tail_half(n, k);
        ensure(p < 1e-3, || format!("p = {p}"))?;
        Ok(format!("n=100 max rel err {worst:.1e}; p(k={k}, n={n}) = {p:.3e}"))
    });
}

#[test]
fn c10_schedule_search() {
    criterion("C10", "schedule search", Duration::from_secs(600), || {
        let ds = dataset_200(10);
        let g = oracle_utilities(&ds, 0.0, 10);
        let base = BoConfig::new(Acquisition::UtilEi, 30, 0);
        let opts = TuneOptions { n_search: 10, n_trials: 5, budget: 30, seed: 10 };
        let r = tune_schedule(&[(&ds, &g)], &base, &opts).unwrap();
        ensure(r.trials.len() == 10, || format!("{} trials logged", r.trials.len()))?;
        for t in &r.trials {
            ensure(t.v1 > 50.0 && t.v1 < 100.0 && t.v2 > 0.0 && t.v2 < t.v1, || format!("{t:?}"))?;
            ensure(t.c1 >= 1 && t.c1 < t.c2 && t.c2 <= 99, || format!("{t:?}"))?;
        }
        let max = r.trials.iter().map(|t| t.objective).fold(f64::NEG_INFINITY, f64::max);
        ensure(r.best.objective == max && r.trials.contains(&r.best), || format!("best {:?}", r.best))?;
        Ok(format!("best objective {max:.1} at v1={:.1} v2={:.1} c1={} c2={}", r.best.v1, r.best.v2, r.best.c1, r.best.c2))
    });
}

/// A small Buchwald-Hartwig-style table whose yields follow common reactivity
/// trends (iodides and bromides over chlorides, stronger bases, bulkier ligands).
fn bh_style_dataset() -> YieldDataset {
    let halides: [(&str, f64); 3] = [("4-iodotoluene", 25.0), ("4-bromotoluene", 18.0), ("4-chlorotoluene", 0.0)];
    let ligands: [(&str, f64); 4] = [("XPhos", 4.0), ("t-BuXPhos", 12.0), ("t-BuBrettPhos", 15.0), ("AdBrettPhos", 10.0)];
    let bases: [(&str, f64); 3] = [("P2Et", 14.0), ("BTMG", 10.0), ("MTBD", 3.0)];
    let names = |v: &[(&str, f64)]| v.iter().map(|(n, _)| n.to_string()).collect::<Vec<_>>();
    let space = ParameterSpace::categorical(&[
        ("aryl halide", names(&halides).as_slice()),
        ("ligand", names(&ligands).as_slice()),
        ("base", names(&bases).as_slice()),
    ])
    .unwrap();
    let experiments = space.enumerate().unwrap();
    let yields = experiments
        .iter()
        .map(|x| {
            let lv = space.level_indices(x).unwrap();
            5.0 + halides[lv[0]].1 + ligands[lv[1]].1 + bases[lv[2]].1 + 0.1 * (lv[0] * 12 + lv[1] * 3 + lv[2]) as f64
        })
        .collect();
    YieldDataset::new("bh-style", space, experiments, yields).unwrap()
}

#[test]
fn c11_live_llm_smoke() {
    let (Ok(endpoint), Ok(model)) = (std::env::var("PREFBO_LLM_ENDPOINT"), std::env::var("PREFBO_LLM_MODEL")) else {
        status("SKIP C11 live llm smoke: PREFBO_LLM_ENDPOINT / PREFBO_LLM_MODEL not set");
        return;
    };
    criterion("C11", "live llm smoke", Duration::from_secs(1800), || {
        let ds = bh_style_dataset();
        let full = generate_survey(&ds, 10, 11).unwrap();
        let survey = Survey::new(ds.name(), full.questions()[..50].to_vec()).unwrap();
        let opts = AnswerOptions {
            context: "Palladium-catalysed Buchwald-Hartwig amination of an aryl halide with 4-methylaniline.".into(),
            max_unanswered_fraction: 1.0,
            ..Default::default()
        };
        let oracle = OracleConfig::Llm(LlmConfig::new(&endpoint, &model));
        let run = answer_survey(&survey, &oracle, ds.space(), None, &opts).map_err(|e| e.to_string())?;
        let parsed = run.answers.len() as f64 / survey.len() as f64;
        let grade = grade_survey(&survey, &run.answers, &ds).unwrap();
        let detail = format!("parsed {parsed:.2}, accuracy {:.3}", grade.accuracy);
        ensure(parsed >= 0.95 && grade.accuracy > 0.5, || detail.clone())?;
        Ok(detail)
    });
}
