//! Pairwise-preference Gaussian process with a probit likelihood.
//!
//! A latent utility `g ~ GP(0, k)` explains each observed preference
//! `w ≻ l` through `P(w ≻ l | g) = Φ((g(w) - g(l)) / (√2 σ))`. The posterior
//! over the latent values at the training inputs is approximated by a Gaussian
//! at its mode (found by Newton's method), and kernel hyperparameters together
//! with `σ` are chosen by maximizing the resulting approximate marginal
//! likelihood plus log priors.
//!
//! Internally the mode is parameterized as `f = K a`. With `W` the negative
//! Hessian of the log likelihood (a weighted graph Laplacian over the pairs)
//! and `K = L Lᵀ`, every solve goes through the symmetric positive definite
//! matrix `B = I + Lᵀ W L`.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{EncodedPoint, Experiment, ParameterSpace, YieldDataset};
use crate::kernel::{GammaPrior, Kernel, KernelConfig};
use crate::optim::{minimize, LbfgsOptions};
use crate::stats::{log_normal_cdf, normal_cdf, LogCdf};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, thiserror::Error)]
pub enum PrefError {
    #[error("a preference needs two different experiments")]
    SelfPreference,
    #[error("no preference pairs")]
    NoPairs,
    #[error("preferences must involve at least two distinct encoded experiments")]
    DegenerateInputs,
    #[error("Newton iterations did not converge in {0} steps")]
    NewtonDiverged(usize),
    #[error("matrix factorization failed")]
    Factorization,
    #[error("hyperparameter objective is not finite")]
    NonFiniteObjective,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("experiment encoding: {0}")]
    Domain(#[from] crate::domain::DomainError),
    #[error("utility table does not cover experiment {0}")]
    MissingExperiment(usize),
}

/// Observation `winner ≻ loser`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferencePair {
    winner: Experiment,
    loser: Experiment,
}

impl PreferencePair {
    pub fn new(winner: Experiment, loser: Experiment) -> Result<Self, PrefError> {
        if winner == loser {
            return Err(PrefError::SelfPreference);
        }
        Ok(Self { winner, loser })
    }

    pub fn winner(&self) -> &Experiment {
        &self.winner
    }

    pub fn loser(&self) -> &Experiment {
        &self.loser
    }
}

/// `Φ((g_w - g_l) / (√2 σ))`.
pub fn preference_likelihood(g_w: f64, g_l: f64, sigma: f64) -> f64 {
    normal_cdf((g_w - g_l) / (SQRT_2 * sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iters: usize,
    /// Converged when the largest latent change drops below this.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-6,
            max_halvings: 10,
        }
    }
}

/// Preference-model configuration. The kernel's noise prior is unused; the
/// likelihood noise `σ` has its own prior and floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceConfig {
    pub kernel: KernelConfig,
    pub sigma_prior: GammaPrior,
    pub sigma_floor: f64,
    pub restarts: usize,
    pub max_opt_iters: usize,
    pub newton: NewtonOptions,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        Self {
            kernel: KernelConfig::default(),
            sigma_prior: GammaPrior::new(2.0, 2.0),
            sigma_floor: 1e-3,
            restarts: 3,
            max_opt_iters: 100,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefHyperparams {
    pub lengthscales: Vec<f64>,
    pub outputscale: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UtilityValue(pub f64);

#[derive(Debug, Clone, Copy)]
struct Pair {
    w: usize,
    l: usize,
}

/// Accumulates `W · M` for `W = Σ_p λ_p d_p d_pᵀ`, `d_p = e_w - e_l`.
fn apply_w(lambda: &[f64], pairs: &[Pair], m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        let col = m.column(j);
        let mut oc = out.column_mut(j);
        for (p, lam) in pairs.iter().zip(lambda) {
            let t = lam * (col[p.w] - col[p.l]);
            oc[p.w] += t;
            oc[p.l] -= t;
        }
    }
    out
}

fn apply_w_vec(lambda: &[f64], pairs: &[Pair], v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for (p, lam) in pairs.iter().zip(lambda) {
        let t = lam * (v[p.w] - v[p.l]);
        out[p.w] += t;
        out[p.l] -= t;
    }
    out
}

/// Per-pair likelihood terms at latent values `f`.
struct Terms {
    z: Vec<f64>,
    cdf: Vec<LogCdf>,
    loglik: f64,
}

fn terms(f: &DVector<f64>, pairs: &[Pair], sigma: f64) -> Terms {
    let scale = SQRT_2 * sigma;
    let z: Vec<f64> = pairs.iter().map(|p| (f[p.w] - f[p.l]) / scale).collect();
    let cdf: Vec<LogCdf> = z.iter().map(|z| log_normal_cdf(*z)).collect();
    let loglik = cdf.iter().map(|c| c.value).sum();
    Terms { z, cdf, loglik }
}

/// Mode of the latent posterior for fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct LaplaceMode {
    pub f: DVector<f64>,
    /// `K⁻¹ f`, also the likelihood gradient at the mode.
    pub a: DVector<f64>,
    /// Log posterior `log p(S|f) - ½ fᵀK⁻¹f` after each accepted Newton step
    /// (first entry is the starting point).
    pub trace: Vec<f64>,
    pub iterations: usize,
}

struct Problem<'a> {
    pairs: &'a [Pair],
    n: usize,
}

impl Problem<'_> {
    fn log_posterior(&self, k: &DMatrix<f64>, a: &DVector<f64>, sigma: f64) -> (DVector<f64>, f64) {
        let f = k * a;
        let t = terms(&f, self.pairs, sigma);
        let prior = 0.5 * a.dot(&f);
        (f, t.loglik - prior)
    }

    fn b_factor(&self, l: &DMatrix<f64>, lambda: &[f64]) -> Result<Cholesky<f64, Dyn>, PrefError> {
        let wl = apply_w(lambda, self.pairs, l);
        let mut b = l.tr_mul(&wl);
        for i in 0..self.n {
            for j in 0..i {
                let v = 0.5 * (b[(i, j)] + b[(j, i)]);
                b[(i, j)] = v;
                b[(j, i)] = v;
            }
            b[(i, i)] += 1.0;
        }
        Cholesky::new(b).ok_or(PrefError::Factorization)
    }

    fn mode(
        &self,
        k: &DMatrix<f64>,
        l: &DMatrix<f64>,
        sigma: f64,
        init: Option<&DVector<f64>>,
        opts: &NewtonOptions,
    ) -> Result<LaplaceMode, PrefError> {
        let mut a = init.cloned().unwrap_or_else(|| DVector::zeros(self.n));
        let (mut f, mut psi) = self.log_posterior(k, &a, sigma);
        if !psi.is_finite() {
            a = DVector::zeros(self.n);
            (f, psi) = self.log_posterior(k, &a, sigma);
        }
        let mut trace = vec![psi];
        let inv_scale = 1.0 / (SQRT_2 * sigma);
        for it in 0..opts.max_iters {
            let t = terms(&f, self.pairs, sigma);
            let lambda: Vec<f64> = t.cdf.iter().map(|c| -c.d2 * inv_scale * inv_scale).collect();
            let mut g = DVector::zeros(self.n);
            for (p, c) in self.pairs.iter().zip(&t.cdf) {
                g[p.w] += c.d1 * inv_scale;
                g[p.l] -= c.d1 * inv_scale;
            }
            let rhs = apply_w_vec(&lambda, self.pairs, &f) + g;
            let chol_b = self.b_factor(l, &lambda)?;
            let t1 = chol_b.solve(&l.tr_mul(&rhs));
            let a_newton = &rhs - apply_w_vec(&lambda, self.pairs, &(l * t1));

            let delta = &a_newton - &a;
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_halvings {
                let a_try = &a + &delta * step;
                let (f_try, psi_try) = self.log_posterior(k, &a_try, sigma);
                if psi_try.is_finite() && psi_try >= psi - 1e-12 * psi.abs() {
                    accepted = Some((a_try, f_try, psi_try));
                    break;
                }
                step *= 0.5;
            }
            let Some((a_new, f_new, psi_new)) = accepted else {
                // no ascent direction left at machine precision
                return Ok(LaplaceMode { f, a, trace, iterations: it });
            };
            let change = (&f_new - &f).amax();
            a = a_new;
            f = f_new;
            psi = psi_new;
            trace.push(psi);
            if change < opts.tol {
                return Ok(LaplaceMode { f, a, trace, iterations: it + 1 });
            }
        }
        Err(PrefError::NewtonDiverged(opts.max_iters))
    }
}

/// Laplace-approximate log marginal likelihood and its gradient.
struct Marginal {
    value: f64,
    grad_log_lengthscales: Vec<f64>,
    grad_log_outputscale: f64,
    grad_log_sigma: f64,
    variance_factor: DMatrix<f64>,
}

#[allow(clippy::too_many_arguments)]
fn laplace_marginal(
    problem: &Problem<'_>,
    kernel: &Kernel,
    xs: &[EncodedPoint],
    k: &DMatrix<f64>,
    l: &DMatrix<f64>,
    sigma: f64,
    mode: &LaplaceMode,
    with_grad: bool,
) -> Result<Marginal, PrefError> {
    let pairs = problem.pairs;
    let s2 = SQRT_2 * sigma;
    let t = terms(&mode.f, pairs, sigma);
    let lambda: Vec<f64> = t.cdf.iter().map(|c| -c.d2 / (s2 * s2)).collect();
    let chol_b = problem.b_factor(l, &lambda)?;
    let logdet_b: f64 = 2.0 * chol_b.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let value = t.loglik - 0.5 * mode.a.dot(&mode.f) - 0.5 * logdet_b;

    // C = (K⁻¹ + W)⁻¹ = L B⁻¹ Lᵀ
    let x = chol_b
        .l_dirty()
        .solve_lower_triangular(&l.transpose())
        .ok_or(PrefError::Factorization)?;
    let c = x.tr_mul(&x);
    // R = (K + W⁻¹)⁻¹ = W - W C W
    let wc = apply_w(&lambda, pairs, &c);
    let wcw = apply_w(&lambda, pairs, &wc.transpose());
    let mut r = -wcw;
    for (p, lam) in pairs.iter().zip(&lambda) {
        r[(p.w, p.w)] += lam;
        r[(p.l, p.l)] += lam;
        r[(p.w, p.l)] -= lam;
        r[(p.l, p.w)] -= lam;
    }
    if !with_grad {
        return Ok(Marginal {
            value,
            grad_log_lengthscales: Vec::new(),
            grad_log_outputscale: 0.0,
            grad_log_sigma: 0.0,
            variance_factor: r,
        });
    }

    // ∂ log|B| / ∂f through the dependence of W on f
    let q: Vec<f64> = pairs
        .iter()
        .map(|p| c[(p.w, p.w)] + c[(p.l, p.l)] - 2.0 * c[(p.w, p.l)])
        .collect();
    let mut sv = DVector::zeros(problem.n);
    for ((p, cd), qp) in pairs.iter().zip(&t.cdf).zip(&q) {
        let coef = -cd.d3 / (s2 * s2 * s2) * qp;
        sv[p.w] += coef;
        sv[p.l] -= coef;
    }

    // kernel hyperparameters: explicit ½aᵀ∂Ka - ½tr(R∂K), implicit -½ uᵀ∂K a
    let u = &sv - &r * (k * &sv);
    let m = (&mode.a * mode.a.transpose() - &r - &u * mode.a.transpose()) * 0.5;
    let kg = kernel.contract(xs, &m);

    // σ, as ln σ
    let mut explicit = 0.0;
    let mut dg = DVector::zeros(problem.n);
    for (((p, cd), z), qp) in pairs.iter().zip(&t.cdf).zip(&t.z).zip(&q) {
        explicit -= cd.d1 * z;
        let dlam = (cd.d3 * z + 2.0 * cd.d2) / (s2 * s2);
        explicit -= 0.5 * dlam * qp;
        let dgp = -(cd.d2 * z + cd.d1) / s2;
        dg[p.w] += dgp;
        dg[p.l] -= dgp;
    }
    let implicit = -0.5 * sv.dot(&(&c * dg));

    Ok(Marginal {
        value,
        grad_log_lengthscales: kg.log_lengthscales,
        grad_log_outputscale: kg.log_outputscale,
        grad_log_sigma: explicit + implicit,
        variance_factor: r,
    })
}

fn kernel_factor(k: &DMatrix<f64>, jitter: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, f64), PrefError> {
    let mut j = jitter;
    loop {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += j;
        }
        if let Some(c) = Cholesky::new(kj.clone()) {
            return Ok((kj, c.l(), j));
        }
        j *= 10.0;
        if j > crate::gp::MAX_JITTER * (1.0 + 1e-9) {
            return Err(PrefError::Factorization);
        }
    }
}

/// Fitted latent-utility model.
#[derive(Debug, Clone)]
pub struct UtilityModel {
    space: ParameterSpace,
    train_experiments: Vec<Experiment>,
    train_inputs: Vec<EncodedPoint>,
    f_map: DVector<f64>,
    a: DVector<f64>,
    kernel: Kernel,
    hyperparams: PrefHyperparams,
    variance_factor: DMatrix<f64>,
    newton_trace: Vec<f64>,
    log_marginal: f64,
    jitter: f64,
}

struct Prepared {
    experiments: Vec<Experiment>,
    inputs: Vec<EncodedPoint>,
    pairs: Vec<Pair>,
}

fn prepare(pairs: &[PreferencePair], space: &ParameterSpace) -> Result<Prepared, PrefError> {
    if pairs.is_empty() {
        return Err(PrefError::NoPairs);
    }
    let mut index: HashMap<&Experiment, usize> = HashMap::new();
    let mut experiments = Vec::new();
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let mut ids = [0usize; 2];
        for (slot, x) in ids.iter_mut().zip([&p.winner, &p.loser]) {
            *slot = *index.entry(x).or_insert_with(|| {
                experiments.push(x.clone());
                experiments.len() - 1
            });
        }
        let [w, l] = ids;
        out.push(Pair { w, l });
    }
    let inputs = experiments
        .iter()
        .map(|x| space.encode(x))
        .collect::<Result<Vec<_>, _>>()?;
    if experiments.len() < 2 {
        return Err(PrefError::DegenerateInputs);
    }
    Ok(Prepared {
        experiments,
        inputs,
        pairs: out,
    })
}

struct Evaluation {
    mode: LaplaceMode,
    marginal: Marginal,
    kernel: Kernel,
    jitter: f64,
}

fn evaluate(
    prep: &Prepared,
    config: &PreferenceConfig,
    hp: &PrefHyperparams,
    init: Option<&DVector<f64>>,
    with_grad: bool,
) -> Result<Evaluation, PrefError> {
    let dim = prep.inputs[0].dim();
    let kernel = Kernel::new(config.kernel.family, &hp.lengthscales, dim, hp.outputscale);
    let (k, l, jitter) = kernel_factor(&kernel.matrix(&prep.inputs), config.kernel.jitter)?;
    let problem = Problem {
        pairs: &prep.pairs,
        n: prep.inputs.len(),
    };
    let mode = problem.mode(&k, &l, hp.sigma, init, &config.newton)?;
    let marginal = laplace_marginal(&problem, &kernel, &prep.inputs, &k, &l, hp.sigma, &mode, with_grad)?;
    Ok(Evaluation {
        mode,
        marginal,
        kernel,
        jitter,
    })
}

fn finish(space: &ParameterSpace, prep: Prepared, hp: PrefHyperparams, ev: Evaluation) -> UtilityModel {
    UtilityModel {
        space: space.clone(),
        train_experiments: prep.experiments,
        train_inputs: prep.inputs,
        f_map: ev.mode.f,
        a: ev.mode.a,
        kernel: ev.kernel,
        hyperparams: hp,
        variance_factor: ev.marginal.variance_factor,
        newton_trace: ev.mode.trace,
        log_marginal: ev.marginal.value,
        jitter: ev.jitter,
    }
}

/// The Laplace-approximate log marginal likelihood (without priors) and its
/// gradient in `[ln ℓ…, ln s², ln σ]`.
pub fn laplace_log_marginal_grad(
    pairs: &[PreferencePair],
    space: &ParameterSpace,
    hp: &PrefHyperparams,
    config: &PreferenceConfig,
) -> Result<(f64, Vec<f64>), PrefError> {
    let prep = prepare(pairs, space)?;
    let ev = evaluate(&prep, config, hp, None, true)?;
    let mut g = ev.marginal.grad_log_lengthscales;
    g.push(ev.marginal.grad_log_outputscale);
    g.push(ev.marginal.grad_log_sigma);
    Ok((ev.marginal.value, g))
}

/// Conditions the preference model on `pairs` with fixed hyperparameters.
pub fn fit_preference_gp_fixed(
    pairs: &[PreferencePair],
    space: &ParameterSpace,
    hp: PrefHyperparams,
    config: &PreferenceConfig,
) -> Result<UtilityModel, PrefError> {
    let prep = prepare(pairs, space)?;
    let ev = evaluate(&prep, config, &hp, None, false)?;
    Ok(finish(space, prep, hp, ev))
}

/// Fits the preference model with MAP hyperparameters.
pub fn fit_preference_gp(
    pairs: &[PreferencePair],
    space: &ParameterSpace,
    config: &PreferenceConfig,
    seed: u64,
) -> Result<UtilityModel, PrefError> {
    config.kernel.validate().map_err(PrefError::InvalidConfig)?;
    if !(config.sigma_floor > 0.0) {
        return Err(PrefError::InvalidConfig("sigma floor must be > 0".into()));
    }
    let prep = prepare(pairs, space)?;
    let n_ls = config.kernel.n_lengthscales(prep.inputs[0].dim());
    let floor = config.sigma_floor;
    let unpack = |u: &[f64]| PrefHyperparams {
        lengthscales: u[..n_ls].iter().map(|v| v.exp()).collect(),
        outputscale: u[n_ls].exp(),
        sigma: floor + u[n_ls + 1].exp(),
    };
    let kc = &config.kernel;
    let sp = config.sigma_prior;
    let mut warm: Option<DVector<f64>> = None;
    let mut objective = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
        if u.iter().any(|v| !v.is_finite() || v.abs() > 30.0) {
            return None;
        }
        let hp = unpack(u);
        let ev = evaluate(&prep, config, &hp, warm.as_ref(), true).ok()?;
        warm = Some(ev.mode.a.clone());
        let m = &ev.marginal;
        let mut value = m.value;
        let mut grad = m.grad_log_lengthscales.clone();
        for (i, l) in hp.lengthscales.iter().enumerate() {
            value += kc.lengthscale_prior.log_density(*l);
            grad[i] += kc.lengthscale_prior.d_log_density_dlog(*l);
        }
        value += kc.outputscale_prior.log_density(hp.outputscale);
        grad.push(m.grad_log_outputscale + kc.outputscale_prior.d_log_density_dlog(hp.outputscale));
        let e = hp.sigma - floor;
        value += sp.log_density(hp.sigma);
        grad.push((m.grad_log_sigma / hp.sigma + (sp.shape - 1.0) / hp.sigma - sp.rate) * e);
        Some((-value, grad.into_iter().map(|g| -g).collect()))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = LbfgsOptions {
        max_iters: config.max_opt_iters,
        ..Default::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..config.restarts.max(1) {
        let mut u: Vec<f64> = (0..n_ls)
            .map(|_| kc.lengthscale_prior.sample(&mut rng).max(1e-3).ln())
            .collect();
        u.push(kc.outputscale_prior.sample(&mut rng).max(1e-3).ln());
        u.push(sp.sample(&mut rng).max(1e-6).ln());
        let Some(m) = minimize(&mut objective, u, &opts) else {
            continue;
        };
        if best.as_ref().is_none_or(|(v, _)| m.value < *v) {
            best = Some((m.value, m.x));
        }
    }
    let (_, u) = best.ok_or(PrefError::NonFiniteObjective)?;
    let hp = unpack(&u);
    let ev = evaluate(&prep, config, &hp, None, false)?;
    Ok(finish(space, prep, hp, ev))
}

impl UtilityModel {
    pub fn hyperparams(&self) -> &PrefHyperparams {
        &self.hyperparams
    }

    pub fn likelihood_noise(&self) -> f64 {
        self.hyperparams.sigma
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn train_experiments(&self) -> &[Experiment] {
        &self.train_experiments
    }

    pub fn train_inputs(&self) -> &[EncodedPoint] {
        &self.train_inputs
    }

    /// Latent utilities at the training inputs (the posterior mode).
    pub fn f_map(&self) -> &[f64] {
        self.f_map.as_slice()
    }

    /// Log posterior after each Newton step of the final mode search.
    pub fn newton_trace(&self) -> &[f64] {
        &self.newton_trace
    }

    /// Laplace-approximate log marginal likelihood at the fitted hyperparameters.
    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean `k(x, X) K⁻¹ f̂`.
    pub fn utility(&self, x: &Experiment) -> Result<UtilityValue, PrefError> {
        let p = self.space.encode(x)?;
        Ok(UtilityValue(self.utility_encoded(std::slice::from_ref(&p))?[0]))
    }

    pub fn utility_encoded(&self, xs: &[EncodedPoint]) -> Result<Vec<f64>, PrefError> {
        let dim = self.kernel.dim();
        if xs.iter().any(|p| p.dim() != dim) {
            return Err(PrefError::Domain(crate::domain::DomainError::InvalidExperiment(
                format!("encoded dimension differs from {dim}"),
            )));
        }
        let ks = self.kernel.cross(&self.train_inputs, xs);
        Ok((ks.transpose() * &self.a).iter().copied().collect())
    }

    pub fn utility_batch(&self, xs: &[Experiment]) -> Result<Vec<f64>, PrefError> {
        let enc = xs
            .iter()
            .map(|x| self.space.encode(x))
            .collect::<Result<Vec<_>, _>>()?;
        // chunk to bound the cross-covariance memory at paper scale
        let mut out = Vec::with_capacity(enc.len());
        for chunk in enc.chunks(512) {
            out.extend(self.utility_encoded(chunk)?);
        }
        Ok(out)
    }

    /// Laplace predictive variance `k(x,x) - k*ᵀ (K + W⁻¹)⁻¹ k*`.
    pub fn predictive_variance(&self, x: &Experiment) -> Result<f64, PrefError> {
        let p = self.space.encode(x)?;
        let ks = self.kernel.cross_vector(&self.train_inputs, &p);
        let prior = self.kernel.eval(&p, &p);
        Ok((prior - ks.dot(&(&self.variance_factor * &ks))).max(0.0))
    }

    /// Fraction of `pairs` whose winner has the larger fitted utility.
    pub fn pairwise_accuracy(&self, pairs: &[PreferencePair]) -> Result<f64, PrefError> {
        if pairs.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for p in pairs {
            if self.utility(&p.winner)?.0 > self.utility(&p.loser)?.0 {
                correct += 1;
            }
        }
        Ok(correct as f64 / pairs.len() as f64)
    }
}

/// The set `G = {g(x)}` over a candidate list, order preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    entries: Vec<(Experiment, f64)>,
}

pub fn utility_table(model: &UtilityModel, candidates: &[Experiment]) -> Result<UtilityTable, PrefError> {
    let values = model.utility_batch(candidates)?;
    Ok(UtilityTable {
        entries: candidates.iter().cloned().zip(values).collect(),
    })
}

impl UtilityTable {
    pub fn new(entries: Vec<(Experiment, f64)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(Experiment, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, v)| *v).collect()
    }

    /// Utilities reordered to match the dataset's experiment order.
    pub fn aligned_to(&self, dataset: &YieldDataset) -> Result<Vec<f64>, PrefError> {
        let lookup: HashMap<&Experiment, f64> = self.entries.iter().map(|(x, v)| (x, *v)).collect();
        dataset
            .experiments()
            .iter()
            .enumerate()
            .map(|(i, x)| lookup.get(x).copied().ok_or(PrefError::MissingExperiment(i)))
            .collect()
    }

    /// CSV with one column per parameter followed by `utility`.
    pub fn to_csv(&self, space: &ParameterSpace) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = space.param_names();
        header.push("utility");
        w.write_record(&header).expect("in-memory write");
        for (x, v) in &self.entries {
            let mut row: Vec<String> = x.values().iter().map(ToString::to_string).collect();
            row.push(format!("{v:?}"));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv(text: &str, space: &ParameterSpace) -> Result<Self, PrefError> {
        use crate::domain::DomainError;
        // a utility table has the dataset layout with `utility` in place of `yield`
        let renamed = match text.split_once('\n') {
            Some((head, rest)) => {
                let cols: Vec<&str> = head.trim_end_matches('\r').split(',').collect();
                if !cols.contains(&"utility") {
                    return Err(DomainError::Format("missing `utility` column".into()).into());
                }
                let head = cols
                    .iter()
                    .map(|c| if *c == "utility" { "yield" } else { c })
                    .collect::<Vec<_>>()
                    .join(",");
                format!("{head}\n{rest}")
            }
            None => return Err(DomainError::Format("empty utility table".into()).into()),
        };
        let mut reader = csv::Reader::from_reader(renamed.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| DomainError::Format(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let n_cat = space.categoricals().len();
        let names = space.param_names();
        let mut entries = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| DomainError::Format(e.to_string()))?;
            let mut assignments = Vec::new();
            let mut value = None;
            for (h, cell) in header.iter().zip(rec.iter()) {
                if h == "yield" {
                    value = Some(cell.trim().parse::<f64>().map_err(|_| {
                        DomainError::Format(format!("utility `{cell}` is not numeric"))
                    })?);
                    continue;
                }
                let pos = names
                    .iter()
                    .position(|n| n == h)
                    .ok_or_else(|| DomainError::UnknownParameter(h.clone()))?;
                let pv = if pos < n_cat {
                    crate::domain::ParamValue::Level(cell.trim().to_string())
                } else {
                    crate::domain::ParamValue::Real(cell.trim().parse().map_err(|_| {
                        DomainError::Format(format!("`{h}` value `{cell}` is not numeric"))
                    })?)
                };
                assignments.push((h.as_str(), pv));
            }
            let x = space.experiment(assignments)?;
            entries.push((x, value.expect("utility column present")));
        }
        Ok(Self { entries })
    }
}
