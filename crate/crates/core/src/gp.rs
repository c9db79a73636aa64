//! Gaussian-process regression surrogate with MAP hyperparameters.
//!
//! Targets are standardized before fitting and predictions are returned in
//! the original units. Hyperparameters are optimized in log space by L-BFGS
//! from several starts drawn from their gamma priors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::EncodedPoint;
use crate::kernel::{Kernel, KernelConfig};
use crate::optim::{minimize, LbfgsOptions};

/// Lower bound on the (standardized) noise variance.
pub const NOISE_FLOOR: f64 = 1e-6;
/// Largest jitter tried before giving up on a factorization.
pub const MAX_JITTER: f64 = 1e-4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, thiserror::Error)]
pub enum GpError {
    #[error("no training data")]
    Empty,
    #[error("{inputs} inputs but {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("input dimension {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training inputs {0} and {1} coincide with different targets")]
    ConflictingDuplicates(usize, usize),
    #[error("kernel matrix not positive definite after jitter escalation to {MAX_JITTER}")]
    NotPositiveDefinite,
    #[error("hyperparameter objective is not finite")]
    NonFiniteObjective,
    #[error("invalid kernel configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    /// One entry (shared) or one per input dimension.
    pub lengthscales: Vec<f64>,
    pub outputscale: f64,
    pub noise: f64,
}

impl GpHyperparams {
    fn is_valid(&self) -> bool {
        self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite())
            && self.outputscale > 0.0
            && self.outputscale.is_finite()
            && self.noise > 0.0
            && self.noise.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorPrediction {
    pub mean: f64,
    pub variance: f64,
}

impl PosteriorPrediction {
    pub fn sd(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Fitted regression surrogate.
#[derive(Debug, Clone)]
pub struct GpModel {
    train_inputs: Vec<EncodedPoint>,
    train_targets: Vec<f64>,
    hyperparams: GpHyperparams,
    kernel: Kernel,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    target_mean: f64,
    target_sd: f64,
    jitter: f64,
    log_posterior: f64,
}

/// Fitting effort for [`fit_gp_with`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub restarts: usize,
    pub lbfgs: LbfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            lbfgs: LbfgsOptions::default(),
        }
    }
}

fn check_inputs(x: &[EncodedPoint], y: &[f64]) -> Result<usize, GpError> {
    if x.is_empty() {
        return Err(GpError::Empty);
    }
    if x.len() != y.len() {
        return Err(GpError::LengthMismatch {
            inputs: x.len(),
            targets: y.len(),
        });
    }
    let dim = x[0].dim();
    if let Some(p) = x.iter().find(|p| p.dim() != dim) {
        return Err(GpError::DimensionMismatch {
            expected: dim,
            got: p.dim(),
        });
    }
    Ok(dim)
}

fn standardize(y: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let mut sd = if y.len() > 1 {
        (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        1.0
    };
    if !(sd > 1e-12) {
        sd = 1.0;
    }
    (mean, sd, y.iter().map(|v| (v - mean) / sd).collect())
}

/// Cholesky of `K + (noise + jitter) I`, escalating jitter ×10 up to [`MAX_JITTER`].
fn factorize(k: &DMatrix<f64>, noise: f64, jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let mut j = jitter;
    loop {
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += noise + j;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, j));
        }
        j *= 10.0;
        if j > MAX_JITTER * (1.0 + 1e-9) {
            return Err(GpError::NotPositiveDefinite);
        }
    }
}

fn make_kernel(config: &KernelConfig, hp: &GpHyperparams, dim: usize) -> Kernel {
    Kernel::new(config.family, &hp.lengthscales, dim, hp.outputscale)
}

/// Log marginal likelihood of `y` under `hp` and its gradient with respect to
/// `[ln ℓ_1, …, ln ℓ_L, ln s², ln σ²_noise]`. Targets are used as given.
pub fn log_marginal_likelihood_grad(
    hp: &GpHyperparams,
    x: &[EncodedPoint],
    y: &[f64],
    config: &KernelConfig,
) -> Result<(f64, Vec<f64>), GpError> {
    let dim = check_inputs(x, y)?;
    if !hp.is_valid() {
        return Err(GpError::NonFiniteObjective);
    }
    let kernel = make_kernel(config, hp, dim);
    let k = kernel.matrix(x);
    let (chol, _) = factorize(&k, hp.noise, config.jitter)?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let n = y.len() as f64;
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let value = -0.5 * yv.dot(&alpha) - logdet - 0.5 * n * LN_2PI;
    // ∂/∂θ = ½ tr((ααᵀ - K⁻¹) ∂K)
    let mut q = &alpha * alpha.transpose() - chol.inverse();
    q *= 0.5;
    let g = kernel.contract(x, &q);
    let mut grad = g.log_lengthscales;
    grad.push(g.log_outputscale);
    grad.push(q.trace() * hp.noise);
    if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(GpError::NonFiniteObjective);
    }
    Ok((value, grad))
}

struct MapProblem<'a> {
    x: &'a [EncodedPoint],
    y: &'a [f64],
    config: &'a KernelConfig,
    n_ls: usize,
}

impl MapProblem<'_> {
    fn unpack(&self, u: &[f64]) -> GpHyperparams {
        GpHyperparams {
            lengthscales: u[..self.n_ls].iter().map(|v| v.exp()).collect(),
            outputscale: u[self.n_ls].exp(),
            noise: NOISE_FLOOR + u[self.n_ls + 1].exp(),
        }
    }

    fn pack(&self, hp: &GpHyperparams) -> Vec<f64> {
        let mut u: Vec<f64> = hp.lengthscales.iter().map(|l| l.ln()).collect();
        u.push(hp.outputscale.ln());
        u.push((hp.noise - NOISE_FLOOR).max(1e-12).ln());
        u
    }

    /// Negative log posterior (likelihood + priors) and its gradient in `u`.
    fn negative_objective(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        if u.iter().any(|v| !v.is_finite() || v.abs() > 30.0) {
            return None;
        }
        let hp = self.unpack(u);
        let (mut value, mut grad) = log_marginal_likelihood_grad(&hp, self.x, self.y, self.config).ok()?;
        let cfg = self.config;
        for (i, l) in hp.lengthscales.iter().enumerate() {
            value += cfg.lengthscale_prior.log_density(*l);
            grad[i] += cfg.lengthscale_prior.d_log_density_dlog(*l);
        }
        value += cfg.outputscale_prior.log_density(hp.outputscale);
        grad[self.n_ls] += cfg.outputscale_prior.d_log_density_dlog(hp.outputscale);
        // noise = floor + e^u: rescale the log-noise gradient to ∂/∂u
        let e = hp.noise - NOISE_FLOOR;
        let p = cfg.noise_prior;
        value += p.log_density(hp.noise);
        grad[self.n_ls + 1] = grad[self.n_ls + 1] * e / hp.noise + ((p.shape - 1.0) / hp.noise - p.rate) * e;
        Some((-value, grad.into_iter().map(|g| -g).collect()))
    }
}

/// Fits a GP with MAP hyperparameters using the default fitting effort and
/// `restarts` starting points.
pub fn fit_gp(
    x: &[EncodedPoint],
    y: &[f64],
    config: &KernelConfig,
    restarts: usize,
    seed: u64,
) -> Result<GpModel, GpError> {
    fit_gp_with(x, y, config, &FitOptions { restarts, ..Default::default() }, seed)
}

pub fn fit_gp_with(
    x: &[EncodedPoint],
    y: &[f64],
    config: &KernelConfig,
    opts: &FitOptions,
    seed: u64,
) -> Result<GpModel, GpError> {
    config.validate().map_err(GpError::InvalidConfig)?;
    let dim = check_inputs(x, y)?;
    for i in 0..x.len() {
        for j in 0..i {
            if x[i] == x[j] && y[i] != y[j] {
                return Err(GpError::ConflictingDuplicates(j, i));
            }
        }
    }
    let (_, _, ys) = standardize(y);
    let problem = MapProblem {
        x,
        y: &ys,
        config,
        n_ls: config.n_lengthscales(dim),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..opts.restarts.max(1) {
        let start = GpHyperparams {
            lengthscales: (0..problem.n_ls)
                .map(|_| config.lengthscale_prior.sample(&mut rng).max(1e-3))
                .collect(),
            outputscale: config.outputscale_prior.sample(&mut rng).max(1e-3),
            noise: NOISE_FLOOR + config.noise_prior.sample(&mut rng).max(1e-6),
        };
        let Some(m) = minimize(|u| problem.negative_objective(u), problem.pack(&start), &opts.lbfgs) else {
            continue;
        };
        if best.as_ref().is_none_or(|(v, _)| m.value < *v) {
            best = Some((m.value, m.x));
        }
    }
    let (neg, u) = best.ok_or(GpError::NonFiniteObjective)?;
    let mut model = GpModel::with_hyperparams(x, y, problem.unpack(&u), config)?;
    model.log_posterior = -neg;
    Ok(model)
}

impl GpModel {
    /// Conditions a GP on `(x, y)` with fixed hyperparameters (no optimization).
    pub fn with_hyperparams(
        x: &[EncodedPoint],
        y: &[f64],
        hyperparams: GpHyperparams,
        config: &KernelConfig,
    ) -> Result<Self, GpError> {
        let dim = check_inputs(x, y)?;
        if !hyperparams.is_valid() {
            return Err(GpError::NonFiniteObjective);
        }
        let (target_mean, target_sd, ys) = standardize(y);
        let kernel = make_kernel(config, &hyperparams, dim);
        let k = kernel.matrix(x);
        let (chol, jitter) = factorize(&k, hyperparams.noise, config.jitter)?;
        let alpha = chol.solve(&DVector::from_column_slice(&ys));
        Ok(Self {
            train_inputs: x.to_vec(),
            train_targets: ys,
            hyperparams,
            kernel,
            chol,
            alpha,
            target_mean,
            target_sd,
            jitter,
            log_posterior: f64::NAN,
        })
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn train_inputs(&self) -> &[EncodedPoint] {
        &self.train_inputs
    }

    /// Standardized training targets.
    pub fn train_targets(&self) -> &[f64] {
        &self.train_targets
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_sd(&self) -> f64 {
        self.target_sd
    }

    /// Jitter that was needed for the final factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular `L` with `L Lᵀ = K + (noise + jitter) I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Log marginal likelihood plus log prior at the MAP point (NaN when the
    /// model was built from fixed hyperparameters).
    pub fn log_posterior(&self) -> f64 {
        self.log_posterior
    }

    pub fn predict(&self, x: &EncodedPoint) -> Result<PosteriorPrediction, GpError> {
        Ok(self.predict_batch(std::slice::from_ref(x))?[0])
    }

    pub fn predict_batch(&self, xs: &[EncodedPoint]) -> Result<Vec<PosteriorPrediction>, GpError> {
        let dim = self.kernel.dim();
        if let Some(p) = xs.iter().find(|p| p.dim() != dim) {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let ks = self.kernel.cross(&self.train_inputs, xs);
        let means = ks.transpose() * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("cholesky factor has positive diagonal");
        let s2 = self.kernel.outputscale();
        let sd2 = self.target_sd * self.target_sd;
        Ok((0..xs.len())
            .map(|j| {
                let reduction: f64 = v.column(j).iter().map(|t| t * t).sum();
                PosteriorPrediction {
                    mean: self.target_mean + self.target_sd * means[j],
                    variance: ((s2 - reduction) * sd2).max(0.0),
                }
            })
            .collect())
    }
}
