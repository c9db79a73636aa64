//! Stationary kernels over encoded experiments and their hyperpriors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::domain::EncodedPoint;

const SQRT_5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Matern52,
    Rbf,
}

/// Gamma prior parameterized by shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub const fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }

    /// Derivative of the log density with respect to `ln x`.
    pub fn d_log_density_dlog(&self, x: f64) -> f64 {
        (self.shape - 1.0) - self.rate * x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated prior")
            .sample(rng)
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    fn is_valid(&self) -> bool {
        self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite()
    }
}

/// Surrogate kernel family, ARD switch, hyperpriors and base jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub ard: bool,
    pub lengthscale_prior: GammaPrior,
    pub outputscale_prior: GammaPrior,
    pub noise_prior: GammaPrior,
    pub jitter: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: KernelFamily::Matern52,
            ard: true,
            lengthscale_prior: GammaPrior::new(2.0, 0.2),
            outputscale_prior: GammaPrior::new(2.0, 0.5),
            noise_prior: GammaPrior::new(1.1, 10.0),
            jitter: 1e-8,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("lengthscale", self.lengthscale_prior),
            ("outputscale", self.outputscale_prior),
            ("noise", self.noise_prior),
        ] {
            if !p.is_valid() {
                return Err(format!("{name} prior parameters must be > 0"));
            }
        }
        if !(self.jitter >= 1e-10) {
            return Err(format!("jitter {} must be >= 1e-10", self.jitter));
        }
        Ok(())
    }

    /// Number of lengthscales for inputs of dimension `dim`.
    pub fn n_lengthscales(&self, dim: usize) -> usize {
        if self.ard {
            dim
        } else {
            1
        }
    }
}

/// Kernel with concrete hyperparameters.
#[derive(Debug, Clone)]
pub struct Kernel {
    family: KernelFamily,
    /// One entry per input dimension (shared values are broadcast).
    inv_lengthscales: Vec<f64>,
    ard: bool,
    outputscale: f64,
}

/// Gradient of `Σ_ab M_ab K_ab` with respect to the log hyperparameters.
#[derive(Debug, Clone)]
pub struct KernelGrad {
    pub log_lengthscales: Vec<f64>,
    pub log_outputscale: f64,
}

impl Kernel {
    /// `lengthscales` must have either one entry (shared) or `dim` entries.
    pub fn new(family: KernelFamily, lengthscales: &[f64], dim: usize, outputscale: f64) -> Self {
        let shared = lengthscales.len() == 1 && dim != 1;
        let inv = if shared {
            vec![1.0 / lengthscales[0]; dim]
        } else {
            assert_eq!(lengthscales.len(), dim, "one lengthscale per dimension");
            lengthscales.iter().map(|l| 1.0 / l).collect()
        };
        Self {
            family,
            inv_lengthscales: inv,
            ard: !shared,
            outputscale,
        }
    }

    pub fn dim(&self) -> usize {
        self.inv_lengthscales.len()
    }

    pub fn outputscale(&self) -> f64 {
        self.outputscale
    }

    fn scaled(&self, xs: &[EncodedPoint]) -> Vec<Vec<f64>> {
        xs.iter()
            .map(|x| {
                x.0.iter()
                    .zip(&self.inv_lengthscales)
                    .map(|(v, il)| v * il)
                    .collect()
            })
            .collect()
    }

    fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    /// Correlation `k(r)/s²` as a function of squared scaled distance.
    fn corr(&self, r2: f64) -> f64 {
        match self.family {
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                (1.0 + SQRT_5 * r + 5.0 / 3.0 * r2) * (-SQRT_5 * r).exp()
            }
            KernelFamily::Rbf => (-0.5 * r2).exp(),
        }
    }

    /// `∂(k/s²)/∂ ln ℓ_d = dcorr(r²) · Δ_d²/ℓ_d²`.
    fn dcorr(&self, r2: f64) -> f64 {
        match self.family {
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                5.0 / 3.0 * (1.0 + SQRT_5 * r) * (-SQRT_5 * r).exp()
            }
            KernelFamily::Rbf => (-0.5 * r2).exp(),
        }
    }

    pub fn eval(&self, a: &EncodedPoint, b: &EncodedPoint) -> f64 {
        let r2: f64 = a
            .0
            .iter()
            .zip(&b.0)
            .zip(&self.inv_lengthscales)
            .map(|((x, y), il)| ((x - y) * il).powi(2))
            .sum();
        self.outputscale * self.corr(r2)
    }

    pub fn matrix(&self, xs: &[EncodedPoint]) -> DMatrix<f64> {
        let z = self.scaled(xs);
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for a in 0..n {
            k[(a, a)] = self.outputscale;
            for b in 0..a {
                let v = self.outputscale * self.corr(Self::sq_dist(&z[a], &z[b]));
                k[(a, b)] = v;
                k[(b, a)] = v;
            }
        }
        k
    }

    /// `K(train, x)` for every `x` in `queries`, one column per query.
    pub fn cross(&self, train: &[EncodedPoint], queries: &[EncodedPoint]) -> DMatrix<f64> {
        let zt = self.scaled(train);
        let zq = self.scaled(queries);
        DMatrix::from_fn(train.len(), queries.len(), |i, j| {
            self.outputscale * self.corr(Self::sq_dist(&zt[i], &zq[j]))
        })
    }

    pub fn cross_vector(&self, train: &[EncodedPoint], x: &EncodedPoint) -> DVector<f64> {
        let c = self.cross(train, std::slice::from_ref(x));
        c.column(0).into_owned()
    }

    /// Contracts a symmetric weight matrix `M` against the kernel derivatives:
    /// returns `Σ_ab M_ab ∂K_ab/∂θ` for every log hyperparameter `θ`.
    pub fn contract(&self, xs: &[EncodedPoint], m: &DMatrix<f64>) -> KernelGrad {
        let z = self.scaled(xs);
        let n = xs.len();
        let d = self.dim();
        let mut ls = vec![0.0; d];
        let mut os = 0.0;
        let mut diff2 = vec![0.0; d];
        for a in 0..n {
            os += m[(a, a)] * self.outputscale;
            for b in 0..a {
                let w = m[(a, b)] + m[(b, a)];
                if w == 0.0 {
                    continue;
                }
                let mut r2 = 0.0;
                for k in 0..d {
                    let t = z[a][k] - z[b][k];
                    diff2[k] = t * t;
                    r2 += diff2[k];
                }
                os += w * self.outputscale * self.corr(r2);
                let f = w * self.outputscale * self.dcorr(r2);
                for k in 0..d {
                    ls[k] += f * diff2[k];
                }
            }
        }
        let log_lengthscales = if self.ard { ls } else { vec![ls.iter().sum()] };
        KernelGrad {
            log_lengthscales,
            log_outputscale: os,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts() -> Vec<EncodedPoint> {
        vec![
            EncodedPoint(vec![0.0, 1.0, 0.3]),
            EncodedPoint(vec![1.0, 0.0, 0.9]),
            EncodedPoint(vec![0.0, 1.0, 0.1]),
            EncodedPoint(vec![1.0, 0.0, 0.5]),
        ]
    }

    #[test]
    fn matern_closed_form() {
        let k = Kernel::new(KernelFamily::Matern52, &[2.0], 1, 1.5);
        let r: f64 = 0.5;
        let expected = 1.5 * (1.0 + SQRT_5 * r + 5.0 / 3.0 * r * r) * (-SQRT_5 * r).exp();
        let v = k.eval(&EncodedPoint(vec![0.0]), &EncodedPoint(vec![1.0]));
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn contract_matches_finite_differences() {
        let xs = pts();
        let m = DMatrix::from_fn(4, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let m = (&m + m.transpose()) * 0.5;
        for family in [KernelFamily::Matern52, KernelFamily::Rbf] {
            for ls in [vec![0.7, 1.3, 0.4], vec![0.8]] {
                let k = Kernel::new(family, &ls, 3, 1.7);
                let g = k.contract(&xs, &m);
                let obj = |ls: &[f64], os: f64| {
                    let kk = Kernel::new(family, ls, 3, os).matrix(&xs);
                    kk.component_mul(&m).sum()
                };
                let h = 1e-6;
                for d in 0..ls.len() {
                    let mut up = ls.clone();
                    let mut dn = ls.clone();
                    up[d] *= (h as f64).exp();
                    dn[d] *= (-h as f64).exp();
                    let fd = (obj(&up, 1.7) - obj(&dn, 1.7)) / (2.0 * h);
                    assert!((fd - g.log_lengthscales[d]).abs() < 1e-6 * fd.abs().max(1.0));
                }
                let fd = (obj(&ls, 1.7 * h.exp()) - obj(&ls, 1.7 * (-h).exp())) / (2.0 * h);
                assert!((fd - g.log_outputscale).abs() < 1e-6 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gamma_prior_density_integrates_to_one() {
        let p = GammaPrior::new(2.0, 0.5);
        let h = 1e-3;
        let total: f64 = (1..200_000).map(|i| p.log_density(i as f64 * h).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn default_config_is_valid() {
        assert!(KernelConfig::default().validate().is_ok());
        let bad = KernelConfig { jitter: 1e-12, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
