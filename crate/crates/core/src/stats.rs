//! Scalar statistics: normal distribution helpers, binomial and Pearson tests,
//! percentiles and summary statistics.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log Φ(z)` together with its first three derivatives.
///
/// The first derivative is the inverse Mills ratio `φ(z)/Φ(z)`; far in the
/// left tail both are evaluated from the asymptotic series.
#[derive(Debug, Clone, Copy)]
pub struct LogCdf {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

pub fn log_normal_cdf(z: f64) -> LogCdf {
    let (value, ratio) = if z > -30.0 {
        let cdf = normal_cdf(z);
        (cdf.ln(), normal_pdf(z) / cdf)
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        let value = -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + series.ln();
        (value, -z / series)
    };
    let s = z + ratio;
    LogCdf {
        value,
        d1: ratio,
        d2: -ratio * s,
        d3: ratio * (s * (z + 2.0 * ratio) - 1.0),
    }
}

/// One-tailed `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
///
/// Exact summation in log space for `n <= 10_000`; above that, the normal
/// approximation with continuity correction.
pub fn binomial_upper_tail_half(n: u64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if n > 10_000 {
        let nf = n as f64;
        let z = (k as f64 - 0.5 - nf / 2.0) / (nf / 4.0).sqrt();
        return normal_cdf(-z);
    }
    let ln2 = std::f64::consts::LN_2;
    let ln_n_fact = ln_gamma(n as f64 + 1.0);
    let logs: Vec<f64> = (k..=n)
        .map(|j| ln_n_fact - ln_gamma(j as f64 + 1.0) - ln_gamma((n - j) as f64 + 1.0) - n as f64 * ln2)
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    (max + sum.ln()).exp().clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pearson {
    pub r: f64,
    /// Two-sided p-value of the t statistic on `n - 2` degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

/// Pearson correlation. `None` when either input has zero variance or fewer
/// than three points.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<Pearson> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let t2 = r * r * df / (1.0 - r * r);
        beta_reg(df / 2.0, 0.5, df / (df + t2))
    };
    Some(Pearson { r, p_value, n })
}

/// Percentile by linear interpolation between order statistics:
/// rank `r = p/100 * (k - 1)`, `P = s[i] + (r - i) * (s[i+1] - s[i])`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(&sorted, p)
}

pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let k = sorted.len();
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (k - 1) as f64;
    let i = rank.floor() as usize;
    if i + 1 >= k {
        return sorted[k - 1];
    }
    let frac = rank - i as f64;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// Mean and standard error (sample sd / √n). The error is 0 for one value.
pub fn mean_se(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt() / n.sqrt()))
}
