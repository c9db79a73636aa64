//! Limited-memory BFGS minimization with a backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    /// Stop when the relative objective change of an accepted step drops below this.
    pub rel_tol: f64,
    pub memory: usize,
    /// Largest allowed change of any coordinate in one step.
    pub max_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-6,
            memory: 10,
            max_step: 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the value and gradient or `None` where the
/// objective is undefined. Returns `None` if `f` is undefined at `x0`.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let valid = |r: &Option<(f64, Vec<f64>)>| {
        r.as_ref()
            .is_some_and(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))
    };
    let first = f(&x0);
    if !valid(&first) {
        return None;
    }
    let (mut fx, mut g) = first.expect("checked");
    let mut x = x0;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let n = x.len();

    for iter in 0..opts.max_iters {
        if g.iter().all(|v| v.abs() < 1e-12) {
            return Some(Minimum { x, value: fx, iterations: iter, converged: true });
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (a - b);
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 || !slope.is_finite() {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let max_abs = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step = if history.is_empty() {
            (1.0 / max_abs).min(1.0)
        } else {
            1.0
        };
        step = step.min(opts.max_step / max_abs);

        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let r = f(&trial);
            if valid(&r) {
                let (ft, gt) = r.expect("checked");
                if ft <= fx + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            return Some(Minimum { x, value: fx, iterations: iter, converged: true });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - fnew).abs() / fx.abs().max(fnew.abs()).max(1.0);
        x = xn;
        fx = fnew;
        g = gn;
        if rel < opts.rel_tol {
            return Some(Minimum { x, value: fx, iterations: iter + 1, converged: true });
        }
    }
    Some(Minimum { x, value: fx, iterations: opts.max_iters, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Some((v, g))
        };
        let opts = LbfgsOptions { max_iters: 500, rel_tol: 1e-14, ..Default::default() };
        let m = minimize(f, vec![-1.2, 1.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn undefined_region_is_avoided() {
        // log barrier at x > 0; minimum of x - ln x at 1
        let f = |x: &[f64]| (x[0] > 0.0).then(|| (x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]]));
        let m = minimize(f, vec![5.0], &LbfgsOptions { rel_tol: 1e-14, ..Default::default() }).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5);
        assert!(minimize(f, vec![-1.0], &LbfgsOptions::default()).is_none());
    }
}
