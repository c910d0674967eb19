//! Box-constrained limited-memory BFGS.
//!
//! A projected variant: the quasi-Newton direction is computed on the free
//! variables (those not pinned against a bound by the gradient), and trial
//! points are projected back into the box during an Armijo backtracking
//! search. Good enough for the low-dimensional smooth problems here.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    pub memory: usize,
    /// Stop once the projected gradient's max-norm drops below this.
    pub grad_tol: f64,
    /// Stop once the relative decrease of the objective drops below this.
    pub f_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            memory: 8,
            grad_tol: 1e-6,
            f_tol: 1e-10,
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

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// `f` returns the value and gradient, or `None` where it cannot be
/// evaluated; such points are treated as infinitely bad. Returns `None` only
/// if `f` fails at the (projected) starting point.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], cfg: &LbfgsConfig) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    debug_assert!(lower.len() == n && upper.len() == n);
    let project = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };

    let mut x = x0.to_vec();
    project(&mut x);
    let (mut fx, mut g) = f(&x).filter(|(v, _)| v.is_finite())?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;

        let free: Vec<bool> = (0..n)
            .map(|i| {
                let at_lower = x[i] <= lower[i] && g[i] > 0.0;
                let at_upper = x[i] >= upper[i] && g[i] < 0.0;
                !(at_lower || at_upper)
            })
            .collect();
        let pg_norm = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_norm < cfg.grad_tol {
            converged = true;
            break;
        }

        let masked: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut d = two_loop(&masked, &history);
        for i in 0..n {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        let mut slope = dot(&g, &d);
        if slope.is_nan() || slope >= 0.0 {
            history.clear();
            d = masked.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }

        let mut step = if history.is_empty() {
            (1.0 / pg_norm).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut trial);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if moved.iter().all(|m| *m == 0.0) {
                break;
            }
            let decrease = dot(&g, &moved).min(step * slope * 1e-3);
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft <= fx + 1e-4 * decrease {
                    accepted = Some((trial, ft, gt, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new, s)) = accepted else {
            break;
        };

        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(1e-300) {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let rel = (fx - f_new).abs() / fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if rel < cfg.f_tol {
            converged = true;
            break;
        }
    }

    Some(Minimum {
        x,
        value: fx,
        iterations,
        converged,
    })
}

/// Two-loop recursion: returns `-H g` for the implicit inverse Hessian.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central finite-difference gradient, one-sided where the step would leave
/// the box.
pub fn fd_gradient<F>(f: &mut F, x: &[f64], lower: &[f64], upper: &[f64], h: f64) -> Option<Vec<f64>>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let hi = (x[i] + h).min(upper[i]);
        let lo = (x[i] - h).max(lower[i]);
        if hi <= lo {
            continue;
        }
        probe[i] = hi;
        let fh = f(&probe)?;
        probe[i] = lo;
        let fl = f(&probe)?;
        probe[i] = x[i];
        grad[i] = (fh - fl) / (hi - lo);
    }
    Some(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Some((f, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let cfg = LbfgsConfig {
            max_iters: 500,
            ..Default::default()
        };
        let m = minimize_box(rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &cfg).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn respects_active_bounds() {
        // unconstrained minimum at (2, -3); box clips both coordinates
        let f = |x: &[f64]| {
            Some((
                (x[0] - 2.0).powi(2) + (x[1] + 3.0).powi(2),
                vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 3.0)],
            ))
        };
        let m = minimize_box(f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], &LbfgsConfig::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-9 && m.x[1].abs() < 1e-9, "{m:?}");
        assert!(m.converged);
    }

    #[test]
    fn fails_only_at_start() {
        let f = |_: &[f64]| None;
        assert!(minimize_box(f, &[0.0], &[-1.0], &[1.0], &LbfgsConfig::default()).is_none());
    }

    #[test]
    fn fd_gradient_matches_analytic() {
        let mut f = |x: &[f64]| Some(x[0].sin() * x[1].exp());
        let g = fd_gradient(&mut f, &[0.3, 0.2], &[-1.0, -1.0], &[1.0, 1.0], 1e-6).unwrap();
        assert!((g[0] - 0.3f64.cos() * 0.2f64.exp()).abs() < 1e-8);
        assert!((g[1] - 0.3f64.sin() * 0.2f64.exp()).abs() < 1e-8);
    }
}
