//! SMO for the ε-SVR dual.
//!
//! The dual is posed over `2n` variables `β = [α; α*]` with signs
//! `z = [+1…; −1…]`:
//!
//! ```text
//! min  ½ βᵀQβ + pᵀβ   s.t.  zᵀβ = 0,  0 ≤ β ≤ C
//! Q_st = z_s z_t K(s mod n, t mod n),   p = [ε − y; ε + y]
//! ```
//!
//! Each step updates the maximal KKT-violating pair analytically.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

const TAU: f64 = 1e-12;

/// Solver statistics kept with a fitted model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SmoDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Maximal KKT violation at exit.
    pub kkt_gap: f64,
    /// `½ βᵀQβ + pᵀβ` at exit.
    pub dual_objective: f64,
}

pub(crate) struct Smo<'a> {
    gram: &'a DMatrix<f64>,
    n: usize,
    c: f64,
    p: Vec<f64>,
    beta: Vec<f64>,
    grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Pair {
    pub i: usize,
    pub j: usize,
    /// `max_{I_up} −z G − min_{I_low} −z G`; zero or negative at optimality.
    pub gap: f64,
}

impl<'a> Smo<'a> {
    pub fn new(gram: &'a DMatrix<f64>, targets: &[f64], c: f64, epsilon: f64) -> Self {
        let n = targets.len();
        let mut p = Vec::with_capacity(2 * n);
        p.extend(targets.iter().map(|y| epsilon - y));
        p.extend(targets.iter().map(|y| epsilon + y));
        Self {
            gram,
            n,
            c,
            grad: p.clone(),
            p,
            beta: vec![0.0; 2 * n],
        }
    }

    #[inline]
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn q(&self, s: usize, t: usize) -> f64 {
        self.sign(s) * self.sign(t) * self.gram[(s % self.n, t % self.n)]
    }

    fn in_up(&self, t: usize) -> bool {
        if t < self.n {
            self.beta[t] < self.c
        } else {
            self.beta[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if t < self.n {
            self.beta[t] > 0.0
        } else {
            self.beta[t] < self.c
        }
    }

    /// Maximal violating pair.
    pub fn select(&self) -> Option<Pair> {
        let mut up = (f64::NEG_INFINITY, usize::MAX);
        let mut low = (f64::INFINITY, usize::MAX);
        for t in 0..2 * self.n {
            let v = -self.sign(t) * self.grad[t];
            if self.in_up(t) && v > up.0 {
                up = (v, t);
            }
            if self.in_low(t) && v < low.0 {
                low = (v, t);
            }
        }
        if up.1 == usize::MAX || low.1 == usize::MAX {
            return None;
        }
        Some(Pair {
            i: up.1,
            j: low.1,
            gap: up.0 - low.0,
        })
    }

    /// Analytic two-variable update of `(i, j)`, with the box clipping of
    /// the classic SMO solver.
    pub fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.beta[i], self.beta[j]);
        let (qii, qjj, qij) = (self.q(i, i), self.q(j, j), self.q(i, j));
        let (gi, gj) = (self.grad[i], self.grad[j]);
        let (mut ai, mut aj) = (old_i, old_j);

        if self.sign(i) != self.sign(j) {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-gi - gj) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (gi - gj) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }

        self.beta[i] = ai;
        self.beta[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        if di == 0.0 && dj == 0.0 {
            return;
        }
        let (si, sj) = (self.sign(i), self.sign(j));
        let n = self.n;
        let (ri, rj) = (i % n, j % n);
        let data = self.gram.as_slice();
        let (col_i, col_j) = (&data[ri * n..(ri + 1) * n], &data[rj * n..(rj + 1) * n]);
        let (wi, wj) = (si * di, sj * dj);
        let (pos, neg) = self.grad.split_at_mut(n);
        for r in 0..n {
            let delta = col_i[r] * wi + col_j[r] * wj;
            pos[r] += delta;
            neg[r] -= delta;
        }
    }

    /// `½ βᵀQβ + pᵀβ`.
    pub fn objective(&self) -> f64 {
        0.5 * self
            .beta
            .iter()
            .zip(self.grad.iter().zip(&self.p))
            .map(|(b, (g, p))| b * (g + p))
            .sum::<f64>()
    }

    /// Dual coefficients `α − α*`.
    pub fn coefficients(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.beta[i] - self.beta[i + self.n]).collect()
    }

    /// Bias from the free variables, or the midpoint of the feasible
    /// interval when every variable sits at a bound.
    pub fn bias(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum) = (0usize, 0.0);
        for t in 0..2 * self.n {
            let z = self.sign(t);
            let yg = z * self.grad[t];
            if self.beta[t] >= self.c {
                if z < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.beta[t] <= 0.0 {
                if z > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        let rho = if free > 0 { sum / free as f64 } else { 0.5 * (ub + lb) };
        -rho
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SmoOutcome {
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gap: f64,
    pub objective: f64,
}

pub(crate) fn solve(
    gram: &DMatrix<f64>,
    targets: &[f64],
    c: f64,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> SmoOutcome {
    let mut smo = Smo::new(gram, targets, c, epsilon);
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = 0.0;
    while iterations < max_iter {
        match smo.select() {
            Some(pair) if pair.gap >= tol => {
                gap = pair.gap;
                smo.update(pair.i, pair.j);
                iterations += 1;
            }
            other => {
                gap = other.map_or(0.0, |p| p.gap);
                converged = true;
                break;
            }
        }
    }
    if !converged {
        gap = smo.select().map_or(0.0, |p| p.gap);
        converged = gap < tol;
    }
    SmoOutcome {
        coefficients: smo.coefficients(),
        bias: smo.bias(),
        iterations,
        converged,
        gap,
        objective: smo.objective(),
    }
}
