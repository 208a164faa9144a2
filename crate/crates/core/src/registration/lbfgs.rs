//! Limited-memory BFGS with Armijo backtracking, used per pyramid level.
//!
//! The evaluation callback reports the two objective parts so the caller
//! can keep a per-iterate history. Gradients are requested only where they
//! are needed (accepted iterates), not during backtracking.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub(crate) struct ObjectiveEval {
    pub e_data: f64,
    pub e_reg: f64,
    pub total: f64,
    /// Empty when the gradient was not requested.
    pub grad: Vec<f64>,
}

pub(crate) struct MinimizeOptions {
    pub max_iterations: usize,
    /// Absolute tolerance on the gradient max-norm, taken relative to the
    /// initial gradient by the caller.
    pub gradient_tolerance_rel: f64,
    pub memory: usize,
    pub armijo_c1: f64,
    pub max_backtracks: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance_rel: 1e-5,
            memory: 10,
            armijo_c1: 1e-4,
            max_backtracks: 40,
        }
    }
}

pub(crate) struct MinimizeOutcome {
    pub x: Vec<f64>,
    /// (e_data, e_reg, total) at the initial point and every accepted step.
    pub history: Vec<(f64, f64, f64)>,
    pub converged: bool,
    pub iterations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn minimize<F>(x0: Vec<f64>, mut eval: F, opts: &MinimizeOptions) -> Result<MinimizeOutcome>
where
    F: FnMut(&[f64], bool) -> Result<ObjectiveEval>,
{
    let n = x0.len();
    let mut x = x0;
    let first = eval(&x, true)?;
    if !first.total.is_finite() {
        return Err(Error::Numeric("objective is not finite at the initial point".into()));
    }
    let mut f = first.total;
    let mut g = first.grad;
    let mut history = vec![(first.e_data, first.e_reg, first.total)];

    let g0_norm = inf_norm(&g);
    let tol = opts.gradient_tolerance_rel * g0_norm;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new(); // (s, y, 1/s.y)
    let mut converged = inf_norm(&g) <= tol;
    let mut iterations = 0usize;

    while !converged && iterations < opts.max_iterations {
        // Two-loop recursion for the search direction.
        let mut dir: Vec<f64> = g.iter().map(|&v| -v).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &dir);
            for i in 0..n {
                dir[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let yy = dot(y, y);
            if yy > 0.0 {
                let gamma = dot(s, y) / yy;
                for d in &mut dir {
                    *d *= gamma;
                }
            }
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &dir);
            for i in 0..n {
                dir[i] += (a - b) * s[i];
            }
        }

        let mut slope = dot(&g, &dir);
        if !slope.is_finite() || slope >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            pairs.clear();
            dir = g.iter().map(|&v| -v).collect();
            slope = dot(&g, &dir);
            if slope >= 0.0 {
                break; // gradient is exactly zero
            }
        }

        // Backtracking Armijo line search.
        let mut alpha = 1.0f64;
        let mut accepted: Option<(Vec<f64>, ObjectiveEval)> = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let te = eval(&trial, false)?;
            if te.total.is_finite() && te.total <= f + opts.armijo_c1 * alpha * slope {
                let full = eval(&trial, true)?;
                accepted = Some((trial, full));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, en)) = accepted else {
            // No decrease possible along this direction at any tested step.
            break;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = en.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-10 * s_norm * y_norm {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }

        x = xn;
        f = en.total;
        g = en.grad;
        history.push((en.e_data, en.e_reg, en.total));
        iterations += 1;
        converged = inf_norm(&g) <= tol;
    }

    Ok(MinimizeOutcome {
        x,
        history,
        converged,
        iterations,
    })
}
