//! Diameter of a communicating MDP: the worst ordered pair `(s, s')` of the
//! best stationary policy's expected hitting time from `s` to `s'`.
//!
//! Hitting times come from value iteration on
//! `h(s) = 1 + min_a sum_{s'' != s'} p(s''|s,a) h(s'')`, `h(s') = 0`,
//! started at zero (so iterates increase monotonically to the fixed point).
//! Once converged, the greedy policy is evaluated exactly with a linear
//! solve, which removes the geometric tail error of the iteration.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{Kernel, Violation};

#[derive(Debug, Clone, Copy)]
pub struct DiameterOptions {
    /// Sup-norm change below which hitting-time iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Hitting times above this are declared infinite.
    pub value_cap: f64,
}

impl Default for DiameterOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 1_000_000,
            value_cap: 1e6,
        }
    }
}

/// Diameter of `(S, A, kernel)`; `f64::INFINITY` if some state cannot reach
/// another. Rejects kernels whose rows are not distributions.
pub fn diameter(kernel: &Kernel) -> Result<f64> {
    diameter_with(kernel, DiameterOptions::default())
}

pub fn diameter_with(kernel: &Kernel, opts: DiameterOptions) -> Result<f64> {
    if let Some(v) = kernel.violations().first() {
        return Err(Error::InvalidModel(format!("kernel rejected: {v}")));
    }
    let active = vec![true; kernel.shape().num_pairs()];
    Ok(diameter_over(kernel, &active, opts))
}

/// Diameter of an empirical kernel whose unvisited pairs have all-zero rows.
///
/// A zero row carries no transition model, so that action is left out of
/// the minimization; every other row must be a distribution.
pub fn empirical_diameter(kernel: &Kernel) -> Result<f64> {
    let shape = kernel.shape();
    let mut active = vec![true; shape.num_pairs()];
    for v in kernel.violations() {
        match v {
            Violation::RowSum { state, action, sum: 0.0 } => {
                active[shape.pair(state, action)] = false;
            }
            other => return Err(Error::InvalidModel(format!("kernel rejected: {other}"))),
        }
    }
    Ok(diameter_over(kernel, &active, DiameterOptions::default()))
}

fn diameter_over(kernel: &Kernel, active: &[bool], opts: DiameterOptions) -> f64 {
    let n = kernel.shape().num_states();
    let mut worst: f64 = 0.0;
    for target in 0..n {
        let h = hitting_times_over(kernel, active, target, opts);
        for (s, &v) in h.iter().enumerate() {
            if s != target {
                worst = worst.max(v);
            }
        }
        if worst.is_infinite() {
            break;
        }
    }
    worst
}

/// Whether every state can reach every other with positive probability
/// under some policy, i.e. whether the diameter is finite.
pub fn is_communicating(kernel: &Kernel) -> bool {
    let active = vec![true; kernel.shape().num_pairs()];
    (0..kernel.shape().num_states()).all(|t| can_reach(kernel, &active, t).iter().all(|&r| r))
}

/// Minimum expected hitting times of `target` from every state (0 at the
/// target itself, `INFINITY` where unreachable).
pub fn hitting_times(kernel: &Kernel, target: usize, opts: DiameterOptions) -> Vec<f64> {
    let active = vec![true; kernel.shape().num_pairs()];
    hitting_times_over(kernel, &active, target, opts)
}

fn hitting_times_over(kernel: &Kernel, active: &[bool], target: usize, opts: DiameterOptions) -> Vec<f64> {
    let shape = kernel.shape();
    let n = shape.num_states();
    // Finite hitting times live on the largest set R of states that reach
    // the target using only actions whose support stays inside R.
    let mut reach = can_reach(kernel, active, target);
    let mut usable;
    loop {
        usable = (0..shape.num_pairs())
            .map(|pair| {
                active[pair]
                    && kernel
                        .row(pair)
                        .iter()
                        .enumerate()
                        .all(|(s2, &p)| p == 0.0 || reach[s2])
            })
            .collect::<Vec<bool>>();
        let refined = can_reach(kernel, &usable, target);
        if refined == reach {
            break;
        }
        reach = refined;
    }

    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            if s == target || !reach[s] {
                next[s] = h[s];
                continue;
            }
            let best = shape
                .pairs_of(s)
                .filter(|&pair| usable[pair])
                .map(|pair| step_cost(kernel.row(pair), &h, target))
                .fold(f64::INFINITY, f64::min);
            next[s] = best;
            delta = delta.max((best - h[s]).abs());
        }
        std::mem::swap(&mut h, &mut next);
        if h.iter().any(|&v| v > opts.value_cap) {
            break;
        }
        if delta <= opts.tol {
            converged = true;
            break;
        }
    }

    let mut out: Vec<f64> = (0..n)
        .map(|s| {
            if s == target {
                0.0
            } else if !reach[s] || !converged {
                f64::INFINITY
            } else {
                h[s]
            }
        })
        .collect();
    if converged {
        if let Some(exact) = evaluate_greedy(kernel, &usable, &reach, target, &h) {
            let close = (0..n)
                .filter(|&s| s != target && reach[s])
                .all(|s| (exact[s] - h[s]).abs() <= 1e-6 * h[s].max(1.0));
            if close {
                for s in 0..n {
                    if s != target && reach[s] {
                        out[s] = exact[s];
                    }
                }
            }
        }
    }
    out
}

#[inline]
fn step_cost(row: &[f64], h: &[f64], target: usize) -> f64 {
    1.0 + row
        .iter()
        .zip(h)
        .enumerate()
        .filter(|(s2, _)| *s2 != target)
        .map(|(_, (p, v))| p * v)
        .sum::<f64>()
}

/// States with a positive-probability path to `target` under some policy.
fn can_reach(kernel: &Kernel, active: &[bool], target: usize) -> Vec<bool> {
    let shape = kernel.shape();
    let n = shape.num_states();
    let mut reach = vec![false; n];
    reach[target] = true;
    let mut queue = VecDeque::from([target]);
    while let Some(dst) = queue.pop_front() {
        for s in 0..n {
            if reach[s] {
                continue;
            }
            if shape
                .pairs_of(s)
                .any(|pair| active[pair] && kernel.row(pair)[dst] > 0.0)
            {
                reach[s] = true;
                queue.push_back(s);
            }
        }
    }
    reach
}

/// Exact hitting times of the greedy policy for `h`.
fn evaluate_greedy(kernel: &Kernel, usable: &[bool], reach: &[bool], target: usize, h: &[f64]) -> Option<Vec<f64>> {
    let shape = kernel.shape();
    let n = shape.num_states();
    let idx: Vec<usize> = (0..n).filter(|&s| s != target && reach[s]).collect();
    if idx.is_empty() {
        return Some(vec![0.0; n]);
    }
    let pos = |s: usize| idx.iter().position(|&x| x == s);
    let m = idx.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let b = DVector::<f64>::from_element(m, 1.0);
    for (i, &s) in idx.iter().enumerate() {
        let mut best = None;
        let mut best_cost = f64::INFINITY;
        for pair in shape.pairs_of(s).filter(|&p| usable[p]) {
            let c = step_cost(kernel.row(pair), h, target);
            if c < best_cost {
                best_cost = c;
                best = Some(pair);
            }
        }
        let row = kernel.row(best?);
        for (s2, &p) in row.iter().enumerate() {
            if let Some(j) = pos(s2) {
                a[(i, j)] -= p;
            }
        }
    }
    let sol = a.lu().solve(&b)?;
    let mut out = vec![0.0; n];
    for (i, &s) in idx.iter().enumerate() {
        if !sol[i].is_finite() || sol[i] < 0.0 {
            return None;
        }
        out[s] = sol[i];
    }
    Some(out)
}
