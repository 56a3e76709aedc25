//! Extended value iteration over reward intervals and L1 kernel balls.
//!
//! Each iteration maximizes jointly over actions, rewards in the interval
//! and kernels in the ball, stopping when the span of one-step increments
//! falls below `eps`. The value record is shifted to have minimum zero after
//! every iteration; shifts change neither argmaxes nor the stopping rule.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mdp::{MdpSnapshot, Shape, StationaryPolicy};
use crate::window::ConfidenceRegions;

pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Reward intervals `[r_lo, r_hi]` and kernel balls
/// `{p in simplex : |p - p_hat|_1 <= beta}` per pair.
#[derive(Debug, Clone)]
pub struct PlanningRegions {
    shape: Arc<Shape>,
    r_lo: Vec<f64>,
    r_hi: Vec<f64>,
    p_hat: Vec<f64>,
    beta: Vec<f64>,
}

impl PlanningRegions {
    /// Validates the regions. Kernel centres must be distributions or
    /// all-zero rows (unvisited pairs).
    pub fn new(shape: Arc<Shape>, r_lo: Vec<f64>, r_hi: Vec<f64>, p_hat: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let pairs = shape.num_pairs();
        let n = shape.num_states();
        for (len, expected) in [
            (r_lo.len(), pairs),
            (r_hi.len(), pairs),
            (beta.len(), pairs),
            (p_hat.len(), pairs * n),
        ] {
            if len != expected {
                return Err(Error::LengthMismatch { expected, got: len });
            }
        }
        for pair in 0..pairs {
            let (s, a) = shape.unpair(pair);
            if !(0.0 <= r_lo[pair] && r_lo[pair] <= r_hi[pair] && r_hi[pair] <= 1.0) {
                return Err(Error::InvalidModel(format!(
                    "reward interval [{}, {}] at ({s},{a}) is not inside [0,1]",
                    r_lo[pair], r_hi[pair]
                )));
            }
            if !(beta[pair] >= 0.0) {
                return Err(Error::InvalidModel(format!("negative kernel budget at ({s},{a})")));
            }
            let row = &p_hat[pair * n..(pair + 1) * n];
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidModel(format!("negative kernel centre entry at ({s},{a})")));
            }
            let sum: f64 = row.iter().sum();
            if sum != 0.0 && (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidModel(format!("kernel centre row sum {sum} at ({s},{a})")));
            }
        }
        Ok(Self {
            shape,
            r_lo,
            r_hi,
            p_hat,
            beta,
        })
    }

    /// Regions around windowed estimates, clipped to `[0,1]`, with kernel
    /// budget `rad_p + eta`.
    pub fn from_confidence(c: &ConfidenceRegions) -> Result<Self> {
        let pairs = c.shape.num_pairs();
        let r_lo = (0..pairs).map(|p| (c.r_hat[p] - c.rad_r[p]).max(0.0)).collect();
        let r_hi = (0..pairs).map(|p| (c.r_hat[p] + c.rad_r[p]).min(1.0)).collect();
        let beta = (0..pairs).map(|p| c.kernel_budget(p)).collect();
        Self::new(c.shape.clone(), r_lo, r_hi, c.p_hat.clone(), beta)
    }

    /// Singleton regions around an exact model.
    pub fn singleton(m: &MdpSnapshot) -> Result<Self> {
        let pairs = m.shape().num_pairs();
        Self::new(
            m.shape().clone(),
            m.rewards().to_vec(),
            m.rewards().to_vec(),
            m.kernel().as_slice().to_vec(),
            vec![0.0; pairs],
        )
    }

    pub fn shape(&self) -> &Arc<Shape> {
        &self.shape
    }

    pub fn reward_upper(&self, pair: usize) -> f64 {
        self.r_hi[pair]
    }

    pub fn reward_lower(&self, pair: usize) -> f64 {
        self.r_lo[pair]
    }

    pub fn kernel_centre(&self, pair: usize) -> &[f64] {
        let n = self.shape.num_states();
        &self.p_hat[pair * n..(pair + 1) * n]
    }

    pub fn kernel_budget(&self, pair: usize) -> f64 {
        self.beta[pair]
    }
}

#[derive(Debug, Clone)]
pub struct EviOutput {
    pub policy: StationaryPolicy,
    /// Optimistic reward per pair.
    pub rewards: Vec<f64>,
    /// Optimistic kernel, `pair * S + next`.
    pub kernel: Vec<f64>,
    pub gain: f64,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// States ordered by ascending `u`; among equal values the higher index
/// comes first, so the last entry is the lowest-index maximizer.
pub fn drain_order(u: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&i, &j| u[i].total_cmp(&u[j]).then(j.cmp(&i)));
    order
}

/// Exact maximizer of `sum_s u(s) p(s)` over the simplex intersected with
/// the L1 ball of radius `beta` around `p_hat`.
pub fn inner_max_transition(u: &[f64], p_hat: &[f64], beta: f64) -> Vec<f64> {
    let order = drain_order(u);
    let mut out = vec![0.0; u.len()];
    inner_max_sorted(&order, p_hat, beta, &mut out);
    out
}

fn inner_max_sorted(order: &[usize], p_hat: &[f64], beta: f64, out: &mut [f64]) {
    let best = *order.last().expect("at least one state");
    out.copy_from_slice(p_hat);
    if p_hat.iter().all(|&p| p == 0.0) {
        out[best] = 1.0;
        return;
    }
    let raise = (beta / 2.0).min(1.0 - out[best]).max(0.0);
    if raise == 0.0 {
        return;
    }
    out[best] += raise;
    let mut excess = raise;
    for &j in order {
        if j == best {
            continue;
        }
        let take = out[j].min(excess);
        out[j] -= take;
        excess -= take;
        if excess <= 0.0 {
            break;
        }
    }
}

pub fn evi(regions: &PlanningRegions, eps: f64, max_iter: usize) -> Result<EviOutput> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive".into()));
    }
    let shape = regions.shape();
    let n = shape.num_states();
    let pairs = shape.num_pairs();

    let mut u = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut choice = vec![0usize; n];
    let mut kernel = vec![0.0; pairs * n];
    let mut row = vec![0.0; n];
    let mut gain = 0.0;
    let mut bias = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let order = drain_order(&u);
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for (a, pair) in shape.pairs_of(s).enumerate() {
                inner_max_sorted(&order, regions.kernel_centre(pair), regions.kernel_budget(pair), &mut row);
                let ev: f64 = row.iter().zip(&u).map(|(p, v)| p * v).sum();
                kernel[pair * n..(pair + 1) * n].copy_from_slice(&row);
                let q = regions.reward_upper(pair) + ev;
                if q > best {
                    best = q;
                    choice[s] = a;
                }
            }
            next[s] = best;
        }
        let (lo, hi) = next
            .iter()
            .zip(&u)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        gain = hi;
        let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
        for (b, v) in bias.iter_mut().zip(&u) {
            *b = v - u_min;
        }
        let floor = next.iter().copied().fold(f64::INFINITY, f64::min);
        for v in next.iter_mut() {
            *v -= floor;
        }
        std::mem::swap(&mut u, &mut next);
        if hi - lo <= eps {
            converged = true;
            break;
        }
    }

    let rewards = (0..pairs).map(|p| regions.reward_upper(p)).collect();
    Ok(EviOutput {
        policy: StationaryPolicy::new(shape, choice)?,
        rewards,
        kernel,
        gain,
        bias,
        iterations,
        converged,
    })
}

/// Largest violation of optimism: `max_{s,a} [r_hi + max_p p.bias] - (gain + bias(s))`.
/// Non-positive means the property holds exactly.
pub fn optimism_gap(regions: &PlanningRegions, out: &EviOutput) -> f64 {
    let shape = regions.shape();
    let order = drain_order(&out.bias);
    let mut row = vec![0.0; shape.num_states()];
    let mut worst = f64::NEG_INFINITY;
    for s in 0..shape.num_states() {
        for pair in shape.pairs_of(s) {
            inner_max_sorted(&order, regions.kernel_centre(pair), regions.kernel_budget(pair), &mut row);
            let ev: f64 = row.iter().zip(&out.bias).map(|(p, v)| p * v).sum();
            worst = worst.max(regions.reward_upper(pair) + ev - out.gain - out.bias[s]);
        }
    }
    worst
}

/// Largest violation of near-optimality of the returned policy:
/// `max_s [gain + bias(s) - p~(.|s,pi(s)).bias] - r~(s,pi(s))`.
pub fn near_optimality_gap(regions: &PlanningRegions, out: &EviOutput) -> f64 {
    let shape = regions.shape();
    let n = shape.num_states();
    (0..n)
        .map(|s| {
            let pair = shape.pair(s, out.policy.action(s));
            let ev: f64 = out.kernel[pair * n..(pair + 1) * n]
                .iter()
                .zip(&out.bias)
                .map(|(p, v)| p * v)
                .sum();
            out.gain + out.bias[s] - ev - out.rewards[pair]
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
