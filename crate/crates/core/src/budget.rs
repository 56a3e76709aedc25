use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mdp::MdpSnapshot;

/// Realized variation budgets of an instance.
///
/// `per_step_reward[t-1]` is `max_{s,a} |r_{t+1}(s,a) - r_t(s,a)|` and
/// `per_step_kernel[t-1]` is `max_{s,a} ||p_{t+1}(.|s,a) - p_t(.|s,a)||_1`,
/// for `t = 1..T-1`. The totals are their sums.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariationBudgets {
    pub reward: f64,
    pub kernel: f64,
    pub per_step_reward: Vec<f64>,
    pub per_step_kernel: Vec<f64>,
}

/// Computes realized budgets; `T < 2` yields zero totals and empty arrays.
pub fn variation_budgets(snapshots: &[Arc<MdpSnapshot>]) -> VariationBudgets {
    let mut out = VariationBudgets::default();
    for w in snapshots.windows(2) {
        let (br, bp) = if Arc::ptr_eq(&w[0], &w[1]) {
            (0.0, 0.0)
        } else {
            step_variation(&w[0], &w[1])
        };
        out.per_step_reward.push(br);
        out.per_step_kernel.push(bp);
    }
    out.reward = out.per_step_reward.iter().sum();
    out.kernel = out.per_step_kernel.iter().sum();
    out
}

/// `(B_{r,t}, B_{p,t})` between two consecutive snapshots.
pub fn step_variation(cur: &MdpSnapshot, next: &MdpSnapshot) -> (f64, f64) {
    let br = cur
        .rewards()
        .iter()
        .zip(next.rewards())
        .map(|(a, b)| (b - a).abs())
        .fold(0.0, f64::max);
    let mut bp: f64 = 0.0;
    for pair in 0..cur.shape().num_pairs() {
        let l1: f64 = cur
            .kernel()
            .row(pair)
            .iter()
            .zip(next.kernel().row(pair))
            .map(|(a, b)| (b - a).abs())
            .sum();
        bp = bp.max(l1);
    }
    (br, bp)
}
