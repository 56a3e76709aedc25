//! Optimal average reward of a communicating MDP by relative value iteration.
//!
//! Iteration runs on the lazy kernel `lambda * p + (1 - lambda) * I`, which
//! has the same gain and optimal actions as `p` but is aperiodic, so the span
//! of one-step increments converges even for periodic deterministic chains.
//! The bias of `p` is `lambda` times the bias of the lazy kernel.

use crate::diameter::is_communicating;
use crate::error::{Error, Result};
use crate::mdp::{MdpSnapshot, StationaryPolicy};

#[derive(Debug, Clone, Copy)]
pub struct GainOptions {
    /// Span tolerance on one-step increments.
    pub eps: f64,
    pub max_iter: usize,
    /// Weight on the original kernel in the lazy kernel, in `(0, 1]`.
    pub mixing: f64,
}

impl Default for GainOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_iter: 1_000_000,
            mixing: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GainSolution {
    pub rho: f64,
    /// Relative values with `min_s bias(s) = 0`.
    pub bias: Vec<f64>,
    /// Greedy policy for the final value iterate.
    pub policy: StationaryPolicy,
    pub iterations: usize,
}

pub fn optimal_gain(m: &MdpSnapshot, eps: f64) -> Result<GainSolution> {
    optimal_gain_with(
        m,
        GainOptions {
            eps,
            ..GainOptions::default()
        },
    )
}

pub fn optimal_gain_with(m: &MdpSnapshot, opts: GainOptions) -> Result<GainSolution> {
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {}", opts.eps)));
    }
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) {
        return Err(Error::InvalidArgument(format!("mixing must lie in (0, 1], got {}", opts.mixing)));
    }
    if let Some(v) = crate::mdp::validate_snapshot(m).first() {
        return Err(Error::InvalidModel(v.to_string()));
    }
    if !is_communicating(m.kernel()) {
        return Err(Error::DiameterInfinite);
    }

    let shape = m.shape();
    let n = shape.num_states();
    let lambda = opts.mixing;
    let mut u = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut choice = vec![0usize; n];
    let mut span = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for (a, pair) in shape.pairs_of(s).enumerate() {
                let ev: f64 = m.kernel().row(pair).iter().zip(&u).map(|(p, v)| p * v).sum();
                let q = m.rewards()[pair] + lambda * ev + (1.0 - lambda) * u[s];
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            next[s] = best;
            choice[s] = best_a;
        }
        let (lo, hi) = next
            .iter()
            .zip(&u)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        span = hi - lo;
        let floor = next.iter().copied().fold(f64::INFINITY, f64::min);
        for v in next.iter_mut() {
            *v -= floor;
        }
        std::mem::swap(&mut u, &mut next);
        if span <= opts.eps {
            let bias = u.iter().map(|v| lambda * v).collect();
            return Ok(GainSolution {
                rho: 0.5 * (lo + hi),
                bias,
                policy: StationaryPolicy::new(shape, choice)?,
                iterations: iter,
            });
        }
    }
    Err(Error::IterationCap {
        cap: opts.max_iter,
        last_span: span,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Kernel, Shape};
    use std::sync::Arc;

    #[test]
    fn single_state_loop() {
        let shape = Arc::new(Shape::uniform(1, 1).unwrap());
        let k = Kernel::deterministic(shape, &[0]).unwrap();
        let m = MdpSnapshot::new(k, vec![0.7]).unwrap();
        let sol = optimal_gain(&m, 1e-9).unwrap();
        assert!((sol.rho - 0.7).abs() < 1e-9);
        assert_eq!(sol.bias, vec![0.0]);
    }

    #[test]
    fn self_loop_with_unit_reward() {
        // States 0, 1; action 0 at state 0 stays, everything else follows
        // the two-state switching layout.
        let shape = Arc::new(Shape::uniform(2, 2).unwrap());
        let k = Kernel::deterministic(shape, &[0, 1, 1, 0]).unwrap();
        let m = MdpSnapshot::new(k, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let sol = optimal_gain(&m, 1e-9).unwrap();
        assert!((sol.rho - 1.0).abs() < 1e-9);
        assert_eq!(sol.policy.action(0), 0);
        assert_eq!(sol.policy.action(1), 1);
    }

    #[test]
    fn periodic_chain_converges() {
        // Forced 2-cycle with rewards 1 and 0: gain 1/2.
        let shape = Arc::new(Shape::uniform(2, 1).unwrap());
        let k = Kernel::deterministic(shape, &[1, 0]).unwrap();
        let m = MdpSnapshot::new(k, vec![1.0, 0.0]).unwrap();
        let sol = optimal_gain(&m, 1e-10).unwrap();
        assert!((sol.rho - 0.5).abs() < 1e-9);
        assert!((sol.bias[0] - 0.5).abs() < 1e-6);
        assert!(sol.bias[1].abs() < 1e-12);
    }

    #[test]
    fn non_communicating_is_rejected() {
        let shape = Arc::new(Shape::uniform(2, 1).unwrap());
        let k = Kernel::deterministic(shape, &[0, 1]).unwrap();
        let m = MdpSnapshot::new(k, vec![1.0, 0.0]).unwrap();
        assert!(matches!(optimal_gain(&m, 1e-6), Err(Error::DiameterInfinite)));
    }

    #[test]
    fn iteration_cap_reports_span() {
        let shape = Arc::new(Shape::uniform(2, 1).unwrap());
        let k = Kernel::from_dense(shape, vec![0.999, 0.001, 0.001, 0.999]).unwrap();
        let m = MdpSnapshot::new(k, vec![1.0, 0.0]).unwrap();
        let opts = GainOptions {
            eps: 1e-12,
            max_iter: 3,
            mixing: 0.5,
        };
        match optimal_gain_with(&m, opts) {
            Err(Error::IterationCap { cap: 3, last_span }) => assert!(last_span > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
