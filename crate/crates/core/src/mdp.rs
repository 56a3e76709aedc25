//! Tabular MDP model types.
//!
//! States are `0..S`. Each state `s` has `A_s` actions, indexed `0..A_s`.
//! State-action pairs are flattened in state-major order, so pair storage
//! (rewards, kernel rows, counts) is a plain vector indexed by
//! [`Shape::pair`].

use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::budget::{variation_budgets, VariationBudgets};
use crate::envs::GeneratorSpec;
use crate::error::{Error, Result};

/// Row-sum tolerance used by snapshot validation.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// State/action layout shared by every snapshot of an instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    actions: Vec<usize>,
    offsets: Vec<usize>,
    pair_state: Vec<usize>,
}

impl Shape {
    /// Builds a shape from per-state action counts. States with zero actions
    /// are representable so that validation can report them.
    pub fn new(actions: Vec<usize>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidModel("at least one state is required".into()));
        }
        let mut offsets = Vec::with_capacity(actions.len() + 1);
        let mut pair_state = Vec::new();
        let mut acc = 0;
        for (s, &n) in actions.iter().enumerate() {
            offsets.push(acc);
            acc += n;
            pair_state.extend(std::iter::repeat_n(s, n));
        }
        offsets.push(acc);
        Ok(Self {
            actions,
            offsets,
            pair_state,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Result<Self> {
        Self::new(vec![num_actions; num_states])
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    pub fn num_actions(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Total number of state-action pairs, i.e. `S * A` with `A` the mean
    /// action count.
    pub fn num_pairs(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Mean number of actions per state.
    pub fn mean_actions(&self) -> f64 {
        self.num_pairs() as f64 / self.num_states() as f64
    }

    #[inline]
    pub fn pair(&self, s: usize, a: usize) -> usize {
        debug_assert!(a < self.actions[s]);
        self.offsets[s] + a
    }

    /// Pair indices of state `s`.
    #[inline]
    pub fn pairs_of(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    /// `(state, action)` of a flattened pair index.
    #[inline]
    pub fn unpair(&self, pair: usize) -> (usize, usize) {
        let s = self.pair_state[pair];
        (s, pair - self.offsets[s])
    }

    pub fn is_valid_action(&self, s: usize, a: usize) -> bool {
        s < self.num_states() && a < self.actions[s]
    }
}

/// Transition kernel `p(. | s, a)` for every pair, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    shape: Arc<Shape>,
    probs: Vec<f64>,
}

impl Kernel {
    /// Wraps dense rows without validating them.
    pub fn from_dense(shape: Arc<Shape>, probs: Vec<f64>) -> Result<Self> {
        let expected = shape.num_pairs() * shape.num_states();
        if probs.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: probs.len(),
            });
        }
        Ok(Self { shape, probs })
    }

    /// Kernel where every pair moves deterministically to `next[pair]`.
    pub fn deterministic(shape: Arc<Shape>, next: &[usize]) -> Result<Self> {
        let n = shape.num_states();
        if next.len() != shape.num_pairs() {
            return Err(Error::LengthMismatch {
                expected: shape.num_pairs(),
                got: next.len(),
            });
        }
        let mut probs = vec![0.0; shape.num_pairs() * n];
        for (pair, &s2) in next.iter().enumerate() {
            if s2 >= n {
                return Err(Error::InvalidModel(format!("next state {s2} out of range")));
            }
            probs[pair * n + s2] = 1.0;
        }
        Ok(Self { shape, probs })
    }

    pub fn shape(&self) -> &Arc<Shape> {
        &self.shape
    }

    #[inline]
    pub fn row(&self, pair: usize) -> &[f64] {
        let n = self.shape.num_states();
        &self.probs[pair * n..(pair + 1) * n]
    }

    #[inline]
    pub fn row_mut(&mut self, pair: usize) -> &mut [f64] {
        let n = self.shape.num_states();
        &mut self.probs[pair * n..(pair + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Rows that violate the simplex constraints.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for pair in 0..self.shape.num_pairs() {
            let (s, a) = self.shape.unpair(pair);
            let row = self.row(pair);
            for (next, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    out.push(Violation::BadProbability {
                        state: s,
                        action: a,
                        next,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                out.push(Violation::RowSum {
                    state: s,
                    action: a,
                    sum,
                });
            }
        }
        out
    }
}

/// One invariant violation, located at a state (and action where relevant).
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoActions { state: usize },
    RowSum { state: usize, action: usize, sum: f64 },
    BadProbability { state: usize, action: usize, next: usize, value: f64 },
    RewardOutOfRange { state: usize, action: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoActions { state } => write!(f, "state {state} has no actions"),
            Violation::RowSum { state, action, sum } => {
                write!(f, "row sum {sum} at ({state},{action})")
            }
            Violation::BadProbability {
                state,
                action,
                next,
                value,
            } => write!(
                f,
                "probability {value} of next state {next} at ({state},{action}) is not a finite nonnegative number"
            ),
            Violation::RewardOutOfRange {
                state,
                action,
                value,
            } => write!(f, "reward out of [0,1] at ({state},{action}): {value}"),
        }
    }
}

/// One time step's stationary model: mean rewards and transition kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSnapshot {
    kernel: Kernel,
    rewards: Vec<f64>,
}

impl MdpSnapshot {
    /// Builds a snapshot and rejects it if any invariant is violated.
    pub fn new(kernel: Kernel, rewards: Vec<f64>) -> Result<Self> {
        let snap = Self::new_unchecked(kernel, rewards)?;
        let violations = validate_snapshot(&snap);
        if let Some(v) = violations.first() {
            return Err(Error::InvalidModel(format!(
                "{v} ({} violation(s) total)",
                violations.len()
            )));
        }
        Ok(snap)
    }

    /// Builds a snapshot checking only array lengths.
    pub fn new_unchecked(kernel: Kernel, rewards: Vec<f64>) -> Result<Self> {
        if rewards.len() != kernel.shape.num_pairs() {
            return Err(Error::LengthMismatch {
                expected: kernel.shape.num_pairs(),
                got: rewards.len(),
            });
        }
        Ok(Self { kernel, rewards })
    }

    pub fn shape(&self) -> &Arc<Shape> {
        &self.kernel.shape
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[self.kernel.shape.pair(s, a)]
    }

    /// Content hash over shape, rewards and kernel bits.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for &n in self.shape().actions() {
            h.update((n as u64).to_le_bytes());
        }
        for &r in &self.rewards {
            h.update(r.to_bits().to_le_bytes());
        }
        for &p in self.kernel.as_slice() {
            h.update(p.to_bits().to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Returns every invariant violation of `m`; empty iff the snapshot is valid.
pub fn validate_snapshot(m: &MdpSnapshot) -> Vec<Violation> {
    let shape = m.shape();
    let mut out: Vec<Violation> = (0..shape.num_states())
        .filter(|&s| shape.num_actions(s) == 0)
        .map(|state| Violation::NoActions { state })
        .collect();
    out.extend(m.kernel.violations());
    for (pair, &r) in m.rewards.iter().enumerate() {
        if !(0.0..=1.0).contains(&r) {
            let (s, a) = shape.unpair(pair);
            out.push(Violation::RewardOutOfRange {
                state: s,
                action: a,
                value: r,
            });
        }
    }
    out
}

/// Deterministic stationary policy `s -> a`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StationaryPolicy {
    choice: Vec<usize>,
}

impl StationaryPolicy {
    pub fn new(shape: &Shape, choice: Vec<usize>) -> Result<Self> {
        if choice.len() != shape.num_states() {
            return Err(Error::LengthMismatch {
                expected: shape.num_states(),
                got: choice.len(),
            });
        }
        for (s, &a) in choice.iter().enumerate() {
            if !shape.is_valid_action(s, a) {
                return Err(Error::InvalidModel(format!(
                    "policy picks action {a} in state {s} with {} action(s)",
                    shape.num_actions(s)
                )));
            }
        }
        Ok(Self { choice })
    }

    #[inline]
    pub fn action(&self, s: usize) -> usize {
        self.choice[s]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.choice
    }

    /// Every deterministic policy of `shape`, in lexicographic order.
    pub fn enumerate(shape: &Shape) -> Vec<StationaryPolicy> {
        let mut out = Vec::new();
        let mut cur = vec![0usize; shape.num_states()];
        loop {
            out.push(StationaryPolicy { choice: cur.clone() });
            let mut s = 0;
            loop {
                if s == cur.len() {
                    return out;
                }
                cur[s] += 1;
                if cur[s] < shape.num_actions(s) {
                    break;
                }
                cur[s] = 0;
                s += 1;
            }
        }
    }
}

/// A length-`T` sequence of snapshots sharing one shape.
///
/// Time is 1-based in the public API: step `t` uses `snapshot(t)`.
#[derive(Debug, Clone)]
pub struct NonStationaryInstance {
    shape: Arc<Shape>,
    snapshots: Vec<Arc<MdpSnapshot>>,
    budgets: VariationBudgets,
    generator: Option<GeneratorSpec>,
}

impl NonStationaryInstance {
    /// Builds an instance, validating shapes and recording realized budgets.
    pub fn new(snapshots: Vec<Arc<MdpSnapshot>>, generator: Option<GeneratorSpec>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::InvalidModel("an instance needs at least one step".into()))?;
        let shape = first.shape().clone();
        for (i, snap) in snapshots.iter().enumerate() {
            if snap.shape().as_ref() != shape.as_ref() {
                return Err(Error::InvalidModel(format!(
                    "step {} has a different state/action shape",
                    i + 1
                )));
            }
            if let Some(v) = validate_snapshot(snap).first() {
                return Err(Error::InvalidModel(format!("step {}: {v}", i + 1)));
            }
        }
        let budgets = variation_budgets(&snapshots);
        Ok(Self {
            shape,
            snapshots,
            budgets,
            generator,
        })
    }

    /// Snapshot repeated `horizon` times.
    pub fn constant(snapshot: MdpSnapshot, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        let snap = Arc::new(snapshot);
        Self::new(vec![snap; horizon], None)
    }

    pub fn shape(&self) -> &Arc<Shape> {
        &self.shape
    }

    pub fn horizon(&self) -> usize {
        self.snapshots.len()
    }

    /// Snapshot in force at 1-based step `t`.
    #[inline]
    pub fn snapshot(&self, t: usize) -> &Arc<MdpSnapshot> {
        &self.snapshots[t - 1]
    }

    pub fn snapshots(&self) -> &[Arc<MdpSnapshot>] {
        &self.snapshots
    }

    pub fn budgets(&self) -> &VariationBudgets {
        &self.budgets
    }

    pub fn generator(&self) -> Option<&GeneratorSpec> {
        self.generator.as_ref()
    }

    pub(crate) fn set_generator(&mut self, spec: GeneratorSpec) {
        self.generator = Some(spec);
    }

    /// Whether the stored budgets equal a fresh recomputation exactly.
    pub fn budgets_round_trip(&self) -> bool {
        variation_budgets(&self.snapshots) == self.budgets
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(row: [f64; 2], reward: f64) -> MdpSnapshot {
        let shape = Arc::new(Shape::uniform(2, 1).unwrap());
        let kernel = Kernel::from_dense(shape, vec![row[0], row[1], 0.0, 1.0]).unwrap();
        MdpSnapshot::new_unchecked(kernel, vec![reward, 0.5]).unwrap()
    }

    #[test]
    fn valid_snapshot_has_no_violations() {
        assert!(validate_snapshot(&two_state([0.5, 0.5], 0.3)).is_empty());
    }

    #[test]
    fn row_sum_violation_is_located() {
        let v = validate_snapshot(&two_state([0.5, 0.6], 0.3));
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::RowSum { state, action, sum } => {
                assert_eq!((*state, *action), (0, 0));
                assert!((sum - 1.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(v[0].to_string().starts_with("row sum 1.1"));
    }

    #[test]
    fn reward_out_of_range_is_reported() {
        let v = validate_snapshot(&two_state([0.5, 0.5], 1.2));
        assert_eq!(
            v,
            vec![Violation::RewardOutOfRange {
                state: 0,
                action: 0,
                value: 1.2
            }]
        );
        assert!(v[0].to_string().contains("reward out of [0,1]"));
    }

    #[test]
    fn state_without_actions_is_reported() {
        let shape = Arc::new(Shape::new(vec![1, 0]).unwrap());
        let kernel = Kernel::from_dense(shape, vec![1.0, 0.0]).unwrap();
        let snap = MdpSnapshot::new_unchecked(kernel, vec![0.0]).unwrap();
        assert_eq!(validate_snapshot(&snap), vec![Violation::NoActions { state: 1 }]);
        assert!(MdpSnapshot::new(snap.kernel().clone(), vec![0.0]).is_err());
    }

    #[test]
    fn pair_indexing_round_trips() {
        let shape = Shape::new(vec![2, 3, 1]).unwrap();
        assert_eq!(shape.num_pairs(), 6);
        for p in 0..shape.num_pairs() {
            let (s, a) = shape.unpair(p);
            assert_eq!(shape.pair(s, a), p);
        }
        assert_eq!(shape.pairs_of(1), 2..5);
    }

    #[test]
    fn policy_enumeration_counts() {
        let shape = Shape::new(vec![2, 3, 1]).unwrap();
        let all = StationaryPolicy::enumerate(&shape);
        assert_eq!(all.len(), 6);
        assert!(StationaryPolicy::new(&shape, vec![1, 3, 0]).is_err());
    }
}
