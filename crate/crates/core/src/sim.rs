//! The online interaction loop: observe state, act, receive reward and
//! next state.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{NonStationaryInstance, StationaryPolicy};

/// An online learner. Steps are 1-based and strictly consecutive.
pub trait Agent {
    fn act(&mut self, t: usize, state: usize) -> Result<usize>;

    fn observe(&mut self, t: usize, state: usize, action: usize, reward: f64, next: usize) -> Result<()>;

    /// `(episode, block)` identifiers of the most recent action.
    fn tags(&self) -> (Option<usize>, Option<usize>) {
        (None, None)
    }
}

/// How a realized reward is drawn around the mean `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum RewardNoise {
    /// `R ~ Bernoulli(r)`.
    #[default]
    Bernoulli,
    /// Normal `N(r, sigma^2)` truncated symmetrically to
    /// `[r - m, r + m]`, `m = min(r, 1 - r)`, so the mean stays `r`.
    TruncatedGaussian { sigma: f64 },
    /// `R = r`.
    Deterministic,
}

impl RewardNoise {
    pub fn sample<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        match *self {
            RewardNoise::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            RewardNoise::Deterministic => mean,
            RewardNoise::TruncatedGaussian { sigma } => {
                let half = mean.min(1.0 - mean);
                if half <= 0.0 || sigma <= 0.0 {
                    return mean;
                }
                mean + sigma * truncated_std_normal(half / sigma, rng)
            }
        }
    }
}

/// Standard normal conditioned on `[-c, c]`.
fn truncated_std_normal<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    if c < 0.5 {
        // Uniform proposal; acceptance is at least exp(-1/8).
        loop {
            let x = c * (2.0 * rng.random::<f64>() - 1.0);
            if rng.random::<f64>() <= (-0.5 * x * x).exp() {
                return x;
            }
        }
    }
    loop {
        let x: f64 = StandardNormal.sample(rng);
        if x.abs() <= c {
            return x;
        }
    }
}

/// Draws an index from a probability row by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Everything observed in one run; index `t - 1` holds step `t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub episodes: Vec<Option<usize>>,
    pub blocks: Vec<Option<usize>>,
}

impl Trajectory {
    /// A trajectory of `(state, action)` pairs with no sampled rewards.
    pub fn from_pairs(pairs: &[(usize, usize)]) -> Self {
        Self {
            states: pairs.iter().map(|p| p.0).collect(),
            actions: pairs.iter().map(|p| p.1).collect(),
            rewards: vec![0.0; pairs.len()],
            episodes: vec![None; pairs.len()],
            blocks: vec![None; pairs.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Runs `agent` on `inst` from `initial_state` for the full horizon.
pub fn simulate<A: Agent + ?Sized, R: Rng + ?Sized>(
    inst: &NonStationaryInstance,
    agent: &mut A,
    initial_state: usize,
    noise: RewardNoise,
    rng: &mut R,
) -> Result<Trajectory> {
    let shape = inst.shape();
    if initial_state >= shape.num_states() {
        return Err(Error::InvalidArgument(format!("initial state {initial_state} out of range")));
    }
    let horizon = inst.horizon();
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        episodes: Vec::with_capacity(horizon),
        blocks: Vec::with_capacity(horizon),
    };
    let mut s = initial_state;
    for t in 1..=horizon {
        let a = agent.act(t, s)?;
        if !shape.is_valid_action(s, a) {
            return Err(Error::InvalidAction { t, state: s, action: a });
        }
        let (episode, block) = agent.tags();
        let snap = inst.snapshot(t);
        let pair = shape.pair(s, a);
        let reward = noise.sample(snap.rewards()[pair], rng);
        let next = sample_index(snap.kernel().row(pair), rng);
        agent.observe(t, s, a, reward, next)?;
        traj.states.push(s);
        traj.actions.push(a);
        traj.rewards.push(reward);
        traj.episodes.push(episode);
        traj.blocks.push(block);
        s = next;
    }
    Ok(traj)
}

/// Plays one stationary policy throughout.
#[derive(Debug, Clone)]
pub struct FixedPolicyAgent {
    policy: StationaryPolicy,
}

impl FixedPolicyAgent {
    pub fn new(policy: StationaryPolicy) -> Self {
        Self { policy }
    }
}

impl Agent for FixedPolicyAgent {
    fn act(&mut self, _t: usize, state: usize) -> Result<usize> {
        Ok(self.policy.action(state))
    }

    fn observe(&mut self, _: usize, _: usize, _: usize, _: f64, _: usize) -> Result<()> {
        Ok(())
    }
}

/// Plays a given policy per step, e.g. the optimal policy of each snapshot.
#[derive(Debug, Clone)]
pub struct ScheduledPolicyAgent {
    schedule: Vec<Arc<StationaryPolicy>>,
}

impl ScheduledPolicyAgent {
    pub fn new(schedule: Vec<Arc<StationaryPolicy>>) -> Self {
        Self { schedule }
    }
}

impl Agent for ScheduledPolicyAgent {
    fn act(&mut self, t: usize, state: usize) -> Result<usize> {
        let policy = self.schedule.get(t - 1).ok_or(Error::PastHorizon {
            t,
            horizon: self.schedule.len(),
        })?;
        Ok(policy.action(state))
    }

    fn observe(&mut self, _: usize, _: usize, _: usize, _: f64, _: usize) -> Result<()> {
        Ok(())
    }
}
