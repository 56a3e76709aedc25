//! Instance generators and the two-state diameter blow-up construction.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::diameter::{diameter, empirical_diameter};
use crate::error::{Error, Result};
use crate::mdp::{Kernel, MdpSnapshot, NonStationaryInstance, Shape, StationaryPolicy};
use crate::rng::{stream, StreamRng};
use crate::window::ObservationLog;

/// Draws allowed before random snapshot generation gives up.
pub const REJECTION_BUDGET: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DriftPattern {
    #[default]
    Uniform,
    /// Per-step variation proportional to `1 + sin(2 pi t / (T - 1)) / 2`.
    Sinusoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Stationary,
    Piecewise {
        changes: usize,
    },
    Drift {
        reward_budget: f64,
        kernel_budget: f64,
        #[serde(default)]
        pattern: DriftPattern,
    },
    /// The two-state switching construction; horizon is `4 * tau`.
    Prop3 {
        tau: usize,
    },
    /// The two switching kernels alternating every `tau` steps over the
    /// whole horizon, with reward 1 in the second state and 0 in the first.
    Prop3Tiled {
        tau: usize,
    },
}

/// A pure description of a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Accept random snapshots only with diameter at most this; default `3 S`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter_cap: Option<f64>,
    /// Symmetric Dirichlet concentration of random kernel rows; default 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_alpha: Option<f64>,
}

impl GeneratorSpec {
    pub fn new(family: Family, states: usize, actions: usize, horizon: usize, seed: u64) -> Self {
        Self {
            family,
            states,
            actions,
            horizon,
            seed,
            diameter_cap: None,
            dirichlet_alpha: None,
        }
    }

    pub fn generate(&self) -> Result<NonStationaryInstance> {
        let mut inst = match self.family {
            Family::Stationary => gen_stationary_with(self)?,
            Family::Piecewise { changes } => gen_piecewise_with(self, changes)?,
            Family::Drift {
                reward_budget,
                kernel_budget,
                pattern,
            } => gen_drift_with(self, reward_budget, kernel_budget, pattern)?,
            Family::Prop3 { tau } => {
                if self.states != 2 || self.actions != 2 || self.horizon != 4 * tau {
                    return Err(Error::InvalidArgument(format!(
                        "prop3 requires S = A = 2 and T = 4 tau = {}",
                        4 * tau
                    )));
                }
                gen_prop3(tau)?.0
            }
            Family::Prop3Tiled { tau } => {
                if self.states != 2 || self.actions != 2 {
                    return Err(Error::InvalidArgument("prop3-tiled requires S = A = 2".into()));
                }
                gen_prop3_tiled(tau, self.horizon)?
            }
        };
        inst.set_generator(self.clone());
        Ok(inst)
    }

    fn diameter_cap(&self) -> f64 {
        self.diameter_cap.unwrap_or(3.0 * self.states as f64)
    }

    fn alpha(&self) -> f64 {
        self.dirichlet_alpha.unwrap_or(1.0)
    }

    fn check_shape(&self) -> Result<()> {
        if self.states == 0 || self.actions == 0 || self.horizon == 0 {
            return Err(Error::InvalidArgument(format!(
                "S, A and T must be positive (got {}, {}, {})",
                self.states, self.actions, self.horizon
            )));
        }
        if !(self.alpha() > 0.0) {
            return Err(Error::InvalidArgument("Dirichlet concentration must be positive".into()));
        }
        Ok(())
    }

    fn rng(&self, label: &str) -> StreamRng {
        stream(self.seed, 0, label)
    }
}

fn dirichlet_row<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let mut row: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = row.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            row.iter_mut().for_each(|p| *p /= sum);
            return row;
        }
    }
}

/// A random snapshot with Dirichlet kernel rows and uniform rewards whose
/// diameter is at most `cap`.
pub fn random_snapshot<R: Rng + ?Sized>(shape: &Arc<Shape>, alpha: f64, cap: f64, rng: &mut R) -> Result<MdpSnapshot> {
    let n = shape.num_states();
    for _ in 0..REJECTION_BUDGET {
        let mut probs = Vec::with_capacity(shape.num_pairs() * n);
        for _ in 0..shape.num_pairs() {
            probs.extend(dirichlet_row(n, alpha, rng));
        }
        let rewards = (0..shape.num_pairs()).map(|_| rng.random::<f64>()).collect();
        let kernel = Kernel::from_dense(shape.clone(), probs)?;
        if diameter(&kernel)? <= cap {
            return MdpSnapshot::new(kernel, rewards);
        }
    }
    Err(Error::InvalidModel(format!(
        "no snapshot with diameter <= {cap} in {REJECTION_BUDGET} draws"
    )))
}

pub fn gen_stationary(states: usize, actions: usize, horizon: usize, seed: u64) -> Result<NonStationaryInstance> {
    GeneratorSpec::new(Family::Stationary, states, actions, horizon, seed).generate()
}

fn gen_stationary_with(spec: &GeneratorSpec) -> Result<NonStationaryInstance> {
    spec.check_shape()?;
    let shape = Arc::new(Shape::uniform(spec.states, spec.actions)?);
    let snap = random_snapshot(&shape, spec.alpha(), spec.diameter_cap(), &mut spec.rng("snapshot"))?;
    NonStationaryInstance::constant(snap, spec.horizon)
}

pub fn gen_piecewise(states: usize, actions: usize, horizon: usize, changes: usize, seed: u64) -> Result<NonStationaryInstance> {
    GeneratorSpec::new(Family::Piecewise { changes }, states, actions, horizon, seed).generate()
}

fn gen_piecewise_with(spec: &GeneratorSpec, changes: usize) -> Result<NonStationaryInstance> {
    spec.check_shape()?;
    if changes >= spec.horizon {
        return Err(Error::InvalidArgument(format!(
            "change count {changes} must be below the horizon {}",
            spec.horizon
        )));
    }
    let shape = Arc::new(Shape::uniform(spec.states, spec.actions)?);
    let mut rng = spec.rng("snapshot");
    // Change points are the first steps of new segments, drawn from 2..=T.
    let mut points: Vec<usize> = sample(&mut spec.rng("changes"), spec.horizon - 1, changes)
        .into_iter()
        .map(|i| i + 2)
        .collect();
    points.sort_unstable();
    let mut current = Arc::new(random_snapshot(&shape, spec.alpha(), spec.diameter_cap(), &mut rng)?);
    let mut snaps = Vec::with_capacity(spec.horizon);
    let mut next_change = points.iter().peekable();
    for t in 1..=spec.horizon {
        if next_change.peek() == Some(&&t) {
            next_change.next();
            current = Arc::new(random_snapshot(&shape, spec.alpha(), spec.diameter_cap(), &mut rng)?);
        }
        snaps.push(current.clone());
    }
    NonStationaryInstance::new(snaps, None)
}

pub fn gen_drift(
    states: usize,
    actions: usize,
    horizon: usize,
    reward_budget: f64,
    kernel_budget: f64,
    pattern: DriftPattern,
    seed: u64,
) -> Result<NonStationaryInstance> {
    GeneratorSpec::new(
        Family::Drift {
            reward_budget,
            kernel_budget,
            pattern,
        },
        states,
        actions,
        horizon,
        seed,
    )
    .generate()
}

/// Per-step allocation weights over `T - 1` transitions, summing to 1.
fn drift_weights(steps: usize, pattern: DriftPattern) -> Vec<f64> {
    let raw: Vec<f64> = match pattern {
        DriftPattern::Uniform => vec![1.0; steps],
        DriftPattern::Sinusoidal => (1..=steps)
            .map(|t| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * t as f64 / steps as f64).sin())
            .collect(),
    };
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Every reward moves by exactly `step` in its current direction, turning
/// around at the boundary of `[0, 1]`.
fn drift_rewards(rewards: &mut [f64], dirs: &mut [f64], step: f64) {
    for (r, d) in rewards.iter_mut().zip(dirs.iter_mut()) {
        let fwd = *r + *d * step;
        if (0.0..=1.0).contains(&fwd) {
            *r = fwd;
            continue;
        }
        *d = -*d;
        let back = *r + *d * step;
        *r = if (0.0..=1.0).contains(&back) {
            back
        } else if *d > 0.0 {
            1.0
        } else {
            0.0
        };
    }
}

/// Moves `row` towards `target` by L1 length exactly `step`, redrawing the
/// target when it is closer than `step`.
fn drift_row<R: Rng + ?Sized>(row: &mut [f64], target: &mut Vec<f64>, step: f64, alpha: f64, rng: &mut R) {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    if dist(row, target) < step {
        *target = dirichlet_row(row.len(), alpha, rng);
        if dist(row, target) < step {
            let j = (0..row.len())
                .min_by(|&i, &j| row[i].total_cmp(&row[j]))
                .expect("nonempty row");
            target.iter_mut().for_each(|p| *p = 0.0);
            target[j] = 1.0;
        }
    }
    let d = dist(row, target);
    let theta = if d > 0.0 { (step / d).min(1.0) } else { 0.0 };
    for (p, q) in row.iter_mut().zip(target.iter()) {
        *p += theta * (q - *p);
    }
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= sum);
}

fn gen_drift_with(spec: &GeneratorSpec, reward_budget: f64, kernel_budget: f64, pattern: DriftPattern) -> Result<NonStationaryInstance> {
    spec.check_shape()?;
    let t = spec.horizon;
    if !(reward_budget >= 0.0 && kernel_budget >= 0.0) {
        return Err(Error::InvalidArgument("variation budgets must be non-negative".into()));
    }
    if reward_budget > (t - 1) as f64 {
        return Err(Error::InvalidArgument(format!(
            "reward budget {reward_budget} exceeds T - 1 = {}",
            t - 1
        )));
    }
    if kernel_budget > 2.0 * (t - 1) as f64 {
        return Err(Error::InvalidArgument(format!(
            "kernel budget {kernel_budget} exceeds 2 (T - 1) = {}",
            2 * (t - 1)
        )));
    }
    let shape = Arc::new(Shape::uniform(spec.states, spec.actions)?);
    let n = shape.num_states();
    let mut rng = spec.rng("snapshot");
    let first = random_snapshot(&shape, spec.alpha(), spec.diameter_cap(), &mut rng)?;
    let mut snaps = vec![Arc::new(first)];
    if t == 1 || (reward_budget == 0.0 && kernel_budget == 0.0) {
        snaps.resize(t, snaps[0].clone());
        return NonStationaryInstance::new(snaps, None);
    }

    let mut drift_rng = spec.rng("drift");
    let weights = drift_weights(t - 1, pattern);
    let mut rewards = snaps[0].rewards().to_vec();
    let mut probs = snaps[0].kernel().as_slice().to_vec();
    let mut dirs: Vec<f64> = (0..rewards.len())
        .map(|_| if drift_rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut targets: Vec<Vec<f64>> = (0..shape.num_pairs())
        .map(|_| dirichlet_row(n, spec.alpha(), &mut drift_rng))
        .collect();
    for w in weights {
        drift_rewards(&mut rewards, &mut dirs, reward_budget * w);
        if kernel_budget > 0.0 {
            for (pair, target) in targets.iter_mut().enumerate() {
                drift_row(&mut probs[pair * n..(pair + 1) * n], target, kernel_budget * w, spec.alpha(), &mut drift_rng);
            }
        }
        let kernel = Kernel::from_dense(shape.clone(), probs.clone())?;
        snaps.push(Arc::new(MdpSnapshot::new(kernel, rewards.clone())?));
    }
    NonStationaryInstance::new(snaps, None)
}

/// The two switching kernels on states `{0, 1}` with actions `{0, 1}`.
pub fn prop3_kernels() -> Result<(Kernel, Kernel)> {
    let shape = Arc::new(Shape::uniform(2, 2)?);
    let first = Kernel::deterministic(shape.clone(), &[0, 1, 1, 0])?;
    let second = Kernel::deterministic(shape, &[1, 0, 0, 1])?;
    Ok((first, second))
}

/// The four-phase switching instance of length `4 tau` and the policy played
/// at each step.
pub fn gen_prop3(tau: usize) -> Result<(NonStationaryInstance, Vec<Arc<StationaryPolicy>>)> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    let (k1, k2) = prop3_kernels()?;
    let shape = k1.shape().clone();
    let s1 = Arc::new(MdpSnapshot::new(k1, vec![0.0; 4])?);
    let s2 = Arc::new(MdpSnapshot::new(k2, vec![0.0; 4])?);
    let mut snaps = Vec::with_capacity(4 * tau);
    for phase in [&s1, &s2, &s1, &s2] {
        snaps.extend(std::iter::repeat_n(phase.clone(), tau));
    }
    let first = Arc::new(StationaryPolicy::new(&shape, vec![0, 1])?);
    let second = Arc::new(StationaryPolicy::new(&shape, vec![1, 0])?);
    let mut schedule = vec![first; 2 * tau];
    schedule.extend(std::iter::repeat_n(second, 2 * tau));
    let spec = GeneratorSpec::new(Family::Prop3 { tau }, 2, 2, 4 * tau, 0);
    Ok((NonStationaryInstance::new(snaps, Some(spec))?, schedule))
}

fn gen_prop3_tiled(tau: usize, horizon: usize) -> Result<NonStationaryInstance> {
    if tau == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("tau and the horizon must be at least 1".into()));
    }
    let (k1, k2) = prop3_kernels()?;
    let rewards = vec![0.0, 0.0, 1.0, 1.0];
    let s1 = Arc::new(MdpSnapshot::new(k1, rewards.clone())?);
    let s2 = Arc::new(MdpSnapshot::new(k2, rewards)?);
    let snaps = (0..horizon)
        .map(|i| if (i / tau).is_multiple_of(2) { s1.clone() } else { s2.clone() })
        .collect();
    NonStationaryInstance::new(snaps, None)
}

/// Result of replaying the switching schedule from the first state.
#[derive(Debug, Clone)]
pub struct Prop3Replay {
    pub tau: usize,
    pub window: usize,
    pub anchor: usize,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    /// Windowed empirical kernel at the anchor; unvisited pairs have zero rows.
    pub empirical: Kernel,
    pub snapshot_diameters: [f64; 2],
    pub empirical_diameter: f64,
}

impl Prop3Replay {
    /// The four displayed empirical entries
    /// `(p(0|0,0), p(1|0,0), p(0|0,1), p(1|0,1))`.
    pub fn displayed(&self) -> [f64; 4] {
        let r0 = self.empirical.row(0);
        let r1 = self.empirical.row(1);
        [r0[0], r0[1], r1[0], r1[1]]
    }

    /// Closed-form values of [`Self::displayed`].
    pub fn expected(&self) -> [f64; 4] {
        let t = self.tau as f64;
        [t / (t + 1.0), 1.0 / (t + 1.0), 1.0, 0.0]
    }

    pub fn max_abs_error(&self) -> f64 {
        self.displayed()
            .iter()
            .zip(self.expected())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Replays the switching schedule deterministically, checks every
/// action/state segment, and returns the empirical kernel over the window
/// `[1, 4 tau]` at anchor `4 tau + 1`.
pub fn prop3_replay(tau: usize) -> Result<Prop3Replay> {
    let (inst, schedule) = gen_prop3(tau)?;
    let shape = inst.shape().clone();
    let horizon = 4 * tau;
    let mut log = ObservationLog::new(shape.clone());
    let mut states = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut s = 0;
    for t in 1..=horizon {
        let a = schedule[t - 1].action(s);
        let row = inst.snapshot(t).kernel().row(shape.pair(s, a));
        let next = row.iter().position(|&p| p == 1.0).expect("deterministic row");
        log.push(crate::window::Observation {
            t,
            state: s,
            action: a,
            reward: 0.0,
            next,
        })?;
        states.push(s);
        actions.push(a);
        s = next;
    }

    // Expected (state, action) per step from the four phases.
    let expected = |t: usize| -> (usize, usize) {
        if t <= tau + 1 {
            (0, 0)
        } else if t <= 2 * tau {
            (1, 1)
        } else if t <= 3 * tau + 1 {
            (1, 0)
        } else {
            (0, 1)
        }
    };
    for t in 1..=horizon {
        let want = expected(t);
        let got = (states[t - 1], actions[t - 1]);
        if got != want {
            return Err(Error::Replay(format!(
                "replay diverged at step {t}: (state, action) = {got:?}, expected {want:?}"
            )));
        }
    }

    let window = horizon;
    let anchor = horizon + 1;
    let (_, p_hat) = log.estimates(anchor, window);
    let empirical = Kernel::from_dense(shape, p_hat)?;
    let snapshot_diameters = [diameter(inst.snapshot(1).kernel())?, diameter(inst.snapshot(tau + 1).kernel())?];
    let empirical_diameter = empirical_diameter(&empirical)?;
    Ok(Prop3Replay {
        tau,
        window,
        anchor,
        states,
        actions,
        empirical,
        snapshot_diameters,
        empirical_diameter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_has_zero_budgets_and_is_reproducible() {
        let a = gen_stationary(3, 2, 50, 11).unwrap();
        let b = gen_stationary(3, 2, 50, 11).unwrap();
        assert_eq!(a.budgets().reward, 0.0);
        assert_eq!(a.budgets().kernel, 0.0);
        assert_eq!(a.snapshot(1).as_ref(), b.snapshot(1).as_ref());
        assert!(diameter(a.snapshot(1).kernel()).unwrap() <= 9.0);
    }

    #[test]
    fn piecewise_changes_only_at_change_points() {
        let inst = gen_piecewise(2, 2, 100, 4, 3).unwrap();
        let nonzero = inst.budgets().per_step_kernel.iter().filter(|&&b| b > 0.0).count();
        assert!(nonzero <= 4);
        assert!(inst.budgets().kernel <= 8.0);
    }

    #[test]
    fn drift_uniform_allocation() {
        let inst = gen_drift(2, 2, 200, 2.0, 1.0, DriftPattern::Uniform, 5).unwrap();
        let b = inst.budgets();
        assert!((b.reward - 2.0).abs() / 2.0 < 0.05, "{}", b.reward);
        assert!((b.kernel - 1.0).abs() < 0.05, "{}", b.kernel);
        for &x in &b.per_step_kernel {
            assert!((x - 1.0 / 199.0).abs() < 1e-9);
        }
    }

    #[test]
    fn drift_rejects_infeasible_targets() {
        assert!(gen_drift(2, 2, 10, 0.0, 18.5, DriftPattern::Uniform, 0).is_err());
        assert!(gen_drift(2, 2, 10, 9.5, 0.0, DriftPattern::Uniform, 0).is_err());
        assert!(gen_drift(2, 2, 10, -1.0, 0.0, DriftPattern::Uniform, 0).is_err());
    }

    #[test]
    fn drift_with_zero_targets_is_constant() {
        let inst = gen_drift(2, 3, 30, 0.0, 0.0, DriftPattern::Sinusoidal, 1).unwrap();
        assert_eq!(inst.budgets().reward + inst.budgets().kernel, 0.0);
    }

    #[test]
    fn prop3_budgets() {
        let (inst, schedule) = gen_prop3(5).unwrap();
        assert_eq!(inst.horizon(), 20);
        assert_eq!(schedule.len(), 20);
        assert_eq!(inst.budgets().reward, 0.0);
        assert_eq!(inst.budgets().kernel, 6.0);
    }

    #[test]
    fn prop3_replay_values() {
        let r = prop3_replay(4).unwrap();
        assert_eq!(r.displayed(), [0.8, 0.2, 1.0, 0.0]);
        assert_eq!(r.snapshot_diameters, [1.0, 1.0]);
        assert!((r.empirical_diameter - 5.0).abs() < 1e-9);
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = GeneratorSpec::new(
            Family::Drift {
                reward_budget: 1.5,
                kernel_budget: 0.25,
                pattern: DriftPattern::Sinusoidal,
            },
            3,
            2,
            100,
            42,
        );
        let text = toml::to_string(&spec).unwrap();
        let back: GeneratorSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
