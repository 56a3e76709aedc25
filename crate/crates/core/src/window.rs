//! Sliding-window counts, estimates and confidence radii.
//!
//! At an anchor time `tau` with window `W`, statistics cover the steps
//! `q` in `[max(tau - W, 1), tau - 1]`. Two implementations are provided:
//! [`ObservationLog`] keeps the full history and rescans it (the reference),
//! while [`SlidingWindow`] keeps only the last `W` observations with
//! incremental pair counts and is what the agents use.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{Kernel, Shape};

/// Default multiplier `c` inside the radius logarithm `log(c * S * A * T / delta)`.
pub const DEFAULT_LOG_MULTIPLIER: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: usize,
}

/// Windowed sufficient statistics at one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub shape: Arc<Shape>,
    /// `N(s,a)` per pair.
    pub counts: Vec<u64>,
    /// Sum of observed rewards per pair.
    pub reward_sums: Vec<f64>,
    /// Transition counts, `pair * S + next`.
    pub transitions: Vec<u64>,
}

impl WindowStats {
    fn empty(shape: Arc<Shape>) -> Self {
        let pairs = shape.num_pairs();
        let n = shape.num_states();
        Self {
            shape,
            counts: vec![0; pairs],
            reward_sums: vec![0.0; pairs],
            transitions: vec![0; pairs * n],
        }
    }

    fn add(&mut self, o: &Observation) {
        let pair = self.shape.pair(o.state, o.action);
        self.counts[pair] += 1;
        self.reward_sums[pair] += o.reward;
        self.transitions[pair * self.shape.num_states() + o.next] += 1;
    }

    /// `N+(s,a) = max(1, N(s,a))`.
    pub fn counts_plus(&self) -> Vec<u64> {
        self.counts.iter().map(|&c| c.max(1)).collect()
    }

    /// `(r_hat, p_hat)`: windowed sums divided by `N+`. Unvisited pairs get
    /// reward 0 and an all-zero kernel row.
    pub fn estimates(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.shape.num_states();
        let mut r_hat = Vec::with_capacity(self.counts.len());
        let mut p_hat = vec![0.0; self.transitions.len()];
        for (pair, &c) in self.counts.iter().enumerate() {
            let np = c.max(1) as f64;
            r_hat.push((self.reward_sums[pair] / np).clamp(0.0, 1.0));
            for s2 in 0..n {
                p_hat[pair * n + s2] = self.transitions[pair * n + s2] as f64 / np;
            }
        }
        (r_hat, p_hat)
    }
}

/// First step inside the window ending just before `tau`.
#[inline]
pub fn window_start(tau: usize, window: usize) -> usize {
    tau.saturating_sub(window).max(1)
}

/// Append-only record of every observation of a run.
#[derive(Debug, Clone)]
pub struct ObservationLog {
    shape: Arc<Shape>,
    entries: Vec<Observation>,
}

impl ObservationLog {
    pub fn new(shape: Arc<Shape>) -> Self {
        Self {
            shape,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, o: Observation) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if o.t <= last.t {
                return Err(Error::InvalidArgument(format!(
                    "observation time {} does not follow {}",
                    o.t, last.t
                )));
            }
        }
        check_observation(&self.shape, &o)?;
        self.entries.push(o);
        Ok(())
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Observation] {
        &mut self.entries
    }

    /// Statistics over `[max(tau - W, 1), tau - 1]` by a full scan.
    pub fn stats_at(&self, tau: usize, window: usize) -> WindowStats {
        let lo = window_start(tau, window);
        let mut st = WindowStats::empty(self.shape.clone());
        for o in self.entries.iter().filter(|o| o.t >= lo && o.t < tau) {
            st.add(o);
        }
        st
    }

    /// `(N, N+)` per pair.
    pub fn counts_at(&self, tau: usize, window: usize) -> (Vec<u64>, Vec<u64>) {
        let st = self.stats_at(tau, window);
        let plus = st.counts_plus();
        (st.counts, plus)
    }

    /// `(r_hat, p_hat)` per pair.
    pub fn estimates(&self, tau: usize, window: usize) -> (Vec<f64>, Vec<f64>) {
        self.stats_at(tau, window).estimates()
    }
}

fn check_observation(shape: &Shape, o: &Observation) -> Result<()> {
    if o.state >= shape.num_states() || o.next >= shape.num_states() || !shape.is_valid_action(o.state, o.action) {
        return Err(Error::InvalidArgument(format!(
            "observation at t = {} references ({}, {}) -> {} outside the shape",
            o.t, o.state, o.action, o.next
        )));
    }
    Ok(())
}

/// Ring buffer of the last `W` observations of consecutive steps.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    window: usize,
    buf: VecDeque<Observation>,
    counts: Vec<u64>,
    transitions: Vec<u64>,
    shape: Arc<Shape>,
}

impl SlidingWindow {
    pub fn new(shape: Arc<Shape>, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidArgument("window must be at least 1".into()));
        }
        let pairs = shape.num_pairs();
        let n = shape.num_states();
        Ok(Self {
            window,
            buf: VecDeque::with_capacity(window.min(1 << 16)),
            counts: vec![0; pairs],
            transitions: vec![0; pairs * n],
            shape,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Records step `o.t`, which must follow the previous one directly.
    pub fn push(&mut self, o: Observation) -> Result<()> {
        let expected = self.buf.back().map_or(o.t, |b| b.t + 1);
        if o.t != expected || o.t == 0 {
            return Err(Error::InvalidArgument(format!(
                "sliding window expects step {expected}, got {}",
                o.t
            )));
        }
        check_observation(&self.shape, &o)?;
        let n = self.shape.num_states();
        if self.buf.len() == self.window {
            let old = self.buf.pop_front().expect("full buffer");
            let pair = self.shape.pair(old.state, old.action);
            self.counts[pair] -= 1;
            self.transitions[pair * n + old.next] -= 1;
        }
        let pair = self.shape.pair(o.state, o.action);
        self.counts[pair] += 1;
        self.transitions[pair * n + o.next] += 1;
        self.buf.push_back(o);
        Ok(())
    }

    /// Windowed counts for the anchor right after the last pushed step.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Statistics at anchor `last_t + 1`. Reward sums are re-added in time
    /// order so they agree bit-for-bit with [`ObservationLog::stats_at`].
    pub fn stats(&self) -> WindowStats {
        let mut reward_sums = vec![0.0; self.counts.len()];
        for o in &self.buf {
            reward_sums[self.shape.pair(o.state, o.action)] += o.reward;
        }
        WindowStats {
            shape: self.shape.clone(),
            counts: self.counts.clone(),
            reward_sums,
            transitions: self.transitions.clone(),
        }
    }
}

/// Per-pair radii `(rad_r, rad_p)` for the given `N+` values:
/// `rad_r = 2 sqrt(2 L / N+)`, `rad_p = 2 sqrt(2 S L / N+)` with
/// `L = log(c * S * A * T / delta)` and `S * A` the number of pairs.
pub fn radii(
    counts_plus: &[u64],
    num_states: usize,
    num_pairs: usize,
    horizon: usize,
    delta: f64,
    log_multiplier: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = radius_log(num_pairs, horizon, delta, log_multiplier)?;
    let s = num_states as f64;
    let rr = counts_plus.iter().map(|&n| 2.0 * (2.0 * l / n.max(1) as f64).sqrt()).collect();
    let rp = counts_plus
        .iter()
        .map(|&n| 2.0 * (2.0 * s * l / n.max(1) as f64).sqrt())
        .collect();
    Ok((rr, rp))
}

fn radius_log(num_pairs: usize, horizon: usize, delta: f64, log_multiplier: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(log_multiplier > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "log multiplier must be positive, got {log_multiplier}"
        )));
    }
    let l = (log_multiplier * num_pairs as f64 * horizon as f64 / delta).ln();
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius logarithm must be positive, got {l}"
        )));
    }
    Ok(l)
}

/// Statistical inputs of the radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusParams {
    pub delta: f64,
    pub horizon: usize,
    pub log_multiplier: f64,
}

impl RadiusParams {
    pub fn new(delta: f64, horizon: usize) -> Self {
        Self {
            delta,
            horizon,
            log_multiplier: DEFAULT_LOG_MULTIPLIER,
        }
    }
}

/// Frozen reward and kernel confidence regions at one anchor.
#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceRegions {
    #[serde(skip)]
    pub shape: Arc<Shape>,
    pub window: usize,
    pub anchor: usize,
    pub counts: Vec<u64>,
    pub counts_plus: Vec<u64>,
    pub r_hat: Vec<f64>,
    /// `pair * S + next`.
    pub p_hat: Vec<f64>,
    pub rad_r: Vec<f64>,
    pub rad_p: Vec<f64>,
    pub eta: f64,
    pub delta: f64,
}

impl ConfidenceRegions {
    pub fn build(stats: &WindowStats, anchor: usize, window: usize, params: RadiusParams, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("widening must be finite and >= 0, got {eta}")));
        }
        let shape = stats.shape.clone();
        let counts_plus = stats.counts_plus();
        let (rad_r, rad_p) = radii(
            &counts_plus,
            shape.num_states(),
            shape.num_pairs(),
            params.horizon,
            params.delta,
            params.log_multiplier,
        )?;
        let (r_hat, p_hat) = stats.estimates();
        Ok(Self {
            shape,
            window,
            anchor,
            counts: stats.counts.clone(),
            counts_plus,
            r_hat,
            p_hat,
            rad_r,
            rad_p,
            eta,
            delta: params.delta,
        })
    }

    pub fn p_hat_row(&self, pair: usize) -> &[f64] {
        let n = self.shape.num_states();
        &self.p_hat[pair * n..(pair + 1) * n]
    }

    /// L1 budget of the widened kernel ball at `pair`.
    pub fn kernel_budget(&self, pair: usize) -> f64 {
        self.rad_p[pair] + self.eta
    }
}

/// Whether the true model lies in each pair's reward and widened kernel region.
pub fn membership(regions: &ConfidenceRegions, r_true: &[f64], p_true: &Kernel) -> Result<(Vec<bool>, Vec<bool>)> {
    let pairs = regions.shape.num_pairs();
    if r_true.len() != pairs {
        return Err(Error::LengthMismatch {
            expected: pairs,
            got: r_true.len(),
        });
    }
    if p_true.shape().as_ref() != regions.shape.as_ref() {
        return Err(Error::InvalidArgument("kernel shape differs from the regions".into()));
    }
    let in_r = (0..pairs)
        .map(|p| (r_true[p] - regions.r_hat[p]).abs() <= regions.rad_r[p])
        .collect();
    let in_p = (0..pairs)
        .map(|p| {
            let l1: f64 = p_true
                .row(p)
                .iter()
                .zip(regions.p_hat_row(p))
                .map(|(a, b)| (a - b).abs())
                .sum();
            l1 <= regions.kernel_budget(p)
        })
        .collect();
    Ok((in_r, in_p))
}
