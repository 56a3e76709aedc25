//! Sliding-window UCRL2 with confidence widening.
//!
//! Episodes start with a fresh optimistic plan built from the last `W`
//! observations and end when the next step index is a multiple of `W` or the
//! in-episode count of the pair about to be played reaches its windowed
//! count at the anchor.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evi::{evi, EviOutput, PlanningRegions, DEFAULT_MAX_ITER};
use crate::mdp::{Shape, StationaryPolicy};
use crate::sim::Agent;
use crate::window::{ConfidenceRegions, Observation, RadiusParams, SlidingWindow, DEFAULT_LOG_MULTIPLIER};

pub const EPISODE_HEADER: &str = "episode,anchor,length,rho_tilde,evi_iterations,evi_converged";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwConfig {
    pub window: usize,
    pub eta: f64,
    pub delta: f64,
    pub horizon: usize,
    #[serde(default = "default_log_multiplier")]
    pub log_multiplier: f64,
    #[serde(default = "default_evi_max_iter")]
    pub evi_max_iter: usize,
}

fn default_log_multiplier() -> f64 {
    DEFAULT_LOG_MULTIPLIER
}

fn default_evi_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

impl SwConfig {
    pub fn new(window: usize, eta: f64, delta: f64, horizon: usize) -> Self {
        Self {
            window,
            eta,
            delta,
            horizon,
            log_multiplier: DEFAULT_LOG_MULTIPLIER,
            evi_max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidArgument("window must be at least 1".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("widening must be finite and >= 0, got {}", self.eta)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        Ok(())
    }

    fn radius_params(&self) -> RadiusParams {
        RadiusParams {
            delta: self.delta,
            horizon: self.horizon,
            log_multiplier: self.log_multiplier,
        }
    }
}

/// Window and widening from the horizon alone, or tuned to known budgets
/// `(B_r, B_p)`.
pub fn default_parameters(states: usize, actions: f64, horizon: usize, budgets: Option<(f64, f64)>) -> Result<(usize, f64)> {
    if horizon == 0 || states == 0 || !(actions >= 1.0) {
        return Err(Error::InvalidArgument("S, A and T must be positive".into()));
    }
    let base = (states as f64).powf(2.0 / 3.0) * actions.sqrt() * (horizon as f64).sqrt();
    match budgets {
        Some((br, bp)) => {
            if !(br >= 0.0 && bp >= 0.0) {
                return Err(Error::InvalidArgument(format!("budgets must be non-negative, got ({br}, {bp})")));
            }
            let w = ((3.0 * base / (br + bp + 1.0).sqrt()).round() as usize).max(1);
            let eta = ((bp + 1.0) * w as f64 / horizon as f64).sqrt();
            Ok((w, eta))
        }
        None => {
            let w = (base.round() as usize).max(1);
            Ok((w, (w as f64 / horizon as f64).sqrt()))
        }
    }
}

/// Whether the episode in progress ends before step `t_next`.
pub fn episode_should_end(
    t_next: usize,
    window: usize,
    shape: &Shape,
    nu: &[u64],
    counts_plus: &[u64],
    s_next: usize,
    policy: &StationaryPolicy,
) -> bool {
    if t_next.is_multiple_of(window) {
        return true;
    }
    let pair = shape.pair(s_next, policy.action(s_next));
    nu[pair] >= counts_plus[pair]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub anchor: usize,
    pub length: usize,
    pub rho_tilde: f64,
    pub evi_iterations: usize,
    pub evi_converged: bool,
}

#[derive(Debug, Clone)]
struct Episode {
    index: usize,
    anchor: usize,
    nu: Vec<u64>,
    regions: ConfidenceRegions,
    plan: EviOutput,
}

#[derive(Debug, Clone)]
pub struct SwUcrl2Cw {
    shape: Arc<Shape>,
    cfg: SwConfig,
    ring: SlidingWindow,
    episode: Option<Episode>,
    end_pending: bool,
    last_t: usize,
    records: Vec<EpisodeRecord>,
}

impl SwUcrl2Cw {
    pub fn new(shape: Arc<Shape>, cfg: SwConfig) -> Result<Self> {
        cfg.validate()?;
        let ring = SlidingWindow::new(shape.clone(), cfg.window)?;
        Ok(Self {
            shape,
            cfg,
            ring,
            episode: None,
            end_pending: true,
            last_t: 0,
            records: Vec::new(),
        })
    }

    pub fn config(&self) -> &SwConfig {
        &self.cfg
    }

    /// Episodes started so far; the last one may still be running.
    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.records
    }

    /// Regions frozen at the current episode's anchor.
    pub fn current_regions(&self) -> Option<&ConfidenceRegions> {
        self.episode.as_ref().map(|e| &e.regions)
    }

    pub fn current_plan(&self) -> Option<&EviOutput> {
        self.episode.as_ref().map(|e| &e.plan)
    }

    fn start_episode(&mut self, t: usize) -> Result<()> {
        let stats = self.ring.stats();
        let regions = ConfidenceRegions::build(&stats, t, self.cfg.window, self.cfg.radius_params(), self.cfg.eta)?;
        let planning = PlanningRegions::from_confidence(&regions)?;
        let plan = evi(&planning, 1.0 / (t as f64).sqrt(), self.cfg.evi_max_iter)?;
        let index = self.records.len() + 1;
        if !plan.converged {
            log::warn!(
                "episode {index} at t = {t}: extended value iteration stopped after {} iterations without converging",
                plan.iterations
            );
        }
        self.records.push(EpisodeRecord {
            episode: index,
            anchor: t,
            length: 0,
            rho_tilde: plan.gain,
            evi_iterations: plan.iterations,
            evi_converged: plan.converged,
        });
        self.episode = Some(Episode {
            index,
            anchor: t,
            nu: vec![0; self.shape.num_pairs()],
            regions,
            plan,
        });
        self.end_pending = false;
        Ok(())
    }
}

impl Agent for SwUcrl2Cw {
    fn act(&mut self, t: usize, state: usize) -> Result<usize> {
        if t > self.cfg.horizon {
            return Err(Error::PastHorizon {
                t,
                horizon: self.cfg.horizon,
            });
        }
        if t != self.last_t + 1 {
            return Err(Error::InvalidArgument(format!("expected step {}, got {t}", self.last_t + 1)));
        }
        if state >= self.shape.num_states() {
            return Err(Error::InvalidArgument(format!("state {state} out of range")));
        }
        if self.end_pending || self.episode.is_none() {
            self.start_episode(t)?;
        }
        let ep = self.episode.as_ref().expect("episode started");
        Ok(ep.plan.policy.action(state))
    }

    fn observe(&mut self, t: usize, state: usize, action: usize, reward: f64, next: usize) -> Result<()> {
        if t != self.last_t + 1 {
            return Err(Error::InvalidArgument(format!("expected step {}, got {t}", self.last_t + 1)));
        }
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument("observe called before act".into()))?;
        self.ring.push(Observation {
            t,
            state,
            action,
            reward,
            next,
        })?;
        self.last_t = t;
        ep.nu[self.shape.pair(state, action)] += 1;
        self.records[ep.index - 1].length += 1;
        self.end_pending = episode_should_end(
            t + 1,
            self.cfg.window,
            &self.shape,
            &ep.nu,
            &ep.regions.counts_plus,
            next,
            &ep.plan.policy,
        );
        Ok(())
    }

    fn tags(&self) -> (Option<usize>, Option<usize>) {
        (self.episode.as_ref().map(|e| e.index), None)
    }
}

impl SwUcrl2Cw {
    /// Anchor of the running episode.
    pub fn current_anchor(&self) -> Option<usize> {
        self.episode.as_ref().map(|e| e.anchor)
    }
}

/// Upper bound on the number of episodes in `T` steps.
pub fn episode_count_bound(num_pairs: usize, window: usize, horizon: usize) -> f64 {
    let per_window = horizon as f64 / window as f64;
    num_pairs as f64 * (2.0 + (window as f64).log2()) * per_window + per_window
}

/// Checks that episodes partition `[1, T]`, none exceeds `W` steps, and the
/// count respects [`episode_count_bound`].
pub fn audit_episodes(records: &[EpisodeRecord], horizon: usize, window: usize, num_pairs: usize) -> Result<()> {
    let mut expected_anchor = 1;
    for (i, r) in records.iter().enumerate() {
        if r.episode != i + 1 {
            return Err(Error::Audit(format!("episode {} recorded at position {}", r.episode, i + 1)));
        }
        if r.anchor != expected_anchor {
            return Err(Error::Audit(format!(
                "episode {} starts at {} instead of {expected_anchor}",
                r.episode, r.anchor
            )));
        }
        if r.length == 0 || r.length > window {
            return Err(Error::Audit(format!(
                "episode {} has length {} (window {window})",
                r.episode, r.length
            )));
        }
        expected_anchor += r.length;
    }
    if expected_anchor != horizon + 1 {
        return Err(Error::Audit(format!(
            "episodes cover [1, {}] instead of [1, {horizon}]",
            expected_anchor - 1
        )));
    }
    let bound = episode_count_bound(num_pairs, window, horizon);
    if records.len() as f64 > bound {
        return Err(Error::Audit(format!("{} episodes exceed the bound {bound:.3}", records.len())));
    }
    Ok(())
}

pub fn write_episode_csv<W: std::io::Write>(w: W, records: &[EpisodeRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wtr.write_record(EPISODE_HEADER.split(','))?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_episode_csv<R: std::io::Read>(r: R) -> Result<Vec<EpisodeRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<&str> = rdr.headers()?.iter().collect();
    if header.join(",") != EPISODE_HEADER {
        return Err(Error::Parse(format!("unexpected episode header {:?}", header.join(","))));
    }
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}
