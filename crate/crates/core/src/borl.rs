//! Bandit-over-RL: an EXP3.P master picks a `(window, widening)` pair for
//! each block of `H` steps and restarts a sliding-window learner with it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Shape;
use crate::rng::StreamRng;
use crate::sim::{sample_index, Agent};
use crate::swucrl::{default_parameters, EpisodeRecord, SwConfig, SwUcrl2Cw};

pub const BLOCK_HEADER: &str = "block,arm_j,arm_k,W,eta,start_state,block_reward,prob_chosen";

/// Candidate windows and widenings with the block length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterGrid {
    pub block_len: usize,
    pub phi: f64,
    pub delta_w: usize,
    pub delta_eta: usize,
    pub windows: Vec<usize>,
    pub etas: Vec<f64>,
}

impl ParameterGrid {
    /// Geometric grid from `(S, A, T)`. Falls back to the horizon-only
    /// setting as a single arm when either grid would have one point.
    pub fn build(states: usize, actions: usize, horizon: usize) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::InvalidArgument("S, A and T must be positive".into()));
        }
        let (s, a, t) = (states as f64, actions as f64, horizon as f64);
        let block_len = (3.0 * s.powf(2.0 / 3.0) * a.sqrt() * t.sqrt()).ceil() as usize;
        let phi = 1.0 / (2.0 * t.sqrt());
        let h = block_len as f64;
        let delta_w = h.ln().floor().max(0.0) as usize;
        let delta_eta = (1.0 / phi).ln().floor().max(0.0) as usize;
        if delta_w == 0 || delta_eta == 0 {
            let (w, eta) = default_parameters(states, a, horizon, None)?;
            return Ok(Self {
                block_len,
                phi,
                delta_w: 0,
                delta_eta: 0,
                windows: vec![w.min(horizon)],
                etas: vec![eta],
            });
        }
        let windows = (0..=delta_w)
            .map(|j| (h.powf(j as f64 / delta_w as f64).floor() as usize).max(1))
            .collect();
        let scale = s.powf(1.0 / 3.0) * a.powf(0.25);
        let etas = (0..=delta_eta)
            .map(|k| scale * phi.powf(k as f64 / delta_eta as f64))
            .collect();
        Ok(Self {
            block_len,
            phi,
            delta_w,
            delta_eta,
            windows,
            etas,
        })
    }

    /// An explicit grid.
    pub fn custom(block_len: usize, windows: Vec<usize>, etas: Vec<f64>) -> Result<Self> {
        if block_len == 0 || windows.is_empty() || etas.is_empty() {
            return Err(Error::InvalidArgument("grid needs a positive block length and candidates".into()));
        }
        if windows.contains(&0) || etas.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(Error::InvalidArgument("windows must be >= 1 and widenings finite and >= 0".into()));
        }
        Ok(Self {
            block_len,
            phi: f64::NAN,
            delta_w: windows.len() - 1,
            delta_eta: etas.len() - 1,
            windows,
            etas,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.windows.len() * self.etas.len()
    }

    /// `(j, k)` of arm index `i`.
    pub fn arm(&self, i: usize) -> (usize, usize) {
        (i / self.etas.len(), i % self.etas.len())
    }

    pub fn num_blocks(&self, horizon: usize) -> usize {
        horizon.div_ceil(self.block_len)
    }
}

/// `(alpha, beta, gamma)` for `num_arms` arms over `num_blocks` rounds.
/// `gamma` is capped at 1 so the exploration mixture stays a distribution.
pub fn exp3p_params(num_arms: usize, num_blocks: usize) -> (f64, f64, f64) {
    let d = num_arms as f64;
    let n = num_blocks.max(1) as f64;
    let ln = d.ln();
    let alpha = 0.95 * (ln / (d * n)).sqrt();
    let beta = (ln / (d * n)).sqrt();
    let gamma = (1.05 * (d * ln / n).sqrt()).min(1.0);
    (alpha, beta, gamma)
}

/// Softmax of `alpha * q` mixed with the uniform distribution.
pub fn exp3p_distribution(q: &[f64], alpha: f64, gamma: f64) -> Vec<f64> {
    let d = q.len() as f64;
    let top = q.iter().map(|&x| alpha * x).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = q.iter().map(|&x| (alpha * x - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|&x| (1.0 - gamma) * x / total + gamma / d).collect()
}

/// Adds `(beta + [i chosen] * reward / H) / u_i` to every weight.
pub fn exp3p_update(q: &mut [f64], chosen: usize, block_reward: f64, block_len: f64, beta: f64, u: &[f64]) -> Result<()> {
    if !(0.0..=block_len).contains(&block_reward) {
        return Err(Error::InvalidArgument(format!(
            "block reward {block_reward} outside [0, {block_len}]"
        )));
    }
    if q.len() != u.len() || chosen >= q.len() {
        return Err(Error::LengthMismatch {
            expected: q.len(),
            got: u.len(),
        });
    }
    for (i, (qi, &ui)) in q.iter_mut().zip(u).enumerate() {
        let gain = if i == chosen { block_reward / block_len } else { 0.0 };
        *qi += (beta + gain) / ui;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block: usize,
    pub arm_j: usize,
    pub arm_k: usize,
    #[serde(rename = "W")]
    pub window: usize,
    pub eta: f64,
    pub start_state: usize,
    pub block_reward: f64,
    pub prob_chosen: f64,
}

struct Block {
    index: usize,
    start: usize,
    len: usize,
    arm: usize,
    u: Vec<f64>,
    reward: f64,
    agent: SwUcrl2Cw,
}

pub struct Borl {
    shape: Arc<Shape>,
    grid: ParameterGrid,
    delta: f64,
    horizon: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    q: Vec<f64>,
    master_rng: StreamRng,
    block: Option<Block>,
    records: Vec<BlockRecord>,
    episodes: Vec<(usize, EpisodeRecord)>,
}

impl Borl {
    pub fn new(shape: Arc<Shape>, horizon: usize, delta: f64, master_rng: StreamRng) -> Result<Self> {
        let actions = shape.num_actions(0);
        if shape.actions().iter().any(|&a| a != actions) {
            return Err(Error::InvalidArgument("the default grid needs the same action count in every state".into()));
        }
        let grid = ParameterGrid::build(shape.num_states(), actions, horizon)?;
        Self::with_grid(shape, grid, horizon, delta, master_rng)
    }

    pub fn with_grid(shape: Arc<Shape>, grid: ParameterGrid, horizon: usize, delta: f64, master_rng: StreamRng) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        let (alpha, beta, gamma) = exp3p_params(grid.num_arms(), grid.num_blocks(horizon));
        Ok(Self {
            q: vec![0.0; grid.num_arms()],
            shape,
            grid,
            delta,
            horizon,
            alpha,
            beta,
            gamma,
            master_rng,
            block: None,
            records: Vec::new(),
            episodes: Vec::new(),
        })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    /// `(alpha, beta, gamma)` of the master.
    pub fn master_params(&self) -> (f64, f64, f64) {
        (self.alpha, self.beta, self.gamma)
    }

    pub fn weights(&self) -> &[f64] {
        &self.q
    }

    /// Finished blocks.
    pub fn blocks(&self) -> &[BlockRecord] {
        &self.records
    }

    /// Episodes of finished blocks as `(block, episode)`.
    pub fn episodes(&self) -> &[(usize, EpisodeRecord)] {
        &self.episodes
    }

    fn start_block(&mut self, t: usize, state: usize) -> Result<()> {
        let u = exp3p_distribution(&self.q, self.alpha, self.gamma);
        let arm = sample_index(&u, &mut self.master_rng);
        let (j, k) = self.grid.arm(arm);
        let len = self.grid.block_len.min(self.horizon - t + 1);
        let cfg = SwConfig::new(self.grid.windows[j], self.grid.etas[k], self.delta, len);
        let agent = SwUcrl2Cw::new(self.shape.clone(), cfg)?;
        let index = self.records.len() + 1;
        self.records.push(BlockRecord {
            block: index,
            arm_j: j,
            arm_k: k,
            window: cfg.window,
            eta: cfg.eta,
            start_state: state,
            block_reward: 0.0,
            prob_chosen: u[arm],
        });
        self.block = Some(Block {
            index,
            start: t,
            len,
            arm,
            u,
            reward: 0.0,
            agent,
        });
        Ok(())
    }

    fn finish_block(&mut self) -> Result<()> {
        let b = self.block.take().expect("block in progress");
        let h = self.grid.block_len as f64;
        let reward = b.reward.clamp(0.0, h);
        exp3p_update(&mut self.q, b.arm, reward, h, self.beta, &b.u)?;
        self.records[b.index - 1].block_reward = reward;
        self.episodes
            .extend(b.agent.episodes().iter().cloned().map(|e| (b.index, e)));
        Ok(())
    }
}

impl Agent for Borl {
    fn act(&mut self, t: usize, state: usize) -> Result<usize> {
        if t > self.horizon {
            return Err(Error::PastHorizon {
                t,
                horizon: self.horizon,
            });
        }
        if self.block.is_none() {
            self.start_block(t, state)?;
        }
        let b = self.block.as_mut().expect("block in progress");
        b.agent.act(t - b.start + 1, state)
    }

    fn observe(&mut self, t: usize, state: usize, action: usize, reward: f64, next: usize) -> Result<()> {
        let b = self
            .block
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument("observe called before act".into()))?;
        let local = t - b.start + 1;
        b.agent.observe(local, state, action, reward, next)?;
        b.reward += reward;
        if local == b.len {
            self.finish_block()?;
        }
        Ok(())
    }

    fn tags(&self) -> (Option<usize>, Option<usize>) {
        match &self.block {
            Some(b) => (b.agent.tags().0, Some(b.index)),
            None => (None, self.records.last().map(|r| r.block)),
        }
    }
}

pub fn write_block_csv<W: std::io::Write>(w: W, records: &[BlockRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wtr.write_record(BLOCK_HEADER.split(','))?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_block_csv<R: std::io::Read>(r: R) -> Result<Vec<BlockRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<&str> = rdr.headers()?.iter().collect();
    if header.join(",") != BLOCK_HEADER {
        return Err(Error::Parse(format!("unexpected block header {:?}", header.join(","))));
    }
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}
