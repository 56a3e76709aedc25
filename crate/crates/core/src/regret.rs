//! Dynamic regret against the per-step optimal gain.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::{optimal_gain, GainSolution};
use crate::mdp::{MdpSnapshot, NonStationaryInstance, StationaryPolicy};
use crate::sim::Trajectory;

/// Default tolerance for per-step optimal gains.
pub const DEFAULT_GAIN_EPS: f64 = 1e-6;

pub const REGRET_HEADER: &str =
    "t,state,action,mean_reward,sampled_reward,rho_star,inst_regret,cum_regret,episode,block";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub mean_reward: f64,
    pub sampled_reward: f64,
    pub rho_star: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub episode: Option<usize>,
    pub block: Option<usize>,
}

/// Optimal gains keyed by snapshot content.
#[derive(Debug, Clone)]
pub struct GainCache {
    eps: f64,
    map: HashMap<[u8; 32], Arc<GainSolution>>,
}

impl GainCache {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            map: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&mut self, m: &MdpSnapshot) -> Result<Arc<GainSolution>> {
        let key = m.content_hash();
        if let Some(sol) = self.map.get(&key) {
            return Ok(sol.clone());
        }
        let sol = Arc::new(optimal_gain(m, self.eps)?);
        self.map.insert(key, sol.clone());
        Ok(sol)
    }

    /// Solutions for steps `1..=T`; runs of the same snapshot share one lookup.
    pub fn solve_instance(&mut self, inst: &NonStationaryInstance) -> Result<Vec<Arc<GainSolution>>> {
        let mut out: Vec<Arc<GainSolution>> = Vec::with_capacity(inst.horizon());
        let snaps = inst.snapshots();
        for (i, snap) in snaps.iter().enumerate() {
            if i > 0 && Arc::ptr_eq(snap, &snaps[i - 1]) {
                let prev = out[i - 1].clone();
                out.push(prev);
            } else {
                out.push(self.get(snap)?);
            }
        }
        Ok(out)
    }

    pub fn rho_stars(&mut self, inst: &NonStationaryInstance) -> Result<Vec<f64>> {
        Ok(self.solve_instance(inst)?.iter().map(|s| s.rho).collect())
    }

    /// The optimal policy of every step's snapshot.
    pub fn optimal_schedule(&mut self, inst: &NonStationaryInstance) -> Result<Vec<Arc<StationaryPolicy>>> {
        let sols = self.solve_instance(inst)?;
        let mut out: Vec<Arc<StationaryPolicy>> = Vec::with_capacity(sols.len());
        for (i, sol) in sols.iter().enumerate() {
            if i > 0 && Arc::ptr_eq(sol, &sols[i - 1]) {
                let prev = out[i - 1].clone();
                out.push(prev);
            } else {
                out.push(Arc::new(sol.policy.clone()));
            }
        }
        Ok(out)
    }
}

pub fn dynamic_regret(inst: &NonStationaryInstance, traj: &Trajectory, cache: &mut GainCache) -> Result<Vec<RegretRecord>> {
    if traj.len() != inst.horizon() {
        return Err(Error::LengthMismatch {
            expected: inst.horizon(),
            got: traj.len(),
        });
    }
    let rho = cache.rho_stars(inst)?;
    dynamic_regret_with(inst, traj, &rho)
}

/// Regret records given precomputed optimal gains per step.
pub fn dynamic_regret_with(inst: &NonStationaryInstance, traj: &Trajectory, rho_stars: &[f64]) -> Result<Vec<RegretRecord>> {
    let horizon = inst.horizon();
    for got in [
        traj.states.len(),
        traj.actions.len(),
        traj.rewards.len(),
        traj.episodes.len(),
        traj.blocks.len(),
        rho_stars.len(),
    ] {
        if got != horizon {
            return Err(Error::LengthMismatch { expected: horizon, got });
        }
    }
    let shape = inst.shape();
    let mut cum = 0.0;
    let mut out = Vec::with_capacity(horizon);
    for i in 0..horizon {
        let t = i + 1;
        let (s, a) = (traj.states[i], traj.actions[i]);
        if s >= shape.num_states() || !shape.is_valid_action(s, a) {
            return Err(Error::InvalidAction { t, state: s, action: a });
        }
        let mean = inst.snapshot(t).reward(s, a);
        let inst_regret = rho_stars[i] - mean;
        cum += inst_regret;
        out.push(RegretRecord {
            t,
            state: s,
            action: a,
            mean_reward: mean,
            sampled_reward: traj.rewards[i],
            rho_star: rho_stars[i],
            inst_regret,
            cum_regret: cum,
            episode: traj.episodes[i],
            block: traj.blocks[i],
        });
    }
    Ok(out)
}

pub fn write_regret_csv<W: Write>(w: W, records: &[RegretRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    if records.is_empty() {
        wtr.write_record(REGRET_HEADER.split(','))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_regret_csv<R: std::io::Read>(r: R) -> Result<Vec<RegretRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != REGRET_HEADER {
        return Err(Error::Parse(format!("unexpected regret header {:?}", header.join(","))));
    }
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Kernel, Shape};

    fn bandit(horizon: usize) -> NonStationaryInstance {
        let shape = Arc::new(Shape::uniform(1, 2).unwrap());
        let k = Kernel::deterministic(shape, &[0, 0]).unwrap();
        NonStationaryInstance::constant(MdpSnapshot::new(k, vec![0.9, 0.1]).unwrap(), horizon).unwrap()
    }

    #[test]
    fn optimal_play_has_zero_regret() {
        let inst = bandit(10);
        let traj = Trajectory::from_pairs(&[(0, 0); 10]);
        let recs = dynamic_regret(&inst, &traj, &mut GainCache::new(1e-9)).unwrap();
        assert!(recs.last().unwrap().cum_regret.abs() < 1e-9);
    }

    #[test]
    fn suboptimal_play_accumulates() {
        let inst = bandit(10);
        let traj = Trajectory::from_pairs(&[(0, 1); 10]);
        let mut cache = GainCache::new(1e-9);
        let recs = dynamic_regret(&inst, &traj, &mut cache).unwrap();
        assert!((recs.last().unwrap().cum_regret - 8.0).abs() < 1e-9);
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let inst = bandit(10);
        let traj = Trajectory::from_pairs(&[(0, 1); 9]);
        assert!(matches!(
            dynamic_regret(&inst, &traj, &mut GainCache::new(1e-9)),
            Err(Error::LengthMismatch { expected: 10, got: 9 })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let inst = bandit(3);
        let mut traj = Trajectory::from_pairs(&[(0, 1), (0, 0), (0, 1)]);
        traj.episodes = vec![Some(1), Some(1), Some(2)];
        let recs = dynamic_regret(&inst, &traj, &mut GainCache::new(1e-9)).unwrap();
        let mut buf = Vec::new();
        write_regret_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(REGRET_HEADER));
        assert!(!text.contains('\r'));
        assert_eq!(read_regret_csv(buf.as_slice()).unwrap(), recs);
    }
}
