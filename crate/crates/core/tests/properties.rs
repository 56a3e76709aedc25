mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;

use driftmdp::borl::{exp3p_distribution, exp3p_params, Borl, ParameterGrid};
use driftmdp::diameter::diameter;
use driftmdp::envs::{gen_drift, random_snapshot, DriftPattern, Family, GeneratorSpec};
use driftmdp::evi::{evi, inner_max_transition, PlanningRegions, DEFAULT_MAX_ITER};
use driftmdp::gain::optimal_gain;
use driftmdp::mdp::{Kernel, MdpSnapshot, NonStationaryInstance, Shape};
use driftmdp::rng::{stream, StreamRng};
use driftmdp::sim::{simulate, RewardNoise};
use driftmdp::swucrl::{SwConfig, SwUcrl2Cw};
use driftmdp::window::{radii, ConfidenceRegions, Observation, ObservationLog, RadiusParams, SlidingWindow};

fn snapshot_from_seed(states: usize, actions: usize, seed: u64) -> MdpSnapshot {
    let shape = Arc::new(Shape::uniform(states, actions).unwrap());
    let mut rng = StreamRng::seed_from_u64(seed);
    random_snapshot(&shape, 1.0, 1e6, &mut rng).unwrap()
}

/// The same snapshot with states renamed by `perm` (old -> new).
fn relabel(m: &MdpSnapshot, perm: &[usize]) -> MdpSnapshot {
    let shape = m.shape().clone();
    let n = shape.num_states();
    let a = shape.num_actions(0);
    let mut probs = vec![0.0; shape.num_pairs() * n];
    let mut rewards = vec![0.0; shape.num_pairs()];
    for s in 0..n {
        for act in 0..a {
            let old = shape.pair(s, act);
            let new = shape.pair(perm[s], act);
            rewards[new] = m.rewards()[old];
            for (next, p) in m.kernel().row(old).iter().enumerate() {
                probs[new * n + perm[next]] = *p;
            }
        }
    }
    MdpSnapshot::new(Kernel::from_dense(shape, probs).unwrap(), rewards).unwrap()
}

fn random_walk(shape: &Shape, len: usize, seed: u64) -> Vec<Observation> {
    use rand::Rng;
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut s = 0;
    (1..=len)
        .map(|t| {
            let action = rng.random_range(0..shape.num_actions(s));
            let next = rng.random_range(0..shape.num_states());
            let o = Observation {
                t,
                state: s,
                action,
                reward: rng.random(),
                next,
            };
            s = next;
            o
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn budgets_match_direct_recomputation(seed in 0u64..1000, horizon in 2usize..40) {
        let inst = gen_drift(2, 3, horizon, 1.0, 1.5, DriftPattern::Sinusoidal, seed).unwrap();
        let (mut br, mut bp) = (0.0, 0.0);
        for t in 1..horizon {
            let (a, b) = (inst.snapshot(t), inst.snapshot(t + 1));
            br += a.rewards().iter().zip(b.rewards()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            bp += (0..6)
                .map(|p| a.kernel().row(p).iter().zip(b.kernel().row(p)).map(|(x, y)| (x - y).abs()).sum::<f64>())
                .fold(0.0, f64::max);
        }
        let got = inst.budgets();
        prop_assert!((got.reward - br).abs() < 1e-12 && (got.kernel - bp).abs() < 1e-12);
        prop_assert!(inst.budgets_round_trip());
    }

    #[test]
    fn diameter_ignores_state_names(states in 1usize..5, actions in 1usize..3, seed in 0u64..500, rot in 0usize..4) {
        let m = snapshot_from_seed(states, actions, seed);
        let perm: Vec<usize> = (0..states).map(|s| (s + rot) % states).collect();
        let d = diameter(m.kernel()).unwrap();
        let d2 = diameter(relabel(&m, &perm).kernel()).unwrap();
        prop_assert!((d - d2).abs() <= 1e-6 * d.max(1.0), "{} vs {}", d, d2);
        prop_assert_eq!(d == 0.0, states == 1);
    }

    #[test]
    fn gain_agrees_with_policy_enumeration(states in 1usize..4, actions in 1usize..3, seed in 0u64..500) {
        let m = snapshot_from_seed(states, actions, seed);
        let sol = optimal_gain(&m, 1e-9).unwrap();
        let oracle = common::brute_force_gain(&m);
        prop_assert!((sol.rho - oracle).abs() < 1e-6, "{} vs {}", sol.rho, oracle);
    }

    #[test]
    fn bias_span_is_at_most_the_diameter(states in 2usize..5, actions in 1usize..3, seed in 0u64..500) {
        let m = snapshot_from_seed(states, actions, seed);
        let sol = optimal_gain(&m, 1e-9).unwrap();
        let span = sol.bias.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - sol.bias.iter().copied().fold(f64::INFINITY, f64::min);
        let d = diameter(m.kernel()).unwrap();
        prop_assert!(span <= d + 1e-6, "span {} > D {}", span, d);
    }

    #[test]
    fn sliding_window_matches_full_scan(len in 1usize..200, window in 1usize..60, seed in 0u64..1000) {
        let shape = Arc::new(Shape::new(vec![2, 1, 3]).unwrap());
        let mut log = ObservationLog::new(shape.clone());
        let mut ring = SlidingWindow::new(shape.clone(), window).unwrap();
        for o in random_walk(&shape, len, seed) {
            log.push(o).unwrap();
            ring.push(o).unwrap();
            let full = log.stats_at(o.t + 1, window);
            let fast = ring.stats();
            prop_assert_eq!(&full.counts, &fast.counts);
            prop_assert_eq!(&full.transitions, &fast.transitions);
            prop_assert_eq!(&full.reward_sums, &fast.reward_sums);
            // Only steps in [t + 1 - W, t] count.
            let expected = o.t.min(window) as u64;
            prop_assert_eq!(full.counts.iter().sum::<u64>(), expected);
        }
    }

    #[test]
    fn radii_shrink_with_counts_and_grow_with_horizon(n in 1u64..10_000, extra in 1u64..100, t in 2usize..100_000) {
        let (r1, p1) = radii(&[n], 3, 6, t, 0.1, 1.0).unwrap();
        let (r2, p2) = radii(&[n + extra], 3, 6, t, 0.1, 1.0).unwrap();
        let (r3, p3) = radii(&[n], 3, 6, t * 2, 0.1, 1.0).unwrap();
        prop_assert!(r2[0] < r1[0] && p2[0] < p1[0]);
        prop_assert!(r3[0] > r1[0] && p3[0] > p1[0]);
        prop_assert_eq!(radii(&[0], 3, 6, t, 0.1, 1.0).unwrap(), radii(&[1], 3, 6, t, 0.1, 1.0).unwrap());
    }

    #[test]
    fn inner_max_is_feasible_and_optimal(
        u in prop::collection::vec(-3.0f64..3.0, 1..5),
        raw in prop::collection::vec(0.0f64..1.0, 5),
        beta in 0.0f64..2.5,
    ) {
        let n = u.len();
        let sum: f64 = raw[..n].iter().sum();
        prop_assume!(sum > 1e-6);
        let p_hat: Vec<f64> = raw[..n].iter().map(|x| x / sum).collect();
        let p = inner_max_transition(&u, &p_hat, beta);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let l1: f64 = p.iter().zip(&p_hat).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(l1 <= beta + 1e-12);
        let value: f64 = p.iter().zip(&u).map(|(a, b)| a * b).sum();
        let centre: f64 = p_hat.iter().zip(&u).map(|(a, b)| a * b).sum();
        prop_assert!(value >= centre - 1e-12);
        prop_assert!((value - common::lp_inner_max(&u, &p_hat, beta)).abs() < 1e-9);
    }

    #[test]
    fn wider_regions_are_more_optimistic(states in 1usize..4, actions in 1usize..3, seed in 0u64..300, b in 0.0f64..1.0, extra in 0.0f64..1.0) {
        let m = snapshot_from_seed(states, actions, seed);
        let pairs = states * actions;
        let build = |beta: f64| PlanningRegions::new(
            m.shape().clone(),
            m.rewards().to_vec(),
            m.rewards().to_vec(),
            m.kernel().as_slice().to_vec(),
            vec![beta; pairs],
        ).unwrap();
        let eps = 1e-7;
        let narrow = evi(&build(b), eps, DEFAULT_MAX_ITER).unwrap();
        let wide = evi(&build(b + extra), eps, DEFAULT_MAX_ITER).unwrap();
        prop_assume!(narrow.converged && wide.converged);
        prop_assert!(wide.gain >= narrow.gain - 2.0 * eps, "{} < {}", wide.gain, narrow.gain);
    }

    #[test]
    fn planner_gain_ignores_state_names(states in 2usize..5, actions in 1usize..3, seed in 0u64..300, rot in 1usize..4) {
        let m = snapshot_from_seed(states, actions, seed);
        let perm: Vec<usize> = (0..states).map(|s| (s + rot) % states).collect();
        let eps = 1e-8;
        let a = evi(&PlanningRegions::singleton(&m).unwrap(), eps, DEFAULT_MAX_ITER).unwrap();
        let b = evi(&PlanningRegions::singleton(&relabel(&m, &perm)).unwrap(), eps, DEFAULT_MAX_ITER).unwrap();
        prop_assert!((a.gain - b.gain).abs() <= 2.0 * eps);
    }

    #[test]
    fn exp3p_distribution_is_a_floored_distribution(
        q in prop::collection::vec(-1e3f64..1e3, 1..40),
        blocks in 1usize..10_000,
        shift in -1e6f64..1e6,
    ) {
        let (alpha, _, gamma) = exp3p_params(q.len(), blocks);
        let u = exp3p_distribution(&q, alpha, gamma);
        prop_assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(u.iter().all(|&x| x >= gamma / q.len() as f64 - 1e-15 && x.is_finite()));
        let shifted: Vec<f64> = q.iter().map(|x| x + shift).collect();
        let v = exp3p_distribution(&shifted, alpha, gamma);
        prop_assert!(u.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn generators_are_deterministic(seed in 0u64..10_000, family in 0usize..3) {
        let family = match family {
            0 => Family::Stationary,
            1 => Family::Piecewise { changes: 3 },
            _ => Family::Drift { reward_budget: 2.0, kernel_budget: 2.0, pattern: DriftPattern::Uniform },
        };
        let spec = GeneratorSpec::new(family, 3, 2, 60, seed);
        let (a, b) = (spec.generate().unwrap(), spec.generate().unwrap());
        for t in 1..=60 {
            prop_assert_eq!(a.snapshot(t).as_ref(), b.snapshot(t).as_ref());
        }
    }
}

#[test]
fn drift_generator_hits_its_budgets() {
    for seed in 0..50 {
        let inst = gen_drift(3, 2, 500, 6.0, 4.0, DriftPattern::Uniform, seed).unwrap();
        let b = inst.budgets();
        assert!((b.reward - 6.0).abs() <= 0.3, "seed {seed}: reward budget {}", b.reward);
        assert!((b.kernel - 4.0).abs() <= 0.2, "seed {seed}: kernel budget {}", b.kernel);
    }
}

#[test]
fn switching_snapshots_have_unit_diameter_and_replay_grows() {
    for tau in [4, 16, 64] {
        let r = driftmdp::envs::prop3_replay(tau).unwrap();
        assert_eq!(r.snapshot_diameters, [1.0, 1.0]);
        assert!((r.empirical_diameter - (tau + 1) as f64).abs() < 1e-9 * tau as f64);
    }
}

#[test]
fn full_window_regions_equal_full_history_regions() {
    let shape = Arc::new(Shape::uniform(3, 2).unwrap());
    let mut log = ObservationLog::new(shape.clone());
    for o in random_walk(&shape, 150, 7) {
        log.push(o).unwrap();
    }
    let params = RadiusParams::new(0.1, 150);
    let tau = 151;
    let windowed = ConfidenceRegions::build(&log.stats_at(tau, 150), tau, 150, params, 0.0).unwrap();
    let unbounded = ConfidenceRegions::build(&log.stats_at(tau, 10_000), tau, 10_000, params, 0.0).unwrap();
    assert_eq!(windowed.counts, unbounded.counts);
    assert_eq!(windowed.r_hat, unbounded.r_hat);
    assert_eq!(windowed.p_hat, unbounded.p_hat);
    assert_eq!(windowed.rad_p, unbounded.rad_p);
}

#[test]
fn single_arm_single_block_tuning_reproduces_the_base_learner() {
    let inst = gen_drift(2, 2, 800, 3.0, 3.0, DriftPattern::Uniform, 4).unwrap();
    let (w, eta) = (40, 0.3);
    let mut base = SwUcrl2Cw::new(inst.shape().clone(), SwConfig::new(w, eta, 0.1, 800)).unwrap();
    let a = simulate(&inst, &mut base, 0, RewardNoise::Bernoulli, &mut stream(3, 0, "env")).unwrap();
    let grid = ParameterGrid::custom(800, vec![w], vec![eta]).unwrap();
    let mut tuned = Borl::with_grid(inst.shape().clone(), grid, 800, 0.1, stream(3, 0, "master")).unwrap();
    let b = simulate(&inst, &mut tuned, 0, RewardNoise::Bernoulli, &mut stream(3, 0, "env")).unwrap();
    assert_eq!(a.actions, b.actions);
    assert_eq!(a.states, b.states);
    assert_eq!(a.episodes, b.episodes);
}

#[test]
fn optimal_agent_regret_grows_slower_than_linearly() {
    use driftmdp::regret::{dynamic_regret, GainCache};
    use driftmdp::sim::FixedPolicyAgent;
    let per_step = |horizon: usize| {
        let snap = snapshot_from_seed(3, 2, 11);
        let inst = NonStationaryInstance::constant(snap.clone(), horizon).unwrap();
        let mut cache = GainCache::new(1e-9);
        let policy = cache.get(&snap).unwrap().policy.clone();
        let mut agent = FixedPolicyAgent::new(policy);
        let traj = simulate(&inst, &mut agent, 0, RewardNoise::Deterministic, &mut stream(1, 0, "env")).unwrap();
        let records = dynamic_regret(&inst, &traj, &mut cache).unwrap();
        records.last().unwrap().cum_regret.abs() / horizon as f64
    };
    let (short, long) = (per_step(1_000), per_step(10_000));
    assert!(long < short || long < 1e-3, "{short} then {long}");
}
