//! Independent oracles for integration and acceptance tests.

#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use driftmdp::envs::random_snapshot;
use driftmdp::mdp::{MdpSnapshot, NonStationaryInstance, Shape, StationaryPolicy};
use driftmdp::rng::StreamRng;

type Mat = Vec<Vec<f64>>;

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// `sum_{k<n} P^k r` by binary doubling: with `(P^a, S_a)` and `(P^b, S_b)`,
/// `S_{a+b} = S_a + P^a S_b`.
pub fn cesaro_sum(p: &Mat, r: &[f64], n: u64) -> Vec<f64> {
    let dim = r.len();
    let identity: Mat = (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    // Accumulated (P^acc, S_acc), and the current power-of-two block.
    let mut acc_p = identity;
    let mut acc_s = vec![0.0; dim];
    let mut blk_p = p.clone();
    let mut blk_s = r.to_vec();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            let shifted = mat_vec(&acc_p, &blk_s);
            acc_s.iter_mut().zip(shifted).for_each(|(a, b)| *a += b);
            acc_p = mat_mul(&acc_p, &blk_p);
        }
        let shifted = mat_vec(&blk_p, &blk_s);
        blk_s.iter_mut().zip(shifted).for_each(|(a, b)| *a += b);
        blk_p = mat_mul(&blk_p, &blk_p);
        k >>= 1;
    }
    acc_s
}

/// Long-run average reward of `policy` from every start state, as the
/// Cesàro average over `n` steps.
pub fn policy_average(m: &MdpSnapshot, policy: &StationaryPolicy, n: u64) -> Vec<f64> {
    let shape = m.shape();
    let dim = shape.num_states();
    let p: Mat = (0..dim)
        .map(|s| m.kernel().row(shape.pair(s, policy.action(s))).to_vec())
        .collect();
    let r: Vec<f64> = (0..dim).map(|s| m.reward(s, policy.action(s))).collect();
    cesaro_sum(&p, &r, n).into_iter().map(|x| x / n as f64).collect()
}

/// Optimal gain by enumerating every deterministic policy.
pub fn brute_force_gain(m: &MdpSnapshot) -> f64 {
    StationaryPolicy::enumerate(m.shape())
        .iter()
        .flat_map(|pi| policy_average(m, pi, 1 << 30))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Maximum of `u . p` over the simplex intersected with the L1 ball of
/// radius `beta` around `p_hat`, by enumerating vertices.
///
/// On each orthant `sign(p - p_hat) = sigma` the feasible set is a polytope
/// cut by `sum p = 1`, `p >= 0`, the orthant's sign constraints, and
/// `sum sigma (p - p_hat) <= beta`. Every vertex satisfies `S - 1` of the
/// inequalities with equality; the maximum is attained at one of them.
pub fn lp_inner_max(u: &[f64], p_hat: &[f64], beta: f64) -> f64 {
    let n = u.len();
    if n == 1 {
        return u[0];
    }
    let mut best = f64::NEG_INFINITY;
    for mask in 0..(1u32 << n) {
        let sigma: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
        // Inequalities as (coeffs, rhs) meaning coeffs . p <= rhs.
        let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
        for i in 0..n {
            let mut c = vec![0.0; n];
            c[i] = -1.0;
            ineq.push((c.clone(), 0.0));
            // sigma_i (p_i - p_hat_i) >= 0
            c[i] = -sigma[i];
            ineq.push((c, -sigma[i] * p_hat[i]));
        }
        let c: Vec<f64> = sigma.clone();
        let rhs = beta + sigma.iter().zip(p_hat).map(|(s, q)| s * q).sum::<f64>();
        ineq.push((c, rhs));
        for combo in combinations(ineq.len(), n - 1) {
            let mut a = vec![vec![1.0; n]];
            let mut b = vec![1.0];
            for &k in &combo {
                a.push(ineq[k].0.clone());
                b.push(ineq[k].1);
            }
            let Some(p) = solve(a, b) else { continue };
            let feasible = ineq
                .iter()
                .all(|(c, r)| c.iter().zip(&p).map(|(x, y)| x * y).sum::<f64>() <= r + 1e-12);
            if feasible {
                best = best.max(u.iter().zip(&p).map(|(x, y)| x * y).sum());
            }
        }
    }
    best
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[row][k] -= f * a[col][k];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best expected total mean reward over steps `1..=T` from `s0`, over all
/// history-dependent policies, by backward induction.
pub fn finite_horizon_optimum(inst: &NonStationaryInstance, s0: usize) -> f64 {
    let shape = inst.shape();
    let n = shape.num_states();
    let mut v = vec![0.0; n];
    for t in (1..=inst.horizon()).rev() {
        let m = inst.snapshot(t);
        v = (0..n)
            .map(|s| {
                shape
                    .pairs_of(s)
                    .map(|p| m.rewards()[p] + m.kernel().row(p).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    v[s0]
}

/// Random communicating snapshot with `S` states and `A` actions per state.
pub fn random_communicating(states: usize, actions: usize, rng: &mut StreamRng) -> MdpSnapshot {
    let shape = Arc::new(Shape::uniform(states, actions).unwrap());
    random_snapshot(&shape, 1.0, f64::INFINITY.min(1e6), rng).unwrap()
}
