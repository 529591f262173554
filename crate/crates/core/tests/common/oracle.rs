//! Reference implementations written independently of the library.

use std::collections::HashMap;

use mobsim::{Cell, GridSpec, Stay, Trajectory, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exact draws from `p(x) ∝ (x + x0)^-beta * exp(-x / kappa)` on
/// `[lo, inf)`, `beta > 1`: shifted Pareto proposal, exponential acceptance.
pub fn sample_truncated_power_law(beta: f64, kappa: f64, x0: f64, lo: f64, n: usize, seed: u64) -> Vec<f64> {
    assert!(beta > 1.0);
    let mut r = rng(seed);
    let a = (lo + x0).powf(1.0 - beta);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u: f64 = r.gen();
        let x = (a * (1.0 - u)).powf(1.0 / (1.0 - beta)) - x0;
        if r.gen::<f64>() < (-(x - lo) / kappa).exp() {
            out.push(x);
        }
    }
    out
}

/// A single user whose returns pick a known cell (other than the current
/// one) with probability proportional to `visits^gamma`. Every stay lasts
/// one slot and consecutive stays differ.
pub fn preferential_return_trajectory(gamma: f64, returns: usize, p_new: f64, seed: u64, grid: &GridSpec) -> Trajectory {
    let mut r = rng(seed);
    let mut visits: Vec<u64> = vec![1];
    let mut cells = vec![0usize];
    let mut current = 0usize;
    let mut done = 0;
    while done < returns {
        let explore = visits.len() < 2 || r.gen::<f64>() < p_new;
        let next = if explore {
            visits.push(0);
            visits.len() - 1
        } else {
            let w: Vec<f64> = visits
                .iter()
                .enumerate()
                .map(|(i, v)| if i == current { 0.0 } else { (*v as f64).powf(gamma) })
                .collect();
            let total: f64 = w.iter().sum();
            let mut x = r.gen::<f64>() * total;
            let mut pick = 0;
            for (i, wi) in w.iter().enumerate() {
                if *wi > 0.0 {
                    pick = i;
                    if x < *wi {
                        break;
                    }
                    x -= wi;
                }
            }
            done += 1;
            pick
        };
        visits[next] += 1;
        cells.push(next);
        current = next;
    }
    let spd = grid.slots_per_day as usize;
    let stays = cells
        .iter()
        .enumerate()
        .map(|(i, c)| Stay {
            cell: Cell::new((c % 1000) as u32, (c / 1000) as u32),
            start_slot: i as u64,
            duration_slots: 1,
        })
        .collect::<Vec<_>>();
    let days = (cells.len() / spd + 1) as u32;
    Trajectory::new(Some(UserId("pr".into())), stays, days, grid).unwrap()
}

fn sorted_logs(xs: &[f64], eps: f64) -> Vec<f64> {
    let mut v: Vec<f64> = xs.iter().map(|x| (x + eps).ln()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Mean absolute difference of sorted log samples (equal sizes).
pub fn w1_log_brute(a: &[f64], b: &[f64], eps: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let (la, lb) = (sorted_logs(a, eps), sorted_logs(b, eps));
    la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// `∫ |C_a - C_b|` over log coordinates, evaluating both CCDFs at the
/// midpoint of every gap between merged support points.
pub fn l1_ccdf_steps(a: &[f64], b: &[f64], eps: f64) -> f64 {
    let (la, lb) = (sorted_logs(a, eps), sorted_logs(b, eps));
    let mut z: Vec<f64> = la.iter().chain(&lb).cloned().collect();
    z.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let ccdf = |v: &[f64], t: f64| (v.len() - v.partition_point(|x| *x < t)) as f64 / v.len() as f64;
    z.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (w[1] - w[0]) * (ccdf(&la, mid) - ccdf(&lb, mid)).abs()
        })
        .sum()
}

/// Number of users assigned to each source user.
pub fn tally<K: std::hash::Hash + Eq + Clone>(vals: impl IntoIterator<Item = K>) -> HashMap<K, usize> {
    let mut m = HashMap::new();
    for v in vals {
        *m.entry(v).or_insert(0) += 1;
    }
    m
}
