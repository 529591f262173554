//! Exploration / preferential-return generator.
//!
//! Each individual alternates stays and moves. A stay lasts a duration
//! drawn from the truncated power law `(dur_beta, dur_kappa_slots)`; at its
//! end the individual moves with probability `activity[hour] / max
//! activity`. A move explores a new cell with probability
//! `explore_rho * S^-explore_gamma` (`S` distinct cells so far), jumping a
//! distance from the truncated power law `(jump_beta, jump_kappa_m)` in a
//! uniformly random direction; otherwise it returns to a visited cell with
//! probability proportional to its visit count. During night hours (the
//! hours of minimal activity) a move goes home with probability
//! `home_bias`.
//!
//! Durations, move decisions and destinations use separate random streams,
//! so spatial knobs leave the temporal skeleton of a trajectory untouched.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rayon::prelude::*;

use super::{
    duration_offset_slots, GenerationBatchResult, GeneratorParams, UserResult, UserStatus, MIN_JUMP_M,
    JUMP_OFFSET_M,
};
use crate::error::Result;
use crate::grid::{Cell, GridSpec};
use crate::measures::TruncatedPowerLaw;
use crate::rng;
use crate::types::{PromptSet, Stay, Trajectory, UserId};

const MAX_JUMP_M: f64 = 2.0e7;

pub fn jump_law(p: &GeneratorParams, grid: &GridSpec) -> Result<TruncatedPowerLaw> {
    let lo = grid.cell_size_m.max(MIN_JUMP_M);
    let hi = (30.0 * p.jump_kappa_m).max(100.0 * lo).min(MAX_JUMP_M.max(10.0 * lo));
    TruncatedPowerLaw::new(p.jump_beta, p.jump_kappa_m, JUMP_OFFSET_M, lo, hi)
}

pub fn duration_law(p: &GeneratorParams, grid: &GridSpec) -> Result<TruncatedPowerLaw> {
    let horizon = (p.num_days as f64 * grid.slots_per_day as f64).max(2.0);
    let hi = (30.0 * p.dur_kappa_slots).max(10.0).min(horizon + 1.0);
    let offset = duration_offset_slots(grid);
    TruncatedPowerLaw::new(p.dur_beta, p.dur_kappa_slots, offset, offset.max(1.0), hi)
}

/// Unvisited cell whose center is nearest to the continuous point
/// `(tx, ty)` in cell units; ties go to the lowest `(x, y)`.
fn nearest_unvisited(tx: f64, ty: f64, visited: &HashSet<Cell>) -> Cell {
    let limit = (u32::MAX - 1) as f64;
    let (tx, ty) = (tx.abs().min(limit), ty.abs().min(limit));
    let (bx, by) = (tx.floor() as i64, ty.floor() as i64);
    let mut best: Option<(f64, Cell)> = None;
    let mut r: i64 = 0;
    loop {
        if let Some((d, _)) = best {
            if (r as f64) - 1.0 > d {
                break;
            }
        }
        for x in (bx - r)..=(bx + r) {
            for y in (by - r)..=(by + r) {
                if (x - bx).abs() != r && (y - by).abs() != r {
                    continue;
                }
                if x < 0 || y < 0 || x > limit as i64 || y > limit as i64 {
                    continue;
                }
                let c = Cell::new(x as u32, y as u32);
                if visited.contains(&c) {
                    continue;
                }
                let d = (x as f64 + 0.5 - tx).hypot(y as f64 + 0.5 - ty);
                let better = match best {
                    None => true,
                    Some((bd, bc)) => d < bd || (d == bd && (c.x, c.y) < (bc.x, bc.y)),
                };
                if better {
                    best = Some((d, c));
                }
            }
        }
        r += 1;
    }
    best.expect("an unvisited cell exists").1
}

/// Generate one individual's trajectory; a pure function of its inputs.
pub fn generate_user(
    user: &UserId,
    p: &GeneratorParams,
    grid: &GridSpec,
    seed: u64,
) -> Result<Trajectory> {
    p.validate()?;
    grid.validate()?;
    let jumps = jump_law(p, grid)?;
    let durations = duration_law(p, grid)?;
    let mut dur_rng = rng::stream(seed, &format!("dur/{user}"));
    let mut move_rng = rng::stream(seed, &format!("move/{user}"));
    let mut space_rng = rng::stream(seed, &format!("space/{user}"));

    let horizon = p.num_days as u64 * grid.slots_per_day as u64;
    let amax = p.activity.iter().cloned().fold(0.0, f64::max);
    let amin = p.activity.iter().cloned().fold(f64::INFINITY, f64::min);

    let home = p.home_cell;
    let mut visits: HashMap<Cell, u64> = HashMap::from([(home, 1)]);
    let mut order: Vec<Cell> = vec![home];
    let mut visited: HashSet<Cell> = HashSet::from([home]);
    let mut stays = Vec::new();
    let (mut cur, mut cur_start, mut t) = (home, 0u64, 0u64);

    loop {
        t += durations.sample(&mut dur_rng).floor().max(1.0) as u64;
        if t >= horizon {
            break;
        }
        let w = p.activity[grid.hour_of_slot(t)];
        if move_rng.gen::<f64>() >= w / amax {
            continue;
        }
        let night = w <= amin && amin < amax;
        let next = if night && cur != home && space_rng.gen::<f64>() < p.home_bias {
            Some(home)
        } else if space_rng.gen::<f64>() < p.explore_rho * (order.len() as f64).powf(-p.explore_gamma) {
            let d = jumps.sample(&mut space_rng) / grid.cell_size_m;
            let theta = space_rng.gen::<f64>() * std::f64::consts::TAU;
            let tx = cur.x as f64 + 0.5 + d * theta.cos();
            let ty = cur.y as f64 + 0.5 + d * theta.sin();
            Some(nearest_unvisited(tx, ty, &visited))
        } else {
            let total: u64 = order.iter().filter(|c| **c != cur).map(|c| visits[c]).sum();
            if total == 0 {
                None
            } else {
                let mut u = space_rng.gen_range(0..total);
                order
                    .iter()
                    .filter(|c| **c != cur)
                    .find(|c| {
                        let v = visits[*c];
                        if u < v {
                            true
                        } else {
                            u -= v;
                            false
                        }
                    })
                    .copied()
            }
        };
        let Some(next) = next else { continue };
        if next == cur {
            continue;
        }
        stays.push(Stay {
            cell: cur,
            start_slot: cur_start,
            duration_slots: (t - cur_start) as u32,
        });
        if visited.insert(next) {
            order.push(next);
        }
        *visits.entry(next).or_insert(0) += 1;
        cur = next;
        cur_start = t;
    }
    stays.push(Stay {
        cell: cur,
        start_slot: cur_start,
        duration_slots: (horizon - cur_start) as u32,
    });
    Trajectory::new(Some(user.clone()), stays, p.num_days, grid)
}

/// Generate every individual of a prompt set, in parallel. Invalid
/// parameters fail that individual only.
pub fn generate_synthetic(ps: &PromptSet, grid: &GridSpec, seed: u64) -> GenerationBatchResult {
    let results = ps
        .prompts
        .par_iter()
        .map(|(uid, doc)| {
            let r = match generate_user(uid, &doc.params, grid, seed) {
                Ok(t) => UserResult {
                    status: UserStatus::Ok,
                    trajectory: Some(t),
                },
                Err(e) => UserResult {
                    status: UserStatus::InvalidParams(e.to_string()),
                    trajectory: None,
                },
            };
            (uid.clone(), r)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    GenerationBatchResult { results }
}
