//! Per-individual scaling exponents: visitation frequency (Zipf), exploration
//! and preferential return.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Cell;
use crate::types::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZipfFit {
    pub zeta: f64,
    pub n_locations: usize,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationFit {
    pub alpha: f64,
    pub n_stays: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferentialReturnFit {
    pub gamma: f64,
    pub n_returns: usize,
}

pub const MIN_ZIPF_LOCATIONS: usize = 3;
pub const MIN_EXPLORATION_STAYS: usize = 5;
pub const MIN_RETURN_EVENTS: usize = 5;
pub const GAMMA_MAX: f64 = 4.0;
pub const ALPHA_MAX: f64 = 1.5;

/// Least-squares slope and r² of y on x.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// Zipf exponent from visit frequencies (any order, any positive scale).
pub fn fit_zipf_counts(freqs: &[f64]) -> Result<ZipfFit> {
    let mut f: Vec<f64> = freqs.iter().cloned().filter(|v| *v > 0.0).collect();
    if f.len() < MIN_ZIPF_LOCATIONS {
        return Err(Error::InsufficientData(format!(
            "{} locations, need at least {MIN_ZIPF_LOCATIONS}",
            f.len()
        )));
    }
    f.sort_by(|a, b| b.total_cmp(a));
    let xs: Vec<f64> = (1..=f.len()).map(|k| (k as f64).ln()).collect();
    let ys: Vec<f64> = f.iter().map(|v| v.ln()).collect();
    let (slope, r2) = least_squares(&xs, &ys);
    Ok(ZipfFit {
        zeta: -slope,
        n_locations: f.len(),
        r2,
    })
}

/// Visit counts per cell; every stay counts once.
pub fn visit_counts(t: &Trajectory) -> BTreeMap<Cell, u64> {
    let mut counts = BTreeMap::new();
    for s in &t.stays {
        *counts.entry(s.cell).or_insert(0) += 1;
    }
    counts
}

pub fn fit_zipf(t: &Trajectory) -> Result<ZipfFit> {
    let counts: Vec<f64> = visit_counts(t).values().map(|c| *c as f64).collect();
    fit_zipf_counts(&counts)
}

/// Exponent of `N_new(H) ~ H^alpha`, clamped to `[0, 1.5]`.
pub fn fit_exploration(t: &Trajectory) -> Result<ExplorationFit> {
    let n = t.stays.len();
    if n < MIN_EXPLORATION_STAYS {
        return Err(Error::InsufficientData(format!(
            "{n} stays, need at least {MIN_EXPLORATION_STAYS}"
        )));
    }
    let mut seen = std::collections::HashSet::new();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for (h, s) in t.stays.iter().enumerate() {
        seen.insert(s.cell);
        xs.push(((h + 1) as f64).ln());
        ys.push((seen.len() as f64).ln());
    }
    let (slope, _) = least_squares(&xs, &ys);
    Ok(ExplorationFit {
        alpha: slope.clamp(0.0, ALPHA_MAX),
        n_stays: n,
    })
}

/// One return: the prior visit count of the chosen cell, and the multiset of
/// prior visit counts of every candidate (as count -> number of cells).
#[derive(Clone, Debug)]
pub struct ReturnEvent {
    pub chosen: u64,
    pub candidates: Vec<(u64, u64)>,
}

/// Stays at previously visited cells. The cell of the preceding stay is
/// not a candidate: a return is a move to a different known location.
pub fn return_events(t: &Trajectory) -> Vec<ReturnEvent> {
    let mut counts: HashMap<Cell, u64> = HashMap::new();
    // histogram of counts: count -> number of cells with that count
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    let mut events = Vec::new();
    let mut prev: Option<Cell> = None;
    for s in &t.stays {
        let c = counts.get(&s.cell).copied().unwrap_or(0);
        if c > 0 && prev != Some(s.cell) {
            let mut cand = hist.clone();
            if let Some(p) = prev {
                let pc = counts[&p];
                let e = cand.get_mut(&pc).expect("previous cell counted");
                *e -= 1;
                if *e == 0 {
                    cand.remove(&pc);
                }
            }
            events.push(ReturnEvent {
                chosen: c,
                candidates: cand.into_iter().collect(),
            });
        }
        // update count of s.cell
        if c > 0 {
            let e = hist.get_mut(&c).expect("count present");
            *e -= 1;
            if *e == 0 {
                hist.remove(&c);
            }
        }
        *hist.entry(c + 1).or_insert(0) += 1;
        counts.insert(s.cell, c + 1);
        prev = Some(s.cell);
    }
    events
}

/// Derivative in gamma of the return log-likelihood.
fn score(events: &[ReturnEvent], gamma: f64) -> f64 {
    events
        .iter()
        .map(|e| {
            let lmax = e.candidates.last().map(|(c, _)| (*c as f64).ln()).unwrap_or(0.0);
            let (mut z, mut zl) = (0.0, 0.0);
            for &(c, m) in &e.candidates {
                let l = (c as f64).ln();
                let w = m as f64 * (gamma * (l - lmax)).exp();
                z += w;
                zl += w * l;
            }
            (e.chosen as f64).ln() - zl / z
        })
        .sum()
}

/// Maximum-likelihood `gamma` in `P(return to i) ∝ n_i^gamma` over `[0, 4]`.
///
/// The log-likelihood is concave in gamma, so the maximizer is the root of
/// the (decreasing) score, or a bound.
pub fn fit_gamma(events: &[ReturnEvent]) -> Result<PreferentialReturnFit> {
    if events.len() < MIN_RETURN_EVENTS {
        return Err(Error::InsufficientData(format!(
            "{} return events, need at least {MIN_RETURN_EVENTS}",
            events.len()
        )));
    }
    let n_returns = events.len();
    let gamma = if score(events, 0.0) <= 0.0 {
        0.0
    } else if score(events, GAMMA_MAX) >= 0.0 {
        GAMMA_MAX
    } else {
        let (mut lo, mut hi) = (0.0, GAMMA_MAX);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if score(events, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Ok(PreferentialReturnFit { gamma, n_returns })
}

pub fn fit_preferential_return(t: &Trajectory) -> Result<PreferentialReturnFit> {
    fit_gamma(&return_events(t))
}

/// One gamma for a population, pooling every individual's return events.
pub fn fit_preferential_return_pooled(ts: &[Trajectory]) -> Result<PreferentialReturnFit> {
    let events: Vec<ReturnEvent> = ts.iter().flat_map(return_events).collect();
    fit_gamma(&events)
}
