//! Mobility measures and scaling-law fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec};
use crate::types::Trajectory;

pub mod jsd;
pub mod powerlaw;
pub mod scaling;

pub use jsd::{jsd, jsd_keyed, jsd_linear_binned, jsd_log_binned};
pub use powerlaw::{fit_truncated_powerlaw, TruncatedPowerLaw, TruncatedPowerLawFit};
pub use scaling::{
    fit_exploration, fit_preferential_return, fit_preferential_return_pooled, fit_zipf,
    fit_zipf_counts, ExplorationFit, PreferentialReturnFit, ZipfFit,
};

/// Units of an empirical sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    DistanceM,
    DurationSlots,
    RadiusM,
    Dimensionless,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub samples: Vec<f64>,
    pub kind: SampleKind,
}

impl EmpiricalDistribution {
    /// Checks that every sample is finite and non-negative.
    pub fn new(samples: Vec<f64>, kind: SampleKind) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidTarget(format!("sample {bad} is not a finite non-negative value")));
        }
        Ok(EmpiricalDistribution { samples, kind })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut s = self.samples.clone();
        s.sort_by(f64::total_cmp);
        s
    }
}

/// Complementary CDF, `probs[j] = P(X >= support[j])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ccdf {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Ccdf {
    /// P(X >= v) for an arbitrary v.
    pub fn at(&self, v: f64) -> f64 {
        let idx = self.support.partition_point(|s| *s < v);
        if idx >= self.support.len() {
            0.0
        } else {
            self.probs[idx]
        }
    }
}

pub fn ccdf(d: &EmpiricalDistribution) -> Result<Ccdf> {
    if d.is_empty() {
        return Err(Error::EmptyInput("ccdf needs at least one sample"));
    }
    let sorted = d.sorted();
    let n = sorted.len() as f64;
    let mut support = Vec::new();
    let mut probs = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        if support.last() != Some(v) {
            support.push(*v);
            probs.push((sorted.len() - i) as f64 / n);
        }
    }
    Ok(Ccdf { support, probs })
}

/// RMS distance (meters) of stay cell centers from their centroid, one
/// weight per stay. Zero for a single stay or an empty trajectory.
pub fn radius_of_gyration(t: &Trajectory, grid: &GridSpec) -> f64 {
    if t.stays.is_empty() {
        return 0.0;
    }
    let n = t.stays.len() as f64;
    let (sx, sy) = t
        .stays
        .iter()
        .fold((0.0, 0.0), |(ax, ay), s| (ax + s.cell.x as f64, ay + s.cell.y as f64));
    let (cx, cy) = (sx / n, sy / n);
    let ss: f64 = t
        .stays
        .iter()
        .map(|s| {
            let dx = s.cell.x as f64 - cx;
            let dy = s.cell.y as f64 - cy;
            dx * dx + dy * dy
        })
        .sum();
    (ss / n).sqrt() * grid.cell_size_m
}

pub fn stay_durations(t: &Trajectory) -> EmpiricalDistribution {
    EmpiricalDistribution {
        samples: t.stays.iter().map(|s| s.duration_slots as f64).collect(),
        kind: SampleKind::DurationSlots,
    }
}

/// Hourly distribution of trip start times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircadianProfile {
    pub probs: [f64; 24],
    pub trips: usize,
}

impl CircadianProfile {
    pub fn is_empty(&self) -> bool {
        self.trips == 0
    }
}

/// A trip starts when a stay ends and the next one begins elsewhere in the
/// sequence; its start slot is the end slot of the departing stay.
pub fn circadian_profile(ts: &[Trajectory], grid: &GridSpec) -> CircadianProfile {
    let mut counts = [0u64; 24];
    let mut trips = 0usize;
    for t in ts {
        for w in t.stays.windows(2) {
            counts[grid.hour_of_slot(w[0].end_slot())] += 1;
            trips += 1;
        }
    }
    let mut probs = [0.0; 24];
    if trips > 0 {
        for (p, c) in probs.iter_mut().zip(counts) {
            *p = c as f64 / trips as f64;
        }
    }
    CircadianProfile { probs, trips }
}

/// Normalized origin-destination frequencies over consecutive stay pairs.
pub fn od_matrix(ts: &[Trajectory]) -> BTreeMap<(Cell, Cell), f64> {
    let mut counts: BTreeMap<(Cell, Cell), u64> = BTreeMap::new();
    let mut total = 0u64;
    for t in ts {
        for w in t.stays.windows(2) {
            *counts.entry((w[0].cell, w[1].cell)).or_default() += 1;
            total += 1;
        }
    }
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Stay;
    use proptest::prelude::*;

    fn traj(cells: &[(u32, u32)]) -> Trajectory {
        Trajectory {
            user_id: None,
            stays: cells
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Stay { cell: Cell::new(x, y), start_slot: i as u64, duration_slots: 1 })
                .collect(),
            num_days: 30,
        }
    }

    #[test]
    fn radius_examples() {
        let g = GridSpec { cell_size_m: 1000.0, ..Default::default() };
        assert_eq!(radius_of_gyration(&traj(&[(5, 5)]), &g), 0.0);
        assert!((radius_of_gyration(&traj(&[(0, 0), (1, 0)]), &g) - 500.0).abs() < 1e-9);
    }

    #[test]
    fn radius_matches_direct_formula() {
        // hand oracle: centroid of the six cells is (2, 1)
        let cells = [(0, 0), (4, 0), (2, 3), (2, 1), (1, 1), (3, 1)];
        let g = GridSpec { cell_size_m: 250.0, ..Default::default() };
        let d2: [f64; 6] = [5.0, 5.0, 4.0, 0.0, 1.0, 1.0];
        let expect = (d2.iter().sum::<f64>() / 6.0).sqrt() * 250.0;
        assert!((radius_of_gyration(&traj(&cells), &g) - expect).abs() < 1e-9);
    }

    #[test]
    fn ccdf_examples() {
        let c = ccdf(&EmpiricalDistribution { samples: vec![3.0, 1.0, 2.0], kind: SampleKind::Dimensionless }).unwrap();
        assert_eq!(c.support, vec![1.0, 2.0, 3.0]);
        assert!((c.probs[1] - 2.0 / 3.0).abs() < 1e-15 && (c.probs[2] - 1.0 / 3.0).abs() < 1e-15);
        let c = ccdf(&EmpiricalDistribution { samples: vec![5.0, 5.0], kind: SampleKind::Dimensionless }).unwrap();
        assert_eq!((c.support, c.probs), (vec![5.0], vec![1.0]));
        assert!(ccdf(&EmpiricalDistribution { samples: vec![], kind: SampleKind::Dimensionless }).is_err());
    }

    #[test]
    fn ccdf_matches_counting() {
        use rand::Rng;
        let mut rng = crate::rng::stream(3, "ccdf");
        let samples: Vec<f64> = (0..1000).map(|_| (rng.gen_range(0..200) as f64) * 0.5).collect();
        let d = EmpiricalDistribution { samples: samples.clone(), kind: SampleKind::Dimensionless };
        let c = ccdf(&d).unwrap();
        for (v, p) in c.support.iter().zip(&c.probs) {
            let count = samples.iter().filter(|s| *s >= v).count();
            assert_eq!(*p, count as f64 / 1000.0);
        }
    }

    #[test]
    fn stay_duration_examples() {
        let mut t = traj(&[(0, 0)]);
        t.stays[0].duration_slots = 4;
        assert_eq!(stay_durations(&t).samples, vec![4.0]);
        let t = Trajectory {
            user_id: None,
            stays: vec![
                Stay { cell: Cell::new(0, 0), start_slot: 0, duration_slots: 2 },
                Stay { cell: Cell::new(1, 0), start_slot: 2, duration_slots: 2 },
                Stay { cell: Cell::new(0, 0), start_slot: 4, duration_slots: 10 },
            ],
            num_days: 1,
        };
        assert_eq!(stay_durations(&t).samples, vec![2.0, 2.0, 10.0]);
    }

    #[test]
    fn circadian_examples() {
        let g = GridSpec::default();
        // every departure at 08:00-08:30 (slot 16 of each day)
        let t = Trajectory {
            user_id: None,
            stays: (0..5)
                .map(|d| Stay { cell: Cell::new(d % 2, 0), start_slot: d as u64 * 48, duration_slots: 16 })
                .collect(),
            num_days: 5,
        };
        let c = circadian_profile(&[t], &g);
        assert_eq!(c.trips, 4);
        assert_eq!(c.probs[8], 1.0);
        assert!(circadian_profile(&[traj(&[(0, 0)])], &g).is_empty());

        // one trip starting in every hour
        let t = Trajectory {
            user_id: None,
            stays: (0..25)
                .map(|h| Stay { cell: Cell::new(h % 2, 0), start_slot: h as u64 * 2, duration_slots: 2 })
                .collect(),
            num_days: 2,
        };
        let c = circadian_profile(&[t], &g);
        for p in c.probs {
            assert!((p - 1.0 / 24.0).abs() < 1e-15);
        }
    }

    #[test]
    fn od_examples() {
        let a = Cell::new(0, 0);
        let b = Cell::new(1, 1);
        let m = od_matrix(&[traj(&[(0, 0), (1, 1)])]);
        assert_eq!(m.get(&(a, b)), Some(&1.0));
        let m = od_matrix(&[traj(&[(0, 0), (1, 1), (0, 0)])]);
        assert_eq!(m.get(&(a, b)), Some(&0.5));
        assert_eq!(m.get(&(b, a)), Some(&0.5));
    }

    proptest! {
        #[test]
        fn radius_translation_invariant_and_linear(
            cells in prop::collection::vec((0u32..50, 0u32..50), 1..20),
            dx in 0u32..1000, dy in 0u32..1000, size in 1.0f64..2000.0,
        ) {
            let g1 = GridSpec { cell_size_m: 1.0, ..Default::default() };
            let gs = GridSpec { cell_size_m: size, ..Default::default() };
            let t = traj(&cells);
            let shifted: Vec<(u32, u32)> = cells.iter().map(|&(x, y)| (x + dx, y + dy)).collect();
            let r = radius_of_gyration(&t, &g1);
            prop_assert!((radius_of_gyration(&traj(&shifted), &g1) - r).abs() < 1e-6);
            prop_assert!((radius_of_gyration(&t, &gs) - r * size).abs() < 1e-6 * size.max(1.0));
        }

        #[test]
        fn ccdf_starts_at_one_and_decreases(samples in prop::collection::vec(0.0f64..1e6, 1..200)) {
            let c = ccdf(&EmpiricalDistribution { samples, kind: SampleKind::Dimensionless }).unwrap();
            prop_assert_eq!(c.probs[0], 1.0);
            prop_assert!(c.probs.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(c.probs.iter().all(|p| *p > 0.0 && *p <= 1.0));
        }
    }
}
