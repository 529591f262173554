//! Comparison of a simulated corpus against a reference corpus: JSD for
//! every histogram metric, absolute error for the return exponent, and the
//! plot data behind them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{travel_distances, GridSpec};
use crate::measures::{
    ccdf, circadian_profile, fit_exploration, fit_preferential_return_pooled, fit_zipf, jsd, jsd_keyed,
    jsd_linear_binned, jsd_log_binned, jsd::log_bin_edges, od_matrix, radius_of_gyration,
    EmpiricalDistribution, SampleKind,
};
use crate::types::Trajectory;

pub const LOG_BINS: usize = 50;
pub const EXPONENT_BINS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Radius,
    Distance,
    OdSim,
    Duration,
    Circadian,
    VisitationFrequency,
    Exploration,
    ReturnMae,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Radius,
        Metric::Distance,
        Metric::OdSim,
        Metric::Duration,
        Metric::Circadian,
        Metric::VisitationFrequency,
        Metric::Exploration,
        Metric::ReturnMae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Radius => "radius",
            Metric::Distance => "distance",
            Metric::OdSim => "od_sim",
            Metric::Duration => "duration",
            Metric::Circadian => "circadian",
            Metric::VisitationFrequency => "visitation_frequency",
            Metric::Exploration => "exploration",
            Metric::ReturnMae => "return_mae",
        }
    }

    /// Metrics that need trajectories grouped by individual.
    pub fn needs_user_ids(self) -> bool {
        matches!(
            self,
            Metric::Radius | Metric::VisitationFrequency | Metric::Exploration | Metric::ReturnMae
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: Metric,
    /// `None` when either side has no usable samples.
    pub value: Option<f64>,
    pub binning: String,
    pub n_sim: usize,
    pub n_ref: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub user_level: bool,
    pub metrics: Vec<MetricResult>,
}

impl EvaluationReport {
    pub fn get(&self, m: Metric) -> Option<&MetricResult> {
        self.metrics.iter().find(|r| r.metric == m)
    }

    pub fn value(&self, m: Metric) -> Option<f64> {
        self.get(m).and_then(|r| r.value)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["metric", "value", "binning", "n_sim", "n_ref"])?;
        for r in &self.metrics {
            w.write_record([
                r.metric.name().to_owned(),
                r.value.map(|v| format!("{v:.6}")).unwrap_or_else(|| "na".into()),
                r.binning.clone(),
                r.n_sim.to_string(),
                r.n_ref.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

/// Samples behind each distributional metric for one corpus.
struct Corpus {
    radii: Vec<f64>,
    distances: Vec<f64>,
    durations: Vec<f64>,
    zetas: Vec<f64>,
    alphas: Vec<f64>,
}

impl Corpus {
    fn new(ts: &[Trajectory], grid: &GridSpec) -> Self {
        Corpus {
            radii: ts.iter().filter(|t| !t.is_empty()).map(|t| radius_of_gyration(t, grid)).collect(),
            distances: ts.iter().flat_map(|t| travel_distances(t, grid, false)).collect(),
            durations: ts
                .iter()
                .flat_map(|t| t.stays.iter().map(|s| s.duration_slots as f64))
                .collect(),
            zetas: ts.iter().filter_map(|t| fit_zipf(t).ok()).map(|f| f.zeta).collect(),
            alphas: ts.iter().filter_map(|t| fit_exploration(t).ok()).map(|f| f.alpha).collect(),
        }
    }
}

fn has_ids(ts: &[Trajectory]) -> bool {
    !ts.is_empty() && ts.iter().all(|t| t.user_id.is_some())
}

/// Run the metric suite. User-level metrics are reported only when both
/// corpora carry user ids.
pub fn evaluate(sim: &[Trajectory], reference: &[Trajectory], grid: &GridSpec) -> EvaluationReport {
    let user_level = has_ids(sim) && has_ids(reference);
    let (cs, cr) = (Corpus::new(sim, grid), Corpus::new(reference, grid));
    let log_bins = format!("log{LOG_BINS}+zero");
    let lin_bins = format!("linear{EXPONENT_BINS}");
    let mut metrics = Vec::new();
    for m in Metric::ALL {
        if m.needs_user_ids() && !user_level {
            continue;
        }
        let r = match m {
            Metric::Radius => MetricResult {
                metric: m,
                value: jsd_log_binned(&cs.radii, &cr.radii, LOG_BINS),
                binning: log_bins.clone(),
                n_sim: cs.radii.len(),
                n_ref: cr.radii.len(),
            },
            Metric::Distance => MetricResult {
                metric: m,
                value: jsd_log_binned(&cs.distances, &cr.distances, LOG_BINS),
                binning: log_bins.clone(),
                n_sim: cs.distances.len(),
                n_ref: cr.distances.len(),
            },
            Metric::Duration => MetricResult {
                metric: m,
                value: jsd_log_binned(&cs.durations, &cr.durations, LOG_BINS),
                binning: log_bins.clone(),
                n_sim: cs.durations.len(),
                n_ref: cr.durations.len(),
            },
            Metric::OdSim => {
                let (a, b) = (od_matrix(sim), od_matrix(reference));
                MetricResult {
                    metric: m,
                    value: jsd_keyed(&a, &b),
                    binning: "od_union".into(),
                    n_sim: a.len(),
                    n_ref: b.len(),
                }
            }
            Metric::Circadian => {
                let (a, b) = (circadian_profile(sim, grid), circadian_profile(reference, grid));
                let value = if a.is_empty() || b.is_empty() { None } else { jsd(&a.probs, &b.probs) };
                MetricResult {
                    metric: m,
                    value,
                    binning: "hour24".into(),
                    n_sim: a.trips,
                    n_ref: b.trips,
                }
            }
            Metric::VisitationFrequency => MetricResult {
                metric: m,
                value: jsd_linear_binned(&cs.zetas, &cr.zetas, EXPONENT_BINS),
                binning: lin_bins.clone(),
                n_sim: cs.zetas.len(),
                n_ref: cr.zetas.len(),
            },
            Metric::Exploration => MetricResult {
                metric: m,
                value: jsd_linear_binned(&cs.alphas, &cr.alphas, EXPONENT_BINS),
                binning: lin_bins.clone(),
                n_sim: cs.alphas.len(),
                n_ref: cr.alphas.len(),
            },
            Metric::ReturnMae => {
                let a = fit_preferential_return_pooled(sim);
                let b = fit_preferential_return_pooled(reference);
                let n = |f: &Result<crate::measures::PreferentialReturnFit>| {
                    f.as_ref().map(|f| f.n_returns).unwrap_or(0)
                };
                MetricResult {
                    metric: m,
                    value: match (&a, &b) {
                        (Ok(a), Ok(b)) => Some((a.gamma - b.gamma).abs()),
                        _ => None,
                    },
                    binning: "pooled_gamma".into(),
                    n_sim: n(&a),
                    n_ref: n(&b),
                }
            }
        };
        metrics.push(r);
    }
    EvaluationReport { user_level, metrics }
}

fn write_ccdf(path: &Path, sim: &[f64], reference: &[f64], kind: SampleKind) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["source", "x", "ccdf"])?;
    for (name, xs) in [("sim", sim), ("ref", reference)] {
        if xs.is_empty() {
            continue;
        }
        let c = ccdf(&EmpiricalDistribution::new(xs.to_vec(), kind)?)?;
        for (x, p) in c.support.iter().zip(&c.probs) {
            w.write_record([name.to_owned(), format!("{x}"), format!("{p}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_histogram(path: &Path, sim: &[f64], reference: &[f64], edges: &[f64], log: bool) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["bin_lo", "bin_hi", "sim", "ref"])?;
    if edges.len() >= 2 {
        let (lo, hi, bins) = (edges[0], edges[edges.len() - 1], edges.len() - 1);
        let probs = |xs: &[f64]| {
            if log {
                crate::measures::jsd::log_binned_probs(xs, lo, hi, bins)[1..].to_vec()
            } else {
                crate::measures::jsd::linear_binned_probs(xs, lo, hi, bins)
            }
        };
        let (ps, pr) = (probs(sim), probs(reference));
        for i in 0..bins {
            w.write_record([
                format!("{}", edges[i]),
                format!("{}", edges[i + 1]),
                format!("{}", ps[i]),
                format!("{}", pr[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn linear_edges(a: &[f64], b: &[f64], bins: usize) -> Vec<f64> {
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    if lo > hi {
        return vec![];
    }
    (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect()
}

/// Write CCDF curves, exponent histograms and the circadian profile as CSV
/// files under `dir`.
pub fn write_plot_data(dir: &Path, sim: &[Trajectory], reference: &[Trajectory], grid: &GridSpec) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (cs, cr) = (Corpus::new(sim, grid), Corpus::new(reference, grid));
    write_ccdf(&dir.join("radius_ccdf.csv"), &cs.radii, &cr.radii, SampleKind::RadiusM)?;
    write_ccdf(&dir.join("distance_ccdf.csv"), &cs.distances, &cr.distances, SampleKind::DistanceM)?;
    write_ccdf(&dir.join("duration_ccdf.csv"), &cs.durations, &cr.durations, SampleKind::DurationSlots)?;
    let edges = log_bin_edges(&cs.distances, &cr.distances, LOG_BINS);
    write_histogram(&dir.join("distance_hist.csv"), &cs.distances, &cr.distances, &edges, true)?;
    let edges = linear_edges(&cs.zetas, &cr.zetas, EXPONENT_BINS);
    write_histogram(&dir.join("zeta_hist.csv"), &cs.zetas, &cr.zetas, &edges, false)?;
    let edges = linear_edges(&cs.alphas, &cr.alphas, EXPONENT_BINS);
    write_histogram(&dir.join("alpha_hist.csv"), &cs.alphas, &cr.alphas, &edges, false)?;

    let (a, b) = (circadian_profile(sim, grid), circadian_profile(reference, grid));
    let mut w = csv_writer(&dir.join("circadian.csv"))?;
    w.write_record(["hour", "sim", "ref"])?;
    for h in 0..24 {
        w.write_record([h.to_string(), format!("{}", a.probs[h]), format!("{}", b.probs[h])])?;
    }
    w.flush()?;
    Ok(())
}
