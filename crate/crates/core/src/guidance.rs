//! Guidance: target measures, per-objective distances and the aggregate
//! discrepancy `R` whose decrease is the search reward.
//!
//! Three kinds of shared data define the objectives:
//!
//! - `sd1`, user-level trajectories: radius of gyration, stay duration and
//!   the per-user Zipf exponent, compared as distributions;
//! - `sd2`, anonymous trajectories: travel distance and stay duration;
//! - `sd3`, summaries only: fitted exponents and cutoffs plus a population
//!   Zipf exponent, each compared as a scalar.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{duration_offset_slots, JUMP_OFFSET_M};
use crate::grid::{travel_distances, GridSpec};
use crate::measures::{fit_truncated_powerlaw, fit_zipf, radius_of_gyration, TruncatedPowerLawFit};
use crate::types::{Trajectory, UserId};

pub const DEFAULT_MU: f64 = 0.5;
pub const DEFAULT_EPSILON_REWARD: f64 = 1e-6;
pub const DEFAULT_EPSILON_LOG: f64 = 1e-9;
/// Quantile grid used by [`w1_log`] when sample sizes differ.
pub const W1_GRID: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SharedDataType {
    Sd1,
    Sd2,
    Sd3,
}

impl SharedDataType {
    pub fn default_measures(self) -> &'static [MeasureId] {
        match self {
            SharedDataType::Sd1 => &[MeasureId::Radius, MeasureId::StayDuration, MeasureId::Zeta],
            SharedDataType::Sd2 => &[MeasureId::TravelDistance, MeasureId::StayDuration],
            SharedDataType::Sd3 => &[
                MeasureId::DistanceBeta,
                MeasureId::DistanceKappa,
                MeasureId::DurationBeta,
                MeasureId::DurationKappa,
                MeasureId::ZetaTotal,
            ],
        }
    }

    /// Whether the objectives need per-user identity.
    pub fn needs_user_ids(self) -> bool {
        self == SharedDataType::Sd1
    }
}

impl std::str::FromStr for SharedDataType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sd1" => Ok(SharedDataType::Sd1),
            "sd2" => Ok(SharedDataType::Sd2),
            "sd3" => Ok(SharedDataType::Sd3),
            _ => Err(Error::Config(format!("unknown shared data type {s:?}"))),
        }
    }
}

/// A named mobility measure usable as an objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureId {
    /// Per-user radius of gyration, meters.
    Radius,
    /// Pooled travel distances, meters.
    TravelDistance,
    /// Pooled stay durations, slots.
    StayDuration,
    /// Per-user Zipf exponents.
    Zeta,
    DistanceBeta,
    /// Meters.
    DistanceKappa,
    DurationBeta,
    /// Slots.
    DurationKappa,
    /// Median of the per-user Zipf exponents.
    ZetaTotal,
}

impl MeasureId {
    pub fn is_scalar(self) -> bool {
        !matches!(
            self,
            MeasureId::Radius | MeasureId::TravelDistance | MeasureId::StayDuration | MeasureId::Zeta
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            MeasureId::Radius => "radius",
            MeasureId::TravelDistance => "travel_distance",
            MeasureId::StayDuration => "stay_duration",
            MeasureId::Zeta => "zeta",
            MeasureId::DistanceBeta => "distance_beta",
            MeasureId::DistanceKappa => "distance_kappa",
            MeasureId::DurationBeta => "duration_beta",
            MeasureId::DurationKappa => "duration_kappa",
            MeasureId::ZetaTotal => "zeta_total",
        }
    }
}

impl std::fmt::Display for MeasureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetValue {
    Samples { samples: Vec<f64> },
    Scalar { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub measure_id: MeasureId,
    #[serde(flatten)]
    pub target: TargetValue,
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        let m = self.measure_id;
        match &self.target {
            TargetValue::Samples { samples } => {
                if m.is_scalar() {
                    return Err(Error::InvalidTarget(format!("{m} needs a scalar target")));
                }
                if samples.is_empty() {
                    return Err(Error::InvalidTarget(format!("{m} target has no samples")));
                }
                if samples.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidTarget(format!(
                        "{m} target samples must be finite and non-negative"
                    )));
                }
            }
            TargetValue::Scalar { value } => {
                if !m.is_scalar() {
                    return Err(Error::InvalidTarget(format!("{m} needs a sample target")));
                }
                if !value.is_finite() || *value == 0.0 {
                    return Err(Error::InvalidTarget(format!(
                        "{m} target must be finite and non-zero, got {value}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Target file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub shared_data_type: SharedDataType,
    pub objectives: Vec<ObjectiveSpec>,
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.objectives.is_empty() {
            return Err(Error::InvalidTarget("no objectives".into()));
        }
        for o in &self.objectives {
            o.validate()?;
            let scalar_type = self.shared_data_type == SharedDataType::Sd3;
            if o.measure_id.is_scalar() != scalar_type {
                return Err(Error::InvalidTarget(format!(
                    "{} is not a {:?} objective",
                    o.measure_id, self.shared_data_type
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcdfCoords {
    #[default]
    Log,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub shared_data_type: SharedDataType,
    pub objectives: Vec<ObjectiveSpec>,
    pub mu: f64,
    pub epsilon_reward: f64,
    pub epsilon_log: f64,
    pub ccdf_coords: CcdfCoords,
}

/// Tunable constants of a [`GuidanceConfig`], as read from a run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceParams {
    pub mu: f64,
    pub epsilon_reward: f64,
    pub epsilon_log: f64,
    pub ccdf_coords: CcdfCoords,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        GuidanceParams {
            mu: DEFAULT_MU,
            epsilon_reward: DEFAULT_EPSILON_REWARD,
            epsilon_log: DEFAULT_EPSILON_LOG,
            ccdf_coords: CcdfCoords::Log,
        }
    }
}

impl GuidanceConfig {
    pub fn new(target: TargetSpec, p: &GuidanceParams) -> Result<Self> {
        let cfg = GuidanceConfig {
            shared_data_type: target.shared_data_type,
            objectives: target.objectives,
            mu: p.mu,
            epsilon_reward: p.epsilon_reward,
            epsilon_log: p.epsilon_log,
            ccdf_coords: p.ccdf_coords,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::InvalidGuidance(format!("mu must be non-negative, got {}", self.mu)));
        }
        if !(self.epsilon_reward > 0.0 && self.epsilon_log > 0.0) {
            return Err(Error::InvalidGuidance("epsilons must be positive".into()));
        }
        TargetSpec {
            shared_data_type: self.shared_data_type,
            objectives: self.objectives.clone(),
        }
        .validate()
    }

    pub fn measures(&self) -> Vec<MeasureId> {
        self.objectives.iter().map(|o| o.measure_id).collect()
    }
}

fn log_sorted(xs: &[f64], eps: f64) -> Vec<f64> {
    let mut v: Vec<f64> = xs.iter().map(|x| (x + eps).ln()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// 1-Wasserstein distance between `ln(x + eps)`-transformed samples.
///
/// Equal sizes use the exact sorted-sample mean; otherwise the quantile
/// functions are compared on a [`W1_GRID`]-point midpoint grid.
pub fn w1_log(a: &[f64], b: &[f64], eps: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("w1_log needs non-empty samples"));
    }
    let (la, lb) = (log_sorted(a, eps), log_sorted(b, eps));
    if la.len() == lb.len() {
        let s: f64 = la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).sum();
        return Ok(s / la.len() as f64);
    }
    let q = |v: &[f64], u: f64| v[((u * v.len() as f64) as usize).min(v.len() - 1)];
    let s: f64 = (0..W1_GRID)
        .map(|i| {
            let u = (i as f64 + 0.5) / W1_GRID as f64;
            (q(&la, u) - q(&lb, u)).abs()
        })
        .sum();
    Ok(s / W1_GRID as f64)
}

/// `∫ |C_a(z) - C_b(z)| dz` for the CCDFs `C(z) = P(X >= z)`, integrated
/// exactly as a step function over the merged support.
pub fn l1_ccdf(a: &[f64], b: &[f64], coords: CcdfCoords, eps: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("l1_ccdf needs non-empty samples"));
    }
    let tr = |xs: &[f64]| -> Vec<f64> {
        let mut v: Vec<f64> = match coords {
            CcdfCoords::Log => xs.iter().map(|x| (x + eps).ln()).collect(),
            CcdfCoords::Linear => xs.to_vec(),
        };
        v.sort_by(f64::total_cmp);
        v
    };
    let (ta, tb) = (tr(a), tr(b));
    let mut z: Vec<f64> = ta.iter().chain(&tb).cloned().collect();
    z.sort_by(f64::total_cmp);
    z.dedup();
    let (na, nb) = (ta.len() as f64, tb.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut total = 0.0;
    for w in z.windows(2) {
        // on (w0, w1]: C(z) = fraction of samples strictly above w0
        while ia < ta.len() && ta[ia] <= w[0] {
            ia += 1;
        }
        while ib < tb.len() && tb[ib] <= w[0] {
            ib += 1;
        }
        let ca = (ta.len() - ia) as f64 / na;
        let cb = (tb.len() - ib) as f64 / nb;
        total += (w[1] - w[0]) * (ca - cb).abs();
    }
    Ok(total)
}

/// `w1_log + mu * l1_ccdf`.
pub fn g_vector(sim: &[f64], target: &[f64], cfg: &GuidanceConfig) -> Result<f64> {
    Ok(w1_log(sim, target, cfg.epsilon_log)?
        + cfg.mu * l1_ccdf(sim, target, cfg.ccdf_coords, cfg.epsilon_log)?)
}

/// Relative error `|sim - target| / |target|`.
pub fn g_scalar(sim: f64, target: f64) -> Result<f64> {
    if target == 0.0 || !target.is_finite() {
        return Err(Error::InvalidTarget(format!("scalar target must be finite and non-zero, got {target}")));
    }
    if !sim.is_finite() {
        return Err(Error::FitFailure(format!("simulated value {sim} is not finite")));
    }
    Ok((sim - target).abs() / target.abs())
}

/// Geometric mean of `g_i + eps`. Summation runs over sorted logs, so the
/// result is exactly invariant to the order of `gs`.
pub fn aggregate_r(gs: &[f64], eps: f64) -> f64 {
    assert!(!gs.is_empty(), "aggregate of no objectives");
    let mut logs: Vec<f64> = gs.iter().map(|g| (g + eps).ln()).collect();
    logs.sort_by(f64::total_cmp);
    (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

pub fn step_reward(r_t: f64, r_next: f64) -> f64 {
    r_t - r_next
}

/// Measures of one trajectory set, computed lazily and at most once each.
pub struct MeasureSet<'a> {
    trajs: &'a [Trajectory],
    grid: &'a GridSpec,
    distance_fit: Option<Result<TruncatedPowerLawFit>>,
    duration_fit: Option<Result<TruncatedPowerLawFit>>,
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn clone_fit(r: &Result<TruncatedPowerLawFit>) -> Result<TruncatedPowerLawFit> {
    match r {
        Ok(f) => Ok(f.clone()),
        Err(e) => Err(Error::FitFailure(e.to_string())),
    }
}

impl<'a> MeasureSet<'a> {
    pub fn new(trajs: &'a [Trajectory], grid: &'a GridSpec) -> Self {
        MeasureSet {
            trajs,
            grid,
            distance_fit: None,
            duration_fit: None,
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        self.trajs
            .iter()
            .filter(|t| !t.is_empty())
            .map(|t| radius_of_gyration(t, self.grid))
            .collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.trajs
            .iter()
            .flat_map(|t| travel_distances(t, self.grid, false))
            .collect()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.trajs
            .iter()
            .flat_map(|t| t.stays.iter().map(|s| s.duration_slots as f64))
            .collect()
    }

    /// Per-trajectory Zipf exponents; trajectories with too few locations
    /// are skipped.
    pub fn zetas(&self) -> Vec<f64> {
        self.trajs.iter().filter_map(|t| fit_zipf(t).ok()).map(|f| f.zeta).collect()
    }

    pub fn distance_fit(&mut self) -> Result<TruncatedPowerLawFit> {
        if self.distance_fit.is_none() {
            self.distance_fit = Some(fit_truncated_powerlaw(&self.distances(), JUMP_OFFSET_M));
        }
        clone_fit(self.distance_fit.as_ref().expect("just set"))
    }

    pub fn duration_fit(&mut self) -> Result<TruncatedPowerLawFit> {
        if self.duration_fit.is_none() {
            self.duration_fit =
                Some(fit_truncated_powerlaw(&self.durations(), duration_offset_slots(self.grid)));
        }
        clone_fit(self.duration_fit.as_ref().expect("just set"))
    }

    pub fn value(&mut self, m: MeasureId) -> Result<TargetValue> {
        let samples = |v: Vec<f64>, what: &'static str| {
            if v.is_empty() {
                Err(Error::InsufficientData(format!("no {what} samples")))
            } else {
                Ok(TargetValue::Samples { samples: v })
            }
        };
        let scalar = |value: f64| TargetValue::Scalar { value };
        match m {
            MeasureId::Radius => samples(self.radii(), "radius"),
            MeasureId::TravelDistance => samples(self.distances(), "travel-distance"),
            MeasureId::StayDuration => samples(self.durations(), "stay-duration"),
            MeasureId::Zeta => samples(self.zetas(), "zeta"),
            MeasureId::DistanceBeta => Ok(scalar(self.distance_fit()?.beta)),
            MeasureId::DistanceKappa => Ok(scalar(self.distance_fit()?.kappa)),
            MeasureId::DurationBeta => Ok(scalar(self.duration_fit()?.beta)),
            MeasureId::DurationKappa => Ok(scalar(self.duration_fit()?.kappa)),
            MeasureId::ZetaTotal => median(&mut self.zetas())
                .map(scalar)
                .ok_or_else(|| Error::InsufficientData("no per-user zeta".into())),
        }
    }
}

/// Per-user statistic used to place individuals into groups for a measure.
///
/// Distribution measures use the user's own value (radius, Zipf exponent)
/// or the median of their samples; fitted scalars use the statistic they
/// summarize.
pub fn per_user_statistic(m: MeasureId, trajs: &[Trajectory], grid: &GridSpec) -> BTreeMap<UserId, f64> {
    let mut out = BTreeMap::new();
    for t in trajs {
        let Some(uid) = &t.user_id else { continue };
        if t.is_empty() {
            continue;
        }
        let v = match m {
            MeasureId::Radius => Some(radius_of_gyration(t, grid)),
            MeasureId::Zeta | MeasureId::ZetaTotal => fit_zipf(t).ok().map(|f| f.zeta),
            MeasureId::TravelDistance | MeasureId::DistanceBeta | MeasureId::DistanceKappa => {
                median(&mut travel_distances(t, grid, false))
            }
            MeasureId::StayDuration | MeasureId::DurationBeta | MeasureId::DurationKappa => {
                median(&mut t.stays.iter().map(|s| s.duration_slots as f64).collect::<Vec<_>>())
            }
        };
        if let Some(v) = v {
            out.insert(uid.clone(), v);
        }
    }
    out
}

/// Objective distances and their aggregate for one trajectory set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub gs: Vec<f64>,
    pub r: f64,
}

pub fn evaluate_objectives(cfg: &GuidanceConfig, trajs: &[Trajectory], grid: &GridSpec) -> Result<Evaluation> {
    let mut ms = MeasureSet::new(trajs, grid);
    let mut gs = Vec::with_capacity(cfg.objectives.len());
    for o in &cfg.objectives {
        let g = match (&o.target, ms.value(o.measure_id)?) {
            (TargetValue::Samples { samples: t }, TargetValue::Samples { samples: s }) => {
                g_vector(&s, t, cfg)?
            }
            (TargetValue::Scalar { value: t }, TargetValue::Scalar { value: s }) => g_scalar(s, *t)?,
            _ => {
                return Err(Error::InvalidTarget(format!(
                    "{} target kind does not match the measure",
                    o.measure_id
                )))
            }
        };
        gs.push(g);
    }
    let r = aggregate_r(&gs, cfg.epsilon_reward);
    Ok(Evaluation { gs, r })
}

/// Build a target from reference trajectories.
pub fn make_target(trajs: &[Trajectory], sdt: SharedDataType, grid: &GridSpec) -> Result<TargetSpec> {
    if trajs.is_empty() {
        return Err(Error::EmptyInput("reference trajectories"));
    }
    if sdt.needs_user_ids() && trajs.iter().any(|t| t.user_id.is_none()) {
        return Err(Error::InvalidTarget(
            "user-level objectives need user ids; anonymous data is not available at the user level (use sd2 or sd3)".into(),
        ));
    }
    let mut ms = MeasureSet::new(trajs, grid);
    let objectives = sdt
        .default_measures()
        .iter()
        .map(|&m| {
            Ok(ObjectiveSpec {
                measure_id: m,
                target: ms.value(m)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = TargetSpec {
        shared_data_type: sdt,
        objectives,
    };
    spec.validate()?;
    Ok(spec)
}
