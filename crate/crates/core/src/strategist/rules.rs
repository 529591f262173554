//! Gap analysis and the rule-based action space.

use serde::{Deserialize, Serialize};

use super::{ActionId, AdjustmentAction, GroupPredicate, ParamDelta};
use crate::error::Result;
use crate::generator::ParamField;
use crate::grid::GridSpec;
use crate::guidance::{per_user_statistic, GuidanceConfig, MeasureId, MeasureSet, TargetValue};
use crate::types::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategistConfig {
    /// Quantile groups per objective.
    pub groups: usize,
    /// Relative step of every parameter change (`1 ± step`).
    pub step: f64,
    /// Gaps below this (log ratio for distributions, relative error for
    /// scalars) produce identity actions.
    pub threshold: f64,
    /// Keep identity actions in the action space.
    pub keep_noop: bool,
}

impl Default for StrategistConfig {
    fn default() -> Self {
        StrategistConfig {
            groups: 5,
            step: 0.2,
            threshold: 0.05,
            keep_noop: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Summary {
    Quantiles { levels: Vec<f64>, values: Vec<f64> },
    Scalar { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupGap {
    pub group: GroupPredicate,
    /// +1 to raise the group's measure, -1 to lower it, 0 to leave it.
    pub direction: i8,
    pub target_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveGap {
    pub measure_id: MeasureId,
    pub simulated: Option<Summary>,
    pub target: Summary,
    pub descriptors: Vec<String>,
    pub groups: Vec<GroupGap>,
    /// Why no groups were formed, if so.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub objectives: Vec<ObjectiveGap>,
}

fn quantile(sorted: &[f64], u: f64) -> f64 {
    let pos = u * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn summarize(v: &[f64]) -> Summary {
    let s = sorted(v);
    let levels: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let values = levels.iter().map(|u| quantile(&s, *u)).collect();
    Summary::Quantiles { levels, values }
}

/// Compare simulated trajectories with the targets and split the simulated
/// population into quantile groups for every objective.
pub fn analyze_gaps(
    cfg: &GuidanceConfig,
    trajs: &[Trajectory],
    grid: &GridSpec,
    sc: &StrategistConfig,
) -> Result<GapReport> {
    let mut ms = MeasureSet::new(trajs, grid);
    let groups = sc.groups.max(1);
    let mut objectives = Vec::new();
    for o in &cfg.objectives {
        let m = o.measure_id;
        let target_summary = match &o.target {
            TargetValue::Samples { samples } => summarize(samples),
            TargetValue::Scalar { value } => Summary::Scalar { value: *value },
        };
        let mut gap = ObjectiveGap {
            measure_id: m,
            simulated: None,
            target: target_summary,
            descriptors: vec![],
            groups: vec![],
            skipped: None,
        };
        let sim = match ms.value(m) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("objective {m} skipped: {e}");
                gap.skipped = Some(e.to_string());
                objectives.push(gap);
                continue;
            }
        };
        let per_user: Vec<f64> = per_user_statistic(m, trajs, grid).into_values().collect();
        if per_user.len() < groups {
            let why = format!("{} users with a {m} value, need {groups}", per_user.len());
            log::warn!("objective {m} skipped: {why}");
            gap.skipped = Some(why);
            objectives.push(gap);
            continue;
        }
        let pu = sorted(&per_user);
        let mut edges: Vec<f64> = (1..groups).map(|g| quantile(&pu, g as f64 / groups as f64)).collect();
        edges.dedup();
        let mut bounds: Vec<(Option<f64>, Option<f64>)> = Vec::new();
        let mut lo = None;
        for e in &edges {
            if lo.map_or(true, |l| *e > l) {
                bounds.push((lo, Some(*e)));
                lo = Some(*e);
            }
        }
        bounds.push((lo, None));

        let n_groups = bounds.len();
        match (&sim, &o.target) {
            (TargetValue::Samples { samples: s }, TargetValue::Samples { samples: t }) => {
                gap.simulated = Some(summarize(s));
                let (ss, ts) = (sorted(s), sorted(t));
                for (g, (lower, upper)) in bounds.into_iter().enumerate() {
                    let u = (g as f64 + 0.5) / n_groups as f64;
                    let (sq, tq) = (quantile(&ss, u), quantile(&ts, u));
                    let ratio = ((tq + cfg.epsilon_log) / (sq + cfg.epsilon_log)).ln();
                    let direction = if ratio.abs() < sc.threshold { 0 } else if ratio > 0.0 { 1 } else { -1 };
                    gap.descriptors.push(format!(
                        "at quantile {u:.2}: simulated {sq:.4} vs target {tq:.4} (log ratio {ratio:+.3})"
                    ));
                    let group = GroupPredicate { measure: m, lower, upper };
                    let share = t.iter().filter(|v| group.contains(**v)).count() as f64 / t.len() as f64;
                    gap.groups.push(GroupGap { group, direction, target_share: share });
                }
            }
            (TargetValue::Scalar { value: s }, TargetValue::Scalar { value: t }) => {
                gap.simulated = Some(Summary::Scalar { value: *s });
                let rel = (t - s) / t.abs();
                let direction = if rel.abs() < sc.threshold { 0 } else if rel > 0.0 { 1 } else { -1 };
                gap.descriptors.push(format!("simulated {s:.4} vs target {t:.4} (relative gap {rel:+.3})"));
                for (lower, upper) in bounds {
                    gap.groups.push(GroupGap {
                        group: GroupPredicate { measure: m, lower, upper },
                        direction,
                        target_share: 1.0 / n_groups as f64,
                    });
                }
            }
            _ => {
                gap.skipped = Some("target kind does not match the measure".into());
            }
        }
        objectives.push(gap);
    }
    Ok(GapReport { objectives })
}

/// Parameters that raise a measure, with the sign of their effect.
pub fn levers(m: MeasureId) -> &'static [(ParamField, i8)] {
    use ParamField::*;
    match m {
        MeasureId::Radius => &[(JumpKappaM, 1), (ExploreRho, 1)],
        MeasureId::TravelDistance => &[(JumpKappaM, 1), (JumpBeta, -1)],
        MeasureId::StayDuration => &[(DurKappaSlots, 1), (DurBeta, -1)],
        MeasureId::Zeta | MeasureId::ZetaTotal => &[(ExploreRho, -1), (ExploreGamma, 1)],
        MeasureId::DistanceBeta => &[(JumpBeta, 1)],
        MeasureId::DistanceKappa => &[(JumpKappaM, 1)],
        MeasureId::DurationBeta => &[(DurBeta, 1)],
        MeasureId::DurationKappa => &[(DurKappaSlots, 1)],
    }
}

pub fn directive(m: MeasureId, direction: i8) -> String {
    let s = match (m, direction) {
        (_, 0) => "Keep the current mobility routine unchanged.",
        (MeasureId::Radius, d) if d < 0 => {
            "Reducing excessive spatial dispersion: keep most activities within a compact home-centred area."
        }
        (MeasureId::Radius, _) => {
            "Expanding the activity space: include destinations farther from home and explore new areas more often."
        }
        (MeasureId::TravelDistance | MeasureId::DistanceKappa | MeasureId::DistanceBeta, d)
            if (d < 0) != (m == MeasureId::DistanceBeta) =>
        {
            "Reducing excessive spatial dispersion: favour short trips and avoid long-distance travel."
        }
        (MeasureId::TravelDistance | MeasureId::DistanceKappa | MeasureId::DistanceBeta, _) => {
            "Allow occasional long-distance trips in addition to short local ones."
        }
        (MeasureId::StayDuration | MeasureId::DurationKappa | MeasureId::DurationBeta, d)
            if (d < 0) != (m == MeasureId::DurationBeta) =>
        {
            "Shorten stays: switch between activities more frequently during the day."
        }
        (MeasureId::StayDuration | MeasureId::DurationKappa | MeasureId::DurationBeta, _) => {
            "Lengthen stays: spend longer continuous periods at each location."
        }
        (MeasureId::Zeta | MeasureId::ZetaTotal, d) if d > 0 => {
            "Adjusting exploration probability: favour routine and location stability, returning to familiar places."
        }
        (MeasureId::Zeta | MeasureId::ZetaTotal, _) => {
            "Adjusting exploration probability: increase visits to new and less familiar places."
        }
    };
    s.into()
}

/// One action per (objective, group) pushing the group's measure in the
/// direction of its gap. Identity actions are dropped unless
/// `keep_noop`. Ids are assigned in order.
pub fn build_action_space(gap: &GapReport, sc: &StrategistConfig) -> Vec<AdjustmentAction> {
    let mut out: Vec<AdjustmentAction> = Vec::new();
    for o in &gap.objectives {
        for g in &o.groups {
            if g.direction == 0 && !sc.keep_noop {
                continue;
            }
            if out.iter().any(|a| a.measure_id == o.measure_id && a.group == g.group) {
                continue;
            }
            let param_deltas = levers(o.measure_id)
                .iter()
                .map(|&(field, effect)| {
                    let sign = effect * g.direction;
                    let factor = match sign.signum() {
                        1 => 1.0 + sc.step,
                        -1 => 1.0 - sc.step,
                        _ => 1.0,
                    };
                    ParamDelta { field, factor }
                })
                .collect();
            out.push(AdjustmentAction {
                id: ActionId(out.len() as u32),
                measure_id: o.measure_id,
                group: g.group.clone(),
                directive_text: directive(o.measure_id, g.direction),
                param_deltas,
                target_share: g.target_share,
            });
        }
    }
    out
}
