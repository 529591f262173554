//! Action space construction and the state transition.
//!
//! An action targets one group of individuals, defined by a range of a
//! per-user measure, and carries multiplicative parameter changes plus a
//! textual directive. Applying it rewrites the prompts of a random `k%` of
//! the group's current members.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::ParamField;
use crate::guidance::MeasureId;
use crate::rng;
use crate::types::{PromptSet, UserId};

pub mod external;
pub mod rules;
pub mod rewrite;

pub use external::build_action_space_external;
pub use rewrite::PromptRewriter;
pub use rules::{analyze_gaps, build_action_space, GapReport, GroupGap, ObjectiveGap, Summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u32);

impl std::fmt::Display for ActionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Users whose measure lies in `[lower, upper)`; a missing bound is open.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPredicate {
    pub measure: MeasureId,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl GroupPredicate {
    pub fn contains(&self, v: f64) -> bool {
        self.lower.map_or(true, |l| v >= l) && self.upper.map_or(true, |u| v < u)
    }

    pub fn validate(&self) -> Result<()> {
        if let (Some(l), Some(u)) = (self.lower, self.upper) {
            if !(l < u) {
                return Err(Error::InvalidParams(format!("group bounds out of order: [{l}, {u})")));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for GroupPredicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.lower, self.upper) {
            (None, None) => write!(f, "{} any", self.measure),
            (None, Some(u)) => write!(f, "{} < {u:.4}", self.measure),
            (Some(l), None) => write!(f, "{} >= {l:.4}", self.measure),
            (Some(l), Some(u)) => write!(f, "{} in [{l:.4}, {u:.4})", self.measure),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDelta {
    pub field: ParamField,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentAction {
    pub id: ActionId,
    pub measure_id: MeasureId,
    pub group: GroupPredicate,
    pub directive_text: String,
    pub param_deltas: Vec<ParamDelta>,
    /// Intended share of the population in this group, in `[0, 1]`.
    pub target_share: f64,
}

impl AdjustmentAction {
    pub fn validate(&self) -> Result<()> {
        self.group.validate()?;
        if self.directive_text.trim().is_empty() {
            return Err(Error::InvalidParams(format!("action {} has an empty directive", self.id)));
        }
        if let Some(d) = self.param_deltas.iter().find(|d| !(d.factor.is_finite() && d.factor > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "action {} scales {} by {}",
                self.id,
                d.field.name(),
                d.factor
            )));
        }
        Ok(())
    }

    /// Carries parameter changes, all of them identities.
    pub fn is_identity(&self) -> bool {
        !self.param_deltas.is_empty() && self.param_deltas.iter().all(|d| d.factor == 1.0)
    }
}

/// Validate a loaded action list: each action valid, ids unique.
pub fn validate_actions(actions: &[AdjustmentAction]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for a in actions {
        a.validate()?;
        if !seen.insert(a.id) {
            return Err(Error::InvalidParams(format!("duplicate action id {}", a.id)));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApplyOutcome {
    pub prompts: PromptSet,
    pub modified: Vec<UserId>,
    /// The group had no members; nothing changed.
    pub noop: bool,
}

/// Number of members selected from a group of `n` at `k_percent`.
pub fn selection_size(n: usize, k_percent: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let raw = n as f64 * k_percent / 100.0;
    // guard against 40 * 10 / 100 landing a hair above 4
    ((raw - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// Apply `a` to a random `k_percent` of its group.
///
/// Membership comes from `values`, the latest per-user measurements for
/// `a.group.measure`; users without a value belong to no group. Selected
/// prompts get the deltas (clamped to valid ranges), the directive
/// appended to their constraints unless every delta is an identity, and a
/// revision bump. The input set is left untouched.
pub fn apply_action(
    ps: &PromptSet,
    a: &AdjustmentAction,
    k_percent: f64,
    seed: u64,
    values: &BTreeMap<UserId, f64>,
) -> Result<ApplyOutcome> {
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::InvalidParams(format!("k_percent must lie in (0, 100], got {k_percent}")));
    }
    a.validate()?;
    let mut members: Vec<&UserId> = ps
        .prompts
        .keys()
        .filter(|u| values.get(*u).is_some_and(|v| a.group.contains(*v)))
        .collect();
    if members.is_empty() {
        return Ok(ApplyOutcome {
            prompts: ps.clone(),
            modified: vec![],
            noop: true,
        });
    }
    let take = selection_size(members.len(), k_percent);
    let mut r = rng::stream(seed, &format!("select/{}", a.id));
    for i in 0..take {
        let j = r.gen_range(i..members.len());
        members.swap(i, j);
    }
    let mut modified: Vec<UserId> = members[..take].iter().map(|u| (*u).clone()).collect();
    modified.sort();

    let mut out = ps.clone();
    let identity = a.is_identity();
    for u in &modified {
        let doc = out.prompts.get_mut(u).expect("member of the prompt set");
        for d in &a.param_deltas {
            doc.params.scale(d.field, d.factor);
        }
        if !identity {
            doc.constraints.push(a.directive_text.clone());
        }
        doc.revision += 1;
    }
    Ok(ApplyOutcome {
        prompts: out,
        modified,
        noop: false,
    })
}
