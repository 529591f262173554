//! Trajectory generation from a [`PromptSet`].
//!
//! Two backends share one request/result shape: the built-in synthetic
//! generator reads only each prompt's [`GeneratorParams`], the external
//! backend renders only the prompt text and asks a chat-completion
//! endpoint for a stay list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::endpoint::EndpointConfig;
use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec};
use crate::types::{PromptSet, Trajectory, UserId};

pub mod external;
pub mod population;
pub mod synthetic;

pub use external::generate_external;
pub use synthetic::{generate_synthetic, generate_user};

/// Offset of the jump-length law, in meters.
pub const JUMP_OFFSET_M: f64 = 1000.0;
/// Shortest jump drawn by the generator, in metres; coarser grids use
/// their cell size instead.
pub const MIN_JUMP_M: f64 = 500.0;

/// Offset of the stay-duration law, in seconds (one slot of the default
/// 48-slot day).
pub const DURATION_OFFSET_S: f64 = 1800.0;

/// Offset of the stay-duration law in slots of `grid`.
pub fn duration_offset_slots(grid: &GridSpec) -> f64 {
    DURATION_OFFSET_S / grid.slot_seconds()
}

/// Behavioral knobs of one simulated individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Exponent of the jump-length law.
    pub jump_beta: f64,
    /// Exponential cutoff of the jump-length law, meters.
    pub jump_kappa_m: f64,
    /// Exponent of the stay-duration law.
    pub dur_beta: f64,
    /// Exponential cutoff of the stay-duration law, slots.
    pub dur_kappa_slots: f64,
    /// Base exploration probability, scaled by `S^-explore_gamma` for `S`
    /// distinct visited cells.
    pub explore_rho: f64,
    pub explore_gamma: f64,
    /// Probability that a night-time move goes straight home.
    pub home_bias: f64,
    pub home_cell: Cell,
    /// Propensity to move in each hour of the day (24 entries).
    pub activity: Vec<f64>,
    pub num_days: u32,
}

/// A multiplicatively adjustable field of [`GeneratorParams`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamField {
    JumpBeta,
    JumpKappaM,
    DurBeta,
    DurKappaSlots,
    ExploreRho,
    ExploreGamma,
    HomeBias,
}

impl ParamField {
    pub const ALL: [ParamField; 7] = [
        ParamField::JumpBeta,
        ParamField::JumpKappaM,
        ParamField::DurBeta,
        ParamField::DurKappaSlots,
        ParamField::ExploreRho,
        ParamField::ExploreGamma,
        ParamField::HomeBias,
    ];

    /// Range a field is clamped to after an adjustment.
    pub fn valid_range(self) -> (f64, f64) {
        match self {
            ParamField::JumpBeta | ParamField::DurBeta => (0.05, 5.0),
            ParamField::JumpKappaM => (100.0, 2.0e7),
            ParamField::DurKappaSlots => (1.0, 1.0e4),
            ParamField::ExploreRho => (1e-4, 1.0),
            ParamField::ExploreGamma => (0.0, 3.0),
            ParamField::HomeBias => (0.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamField::JumpBeta => "jump_beta",
            ParamField::JumpKappaM => "jump_kappa_m",
            ParamField::DurBeta => "dur_beta",
            ParamField::DurKappaSlots => "dur_kappa_slots",
            ParamField::ExploreRho => "explore_rho",
            ParamField::ExploreGamma => "explore_gamma",
            ParamField::HomeBias => "home_bias",
        }
    }
}

impl GeneratorParams {
    pub fn get(&self, f: ParamField) -> f64 {
        match f {
            ParamField::JumpBeta => self.jump_beta,
            ParamField::JumpKappaM => self.jump_kappa_m,
            ParamField::DurBeta => self.dur_beta,
            ParamField::DurKappaSlots => self.dur_kappa_slots,
            ParamField::ExploreRho => self.explore_rho,
            ParamField::ExploreGamma => self.explore_gamma,
            ParamField::HomeBias => self.home_bias,
        }
    }

    pub fn set(&mut self, f: ParamField, v: f64) {
        let slot = match f {
            ParamField::JumpBeta => &mut self.jump_beta,
            ParamField::JumpKappaM => &mut self.jump_kappa_m,
            ParamField::DurBeta => &mut self.dur_beta,
            ParamField::DurKappaSlots => &mut self.dur_kappa_slots,
            ParamField::ExploreRho => &mut self.explore_rho,
            ParamField::ExploreGamma => &mut self.explore_gamma,
            ParamField::HomeBias => &mut self.home_bias,
        };
        *slot = v;
    }

    /// Multiply a field by `factor`, clamping into its valid range.
    pub fn scale(&mut self, f: ParamField, factor: f64) {
        let (lo, hi) = f.valid_range();
        self.set(f, (self.get(f) * factor).clamp(lo, hi));
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        for f in [
            ParamField::JumpBeta,
            ParamField::JumpKappaM,
            ParamField::DurBeta,
            ParamField::DurKappaSlots,
        ] {
            let v = self.get(f);
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{} must be positive, got {v}", f.name()));
            }
        }
        if !(self.explore_rho > 0.0 && self.explore_rho <= 1.0) {
            return bad(format!("explore_rho must lie in (0, 1], got {}", self.explore_rho));
        }
        if !(self.explore_gamma.is_finite() && self.explore_gamma >= 0.0) {
            return bad(format!("explore_gamma must be non-negative, got {}", self.explore_gamma));
        }
        if !(0.0..=1.0).contains(&self.home_bias) {
            return bad(format!("home_bias must lie in [0, 1], got {}", self.home_bias));
        }
        if self.activity.len() != 24 {
            return bad(format!("activity needs 24 hourly weights, got {}", self.activity.len()));
        }
        if self.activity.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("activity weights must be finite and non-negative".into());
        }
        if self.activity.iter().sum::<f64>() <= 0.0 {
            return bad("activity weights sum to zero".into());
        }
        if self.num_days == 0 {
            return bad("num_days must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum UserStatus {
    Ok,
    ParseFailure(String),
    BackendError(String),
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserResult {
    pub status: UserStatus,
    pub trajectory: Option<Trajectory>,
}

/// Per-user outcome of one generation request; covers every requested user.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenerationBatchResult {
    pub results: BTreeMap<UserId, UserResult>,
}

impl GenerationBatchResult {
    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.results
            .values()
            .filter_map(|r| r.trajectory.clone())
            .collect()
    }

    pub fn failures(&self) -> Vec<(&UserId, &UserStatus)> {
        self.results
            .iter()
            .filter(|(_, r)| r.status != UserStatus::Ok)
            .map(|(u, r)| (u, &r.status))
            .collect()
    }

    pub fn all_ok(&self) -> bool {
        self.results.values().all(|r| r.status == UserStatus::Ok)
    }
}

/// Where trajectories come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Synthetic,
    External(EndpointConfig),
}

impl Backend {
    pub fn generate(&self, ps: &PromptSet, grid: &GridSpec) -> GenerationBatchResult {
        match self {
            Backend::Synthetic => generate_synthetic(ps, grid, ps.seed),
            Backend::External(cfg) => generate_external(ps, grid, cfg),
        }
    }
}
