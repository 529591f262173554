//! Synthetic human-mobility simulation steered by mobility measures.
//!
//! A population is described by one structured prompt per individual
//! ([`PromptSet`]). Trajectories are generated from the prompts, population
//! level mobility measures are computed from the trajectories, and a Monte
//! Carlo tree search over group-targeted prompt adjustments drives the
//! measures toward targets derived from shared data.
//!
//! Module map:
//!
//! - [`grid`], [`types`], [`io`], [`rng`]: domain types, coarse-graining,
//!   file formats and seeded randomness.
//! - [`measures`]: radius of gyration, travel distance, stay duration,
//!   scaling-law fits, CCDFs, OD matrices and JSD.
//! - [`guidance`]: target specifications, distance functions and the
//!   aggregate discrepancy / step reward.
//! - [`generator`]: the built-in exploration / preferential-return
//!   generator and the chat-completion adapter.
//! - [`strategist`]: gap analysis, action space construction, and the
//!   transition that applies an action to a prompt set.
//! - [`optimizer`]: the search itself.
//! - [`scaleout`]: extension of an optimized subset to a full population.
//! - [`evaluate`]: the JSD evaluation suite.
//! - [`cli`]: command implementations behind the `mobsim` binary.

pub mod cli;
pub mod endpoint;
pub mod error;
pub mod evaluate;
pub mod generator;
pub mod grid;
pub mod guidance;
pub mod io;
pub mod measures;
pub mod optimizer;
pub mod rng;
pub mod scaleout;
pub mod strategist;
pub mod types;

pub use error::{Error, Result};
pub use generator::GeneratorParams;
pub use grid::{Cell, GeoPoint, GridSpec};
pub use types::{
    AttrValue, PromptDoc, PromptSet, StateId, Stay, Trajectory, UserId, UserProfile,
};
