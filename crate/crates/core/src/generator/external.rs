//! Trajectories from a chat-completion endpoint.
//!
//! Each prompt is rendered to text and sent as the user message. The reply
//! content must hold a JSON array of stays:
//! `[{"day": 0, "start_slot": 0, "duration_slots": 16, "cell_x": 3, "cell_y": 4}, ...]`,
//! where `start_slot` counts from the start of `day`. Surrounding prose or
//! code fences are tolerated.

use serde::Deserialize;

use super::{GenerationBatchResult, UserResult, UserStatus};
use crate::endpoint::{run_bounded, CallOutcome, ChatClient, EndpointConfig};
use crate::grid::{Cell, GridSpec};
use crate::types::{PromptDoc, PromptSet, Stay, Trajectory};

#[derive(Debug, Deserialize)]
struct WireStay {
    day: u64,
    start_slot: u64,
    duration_slots: u32,
    cell_x: u32,
    cell_y: u32,
}

pub fn system_message(grid: &GridSpec) -> String {
    format!(
        "You simulate human mobility on a square grid of {} m cells. A day has {} time slots \
of {} minutes. Answer with a JSON array only, one object per stay, in time order: \
[{{\"day\": int, \"start_slot\": int, \"duration_slots\": int, \"cell_x\": int, \"cell_y\": int}}]. \
start_slot counts from the start of the day; stays must not overlap.",
        grid.cell_size_m,
        grid.slots_per_day,
        grid.slot_seconds() / 60.0
    )
}

pub fn user_message(doc: &PromptDoc) -> String {
    let h = doc.params.home_cell;
    format!(
        "{}\nHome cell: ({}, {}).\nSimulate {} days.",
        doc.render(),
        h.x,
        h.y,
        doc.params.num_days
    )
}

/// Parse a reply into a trajectory for `doc`'s user.
pub fn parse_stays(content: &str, doc: &PromptDoc, grid: &GridSpec) -> Result<Trajectory, String> {
    let start = content.find('[').ok_or("no JSON array in reply")?;
    let end = content.rfind(']').ok_or("no JSON array in reply")?;
    if end < start {
        return Err("no JSON array in reply".into());
    }
    let wire: Vec<WireStay> =
        serde_json::from_str(&content[start..=end]).map_err(|e| format!("bad stay array: {e}"))?;
    let spd = grid.slots_per_day as u64;
    let mut stays = Vec::with_capacity(wire.len());
    for (i, w) in wire.iter().enumerate() {
        if w.start_slot >= spd {
            return Err(format!("stay {i}: start_slot {} outside the day", w.start_slot));
        }
        stays.push(Stay {
            cell: Cell::new(w.cell_x, w.cell_y),
            start_slot: w.day * spd + w.start_slot,
            duration_slots: w.duration_slots,
        });
    }
    stays.sort_by_key(|s| s.start_slot);
    Trajectory::new(
        Some(doc.profile.id.clone()),
        stays,
        doc.params.num_days,
        grid,
    )
    .map_err(|e| e.to_string())
}

/// Ask the endpoint for every user's trajectory. Partial failures are
/// reported per user; the batch never aborts.
pub fn generate_external(
    ps: &PromptSet,
    grid: &GridSpec,
    cfg: &EndpointConfig,
) -> GenerationBatchResult {
    let client = ChatClient::new(cfg.clone());
    let system = system_message(grid);
    let docs: Vec<&PromptDoc> = ps.prompts.values().collect();
    let outcomes = run_bounded(&docs, cfg.max_in_flight, |doc| {
        client.call(&system, &user_message(doc), |c| parse_stays(c, doc, grid))
    });
    let results = docs
        .iter()
        .zip(outcomes)
        .map(|(doc, out)| {
            let r = match out {
                CallOutcome::Ok(t) => UserResult {
                    status: UserStatus::Ok,
                    trajectory: Some(t),
                },
                CallOutcome::ParseFailure(e) => UserResult {
                    status: UserStatus::ParseFailure(e),
                    trajectory: None,
                },
                CallOutcome::BackendError(e) => UserResult {
                    status: UserStatus::BackendError(e),
                    trajectory: None,
                },
            };
            (doc.profile.id.clone(), r)
        })
        .collect();
    GenerationBatchResult { results }
}
