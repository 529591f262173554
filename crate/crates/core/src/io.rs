//! File formats: trajectory CSV and prompt-set documents.
//!
//! Trajectory CSV has one stay per row with the header
//! `user_id,day,start_slot,duration_slots,cell_x,cell_y`, where `start_slot`
//! is the slot within `day`. Rows of an anonymous trajectory carry an empty
//! `user_id`; a row that starts before the previous anonymous row ended
//! begins a new trajectory.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec};
use crate::types::{PromptSet, Stay, Trajectory, UserId};

pub const TRAJECTORY_HEADER: [&str; 6] =
    ["user_id", "day", "start_slot", "duration_slots", "cell_x", "cell_y"];

#[derive(Debug, Serialize, Deserialize)]
struct StayRow {
    user_id: String,
    day: u64,
    start_slot: u64,
    duration_slots: u32,
    cell_x: u32,
    cell_y: u32,
}

pub fn write_trajectories<W: Write>(w: W, trajs: &[Trajectory], grid: &GridSpec) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    let spd = grid.slots_per_day as u64;
    for t in trajs {
        let uid = t.user_id.as_ref().map(|u| u.0.as_str()).unwrap_or("");
        for s in &t.stays {
            out.serialize(StayRow {
                user_id: uid.to_owned(),
                day: s.start_slot / spd,
                start_slot: s.start_slot % spd,
                duration_slots: s.duration_slots,
                cell_x: s.cell.x,
                cell_y: s.cell.y,
            })?;
        }
    }
    if trajs.iter().all(|t| t.stays.is_empty()) {
        out.write_record(TRAJECTORY_HEADER)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectories<R: Read>(r: R, grid: &GridSpec) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != TRAJECTORY_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", TRAJECTORY_HEADER.join(",")),
        });
    }
    let spd = grid.slots_per_day as u64;
    let mut order: Vec<Option<UserId>> = Vec::new();
    let mut stays: Vec<Vec<Stay>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut anon_current: Option<usize> = None;
    let mut max_end = 0u64;

    for (i, row) in rdr.deserialize::<StayRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if row.start_slot >= spd {
            return Err(Error::Parse {
                line,
                msg: format!("start_slot {} not below slots_per_day {spd}", row.start_slot),
            });
        }
        let stay = Stay {
            cell: Cell::new(row.cell_x, row.cell_y),
            start_slot: row.day * spd + row.start_slot,
            duration_slots: row.duration_slots,
        };
        max_end = max_end.max(stay.end_slot());
        let slot = if row.user_id.is_empty() {
            let continues = anon_current
                .and_then(|k| stays[k].last())
                .is_some_and(|prev| prev.end_slot() <= stay.start_slot);
            if !continues {
                order.push(None);
                stays.push(Vec::new());
                anon_current = Some(stays.len() - 1);
            }
            anon_current.unwrap()
        } else {
            *index.entry(row.user_id.clone()).or_insert_with(|| {
                order.push(Some(UserId(row.user_id.clone())));
                stays.push(Vec::new());
                stays.len() - 1
            })
        };
        stays[slot].push(stay);
    }

    let num_days = max_end.div_ceil(spd).max(1) as u32;
    order
        .into_iter()
        .zip(stays)
        .map(|(uid, mut s)| {
            s.sort_by_key(|x| x.start_slot);
            Trajectory::new(uid, s, num_days, grid)
        })
        .collect()
}

pub fn read_trajectories_file(path: &Path, grid: &GridSpec) -> Result<Vec<Trajectory>> {
    let f = std::fs::File::open(path)?;
    read_trajectories(std::io::BufReader::new(f), grid)
}

pub fn write_trajectories_file(path: &Path, trajs: &[Trajectory], grid: &GridSpec) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let f = std::fs::File::create(path)?;
    write_trajectories(std::io::BufWriter::new(f), trajs, grid)
}

pub fn read_prompt_set(path: &Path) -> Result<PromptSet> {
    let text = std::fs::read_to_string(path)?;
    let ps: PromptSet = serde_json::from_str(&text)?;
    for p in ps.prompts.values() {
        p.params.validate()?;
    }
    Ok(ps)
}

pub fn write_prompt_set(path: &Path, ps: &PromptSet) -> Result<()> {
    write_json(path, ps)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
