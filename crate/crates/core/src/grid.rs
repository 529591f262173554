//! Spatial grid, time slots and coarse-graining of raw location points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Stay, Trajectory, UserId};

const EARTH_RADIUS_M: f64 = 6_371_008.8;
const SECONDS_PER_DAY: i64 = 86_400;

/// A grid cell index. Cells are addressed by non-negative integer pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Cell { x, y }
    }

    /// Euclidean distance between cell centers, in cell units.
    pub fn distance_cells(self, other: Cell) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        dx.hypot(dy)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Geometry of the spatial grid and the length of a time slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Side length of one cell in meters.
    pub cell_size_m: f64,
    /// South-west corner of cell (0, 0).
    pub origin: GeoPoint,
    /// Number of equal time slots per day.
    pub slots_per_day: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            cell_size_m: 500.0,
            origin: GeoPoint { lat: 0.0, lon: 0.0 },
            slots_per_day: 48,
        }
    }
}

impl GridSpec {
    pub fn new(cell_size_m: f64, origin: GeoPoint, slots_per_day: u32) -> Result<Self> {
        let grid = GridSpec {
            cell_size_m,
            origin,
            slots_per_day,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell_size_m must be positive, got {}",
                self.cell_size_m
            )));
        }
        if self.slots_per_day == 0 {
            return Err(Error::InvalidGrid("slots_per_day must be at least 1".into()));
        }
        if !(self.origin.lat.abs() <= 90.0 && self.origin.lon.abs() <= 180.0) {
            return Err(Error::InvalidGrid("origin is not a valid coordinate".into()));
        }
        Ok(())
    }

    /// Slot length in seconds (24 h / slots_per_day).
    pub fn slot_seconds(&self) -> f64 {
        SECONDS_PER_DAY as f64 / self.slots_per_day as f64
    }

    /// Hour of day (0..24) of an absolute slot index.
    pub fn hour_of_slot(&self, slot: u64) -> usize {
        let within = slot % self.slots_per_day as u64;
        ((within * 24) / self.slots_per_day as u64) as usize
    }

    /// Distance in meters between two cell centers.
    pub fn cell_distance_m(&self, a: Cell, b: Cell) -> f64 {
        a.distance_cells(b) * self.cell_size_m
    }

    /// Planar offset (east, north) in meters of a coordinate from the origin.
    fn project(&self, p: GeoPoint) -> (f64, f64) {
        let lat0 = self.origin.lat.to_radians();
        let dlat = (p.lat - self.origin.lat).to_radians();
        let dlon = (p.lon - self.origin.lon).to_radians();
        (EARTH_RADIUS_M * dlon * lat0.cos(), EARTH_RADIUS_M * dlat)
    }

    /// Inverse of the projection used by [`GridSpec::cell_of`].
    pub fn unproject(&self, east_m: f64, north_m: f64) -> GeoPoint {
        let lat0 = self.origin.lat.to_radians();
        GeoPoint {
            lat: self.origin.lat + (north_m / EARTH_RADIUS_M).to_degrees(),
            lon: self.origin.lon + (east_m / (EARTH_RADIUS_M * lat0.cos())).to_degrees(),
        }
    }

    /// Cell containing a coordinate, or a reason why it has none.
    pub fn cell_of(&self, p: GeoPoint) -> std::result::Result<Cell, String> {
        if !(p.lat.is_finite() && p.lon.is_finite()) || p.lat.abs() > 90.0 || p.lon.abs() > 180.0
        {
            return Err(format!("invalid coordinate ({}, {})", p.lat, p.lon));
        }
        let (east, north) = self.project(p);
        let x = (east / self.cell_size_m).floor();
        let y = (north / self.cell_size_m).floor();
        if x < 0.0 || y < 0.0 {
            return Err(format!("coordinate ({}, {}) lies before the grid origin", p.lat, p.lon));
        }
        if x > u32::MAX as f64 || y > u32::MAX as f64 {
            return Err(format!("coordinate ({}, {}) lies beyond the grid", p.lat, p.lon));
        }
        Ok(Cell::new(x as u32, y as u32))
    }

    /// Geographic coordinate of a cell center.
    pub fn center_of(&self, c: Cell) -> GeoPoint {
        self.unproject(
            (c.x as f64 + 0.5) * self.cell_size_m,
            (c.y as f64 + 0.5) * self.cell_size_m,
        )
    }
}

/// A raw timestamped location sample. `timestamp` is in seconds (UTC).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedPoint {
    pub lat: f64,
    pub lon: f64,
    pub timestamp: i64,
}

#[derive(Clone, Debug, Default)]
pub struct CoarseGrainOptions {
    /// Consecutive same-cell observations further apart than this many
    /// slots start a new stay. `None` never splits.
    pub max_gap_slots: Option<u64>,
}

/// Map time-ordered points onto the grid and merge consecutive same-cell
/// observations into stays.
///
/// Slot 0 is midnight (UTC) of the first point's day. When several points
/// fall into one slot, the last of them determines the slot's cell. A stay
/// closed by a move lasts until the next stay starts; the final stay (or one
/// closed by a gap) lasts until its last observation, and at least one slot.
pub fn coarse_grain(
    user_id: Option<UserId>,
    points: &[TimedPoint],
    grid: &GridSpec,
    opts: &CoarseGrainOptions,
) -> Result<Trajectory> {
    grid.validate()?;
    if points.is_empty() {
        return Ok(Trajectory {
            user_id,
            stays: Vec::new(),
            num_days: 1,
        });
    }
    let spd = grid.slots_per_day as i64;
    let slot_len = grid.slot_seconds();
    let day0 = points[0].timestamp.div_euclid(SECONDS_PER_DAY);
    let t0 = day0 * SECONDS_PER_DAY;

    // one observed cell per slot, last point wins
    let mut observed: Vec<(u64, Cell)> = Vec::with_capacity(points.len());
    let mut prev_ts = i64::MIN;
    for (index, p) in points.iter().enumerate() {
        if p.timestamp < prev_ts {
            return Err(Error::OutOfRange {
                index,
                reason: "timestamps are not ordered".into(),
            });
        }
        prev_ts = p.timestamp;
        let cell = grid
            .cell_of(GeoPoint { lat: p.lat, lon: p.lon })
            .map_err(|reason| Error::OutOfRange { index, reason })?;
        let slot = ((p.timestamp - t0) as f64 / slot_len).floor() as u64;
        match observed.last_mut() {
            Some(last) if last.0 == slot => last.1 = cell,
            _ => observed.push((slot, cell)),
        }
    }

    let mut stays = Vec::new();
    let (mut start, mut cell) = observed[0];
    let mut last_obs = start;
    for &(slot, c) in &observed[1..] {
        let gap = slot - last_obs;
        let split = opts.max_gap_slots.is_some_and(|g| gap > g);
        if c == cell && !split {
            last_obs = slot;
            continue;
        }
        let end = if split { last_obs } else { slot };
        stays.push(Stay {
            cell,
            start_slot: start,
            duration_slots: ((end - start).max(1)) as u32,
        });
        start = slot;
        cell = c;
        last_obs = slot;
    }
    stays.push(Stay {
        cell,
        start_slot: start,
        duration_slots: ((last_obs - start).max(1)) as u32,
    });

    let end_slot = stays
        .last()
        .map(|s| s.start_slot + s.duration_slots as u64)
        .unwrap_or(0);
    let num_days = end_slot.div_ceil(spd as u64).max(1) as u32;
    Trajectory::new(user_id, stays, num_days, grid)
}

/// Points that coarse-grain back into `t`: one at each stay start (the
/// cell center) and one at the end of the final stay.
pub fn to_points(t: &Trajectory, grid: &GridSpec) -> Vec<TimedPoint> {
    let slot_len = grid.slot_seconds();
    let at = |slot: u64, cell: Cell| {
        let c = grid.center_of(cell);
        TimedPoint {
            lat: c.lat,
            lon: c.lon,
            timestamp: (slot as f64 * slot_len).round() as i64,
        }
    };
    let mut pts: Vec<TimedPoint> = t.stays.iter().map(|s| at(s.start_slot, s.cell)).collect();
    if let Some(last) = t.stays.last() {
        pts.push(at(last.start_slot + last.duration_slots as u64, last.cell));
    }
    pts
}

/// Distances in meters between consecutive stays.
///
/// Zero-distance transitions are kept unless `exclude_zero` is set.
pub fn travel_distances(t: &Trajectory, grid: &GridSpec, exclude_zero: bool) -> Vec<f64> {
    t.stays
        .windows(2)
        .map(|w| grid.cell_distance_m(w[0].cell, w[1].cell))
        .filter(|d| !(exclude_zero && *d == 0.0))
        .collect()
}
