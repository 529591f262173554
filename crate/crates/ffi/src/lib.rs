//! C ABI for the mobsim library.
//!
//! Objects cross the boundary as opaque handles created by a `*_new` /
//! `*_read` function and released with the matching `*_free`. Every
//! fallible function returns a [`MobsimStatus`]; on failure the message is
//! available from [`mobsim_last_error`] on the same thread until the next
//! failing call. Results are written through out-pointers, which are left
//! untouched on failure.
//!
//! Sample buffers follow one convention: the caller passes a buffer and its
//! capacity, the library always writes the required length to `out_len`,
//! and returns `MOBSIM_STATUS_BUFFER_TOO_SMALL` without writing when the
//! capacity is short. Passing a null buffer with capacity 0 is a length
//! query.
//!
//! Strings returned by the library are NUL-terminated UTF-8 and must be
//! released with [`mobsim_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use mobsim::evaluate::evaluate;
use mobsim::generator::{population, Backend};
use mobsim::grid::travel_distances;
use mobsim::guidance::{aggregate_r, l1_ccdf, w1_log, CcdfCoords, MeasureSet};
use mobsim::measures::fit_truncated_powerlaw;
use mobsim::{io, Error, GeoPoint, GridSpec, PromptSet, Trajectory};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MobsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    BufferTooSmall = 4,
    Io = 5,
    Parse = 6,
    InsufficientData = 7,
    Generation = 8,
    Config = 9,
    Search = 10,
    Panic = 11,
}

/// Which per-trajectory samples to extract.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MobsimMeasure {
    /// Radius of gyration per user, meters.
    Radius = 0,
    /// Pooled distances between consecutive stays, meters.
    TravelDistance = 1,
    /// Pooled stay durations, slots.
    StayDuration = 2,
    /// Zipf exponent per user with enough distinct locations.
    Zeta = 3,
}

/// Fitted truncated power law `(x + x0)^-beta * exp(-x / kappa)`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MobsimPowerLawFit {
    pub beta: f64,
    pub kappa: f64,
    pub x0: f64,
    pub loglik: f64,
    /// Positive samples used.
    pub n: usize,
}

/// Grid geometry and time resolution.
pub struct MobsimGrid(GridSpec);

/// A set of trajectories, one per user.
pub struct MobsimTrajectories(Vec<Trajectory>);

/// A prompt set: one structured prompt per user.
pub struct MobsimPromptSet(PromptSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MobsimStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => MobsimStatus::Io,
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => MobsimStatus::Parse,
            Error::InsufficientData(_) | Error::FitFailure(_) | Error::EmptyInput(_) => MobsimStatus::InsufficientData,
            Error::Backend(_) => MobsimStatus::Generation,
            Error::Config(_) | Error::InvalidGrid(_) | Error::InvalidGuidance(_) | Error::InvalidTarget(_) => {
                MobsimStatus::Config
            }
            Error::Search(_) => MobsimStatus::Search,
            _ => MobsimStatus::InvalidArgument,
        };
        Failure(code, e.to_string())
    }
}

type FfiResult = Result<(), Failure>;

fn null(what: &str) -> Failure {
    Failure(MobsimStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, turning errors and panics into a status and the thread's last
/// error message.
fn guard(f: impl FnOnce() -> FfiResult) -> MobsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MobsimStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MobsimStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(MobsimStatus::InvalidUtf8, "path is not valid UTF-8".into()))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn fill(values: &[f64], buf: *mut f64, cap: usize, out_len: *mut usize) -> FfiResult {
    *out(out_len, "out_len")? = values.len();
    if values.len() > cap {
        return Err(Failure(
            MobsimStatus::BufferTooSmall,
            format!("need room for {} values, got {cap}", values.len()),
        ));
    }
    if !values.is_empty() {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    }
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior NUL").into_raw()
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library; valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn mobsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn mobsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Release a string returned by the library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mobsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Create a grid of square `cell_size_m` cells anchored at
/// (`origin_lat`, `origin_lon`) with `slots_per_day` time slots.
#[no_mangle]
pub unsafe extern "C" fn mobsim_grid_new(
    cell_size_m: f64,
    origin_lat: f64,
    origin_lon: f64,
    slots_per_day: u32,
    out_grid: *mut *mut MobsimGrid,
) -> MobsimStatus {
    guard(|| {
        let slot = out(out_grid, "out_grid")?;
        let g = GridSpec::new(cell_size_m, GeoPoint { lat: origin_lat, lon: origin_lon }, slots_per_day)?;
        *slot = boxed(MobsimGrid(g));
        Ok(())
    })
}

/// The default grid: 500 m cells, 48 slots per day.
#[no_mangle]
pub unsafe extern "C" fn mobsim_grid_default(out_grid: *mut *mut MobsimGrid) -> MobsimStatus {
    guard(|| {
        *out(out_grid, "out_grid")? = boxed(MobsimGrid(GridSpec::default()));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobsim_grid_free(grid: *mut MobsimGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Read a trajectory CSV (`user_id,day,start_slot,duration_slots,cell_x,cell_y`).
#[no_mangle]
pub unsafe extern "C" fn mobsim_trajectories_read_csv(
    path: *const c_char,
    grid: *const MobsimGrid,
    out_trajectories: *mut *mut MobsimTrajectories,
) -> MobsimStatus {
    guard(|| {
        let slot = out(out_trajectories, "out_trajectories")?;
        let g = borrow(grid, "grid")?;
        let t = io::read_trajectories_file(&path_arg(path)?, &g.0)?;
        *slot = boxed(MobsimTrajectories(t));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobsim_trajectories_write_csv(
    trajectories: *const MobsimTrajectories,
    grid: *const MobsimGrid,
    path: *const c_char,
) -> MobsimStatus {
    guard(|| {
        let t = borrow(trajectories, "trajectories")?;
        let g = borrow(grid, "grid")?;
        io::write_trajectories_file(&path_arg(path)?, &t.0, &g.0)?;
        Ok(())
    })
}

/// Number of trajectories (users) in the set.
#[no_mangle]
pub unsafe extern "C" fn mobsim_trajectories_len(
    trajectories: *const MobsimTrajectories,
    out_len: *mut usize,
) -> MobsimStatus {
    guard(|| {
        *out(out_len, "out_len")? = borrow(trajectories, "trajectories")?.0.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobsim_trajectories_free(trajectories: *mut MobsimTrajectories) {
    if !trajectories.is_null() {
        drop(Box::from_raw(trajectories));
    }
}

/// Copy the samples of `measure` into `buf`.
#[no_mangle]
pub unsafe extern "C" fn mobsim_trajectories_measure(
    trajectories: *const MobsimTrajectories,
    grid: *const MobsimGrid,
    measure: MobsimMeasure,
    buf: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> MobsimStatus {
    guard(|| {
        let t = &borrow(trajectories, "trajectories")?.0;
        let g = &borrow(grid, "grid")?.0;
        let ms = MeasureSet::new(t, g);
        let values = match measure {
            MobsimMeasure::Radius => ms.radii(),
            MobsimMeasure::TravelDistance => t.iter().flat_map(|x| travel_distances(x, g, false)).collect(),
            MobsimMeasure::StayDuration => ms.durations(),
            MobsimMeasure::Zeta => ms.zetas(),
        };
        fill(&values, buf, cap, out_len)
    })
}

/// Compare two trajectory sets; writes the evaluation report as a JSON
/// string to `out_json`.
#[no_mangle]
pub unsafe extern "C" fn mobsim_evaluate_json(
    simulated: *const MobsimTrajectories,
    reference: *const MobsimTrajectories,
    grid: *const MobsimGrid,
    out_json: *mut *mut c_char,
) -> MobsimStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let a = &borrow(simulated, "simulated")?.0;
        let b = &borrow(reference, "reference")?.0;
        let g = &borrow(grid, "grid")?.0;
        let json = serde_json::to_string(&evaluate(a, b, g)).map_err(Error::from)?;
        *slot = c_string(json);
        Ok(())
    })
}

/// The built-in seeded population of `users` prompts over `days` days.
#[no_mangle]
pub unsafe extern "C" fn mobsim_promptset_default(
    users: usize,
    days: u32,
    grid: *const MobsimGrid,
    seed: u64,
    out_prompts: *mut *mut MobsimPromptSet,
) -> MobsimStatus {
    guard(|| {
        let slot = out(out_prompts, "out_prompts")?;
        let g = &borrow(grid, "grid")?.0;
        if users == 0 || days == 0 {
            return Err(Failure(MobsimStatus::InvalidArgument, "users and days must be positive".into()));
        }
        let ps = PromptSet::new(seed, population::default_prompts(users, days, g, seed))?;
        *slot = boxed(MobsimPromptSet(ps));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobsim_promptset_read(
    path: *const c_char,
    out_prompts: *mut *mut MobsimPromptSet,
) -> MobsimStatus {
    guard(|| {
        let slot = out(out_prompts, "out_prompts")?;
        *slot = boxed(MobsimPromptSet(io::read_prompt_set(&path_arg(path)?)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobsim_promptset_write(prompts: *const MobsimPromptSet, path: *const c_char) -> MobsimStatus {
    guard(|| {
        let ps = borrow(prompts, "prompts")?;
        io::write_prompt_set(&path_arg(path)?, &ps.0)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobsim_promptset_len(prompts: *const MobsimPromptSet, out_len: *mut usize) -> MobsimStatus {
    guard(|| {
        *out(out_len, "out_len")? = borrow(prompts, "prompts")?.0.len();
        Ok(())
    })
}

/// Content hash of the prompt set (hex), as a library-owned string.
#[no_mangle]
pub unsafe extern "C" fn mobsim_promptset_hash(
    prompts: *const MobsimPromptSet,
    out_hash: *mut *mut c_char,
) -> MobsimStatus {
    guard(|| {
        let slot = out(out_hash, "out_hash")?;
        *slot = c_string(borrow(prompts, "prompts")?.0.content_hash().0);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobsim_promptset_free(prompts: *mut MobsimPromptSet) {
    if !prompts.is_null() {
        drop(Box::from_raw(prompts));
    }
}

/// Generate trajectories with the built-in generator. Users that fail are
/// left out; their number goes to `out_failures` when it is not null.
#[no_mangle]
pub unsafe extern "C" fn mobsim_generate(
    prompts: *const MobsimPromptSet,
    grid: *const MobsimGrid,
    out_trajectories: *mut *mut MobsimTrajectories,
    out_failures: *mut usize,
) -> MobsimStatus {
    guard(|| {
        let slot = out(out_trajectories, "out_trajectories")?;
        let ps = &borrow(prompts, "prompts")?.0;
        let g = &borrow(grid, "grid")?.0;
        let res = Backend::Synthetic.generate(ps, g);
        if let Some(f) = out_failures.as_mut() {
            *f = res.failures().len();
        }
        *slot = boxed(MobsimTrajectories(res.trajectories()));
        Ok(())
    })
}

/// Maximum-likelihood truncated power law of `samples` with offset `x0`.
#[no_mangle]
pub unsafe extern "C" fn mobsim_fit_truncated_power_law(
    samples: *const f64,
    n: usize,
    x0: f64,
    out_fit: *mut MobsimPowerLawFit,
) -> MobsimStatus {
    guard(|| {
        let slot = out(out_fit, "out_fit")?;
        let f = fit_truncated_powerlaw(slice(samples, n, "samples")?, x0)?;
        *slot = MobsimPowerLawFit {
            beta: f.beta,
            kappa: f.kappa,
            x0: f.x0,
            loglik: f.loglik,
            n: f.n,
        };
        Ok(())
    })
}

/// 1-Wasserstein distance between `ln(x + eps)` of two samples.
#[no_mangle]
pub unsafe extern "C" fn mobsim_w1_log(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    eps: f64,
    out_value: *mut f64,
) -> MobsimStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        *slot = w1_log(slice(a, na, "a")?, slice(b, nb, "b")?, eps)?;
        Ok(())
    })
}

/// L1 distance between the CCDFs of two samples, in log coordinates when
/// `log_coords` is set.
#[no_mangle]
pub unsafe extern "C" fn mobsim_l1_ccdf(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    log_coords: bool,
    eps: f64,
    out_value: *mut f64,
) -> MobsimStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        let coords = if log_coords { CcdfCoords::Log } else { CcdfCoords::Linear };
        *slot = l1_ccdf(slice(a, na, "a")?, slice(b, nb, "b")?, coords, eps)?;
        Ok(())
    })
}

/// Geometric mean of `g_i + eps`.
#[no_mangle]
pub unsafe extern "C" fn mobsim_aggregate_r(gs: *const f64, n: usize, eps: f64, out_value: *mut f64) -> MobsimStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        let v = slice(gs, n, "gs")?;
        if v.is_empty() {
            return Err(Failure(MobsimStatus::InvalidArgument, "no objective distances".into()));
        }
        if v.iter().any(|g| !(g.is_finite() && *g >= 0.0)) || !(eps > 0.0) {
            return Err(Failure(
                MobsimStatus::InvalidArgument,
                "distances must be finite and non-negative, eps positive".into(),
            ));
        }
        *slot = aggregate_r(v, eps);
        Ok(())
    })
}
