use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mobsim_ffi::*;

fn last_error() -> String {
    let p = mobsim_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

struct Session {
    grid: *mut MobsimGrid,
    prompts: *mut MobsimPromptSet,
    trajs: *mut MobsimTrajectories,
}

impl Session {
    fn new(users: usize, seed: u64) -> Self {
        let mut s = Session { grid: ptr::null_mut(), prompts: ptr::null_mut(), trajs: ptr::null_mut() };
        unsafe {
            assert_eq!(mobsim_grid_default(&mut s.grid), MobsimStatus::Ok);
            assert_eq!(mobsim_promptset_default(users, 3, s.grid, seed, &mut s.prompts), MobsimStatus::Ok);
            let mut failures = usize::MAX;
            assert_eq!(mobsim_generate(s.prompts, s.grid, &mut s.trajs, &mut failures), MobsimStatus::Ok);
            assert_eq!(failures, 0);
        }
        s
    }

    fn measure(&self, m: MobsimMeasure) -> Vec<f64> {
        let mut n = 0usize;
        unsafe {
            let status = mobsim_trajectories_measure(self.trajs, self.grid, m, ptr::null_mut(), 0, &mut n);
            let want = if n == 0 { MobsimStatus::Ok } else { MobsimStatus::BufferTooSmall };
            assert_eq!(status, want);
            let mut buf = vec![0.0; n];
            let mut got = 0usize;
            assert_eq!(
                mobsim_trajectories_measure(self.trajs, self.grid, m, buf.as_mut_ptr(), n, &mut got),
                MobsimStatus::Ok
            );
            assert_eq!(got, n);
            buf
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        unsafe {
            mobsim_trajectories_free(self.trajs);
            mobsim_promptset_free(self.prompts);
            mobsim_grid_free(self.grid);
        }
    }
}

#[test]
fn generate_and_measure_through_handles() {
    let s = Session::new(8, 3);
    let mut n = 0;
    unsafe {
        assert_eq!(mobsim_trajectories_len(s.trajs, &mut n), MobsimStatus::Ok);
    }
    assert_eq!(n, 8);
    let radii = s.measure(MobsimMeasure::Radius);
    assert_eq!(radii.len(), 8);
    assert!(radii.iter().all(|r| r.is_finite() && *r >= 0.0));
    let durations = s.measure(MobsimMeasure::StayDuration);
    assert!(durations.len() >= 8 * 3);
    assert!(!s.measure(MobsimMeasure::TravelDistance).is_empty());
}

#[test]
fn short_buffers_report_the_needed_length() {
    let s = Session::new(4, 1);
    let mut buf = [0.0; 2];
    let mut n = 0;
    let status = unsafe {
        mobsim_trajectories_measure(s.trajs, s.grid, MobsimMeasure::Radius, buf.as_mut_ptr(), 2, &mut n)
    };
    assert_eq!(status, MobsimStatus::BufferTooSmall);
    assert_eq!(n, 4);
    assert_eq!(buf, [0.0, 0.0]);
    assert!(last_error().contains("4"));
}

#[test]
fn files_round_trip_and_evaluate_to_zero() {
    let s = Session::new(6, 9);
    let dir = tempfile::tempdir().unwrap();
    let csv = cpath(&dir.path().join("t.csv"));
    let json = cpath(&dir.path().join("p.json"));
    unsafe {
        assert_eq!(mobsim_trajectories_write_csv(s.trajs, s.grid, csv.as_ptr()), MobsimStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(mobsim_trajectories_read_csv(csv.as_ptr(), s.grid, &mut back), MobsimStatus::Ok);

        let mut out = ptr::null_mut();
        assert_eq!(mobsim_evaluate_json(back, s.trajs, s.grid, &mut out), MobsimStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(CStr::from_ptr(out).to_str().unwrap()).unwrap();
        mobsim_string_free(out);
        for m in report["metrics"].as_array().unwrap() {
            if let Some(v) = m["value"].as_f64() {
                assert!(v.abs() < 1e-12, "{m}");
            }
        }
        mobsim_trajectories_free(back);

        assert_eq!(mobsim_promptset_write(s.prompts, json.as_ptr()), MobsimStatus::Ok);
        let mut ps = ptr::null_mut();
        assert_eq!(mobsim_promptset_read(json.as_ptr(), &mut ps), MobsimStatus::Ok);
        let (mut h1, mut h2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(mobsim_promptset_hash(ps, &mut h1), MobsimStatus::Ok);
        assert_eq!(mobsim_promptset_hash(s.prompts, &mut h2), MobsimStatus::Ok);
        assert_eq!(CStr::from_ptr(h1), CStr::from_ptr(h2));
        assert_eq!(CStr::from_ptr(h1).to_bytes().len(), 32);
        mobsim_string_free(h1);
        mobsim_string_free(h2);
        let mut n = 0;
        assert_eq!(mobsim_promptset_len(ps, &mut n), MobsimStatus::Ok);
        assert_eq!(n, 6);
        mobsim_promptset_free(ps);
    }
}

#[test]
fn distances_match_hand_values() {
    let mut v = f64::NAN;
    unsafe {
        // ln(0 + 1) = 0 against ln(e - 1 + 1) = 1
        let a = [0.0, 0.0];
        let b = [std::f64::consts::E - 1.0; 2];
        assert_eq!(mobsim_w1_log(a.as_ptr(), 2, b.as_ptr(), 2, 1.0, &mut v), MobsimStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        // survival functions differ by one on [1, 3)
        let (a, b) = ([1.0], [3.0]);
        assert_eq!(mobsim_l1_ccdf(a.as_ptr(), 1, b.as_ptr(), 1, false, 1.0, &mut v), MobsimStatus::Ok);
        assert!((v - 2.0).abs() < 1e-12);
        let gs = [0.0, 3.0];
        assert_eq!(mobsim_aggregate_r(gs.as_ptr(), 2, 1.0, &mut v), MobsimStatus::Ok);
        assert!((v - 2.0).abs() < 1e-12);
    }
}

#[test]
fn power_law_fit_recovers_a_pure_exponential_tail() {
    // with beta = 0 the law is exponential; draw by inversion on a fixed grid
    let kappa = 2000.0;
    let n = 20_000;
    let xs: Vec<f64> = (0..n).map(|i| -kappa * (1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
    let mut fit = MobsimPowerLawFit::default();
    let status = unsafe { mobsim_fit_truncated_power_law(xs.as_ptr(), xs.len(), 1.0, &mut fit) };
    assert_eq!(status, MobsimStatus::Ok, "{}", last_error());
    assert_eq!(fit.n, n);
    assert!(fit.beta.abs() < 0.05, "{fit:?}");
    assert!((fit.kappa / kappa - 1.0).abs() < 0.1, "{fit:?}");
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut v = 0.0;
    let mut grid = ptr::null_mut();
    unsafe {
        assert_eq!(mobsim_w1_log(ptr::null(), 3, [1.0].as_ptr(), 1, 1.0, &mut v), MobsimStatus::NullPointer);
        assert!(last_error().contains("null"));
        assert_eq!(
            mobsim_w1_log(ptr::null(), 0, [1.0].as_ptr(), 1, 1.0, &mut v),
            MobsimStatus::InsufficientData
        );
        assert_eq!(mobsim_aggregate_r(ptr::null(), 0, 1.0, &mut v), MobsimStatus::InvalidArgument);
        assert_eq!(mobsim_aggregate_r([-1.0].as_ptr(), 1, 1.0, &mut v), MobsimStatus::InvalidArgument);
        assert_eq!(mobsim_grid_new(-5.0, 0.0, 0.0, 48, &mut grid), MobsimStatus::Config);
        assert!(grid.is_null());
        let bad = [0xffu8, 0];
        let mut t = ptr::null_mut();
        assert_eq!(mobsim_grid_default(&mut grid), MobsimStatus::Ok);
        assert_eq!(
            mobsim_trajectories_read_csv(bad.as_ptr() as *const _, grid, &mut t),
            MobsimStatus::InvalidUtf8
        );
        let missing = CString::new("/nonexistent/dir/t.csv").unwrap();
        assert_eq!(mobsim_trajectories_read_csv(missing.as_ptr(), grid, &mut t), MobsimStatus::Io);
        assert!(t.is_null());
        mobsim_grid_free(grid);
        mobsim_grid_free(ptr::null_mut());
        mobsim_string_free(ptr::null_mut());
    }
    let version = unsafe { CStr::from_ptr(mobsim_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "mobsim.h"

int main(void) {
    MobsimGrid *grid = NULL;
    MobsimPromptSet *ps = NULL;
    MobsimTrajectories *t = NULL;
    size_t failures = 0, n = 0;
    if (mobsim_grid_default(&grid) != MOBSIM_STATUS_OK) return 1;
    if (mobsim_promptset_default(5, 2, grid, 11, &ps) != MOBSIM_STATUS_OK) return 2;
    if (mobsim_generate(ps, grid, &t, &failures) != MOBSIM_STATUS_OK || failures != 0) return 3;
    if (mobsim_trajectories_measure(t, grid, MOBSIM_MEASURE_RADIUS, NULL, 0, &n)
        != MOBSIM_STATUS_BUFFER_TOO_SMALL || n != 5) return 4;
    double r[5];
    if (mobsim_trajectories_measure(t, grid, MOBSIM_MEASURE_RADIUS, r, 5, &n) != MOBSIM_STATUS_OK) return 5;
    double v = 0;
    if (mobsim_aggregate_r(NULL, 0, 1.0, &v) != MOBSIM_STATUS_INVALID_ARGUMENT) return 6;
    if (mobsim_last_error() == NULL) return 7;
    printf("%s %zu\n", mobsim_version(), n);
    mobsim_trajectories_free(t);
    mobsim_promptset_free(ps);
    mobsim_grid_free(grid);
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let lib = profile_dir().join("libmobsim_ffi.a");
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let out = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-I"])
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "cc failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "smoke exited with {:?}", run.status.code());
    let text = String::from_utf8(run.stdout).unwrap();
    assert_eq!(text.trim(), format!("{} 5", env!("CARGO_PKG_VERSION")));
}
