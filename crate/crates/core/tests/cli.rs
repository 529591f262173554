mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mobsim::generator::population;
use mobsim::{GridSpec, PromptSet};

fn mobsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobsim"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("MOBSIM_ENDPOINT")
        .env_remove("MOBSIM_TOKEN")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mobsim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = "seed = 4\n[population]\nusers = 12\ndays = 3\n";

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path
}

#[test]
fn generate_is_deterministic_per_seed() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let (a, b, c) = (d.path().join("a"), d.path().join("b"), d.path().join("c"));
    ok(&["generate", "--config", p(&cfg), "--out", p(&a)]);
    ok(&["generate", "--config", p(&cfg), "--out", p(&b)]);
    ok(&["generate", "--config", p(&cfg), "--seed", "5", "--out", p(&c)]);
    let read = |dir: &Path| std::fs::read_to_string(dir.join("trajectories/trajectories.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let resolved = std::fs::read_to_string(a.join("config.resolved")).unwrap();
    assert!(resolved.contains("users = 12"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("generation_report.json")).unwrap()).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 12);
    assert!(report.as_array().unwrap().iter().all(|r| r["status"] == "ok"));
    let ps: PromptSet = serde_json::from_str(&std::fs::read_to_string(a.join("promptset.json")).unwrap()).unwrap();
    assert!(a.join("promptsets").join(format!("{}.json", ps.content_hash())).exists());
}

#[test]
fn bad_configuration_exits_with_code_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\nbogus = true\n").unwrap();
    let out = mobsim(&["generate", "--config", p(&cfg), "--out", p(&d.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, "[search]\nmax_depth = 0\n").unwrap();
    let out = mobsim(&["generate", "--config", p(&cfg), "--out", p(&d.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn anonymous_data_cannot_make_a_user_level_target() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let gen = d.path().join("gen");
    ok(&["generate", "--config", p(&cfg), "--out", p(&gen)]);
    let csv = std::fs::read_to_string(gen.join("trajectories/trajectories.csv")).unwrap();
    let anon: String = csv
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { format!("{l}\n") } else { format!("{}\n", &l[l.find(',').unwrap()..]) })
        .collect();
    let anon_path = d.path().join("anon.csv");
    std::fs::write(&anon_path, anon).unwrap();
    let out = mobsim(&["make-target", "--trajectories", p(&anon_path), "--out", p(&d.path().join("t1"))]);
    assert_eq!(out.status.code(), Some(2));
    ok(&[
        "make-target",
        "--trajectories",
        p(&anon_path),
        "--shared-data-type",
        "sd2",
        "--out",
        p(&d.path().join("t2")),
    ]);
    let spec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("t2/target.json")).unwrap()).unwrap();
    assert_eq!(spec["shared_data_type"], "sd2");
}

/// Reference run with another seed and its SD1 target.
fn target_fixture(dir: &Path, cfg: &Path) -> (PathBuf, PathBuf) {
    let reference = dir.join("reference");
    ok(&["generate", "--config", p(cfg), "--seed", "99", "--out", p(&reference)]);
    let refs = reference.join("trajectories/trajectories.csv");
    ok(&["make-target", "--config", p(cfg), "--trajectories", p(&refs), "--out", p(&reference)]);
    (reference.join("target.json"), refs)
}

fn search_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("search.json")).unwrap()).unwrap()
}

#[test]
fn optimize_writes_a_complete_run_and_resumes_exactly() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let (target, refs) = target_fixture(d.path(), &cfg);

    let full = d.path().join("full");
    ok(&[
        "optimize", "--config", p(&cfg), "--target", p(&target), "--budget", "5",
        "--reference", p(&refs), "--out", p(&full),
    ]);
    for f in [
        "config.resolved", "target.json", "root_promptset.json", "gaps.json", "actions.json",
        "search.json", "trace.txt", "best_promptset.json", "trajectories/root.csv",
        "trajectories/best.csv", "report.csv", "evaluation.csv", "summary.json",
        "plots/radius_ccdf.csv", "plots/circadian.csv",
    ] {
        assert!(full.join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(full.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["iterations"], 5);
    assert!(summary["best_r"].as_f64().unwrap() <= summary["root_r"].as_f64().unwrap());
    let best: PromptSet =
        serde_json::from_str(&std::fs::read_to_string(full.join("best_promptset.json")).unwrap()).unwrap();
    assert_eq!(best.content_hash().0, summary["best_state"].as_str().unwrap());
    let report = std::fs::read_to_string(full.join("report.csv")).unwrap();
    assert!(report.starts_with("objective,root,best\nradius,"));
    assert!(report.contains("\nR,"));

    let split = d.path().join("split");
    ok(&["optimize", "--config", p(&cfg), "--target", p(&target), "--budget", "2", "--out", p(&split)]);
    assert_eq!(search_json(&split)["iterations_done"], 2);
    ok(&["optimize", "--resume", p(&split), "--budget", "5"]);
    assert_eq!(search_json(&split), search_json(&full));
    let lines = std::fs::read_to_string(split.join("trace.txt")).unwrap().lines().count();
    assert_eq!(lines, search_json(&full)["trace"].as_array().unwrap().len());
}

#[test]
fn optimize_rejects_a_mismatched_shared_data_type() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let (target, _) = target_fixture(d.path(), &cfg);
    let out = mobsim(&[
        "optimize", "--config", p(&cfg), "--target", p(&target), "--shared-data-type", "sd3",
        "--out", p(&d.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_and_measure_report_on_trajectory_files() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let gen = d.path().join("gen");
    ok(&["generate", "--config", p(&cfg), "--out", p(&gen)]);
    let csv = gen.join("trajectories/trajectories.csv");
    let ev = d.path().join("ev");
    let out = ok(&["evaluate", "--sim", p(&csv), "--reference", p(&csv), "--out", p(&ev)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("radius"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    for m in report["metrics"].as_array().unwrap() {
        if let Some(v) = m["value"].as_f64() {
            assert!(v.abs() < 1e-12, "{m}");
        }
    }
    assert!(ev.join("report.csv").exists());
    let out = ok(&["measure", "--trajectories", p(&csv)]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["trajectories"], 12);
}

#[test]
fn extend_writes_a_full_prompt_set() {
    let d = tempfile::tempdir().unwrap();
    let g = GridSpec::default();
    let docs = population::default_prompts(40, 2, &g, 6);
    let profiles: Vec<_> = docs.iter().map(|d| d.profile.clone()).collect();
    let prof_path = d.path().join("profiles.csv");
    mobsim::scaleout::write_profiles_csv(&prof_path, &profiles).unwrap();
    let subset = PromptSet::new(1, docs[..10].to_vec()).unwrap();
    let sub_path = d.path().join("subset.json");
    mobsim::io::write_prompt_set(&sub_path, &subset).unwrap();
    let out_file = d.path().join("ext/full.json");
    ok(&["extend", "--optimized", p(&sub_path), "--profiles", p(&prof_path), "--out", p(&out_file)]);
    let full: PromptSet = mobsim::io::read_prompt_set(&out_file).unwrap();
    assert_eq!(full.len(), 40);
    let out_dir = d.path().join("ext2");
    ok(&["extend", "--optimized", p(&sub_path), "--profiles", p(&prof_path), "--out", p(&out_dir)]);
    assert_eq!(mobsim::io::read_prompt_set(&out_dir.join("promptset.json")).unwrap(), full);
}

#[test]
fn strict_generation_fails_when_the_backend_fails() {
    let mock = common::MockEndpoint::start(|_, _| (500, "down".into()));
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("ext.toml");
    std::fs::write(
        &cfg,
        format!(
            "{SMALL}[generator]\nkind = \"external\"\nurl = \"{}\"\nretries = 0\nbackoff_ms = 1\n",
            mock.url
        ),
    )
    .unwrap();
    let out = mobsim(&["generate", "--config", p(&cfg), "--out", p(&d.path().join("g"))]);
    assert_eq!(out.status.code(), Some(3));
    let report = std::fs::read_to_string(d.path().join("g/generation_report.json")).unwrap();
    assert!(report.contains("backend_error"));
}
