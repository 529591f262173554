//! Commands behind the `mobsim` binary.
//!
//! Every command that writes a run directory also writes
//! `config.resolved`, the fully populated configuration it ran with.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;
use crate::evaluate::{evaluate, write_plot_data};
use crate::generator::UserStatus;
use crate::grid::GridSpec;
use crate::guidance::{make_target, GuidanceConfig, MeasureSet, SharedDataType, TargetSpec};
use crate::io;
use crate::measures::{fit_exploration, fit_preferential_return_pooled, TruncatedPowerLawFit};
use crate::optimizer::{Environment, PromptEnvironment, Search};
use crate::scaleout;
use crate::strategist::{
    analyze_gaps, build_action_space, build_action_space_external, validate_actions, ActionId, AdjustmentAction,
    PromptRewriter,
};
use crate::types::Trajectory;

pub mod config;

pub use config::{PopulationConfig, RunConfig, RESOLVED_CONFIG};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_GENERATION: u8 = 3;
pub const EXIT_SEARCH: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "mobsim", version, about = "Measure-guided prompt adjustment for synthetic mobility")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory (for `extend`, a `.json` path is the output file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Fail when any individual fails to generate.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate trajectories for a prompt set.
    Generate {
        /// Prompt set to generate from instead of the configured one.
        #[arg(long)]
        prompts: Option<PathBuf>,
    },
    /// Derive a target file from reference trajectories.
    MakeTarget {
        /// Reference trajectory CSV.
        #[arg(long)]
        trajectories: PathBuf,
        /// sd1, sd2 or sd3.
        #[arg(long, default_value = "sd1")]
        shared_data_type: SharedDataType,
    },
    /// Search for a prompt set whose trajectories match a target.
    Optimize {
        /// Target file written by `make-target`.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Must agree with the target file when given.
        #[arg(long)]
        shared_data_type: Option<SharedDataType>,
        /// Total number of search iterations.
        #[arg(long)]
        budget: Option<u32>,
        /// Continue the run stored in this directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Action space file to use instead of gap analysis.
        #[arg(long)]
        actions: Option<PathBuf>,
        /// Root prompt set instead of the configured population.
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// Reference trajectories for the evaluation report of the result.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Extend an optimized subset prompt set to a full population.
    Extend {
        /// Optimized subset prompt set.
        #[arg(long)]
        optimized: PathBuf,
        /// CSV with header `id,key1,key2,...`.
        #[arg(long)]
        profiles: PathBuf,
    },
    /// Compare simulated trajectories against reference trajectories.
    Evaluate {
        /// Simulated trajectory CSV.
        #[arg(long)]
        sim: PathBuf,
        /// Reference trajectory CSV.
        #[arg(long)]
        reference: PathBuf,
    },
    /// Print the measures and fitted laws of a trajectory file.
    Measure {
        /// Trajectory CSV.
        #[arg(long)]
        trajectories: PathBuf,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::InvalidGrid(_) | Error::InvalidGuidance(_) | Error::InvalidTarget(_) => {
                EXIT_CONFIG
            }
            Error::Backend(_) => EXIT_GENERATION,
            Error::Search(_) => EXIT_SEARCH,
            _ => EXIT_FAILURE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn fail(code: u8, message: impl Into<String>) -> CliError {
    CliError {
        code,
        message: message.into(),
    }
}

fn resolve_config(cli: &Cli, fallback_dir: Option<&Path>) -> CliResult<RunConfig> {
    let mut cfg = match (&cli.config, fallback_dir) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(d)) if d.join(RESOLVED_CONFIG).exists() => RunConfig::load(&d.join(RESOLVED_CONFIG))?,
        _ => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("run"))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate { prompts } => cmd_generate(&cli, prompts.as_deref()),
        Command::MakeTarget {
            trajectories,
            shared_data_type,
        } => cmd_make_target(&cli, trajectories, *shared_data_type),
        Command::Optimize { .. } => cmd_optimize(&cli),
        Command::Extend { optimized, profiles } => cmd_extend(&cli, optimized, profiles),
        Command::Evaluate { sim, reference } => cmd_evaluate(&cli, sim, reference),
        Command::Measure { trajectories } => cmd_measure(&cli, trajectories),
    }
}

#[derive(Serialize)]
struct UserReport<'a> {
    user_id: &'a str,
    #[serde(flatten)]
    status: &'a UserStatus,
}

fn cmd_generate(cli: &Cli, prompts: Option<&Path>) -> CliResult<()> {
    let mut cfg = resolve_config(cli, None)?;
    if let Some(p) = prompts {
        cfg.population.prompts = Some(p.to_path_buf());
    }
    cfg.validate()?;
    let out = out_dir(cli);
    cfg.persist(&out)?;
    let ps = cfg.root_prompts()?;
    io::write_prompt_set(&out.join("promptset.json"), &ps)?;
    io::write_prompt_set(&out.join("promptsets").join(format!("{}.json", ps.content_hash())), &ps)?;

    let res = cfg.backend().generate(&ps, &cfg.grid);
    let trajs = res.trajectories();
    io::write_trajectories_file(&out.join("trajectories").join("trajectories.csv"), &trajs, &cfg.grid)?;
    let report: Vec<UserReport> = res
        .results
        .iter()
        .map(|(u, r)| UserReport {
            user_id: u.as_str(),
            status: &r.status,
        })
        .collect();
    io::write_json(&out.join("generation_report.json"), &report)?;

    let failures = res.failures();
    for (u, s) in &failures {
        log::warn!("user {u} failed: {s:?}");
    }
    println!("generated {} of {} users into {}", trajs.len(), ps.len(), out.display());
    if !failures.is_empty() && (cli.strict || trajs.is_empty()) {
        return Err(fail(
            EXIT_GENERATION,
            format!("{} of {} users failed to generate", failures.len(), ps.len()),
        ));
    }
    Ok(())
}

fn cmd_make_target(cli: &Cli, trajectories: &Path, sdt: SharedDataType) -> CliResult<()> {
    let cfg = resolve_config(cli, None)?;
    cfg.validate()?;
    let out = out_dir(cli);
    cfg.persist(&out)?;
    let trajs = io::read_trajectories_file(trajectories, &cfg.grid)?;
    let spec = make_target(&trajs, sdt, &cfg.grid)?;
    let path = out.join("target.json");
    io::write_json(&path, &spec)?;
    println!("wrote {} objectives to {}", spec.objectives.len(), path.display());
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

/// Appends trace events to `trace.txt` as JSON lines and checkpoints the
/// search to `search.json`.
struct Checkpoint {
    dir: PathBuf,
    trace: File,
    written: usize,
}

impl Checkpoint {
    fn new(dir: &Path, s: &Search) -> crate::Result<Self> {
        let mut c = Checkpoint {
            dir: dir.to_path_buf(),
            trace: File::create(dir.join("trace.txt"))?,
            written: 0,
        };
        c.sync(s)?;
        Ok(c)
    }

    fn sync(&mut self, s: &Search) -> crate::Result<()> {
        for e in &s.trace[self.written..] {
            writeln!(self.trace, "{}", serde_json::to_string(e)?)?;
        }
        self.trace.flush()?;
        self.written = s.trace.len();
        let tmp = self.dir.join("search.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(s)?)?;
        std::fs::rename(tmp, self.dir.join("search.json"))?;
        Ok(())
    }
}

#[derive(Serialize)]
struct OptimizeSummary {
    root_state: String,
    root_r: f64,
    best_state: String,
    best_r: f64,
    iterations: u32,
    aborted_iterations: u32,
    failed_evaluations: u32,
    trajectories_generated: u64,
    actions: usize,
}

fn cmd_optimize(cli: &Cli) -> CliResult<()> {
    let Command::Optimize {
        target,
        shared_data_type,
        budget,
        resume,
        actions,
        prompts,
        reference,
    } = &cli.command
    else {
        unreachable!()
    };
    let out = match (&cli.out, resume) {
        (Some(o), _) => o.clone(),
        (None, Some(r)) => r.clone(),
        (None, None) => out_dir(cli),
    };
    let mut cfg = resolve_config(cli, resume.as_deref())?;
    if let Some(b) = budget {
        cfg.search.total_simulations = *b;
    }
    if let Some(p) = prompts {
        cfg.population.prompts = Some(p.clone());
    }
    cfg.validate()?;
    cfg.persist(&out)?;

    let target_path = match (target, resume) {
        (Some(t), _) => t.clone(),
        (None, Some(r)) => r.join("target.json"),
        (None, None) => return Err(fail(EXIT_CONFIG, "optimize needs --target")),
    };
    let spec: TargetSpec = read_json(&target_path)?;
    spec.validate()?;
    if let Some(sdt) = shared_data_type {
        if *sdt != spec.shared_data_type {
            return Err(fail(
                EXIT_CONFIG,
                format!("--shared-data-type {sdt:?} disagrees with the target's {:?}", spec.shared_data_type),
            ));
        }
    }
    io::write_json(&out.join("target.json"), &spec)?;
    let guidance = GuidanceConfig::new(spec, &cfg.guidance)?;

    let root = match resume {
        Some(r) if prompts.is_none() => io::read_prompt_set(&r.join("root_promptset.json"))?,
        _ => cfg.root_prompts()?,
    };
    io::write_prompt_set(&out.join("root_promptset.json"), &root)?;
    let mut env = PromptEnvironment::new(
        root,
        cfg.grid.clone(),
        guidance.clone(),
        cfg.backend(),
        &[],
        cfg.search.k_percent,
        cfg.seed,
    )?
    .with_store(out.join("promptsets"))?;
    if let Some(ep) = &cfg.rewrite_endpoint {
        env = env.with_rewriter(PromptRewriter::new(ep.clone().with_env_overrides()));
    }
    let root_id = env.root();
    let root_trajs = env.trajectories(&root_id)?;

    let action_path = actions.clone().or_else(|| {
        resume
            .as_ref()
            .map(|r| r.join("actions.json"))
            .filter(|p| p.exists())
    });
    let action_space: Vec<AdjustmentAction> = match action_path {
        Some(p) => read_json(&p)?,
        None => {
            let gaps = analyze_gaps(&guidance, &root_trajs, &cfg.grid, &cfg.strategist)?;
            io::write_json(&out.join("gaps.json"), &gaps)?;
            match &cfg.strategist_endpoint {
                Some(ep) => build_action_space_external(&gaps, &ep.clone().with_env_overrides(), &cfg.strategist, &cfg.grid),
                None => build_action_space(&gaps, &cfg.strategist),
            }
        }
    };
    validate_actions(&action_space)?;
    io::write_json(&out.join("actions.json"), &action_space)?;
    env.set_actions(&action_space);
    let ids: Vec<ActionId> = action_space.iter().map(|a| a.id).collect();

    let snapshot = resume.as_ref().map(|r| r.join("search.json")).filter(|p| p.exists());
    let mut search = match snapshot {
        Some(p) => {
            let mut s: Search = read_json(&p)?;
            if s.nodes.first().map(|n| &n.state) != Some(&root_id) {
                return Err(fail(EXIT_CONFIG, "resumed search does not start from this root prompt set"));
            }
            s.config.total_simulations = cfg.search.total_simulations;
            log::info!("resuming after {} iterations", s.iterations_done);
            s
        }
        None => Search::new(&mut env, &ids, cfg.search.clone())?,
    };
    let mut ck = Checkpoint::new(&out, &search)?;
    search.run(&mut env, |s| {
        log::info!(
            "iteration {} of {}: best R {:.6}",
            s.iterations_done,
            s.config.total_simulations,
            s.best_r
        );
        ck.sync(s)
    })?;
    ck.sync(&search)?;

    let best = env.prompts(&search.best_state)?;
    io::write_prompt_set(&out.join("best_promptset.json"), &best)?;
    let best_trajs = env.trajectories(&search.best_state)?;
    io::write_trajectories_file(&out.join("trajectories").join("root.csv"), &root_trajs, &cfg.grid)?;
    io::write_trajectories_file(&out.join("trajectories").join("best.csv"), &best_trajs, &cfg.grid)?;

    let root_eval = env.evaluation(&root_id)?;
    let best_eval = env.evaluation(&search.best_state)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out.join("report.csv"))
        .map_err(Error::from)?;
    let row = |name: &str, a: f64, b: f64| vec![name.to_owned(), format!("{a:.6}"), format!("{b:.6}")];
    w.write_record(["objective", "root", "best"]).map_err(Error::from)?;
    for (i, m) in guidance.measures().iter().enumerate() {
        w.write_record(row(m.name(), root_eval.gs[i], best_eval.gs[i])).map_err(Error::from)?;
    }
    w.write_record(row("R", root_eval.r, best_eval.r)).map_err(Error::from)?;
    w.flush().map_err(Error::from)?;

    let comparison: Vec<Trajectory> = match reference {
        Some(p) => io::read_trajectories_file(p, &cfg.grid)?,
        None => root_trajs.clone(),
    };
    let report = evaluate(&best_trajs, &comparison, &cfg.grid);
    report.write_csv(&out.join("evaluation.csv"))?;
    write_plot_data(&out.join("plots"), &best_trajs, &comparison, &cfg.grid)?;

    let summary = OptimizeSummary {
        root_state: root_id.0.clone(),
        root_r: search.root_r(),
        best_state: search.best_state.0.clone(),
        best_r: search.best_r,
        iterations: search.iterations_done,
        aborted_iterations: search.aborted_iterations,
        failed_evaluations: search.failed_evaluations,
        trajectories_generated: env.generations(),
        actions: action_space.len(),
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    println!(
        "R {:.6} -> {:.6} after {} iterations; best prompt set {}",
        summary.root_r, summary.best_r, summary.iterations, summary.best_state
    );
    Ok(())
}

fn cmd_extend(cli: &Cli, optimized: &Path, profiles: &Path) -> CliResult<()> {
    let cfg = resolve_config(cli, None)?;
    cfg.validate()?;
    let target = out_dir(cli);
    let (dir, file) = if target.extension().is_some_and(|e| e == "json") {
        let dir = target.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, target.clone())
    } else {
        (target.clone(), target.join("promptset.json"))
    };
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    cfg.persist(&dir)?;
    let ps = io::read_prompt_set(optimized)?;
    let full = scaleout::read_profiles_csv(profiles)?;
    let ext = scaleout::extend(&ps, &full)?;
    io::write_prompt_set(&file, &ext.prompts)?;
    println!(
        "assigned {} users from {} prompts (m = {}, {} by the greedy pass) into {}",
        ext.assignment.len(),
        ps.len(),
        ext.m,
        ext.greedy_assigned,
        file.display()
    );
    Ok(())
}

fn cmd_evaluate(cli: &Cli, sim: &Path, reference: &Path) -> CliResult<()> {
    let cfg = resolve_config(cli, None)?;
    cfg.validate()?;
    let out = out_dir(cli);
    cfg.persist(&out)?;
    let a = io::read_trajectories_file(sim, &cfg.grid)?;
    let b = io::read_trajectories_file(reference, &cfg.grid)?;
    let report = evaluate(&a, &b, &cfg.grid);
    report.write_csv(&out.join("report.csv"))?;
    io::write_json(&out.join("report.json"), &report)?;
    write_plot_data(&out.join("plots"), &a, &b, &cfg.grid)?;
    for m in &report.metrics {
        match m.value {
            Some(v) => println!("{:<22} {v:.6}", m.metric.name()),
            None => println!("{:<22} na", m.metric.name()),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MeasureSummary {
    trajectories: usize,
    stays: usize,
    distance_fit: Option<TruncatedPowerLawFit>,
    duration_fit: Option<TruncatedPowerLawFit>,
    zeta_median: Option<f64>,
    alpha_median: Option<f64>,
    gamma_pooled: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn measure_summary(trajs: &[Trajectory], grid: &GridSpec) -> MeasureSummary {
    let mut ms = MeasureSet::new(trajs, grid);
    MeasureSummary {
        trajectories: trajs.len(),
        stays: trajs.iter().map(|t| t.stays.len()).sum(),
        distance_fit: ms.distance_fit().ok(),
        duration_fit: ms.duration_fit().ok(),
        zeta_median: median(ms.zetas()),
        alpha_median: median(trajs.iter().filter_map(|t| fit_exploration(t).ok()).map(|f| f.alpha).collect()),
        gamma_pooled: fit_preferential_return_pooled(trajs).ok().map(|f| f.gamma),
    }
}

fn cmd_measure(cli: &Cli, trajectories: &Path) -> CliResult<()> {
    let cfg = resolve_config(cli, None)?;
    cfg.validate()?;
    let trajs = io::read_trajectories_file(trajectories, &cfg.grid)?;
    let s = measure_summary(&trajs, &cfg.grid);
    println!("{}", serde_json::to_string_pretty(&s).map_err(Error::from)?);
    Ok(())
}
