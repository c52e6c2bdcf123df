//! Scenario files, the batch CLI, CSV and summary reports, point cloud dumps
//! and replay.

mod report;
mod scenario;

pub use report::{fmt_float, read_csv, summarize, summary_csv, summary_text, write_csv, ReportRow, COLUMNS};
pub use scenario::{
    parse_scenario, BinSection, ScenarioError, ScenarioFile, SeedRange, BUNDLED, SCENARIO_VERSION,
};

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::pipeline::{run_episode_traced, EpisodeReport, EpisodeTrace, PipelineConfig, Variant};
use crate::world::{
    parse_action_log, render_point_cloud, replay, write_action_log, write_ply, BinId, WorldAction,
    WorldSnapshot, WorldState,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PACKSIM_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "packsim_out";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Internal(_) => 2,
        }
    }
}

impl From<ScenarioError> for HarnessError {
    fn from(e: ScenarioError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Internal(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "packsim", version, about = "Pick, topple, push and pack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a batch of episodes for each variant and write the reports.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long, default_value = "default_soap")]
        scenario: PathBuf,
        /// Comma-separated variants; the scenario's list when omitted.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<Variant>>,
        /// Inclusive seed range `a..b`; the scenario's range when omitted.
        #[arg(long)]
        seeds: Option<SeedRange>,
        /// Per-episode CSV; `report.csv` in the output directory by default.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary CSV; next to the report by default.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Write one PLY per sensing step under `clouds/`.
        #[arg(long)]
        dump_clouds: bool,
        /// Write initial snapshot, action log and final snapshot per episode
        /// under `logs/`.
        #[arg(long)]
        save_logs: bool,
    },
    /// Replay an action log from a snapshot and print the final snapshot.
    Replay {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Write the final snapshot here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a bundled scenario.
    Scenario {
        #[arg(default_value = "default_soap")]
        name: String,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 on configuration errors, 2 on
/// internal errors.
pub fn cli_run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| execute(cli.command)));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("packsim: {e}");
            e.exit_code()
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            eprintln!("packsim: internal error: {msg}");
            2
        }
    }
}

fn execute(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Run {
            scenario,
            variants,
            seeds,
            out,
            summary,
            dump_clouds,
            save_logs,
        } => {
            let file = parse_scenario(&scenario)?;
            let opts = RunOptions {
                variants: variants.unwrap_or_else(|| file.run.variants.clone()),
                seeds: seeds.unwrap_or(file.run.seeds),
                out,
                summary,
                dump_clouds,
                save_logs,
            };
            let summary = run_scenario(&file, &opts)?;
            print!("{summary}");
            Ok(())
        }
        Command::Replay { snapshot, log, out } => {
            let snap = fs::read_to_string(&snapshot).map_err(|e| HarnessError::Config(format!("{}: {e}", snapshot.display())))?;
            let text = fs::read_to_string(&log).map_err(|e| HarnessError::Config(format!("{}: {e}", log.display())))?;
            let final_text = replay_files(&snap, &text)?;
            match out {
                Some(p) => fs::write(&p, final_text).map_err(|e| io_err(&p, e)),
                None => {
                    print!("{final_text}");
                    Ok(())
                }
            }
        }
        Command::Scenario { name } => {
            let (_, text) = BUNDLED
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| HarnessError::Config(format!("no bundled scenario named {name:?}")))?;
            print!("{text}");
            Ok(())
        }
    }
}

/// Final snapshot text after replaying `log_text` on `snapshot_text`.
pub fn replay_files(snapshot_text: &str, log_text: &str) -> Result<String, HarnessError> {
    let log = parse_action_log(log_text).map_err(|e| HarnessError::Config(e.to_string()))?;
    let world = replay(snapshot_text, &log).map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(world.snapshot())
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub variants: Vec<Variant>,
    pub seeds: SeedRange,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub dump_clouds: bool,
    pub save_logs: bool,
}

fn default_out_dir(file: &ScenarioFile) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .or_else(|| file.run.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

/// Runs every (variant, seed) episode of `file`, writes the report CSV, the
/// summary CSV and the requested artifacts, and returns the text summary.
pub fn run_scenario(file: &ScenarioFile, opts: &RunOptions) -> Result<String, HarnessError> {
    let base = file.to_config()?;
    if opts.variants.is_empty() {
        return Err(HarnessError::Config("no variants given".into()));
    }
    let out = opts
        .out
        .clone()
        .unwrap_or_else(|| default_out_dir(file).join("report.csv"));
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let summary_path = opts
        .summary
        .clone()
        .unwrap_or_else(|| out.with_extension("summary.csv"));

    let mut variants = opts.variants.clone();
    variants.sort();
    variants.dedup();
    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|v| opts.seeds.iter().map(move |s| (*v, s)))
        .collect();
    let traces: Vec<Result<EpisodeTrace, String>> = jobs
        .par_iter()
        .map(|(v, s)| run_episode_traced(&base.with_variant(*v), *s).map_err(|e| e.to_string()))
        .collect();

    let mut reports = Vec::with_capacity(jobs.len());
    for ((v, s), t) in jobs.iter().zip(&traces) {
        match t {
            Ok(t) => reports.push(t.report.clone()),
            Err(e) => return Err(HarnessError::Config(format!("{v} seed {s}: {e}"))),
        }
    }

    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    }
    let f = fs::File::create(&out).map_err(|e| io_err(&out, e))?;
    write_csv(&reports, BufWriter::new(f)).map_err(|e| io_err(&out, e))?;
    let aggs = summarize(&reports, base.grid.count());
    fs::write(&summary_path, summary_csv(&aggs)).map_err(|e| io_err(&summary_path, e))?;

    for t in traces.into_iter().flatten() {
        let cfg = base.with_variant(t.report.variant);
        let stem = format!("{}_s{}", t.report.variant, t.report.seed);
        if opts.save_logs {
            save_logs(&dir.join("logs"), &stem, &t)?;
        }
        if opts.dump_clouds {
            dump_clouds(&dir.join("clouds"), &stem, &cfg, &t)?;
        }
    }
    Ok(summary_text(&aggs))
}

fn save_logs(dir: &Path, stem: &str, t: &EpisodeTrace) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let files = [
        (format!("{stem}.initial.json"), t.simulation.initial_snapshot.clone()),
        (format!("{stem}.actions.jsonl"), write_action_log(&t.simulation.log)),
        (format!("{stem}.final.json"), t.simulation.world.snapshot()),
    ];
    for (name, text) in files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

/// Re-renders every sensing step of an episode from its log and writes one
/// PLY each. Returns the number of files written.
pub fn dump_clouds(dir: &Path, stem: &str, cfg: &PipelineConfig, t: &EpisodeTrace) -> Result<usize, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut world: WorldState = WorldSnapshot::parse(&t.simulation.initial_snapshot)
        .map_err(|e| HarnessError::Internal(e.to_string()))?
        .world;
    let mut count = 0;
    for action in &t.simulation.log {
        if let WorldAction::Sense { bin, seed } = action {
            let (b, tag) = match bin {
                BinId::Source => (&cfg.layout.source, "source"),
                BinId::Goal => (&cfg.layout.goal, "goal"),
            };
            let cam = cfg.camera.over(b, cfg.noise.depth_sigma);
            let cloud = render_point_cloud(&world, &cam, *seed);
            let p = dir.join(format!("{stem}_{count:04}_{tag}.ply"));
            let f = fs::File::create(&p).map_err(|e| io_err(&p, e))?;
            let mut w = BufWriter::new(f);
            write_ply(&cloud, &mut w).and_then(|_| w.flush()).map_err(|e| io_err(&p, e))?;
            count += 1;
        } else {
            world
                .apply(action)
                .map_err(|e| HarnessError::Internal(format!("replaying {stem}: {e}")))?;
        }
    }
    Ok(count)
}

/// Convenience for library users: reports of one scenario run, in variant
/// then seed order, without touching the filesystem.
pub fn run_reports(file: &ScenarioFile, variants: &[Variant], seeds: SeedRange) -> Result<Vec<EpisodeReport>, HarnessError> {
    let base = file.to_config()?;
    let mut out = Vec::new();
    for v in variants {
        let seeds = seeds.to_vec();
        out.extend(crate::pipeline::run_batch(&base.with_variant(*v), &seeds).reports);
    }
    Ok(out)
}
