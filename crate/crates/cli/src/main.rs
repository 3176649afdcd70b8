use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hapdrive_core::driver::{skill_params, DriverParams};
use hapdrive_core::experiment::*;
use hapdrive_core::geometry::{build_default_track, place_obstacles};
use hapdrive_core::sim::LeadCache;
use hapdrive_teleop::{serve_trial, ServerConfig, SessionConfig};

/// Exit status when every step ran but at least one trial was invalid.
const INVALID_TRIALS: u8 = 2;

#[derive(Parser)]
#[command(
    name = "hapdrive",
    version,
    about = "Haptic shared-control car-following simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the default configuration as TOML.
    Config,
    /// Print one subject's block order and obstacle seeds as JSON.
    Plan {
        #[arg(long, default_value_t = 0)]
        subject: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Run one headless trial and print its record.
    RunTrial(RunTrial),
    /// Run every subject's blocks and write records, aggregate.csv and manifest.json.
    RunExperiment(RunExperiment),
    /// Recompute aggregate.csv from the records of an experiment directory.
    Aggregate {
        dir: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a trial record and check the result matches.
    Replay { record: PathBuf },
    /// Serve one live trial over WebSocket and write its record when the lap ends.
    Serve(Serve),
    /// Write the track geometry and an obstacle layout as JSON.
    ExportTrack {
        #[arg(long, default_value_t = 0)]
        obstacle_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    master_seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.master_seed {
            cfg.master_seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunTrial {
    #[arg(long, default_value_t = 10.0)]
    speed: f64,
    #[arg(long, default_value_t = 0.0)]
    kp: f64,
    /// Driver skill in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    skill: f64,
    #[arg(long, default_value_t = 0)]
    driver_seed: u64,
    #[arg(long, default_value_t = 0)]
    obstacle_seed: u64,
    /// Keep the 200 Hz series in the record.
    #[arg(long)]
    series: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunExperiment {
    /// Re-run exactly the plans and config of an earlier manifest.json.
    #[arg(long, conflicts_with_all = ["cohort_size", "speed", "kp", "config", "master_seed"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    cohort_size: Option<usize>,
    /// Restrict to these speeds (repeatable).
    #[arg(long)]
    speed: Vec<f64>,
    /// Restrict to these gains (repeatable).
    #[arg(long)]
    kp: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Do not write per-trial records.
    #[arg(long)]
    no_records: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Serve {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value_t = 10.0)]
    speed: f64,
    #[arg(long, default_value_t = 200.0)]
    kp: f64,
    #[arg(long, default_value_t = 0)]
    obstacle_seed: u64,
    #[arg(long, default_value = "anonymous")]
    subject_tag: String,
    #[arg(long)]
    token: Option<String>,
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Simulated ticks per wall-clock tick.
    #[arg(long, default_value_t = 1)]
    speedup: u32,
    /// Pause after this long without input; 0 disables.
    #[arg(long, default_value_t = 200)]
    stale_ms: u64,
    #[arg(long)]
    auto_start: bool,
    /// Where to write the finished trial record.
    #[arg(long, default_value = "live_trial.json")]
    record_out: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run_trial_cmd(a: RunTrial) -> Result<bool> {
    let cfg = a.common.load()?;
    let condition = Condition::new(a.speed, a.kp)?;
    let driver: DriverParams = skill_params(a.skill, a.driver_seed);
    let trial = TrialConfig {
        keep_series: a.series,
        ..cfg.trial
    };
    let record = run_trial(
        &build_default_track(),
        &mut LeadCache::new(),
        TrialId {
            subject: 0,
            block: 0,
            trial: 0,
        },
        format!("simulated:skill={}", a.skill),
        TrialRole::Task,
        condition,
        a.obstacle_seed,
        TrialInput::Simulated { driver },
        &trial,
    );
    if let Some(e) = &record.error {
        log::error!("trial invalid: {e}");
    }
    write_or_print(a.out.as_deref(), &record.to_json()?)?;
    Ok(record.valid)
}

fn run_experiment_cmd(a: RunExperiment) -> Result<bool> {
    let outcome = match &a.manifest {
        Some(m) => {
            let manifest = Manifest::load(m)?;
            rerun_manifest(&manifest, Some(&a.out))?
        }
        None => {
            let mut cfg = a.common.load()?;
            if let Some(n) = a.cohort_size {
                cfg.cohort.size = n;
            }
            if !a.speed.is_empty() {
                cfg.filter.speeds = a.speed.clone();
            }
            if !a.kp.is_empty() {
                cfg.filter.gains = a.kp.clone();
            }
            if a.no_records {
                cfg.write_records = false;
            }
            // a filter value outside the design would silently select nothing
            for &s in &cfg.filter.speeds {
                Condition::new(s, GAINS[0])?;
            }
            for &k in &cfg.filter.gains {
                Condition::new(SPEEDS[0], k)?;
            }
            run_experiment(&cfg.plans(), &cfg, Some(&a.out))?
        }
    };
    let m = &outcome.manifest;
    eprintln!(
        "{} trials, {} task trials aggregated, {} invalid -> {}",
        m.trial_count,
        m.task_trials_aggregated,
        m.invalid.len(),
        a.out.display()
    );
    for id in &m.invalid {
        log::error!(
            "invalid trial: subject {} block {} trial {}",
            id.subject,
            id.block,
            id.trial
        );
    }
    Ok(m.invalid.is_empty())
}

fn replay_cmd(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let record = TrialRecord::from_json(&text)?;
    let again = replay(&record, &mut LeadCache::new());
    if again.metrics != record.metrics || again.valid != record.valid {
        bail!(
            "replay of {} does not reproduce its metrics",
            path.display()
        );
    }
    if record.series.is_some() && again.series != record.series {
        bail!("replay of {} does not reproduce its series", path.display());
    }
    eprintln!("replay matches");
    Ok(record.valid)
}

fn serve_cmd(a: Serve) -> Result<bool> {
    let base = a.common.load()?;
    let cfg = ServerConfig {
        session: SessionConfig {
            condition: Condition::new(a.speed, a.kp)?,
            obstacle_seed: a.obstacle_seed,
            trial: base.trial,
            subject_tag: a.subject_tag,
            ..SessionConfig::default()
        },
        speedup: a.speedup,
        stale_after_ms: (a.stale_ms > 0).then_some(a.stale_ms),
        token: a.token,
        auto_start: a.auto_start,
        static_dir: a.static_dir,
        ..ServerConfig::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let mut handle = serve_trial(cfg, a.addr).await?;
        eprintln!("cockpit at http://{}/ (trial socket /trial)", handle.addr);
        let record = tokio::select! {
            r = handle.wait_record() => r,
            _ = tokio::signal::ctrl_c() => None,
        };
        handle.shutdown().await;
        match record {
            Some(r) => {
                fs::write(&a.record_out, r.to_json()?)
                    .with_context(|| format!("writing {}", a.record_out.display()))?;
                eprintln!("record written to {}", a.record_out.display());
                Ok(r.valid)
            }
            None => bail!("server stopped before the trial finished"),
        }
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Config => {
            print!("{}", ExperimentConfig::default().to_toml());
            Ok(true)
        }
        Cmd::Plan { subject, common } => {
            let cfg = common.load()?;
            let plans = cfg.plans();
            let Some(plan) = plans.into_iter().find(|p| p.subject.id == subject) else {
                bail!(
                    "subject {subject} is outside the cohort of {}",
                    cfg.cohort.size
                );
            };
            println!("{}", serde_json::to_string_pretty(&plan)?);
            Ok(true)
        }
        Cmd::RunTrial(a) => run_trial_cmd(a),
        Cmd::RunExperiment(a) => run_experiment_cmd(a),
        Cmd::Aggregate { dir, out } => {
            let agg = aggregate_dir(&dir)?;
            let csv = agg.to_csv()?;
            match out {
                Some(p) => {
                    fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{csv}"),
            }
            Ok(true)
        }
        Cmd::Replay { record } => replay_cmd(&record),
        Cmd::Serve(a) => serve_cmd(a),
        Cmd::ExportTrack { obstacle_seed, out } => {
            let track = build_default_track::<f64>();
            let layout = track.layout(&place_obstacles(&track, obstacle_seed));
            write_or_print(out.as_deref(), &serde_json::to_string_pretty(&layout)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(INVALID_TRIALS),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
