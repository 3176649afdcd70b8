//! Headless reproduction of the study protocol: a 3x3 grid of (speed, Kp)
//! conditions, one block of ten trials per condition in a per-subject random
//! order, and persistence of every trial so it can be replayed bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{make_driver_cohort, Driver, DriverParams, SkillSpread};
use crate::geometry::{build_default_track, place_obstacles, Track};
use crate::metrics::{
    compute_metrics, MetricsConfig, Summary, TrialMetrics, TrialSeries, METRIC_NAMES,
};
use crate::sim::{run_headless, HeadlessHuman, LeadCache, SimConfig, SimError};

pub const SPEEDS: [f64; 3] = [10.0, 12.5, 15.0];
pub const GAINS: [f64; 3] = [0.0, 200.0, 500.0];
pub const TRIALS_PER_BLOCK: usize = 10;

/// Version tag stored in every record and manifest.
pub fn version_tag() -> String {
    format!("hapdrive-core {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("speed {0} m/s is not one of the study levels")]
    BadSpeed(f64),
    #[error("Kp {0} N/m is not one of the study levels")]
    BadGain(f64),
    #[error("invalid plan: {0}")]
    BadPlan(String),
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Config(#[from] toml::de::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("record cannot be replayed: {0}")]
    NotReplayable(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// SplitMix64 finalizer, used to derive independent streams from a master seed.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    /// m/s
    pub speed: f64,
    /// N/m
    #[serde(rename = "Kp")]
    pub kp: f64,
}

impl Condition {
    pub fn new(speed: f64, kp: f64) -> Result<Self, ExperimentError> {
        let c = Self { speed, kp };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !SPEEDS.contains(&self.speed) {
            return Err(ExperimentError::BadSpeed(self.speed));
        }
        if !GAINS.contains(&self.kp) {
            return Err(ExperimentError::BadGain(self.kp));
        }
        Ok(())
    }

    /// The nine conditions, speed-major.
    pub fn all() -> Vec<Condition> {
        SPEEDS
            .iter()
            .flat_map(|&speed| GAINS.iter().map(move |&kp| Condition { speed, kp }))
            .collect()
    }

    /// Position in [`Condition::all`].
    pub fn index(&self) -> usize {
        let si = SPEEDS.iter().position(|&s| s == self.speed).unwrap_or(0);
        let ki = GAINS.iter().position(|&k| k == self.kp).unwrap_or(0);
        si * GAINS.len() + ki
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialRole {
    Practice,
    Task,
    Washout,
}

pub const BLOCK_ROLES: [TrialRole; TRIALS_PER_BLOCK] = [
    TrialRole::Practice,
    TrialRole::Practice,
    TrialRole::Practice,
    TrialRole::Practice,
    TrialRole::Task,
    TrialRole::Task,
    TrialRole::Task,
    TrialRole::Task,
    TrialRole::Task,
    TrialRole::Washout,
];

/// How obstacle layouts are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutPolicy {
    /// Trial `i` of every block of every subject uses the same layout; layouts
    /// differ between the trials of a block.
    #[default]
    Shared,
    /// As `Shared`, but every subject gets their own set of layouts.
    PerSubject,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub layouts: LayoutPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub condition: Condition,
    pub roles: Vec<TrialRole>,
    pub obstacle_seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SubjectKind {
    Simulated { driver: DriverParams },
    LiveHuman { tag: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: u32,
    #[serde(flatten)]
    pub kind: SubjectKind,
}

impl Subject {
    pub fn simulated(id: u32, driver: DriverParams) -> Self {
        Self {
            id,
            kind: SubjectKind::Simulated { driver },
        }
    }

    pub fn live(id: u32, tag: impl Into<String>) -> Self {
        Self {
            id,
            kind: SubjectKind::LiveHuman { tag: tag.into() },
        }
    }

    pub fn tag(&self) -> String {
        match &self.kind {
            SubjectKind::Simulated { .. } => "simulated".into(),
            SubjectKind::LiveHuman { tag } => format!("live-human:{tag}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub subject: Subject,
    pub master_seed: u64,
    pub blocks: Vec<BlockPlan>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.blocks.len() != 9 {
            return Err(ExperimentError::BadPlan(format!(
                "{} blocks, expected 9",
                self.blocks.len()
            )));
        }
        let mut seen = [false; 9];
        for b in &self.blocks {
            b.condition.validate()?;
            let i = b.condition.index();
            if seen[i] {
                return Err(ExperimentError::BadPlan(format!(
                    "condition {:?} repeated",
                    b.condition
                )));
            }
            seen[i] = true;
            if b.roles != BLOCK_ROLES {
                return Err(ExperimentError::BadPlan(
                    "block roles out of protocol order".into(),
                ));
            }
            if b.obstacle_seeds.len() != TRIALS_PER_BLOCK {
                return Err(ExperimentError::BadPlan(
                    "one obstacle seed per trial required".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn order(&self) -> Vec<Condition> {
        self.blocks.iter().map(|b| b.condition).collect()
    }
}

/// Randomized block order and per-trial layouts for one subject.
pub fn make_plan(subject: Subject, master_seed: u64, protocol: &ProtocolConfig) -> ExperimentPlan {
    let mut order = Condition::all();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(master_seed, u64::from(subject.id)));
    order.shuffle(&mut rng);
    let layout_root = match protocol.layouts {
        LayoutPolicy::Shared => mix(master_seed, u64::MAX),
        LayoutPolicy::PerSubject => mix(mix(master_seed, u64::MAX), u64::from(subject.id)),
    };
    let seeds: Vec<u64> = (0..TRIALS_PER_BLOCK as u64)
        .map(|i| mix(layout_root, i))
        .collect();
    let blocks = order
        .into_iter()
        .map(|condition| BlockPlan {
            condition,
            roles: BLOCK_ROLES.to_vec(),
            obstacle_seeds: seeds.clone(),
        })
        .collect();
    ExperimentPlan {
        subject,
        master_seed,
        blocks,
    }
}

/// Where the human input of a trial comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrialInput {
    Simulated {
        driver: DriverParams,
    },
    /// Latched normalized handle position per tick.
    PositionLog {
        positions: Vec<f64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub sim: SimConfig,
    pub metrics: MetricsConfig<f64>,
    /// Keep the full 200 Hz series in the record.
    pub keep_series: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialId {
    pub subject: u32,
    pub block: usize,
    pub trial: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub version: String,
    pub id: TrialId,
    pub subject_tag: String,
    pub role: TrialRole,
    pub condition: Condition,
    pub obstacle_seed: u64,
    pub input: TrialInput,
    pub config: TrialConfig,
    pub valid: bool,
    pub error: Option<String>,
    pub metrics: Option<TrialMetrics<f64>>,
    pub series: Option<TrialSeries<f64>>,
}

impl TrialRecord {
    pub fn to_json(&self) -> Result<String, ExperimentError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(s)?)
    }

    /// Structural checks every valid record satisfies.
    pub fn check(&self) -> Result<(), String> {
        self.condition.validate().map_err(|e| e.to_string())?;
        if !self.valid {
            return Err(self.error.clone().unwrap_or_else(|| "invalid trial".into()));
        }
        let m = self
            .metrics
            .as_ref()
            .ok_or("valid record without metrics")?;
        let nonneg = [
            m.steering_jerk_rms,
            m.path_jerk_rms,
            m.off_road_mean_duration,
            m.max_feedback_force,
        ];
        if nonneg
            .iter()
            .chain(m.obstacle_margins.iter())
            .any(|v| !(*v >= 0.0))
        {
            return Err("negative or non-finite metric".into());
        }
        if m.max_feedback_force > self.config.sim.handle.force_limit {
            return Err(format!(
                "feedback force {} N over the limit",
                m.max_feedback_force
            ));
        }
        if let Some(s) = &self.series {
            s.validate().map_err(|e| e.to_string())?;
            if s.lap_ends.len() < self.config.sim.laps {
                return Err("series does not complete the configured laps".into());
            }
            let recomputed = compute_metrics(s, &self.config.metrics).map_err(|e| e.to_string())?;
            if &recomputed != m {
                return Err("stored metrics differ from a recomputation".into());
            }
        }
        Ok(())
    }
}

/// Simulates one trial. Failures are recorded, not returned.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    track: &Track<f64>,
    leads: &mut LeadCache,
    id: TrialId,
    subject_tag: String,
    role: TrialRole,
    condition: Condition,
    obstacle_seed: u64,
    input: TrialInput,
    cfg: &TrialConfig,
) -> TrialRecord {
    let result =
        simulate(track, leads, condition, obstacle_seed, &input, &cfg.sim).and_then(|series| {
            let m = compute_metrics(&series, &cfg.metrics).map_err(|e| SimError::Diverged {
                tick: series.len(),
                reason: e.to_string(),
            })?;
            Ok((series, m))
        });
    let (valid, error, metrics, series) = match result {
        Ok((series, m)) => (true, None, Some(m), cfg.keep_series.then_some(series)),
        Err(e) => (false, Some(e.to_string()), None, None),
    };
    TrialRecord {
        version: version_tag(),
        id,
        subject_tag,
        role,
        condition,
        obstacle_seed,
        input,
        config: cfg.clone(),
        valid,
        error,
        metrics,
        series,
    }
}

fn simulate(
    track: &Track<f64>,
    leads: &mut LeadCache,
    condition: Condition,
    obstacle_seed: u64,
    input: &TrialInput,
    sim: &SimConfig,
) -> Result<TrialSeries<f64>, SimError> {
    let obstacles = place_obstacles(track, obstacle_seed);
    let lead = leads.get(track, condition.speed, obstacle_seed, &obstacles, sim)?;
    let human = match input {
        TrialInput::Simulated { driver } => {
            HeadlessHuman::Driver(Driver::new(*driver, sim.tick, sim.vehicle.wheelbase)?)
        }
        TrialInput::PositionLog { positions } => HeadlessHuman::PositionScript(positions),
    };
    run_headless(track, lead, condition.kp, human, sim)
}

/// Re-simulates a record from its embedded seeds and config, keeping the series.
pub fn replay(record: &TrialRecord, leads: &mut LeadCache) -> TrialRecord {
    let track = build_default_track();
    let cfg = TrialConfig {
        keep_series: true,
        ..record.config.clone()
    };
    run_trial(
        &track,
        leads,
        record.id.clone(),
        record.subject_tag.clone(),
        record.role,
        record.condition,
        record.obstacle_seed,
        record.input.clone(),
        &cfg,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub size: usize,
    pub skills: SkillSpread,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            size: 15,
            skills: SkillSpread::default(),
            seed: 1,
        }
    }
}

/// Empty lists mean no restriction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionFilter {
    pub speeds: Vec<f64>,
    pub gains: Vec<f64>,
}

impl ConditionFilter {
    pub fn admits(&self, c: &Condition) -> bool {
        (self.speeds.is_empty() || self.speeds.contains(&c.speed))
            && (self.gains.is_empty() || self.gains.contains(&c.kp))
    }
}

pub const CONFIG_VERSION: u32 = 1;

/// Every module default in one file; see the README for the key set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub master_seed: u64,
    pub cohort: CohortConfig,
    pub protocol: ProtocolConfig,
    pub filter: ConditionFilter,
    pub trial: TrialConfig,
    /// Write one JSON record per trial under `trials/`.
    pub write_records: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            master_seed: 2024,
            cohort: CohortConfig::default(),
            protocol: ProtocolConfig::default(),
            filter: ConditionFilter::default(),
            trial: TrialConfig::default(),
            write_records: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(s)?;
        if cfg.version != CONFIG_VERSION {
            return Err(ExperimentError::BadPlan(format!(
                "config version {} not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let s = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn plans(&self) -> Vec<ExperimentPlan> {
        make_driver_cohort(self.cohort.size, self.cohort.skills, self.cohort.seed)
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                make_plan(
                    Subject::simulated(i as u32, d),
                    self.master_seed,
                    &self.protocol,
                )
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum ProtocolEvent {
    BlockStart {
        subject: u32,
        block: usize,
        condition: Condition,
    },
    Trial {
        id: TrialId,
        role: TrialRole,
        obstacle_seed: u64,
        valid: bool,
        file: Option<String>,
    },
    /// One-minute rest after a block; not simulated.
    Break { subject: u32, block: usize },
    /// Workload questionnaire after a block; not simulated.
    Questionnaire { subject: u32, block: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub plans: Vec<ExperimentPlan>,
    pub events: Vec<ProtocolEvent>,
    pub invalid: Vec<TrialId>,
    pub trial_count: usize,
    pub task_trials_aggregated: usize,
    pub aggregate_csv: String,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let s = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Per-condition summaries across subjects; each subject contributes the mean of
/// their task trials.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rows: Vec<(Condition, [Option<Summary>; 5])>,
}

fn metric_values(m: &TrialMetrics<f64>) -> [Option<f64>; 5] {
    [
        Some(m.steering_jerk_rms),
        Some(m.path_jerk_rms),
        m.mean_margin(),
        Some(m.times_off_road as f64),
        Some(m.off_road_mean_duration),
    ]
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Aggregates the valid task trials among `records`.
pub fn aggregate(records: &[TrialRecord]) -> Aggregate {
    // condition -> subject -> metric -> values
    let mut by: BTreeMap<usize, (Condition, BTreeMap<u32, [Vec<f64>; 5]>)> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.valid && r.role == TrialRole::Task)
    {
        let Some(m) = &r.metrics else { continue };
        let entry = by
            .entry(r.condition.index())
            .or_insert_with(|| (r.condition, BTreeMap::new()));
        let cols = entry.1.entry(r.id.subject).or_default();
        for (col, v) in cols.iter_mut().zip(metric_values(m)) {
            col.extend(v);
        }
    }
    let rows = by
        .into_values()
        .map(|(c, subjects)| {
            let summary = std::array::from_fn(|k| {
                let per_subject: Vec<f64> = subjects
                    .values()
                    .filter_map(|cols| mean(&cols[k]))
                    .collect();
                Summary::of(&per_subject)
            });
            (c, summary)
        })
        .collect();
    Aggregate { rows }
}

impl Aggregate {
    pub fn get(&self, c: &Condition, metric: &str) -> Option<Summary> {
        let k = METRIC_NAMES.iter().position(|&n| n == metric)?;
        self.rows
            .iter()
            .find(|(rc, _)| rc == c)
            .and_then(|(_, s)| s[k])
    }

    /// `speed,Kp,metric,mean,std,n`; conditions with no data for a metric get
    /// empty mean/std and n = 0.
    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["speed", "Kp", "metric", "mean", "std", "n"])?;
        for (c, sums) in &self.rows {
            for (name, s) in METRIC_NAMES.iter().zip(sums) {
                let (mean, std, n) = match s {
                    Some(s) => (s.mean.to_string(), s.std.to_string(), s.n),
                    None => (String::new(), String::new(), 0),
                };
                w.write_record([
                    c.speed.to_string(),
                    c.kp.to_string(),
                    name.to_string(),
                    mean,
                    std,
                    n.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| ExperimentError::Io {
            path: PathBuf::from("<csv>"),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub manifest: Manifest,
    pub aggregate: Aggregate,
    pub records: Vec<TrialRecord>,
}

fn record_file(id: &TrialId) -> String {
    format!("trials/s{:03}_b{}_t{}.json", id.subject, id.block, id.trial)
}

/// Runs every block of every plan. With `out`, writes `manifest.json`,
/// `aggregate.csv` and (if configured) one record per trial.
pub fn run_experiment(
    plans: &[ExperimentPlan],
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<ExperimentOutcome, ExperimentError> {
    for p in plans {
        p.validate()?;
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir.join("trials")).map_err(io_err(dir))?;
    }
    let track = build_default_track();
    let mut leads = LeadCache::new();
    let mut events = Vec::new();
    let mut records = Vec::new();
    for plan in plans {
        let subject = plan.subject.id;
        for (bi, block) in plan.blocks.iter().enumerate() {
            if !cfg.filter.admits(&block.condition) {
                continue;
            }
            events.push(ProtocolEvent::BlockStart {
                subject,
                block: bi,
                condition: block.condition,
            });
            for (ti, (&role, &seed)) in block.roles.iter().zip(&block.obstacle_seeds).enumerate() {
                let id = TrialId {
                    subject,
                    block: bi,
                    trial: ti,
                };
                let record = match &plan.subject.kind {
                    SubjectKind::Simulated { driver } => run_trial(
                        &track,
                        &mut leads,
                        id.clone(),
                        plan.subject.tag(),
                        role,
                        block.condition,
                        seed,
                        TrialInput::Simulated {
                            // trial i of every block shares a noise stream
                            driver: driver.with_seed(mix(driver.seed, ti as u64)),
                        },
                        &cfg.trial,
                    ),
                    SubjectKind::LiveHuman { .. } => {
                        return Err(ExperimentError::BadPlan(
                            "live subjects are run through the teleop service".into(),
                        ))
                    }
                };
                let file = match out {
                    Some(dir) if cfg.write_records => {
                        let rel = record_file(&id);
                        let path = dir.join(&rel);
                        fs::write(&path, record.to_json()?).map_err(io_err(&path))?;
                        Some(rel)
                    }
                    _ => None,
                };
                events.push(ProtocolEvent::Trial {
                    id,
                    role,
                    obstacle_seed: seed,
                    valid: record.valid,
                    file,
                });
                records.push(record);
            }
            events.push(ProtocolEvent::Break { subject, block: bi });
            events.push(ProtocolEvent::Questionnaire { subject, block: bi });
        }
        // the lead trajectories of a subject are reused by the next ones only
        // when layouts are shared
        if cfg.protocol.layouts == LayoutPolicy::PerSubject {
            leads.clear();
        }
    }
    let aggregate = aggregate(&records);
    let manifest = Manifest {
        version: version_tag(),
        config: cfg.clone(),
        plans: plans.to_vec(),
        events,
        invalid: records
            .iter()
            .filter(|r| !r.valid)
            .map(|r| r.id.clone())
            .collect(),
        trial_count: records.len(),
        task_trials_aggregated: records
            .iter()
            .filter(|r| r.valid && r.role == TrialRole::Task)
            .count(),
        aggregate_csv: "aggregate.csv".into(),
    };
    if let Some(dir) = out {
        let csv_path = dir.join(&manifest.aggregate_csv);
        fs::write(&csv_path, aggregate.to_csv()?).map_err(io_err(&csv_path))?;
        let man_path = dir.join("manifest.json");
        fs::write(&man_path, serde_json::to_string_pretty(&manifest)?)
            .map_err(io_err(&man_path))?;
    }
    Ok(ExperimentOutcome {
        manifest,
        aggregate,
        records,
    })
}

/// Re-runs the plans and config stored in a manifest.
pub fn rerun_manifest(
    manifest: &Manifest,
    out: Option<&Path>,
) -> Result<ExperimentOutcome, ExperimentError> {
    run_experiment(&manifest.plans, &manifest.config, out)
}

/// Aggregates the records listed in a manifest from disk.
pub fn aggregate_dir(dir: &Path) -> Result<Aggregate, ExperimentError> {
    let manifest = Manifest::load(&dir.join("manifest.json"))?;
    let mut records = Vec::new();
    for e in &manifest.events {
        if let ProtocolEvent::Trial { file: Some(f), .. } = e {
            let path = dir.join(f);
            let s = fs::read_to_string(&path).map_err(io_err(&path))?;
            records.push(TrialRecord::from_json(&s)?);
        }
    }
    Ok(aggregate(&records))
}
