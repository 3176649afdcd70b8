//! One live trial, advanced tick by tick by the server's ticker. Nothing here
//! reads a clock: staleness is decided by the caller, so the same latched inputs
//! always give the same trial.

use hapdrive_core::experiment::{
    version_tag, Condition, TrialConfig, TrialId, TrialInput, TrialRecord, TrialRole,
};
use hapdrive_core::geometry::{build_default_track, place_obstacles, Obstacle, Track};
use hapdrive_core::metrics::{compute_metrics, TrialSeries};
use hapdrive_core::sim::{HandInput, LeadRun, RearSim, SimError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{EndFrame, PauseReason, Phase, StateFrame};

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error("trial has not completed its laps")]
    IncompleteTrial,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("could not bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub condition: Condition,
    pub obstacle_seed: u64,
    pub trial: TrialConfig,
    pub subject_id: u32,
    pub subject_tag: String,
    /// A state frame every this many ticks (4 -> 50 Hz).
    pub broadcast_every: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            condition: Condition {
                speed: 10.0,
                kp: 200.0,
            },
            obstacle_seed: 0,
            trial: TrialConfig::default(),
            subject_id: 0,
            subject_tag: "anonymous".into(),
            broadcast_every: 4,
        }
    }
}

pub struct Session {
    pub cfg: SessionConfig,
    pub id: u32,
    track: Track<f64>,
    obstacles: Vec<Obstacle<f64>>,
    lead: LeadRun,
    rear: RearSim,
    series: TrialSeries<f64>,
    /// Position actually applied at each tick.
    positions: Vec<f64>,
    latched: f64,
    phase: Phase,
    goal: f64,
}

impl Session {
    pub fn new(cfg: SessionConfig, id: u32) -> Result<Self, TeleopError> {
        cfg.condition.validate().map_err(|e| SimError::Diverged {
            tick: 0,
            reason: e.to_string(),
        })?;
        let track = build_default_track();
        let obstacles = place_obstacles(&track, cfg.obstacle_seed);
        let sim = &cfg.trial.sim;
        let lead = LeadRun::new(&track, obstacles.clone(), cfg.condition.speed, sim)?;
        let rear = RearSim::new(&track, cfg.condition.speed, cfg.condition.kp, sim);
        let mut series =
            TrialSeries::with_capacity(sim.tick, sim.max_ticks(&track, cfg.condition.speed));
        series.obstacles = obstacles.clone();
        series.track_length = track.total_length;
        let goal = sim.laps as f64 * track.total_length;
        Ok(Self {
            id,
            track,
            obstacles,
            lead,
            rear,
            series,
            positions: Vec::new(),
            latched: 0.0,
            phase: Phase::Waiting,
            goal,
            cfg,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn tick(&self) -> usize {
        self.rear.tick_index()
    }

    pub fn track(&self) -> &Track<f64> {
        &self.track
    }

    pub fn obstacles(&self) -> &[Obstacle<f64>] {
        &self.obstacles
    }

    pub fn latched(&self) -> f64 {
        self.latched
    }

    /// Latest-value-wins input; used from the next tick on.
    pub fn latch(&mut self, target: f64) {
        if target.is_finite() {
            self.latched = target.clamp(-1.0, 1.0);
        }
    }

    pub fn start(&mut self) {
        if matches!(self.phase, Phase::Waiting | Phase::Paused(_)) {
            self.phase = Phase::Running;
        }
    }

    pub fn pause(&mut self, reason: PauseReason) {
        if self.phase == Phase::Running {
            self.phase = Phase::Paused(reason);
        }
    }

    /// Advances one tick if running. Returns a frame on broadcast ticks and on
    /// the tick that finishes the trial.
    pub fn step(&mut self) -> Result<Option<StateFrame>, TeleopError> {
        if self.phase != Phase::Running {
            return Ok(None);
        }
        let k = self.rear.tick_index();
        let lead = self.lead.state(&self.track, k)?;
        let sample = self.rear.step(
            &self.track,
            &self.obstacles,
            &lead,
            HandInput::Position(self.latched),
        )?;
        self.series.push(&sample);
        self.positions.push(self.latched);
        let done = self.rear.laps_done(&self.track);
        if done > self.series.lap_ends.len() {
            self.series.lap_ends.push(k);
        }
        if self.rear.progress() >= self.goal {
            self.phase = Phase::Finished;
            return Ok(Some(self.frame_at(k)));
        }
        Ok(k.is_multiple_of(self.cfg.broadcast_every.max(1))
            .then(|| self.frame_at(k)))
    }

    fn frame_at(&self, k: usize) -> StateFrame {
        let s = &self.series;
        StateFrame {
            session: self.id,
            tick: k,
            time: k as f64 * s.tick,
            lead: crate::protocol::Pose {
                x: s.lead_x[k],
                y: s.lead_y[k],
                phi: s.lead_phi[k],
            },
            rear: crate::protocol::Pose {
                x: s.x[k],
                y: s.y[k],
                phi: s.phi[k],
            },
            handle_position: self.positions[k],
            feedback_force: s.feedback_force[k],
            condition: self.cfg.condition,
            phase: self.phase,
            obstacle_seed: self.cfg.obstacle_seed,
            lap_progress: (s.progress[k] / self.goal).clamp(0.0, 1.0),
        }
    }

    /// Frame for the latest simulated tick, or the start pose before the first.
    pub fn current_frame(&mut self) -> Result<StateFrame, TeleopError> {
        match self.series.len() {
            0 => {
                let lead = self.lead.state(&self.track, 0)?;
                Ok(StateFrame {
                    session: self.id,
                    tick: 0,
                    time: 0.0,
                    lead: lead.into(),
                    rear: self.rear.state.into(),
                    handle_position: self.latched,
                    feedback_force: 0.0,
                    condition: self.cfg.condition,
                    phase: self.phase,
                    obstacle_seed: self.cfg.obstacle_seed,
                    lap_progress: 0.0,
                })
            }
            n => {
                let mut f = self.frame_at(n - 1);
                f.phase = self.phase;
                Ok(f)
            }
        }
    }

    pub fn series(&self) -> &TrialSeries<f64> {
        &self.series
    }

    pub fn input_log(&self) -> &[f64] {
        &self.positions
    }
}

/// Record of a finished live session, in the same schema as headless trials.
pub fn record_live_trial(session: &Session) -> Result<TrialRecord, TeleopError> {
    if session.phase != Phase::Finished {
        return Err(TeleopError::IncompleteTrial);
    }
    let cfg = &session.cfg;
    let trial = TrialConfig {
        keep_series: true,
        ..cfg.trial.clone()
    };
    let metrics =
        compute_metrics(&session.series, &trial.metrics).map_err(|e| SimError::Diverged {
            tick: session.series.len(),
            reason: e.to_string(),
        })?;
    Ok(TrialRecord {
        version: version_tag(),
        id: TrialId {
            subject: cfg.subject_id,
            block: 0,
            trial: session.id as usize,
        },
        subject_tag: format!("live-human:{}", cfg.subject_tag),
        role: TrialRole::Task,
        condition: cfg.condition,
        obstacle_seed: cfg.obstacle_seed,
        input: TrialInput::PositionLog {
            positions: session.positions.clone(),
        },
        config: trial,
        valid: true,
        error: None,
        metrics: Some(metrics),
        series: Some(session.series.clone()),
    })
}

pub fn end_frame(session: &Session, record: Option<&TrialRecord>, reason: &str) -> EndFrame {
    let m = record.and_then(|r| r.metrics.as_ref());
    EndFrame {
        session: session.id,
        tick: session.tick(),
        reason: reason.into(),
        times_off_road: m.map(|m| m.times_off_road),
        steering_jerk: m.map(|m| m.steering_jerk_rms),
        max_feedback_force: m.map(|m| m.max_feedback_force),
    }
}
