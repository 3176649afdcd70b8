//! Tick engine shared by headless trials and the live teleoperation loop.
//!
//! The lead car is an MPC follower of the driving lane. The rear car is steered by
//! the shared handle. Both run at the same constant speed with the lead one gap
//! ahead. Lead trajectories depend only on (speed, obstacle layout), so they are
//! computed once and shared between trials and feedback levels.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{
    blend, feedback_force, lateral_state, set_handle_position, step_handle, CouplingError,
    CouplingGains, HandleConfig, HandleState,
};
use crate::driver::{perceive, Driver, Proprioception, DRIVING_LANE};
use crate::geometry::{Obstacle, Track, TrackError};
use crate::metrics::TrialSeries;
use crate::mpc::{MpcConfig, MpcController, MpcError};
use crate::vehicle::{step_plant, CarState, ControlInput, VehicleError, VehicleParams};

/// Plant and logging tick (s).
pub const TICK: f64 = 0.005;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation diverged at tick {tick}: {reason}")]
    Diverged { tick: usize, reason: String },
    #[error("trial did not finish within {ticks} ticks")]
    TimedOut { ticks: usize },
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Driver(#[from] crate::driver::DriverError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub tick: f64,
    /// Center-to-center arc distance between the cars at the start (m).
    pub start_gap: f64,
    pub lane_offset: f64,
    pub laps: usize,
    /// Trial is abandoned after this multiple of the nominal duration.
    pub time_cap_factor: f64,
    pub vehicle: VehicleParams<f64>,
    pub handle: HandleConfig<f64>,
    /// Mass against which the coupling damping is made critical (kg).
    pub damping_mass: f64,
    pub mpc: MpcConfig<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tick: TICK,
            // 3.3 m bumper to bumper plus one car length
            start_gap: 3.3 + crate::geometry::CAR_LENGTH,
            lane_offset: DRIVING_LANE,
            laps: 1,
            time_cap_factor: 1.5,
            vehicle: VehicleParams::default(),
            handle: HandleConfig::default(),
            damping_mass: 30.0,
            mpc: MpcConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn gains(&self, kp: f64) -> CouplingGains<f64> {
        CouplingGains::critically_damped(kp, self.damping_mass)
    }

    pub fn max_ticks(&self, track: &Track<f64>, speed: f64) -> usize {
        let nominal = self.laps as f64 * track.total_length / speed;
        (nominal * self.time_cap_factor / self.tick).ceil() as usize
    }

    fn start_state(&self, track: &Track<f64>, s: f64) -> CarState<f64> {
        let [x, y] = track.frenet_to_xy(s, self.lane_offset);
        CarState::new(x, y, track.heading(s))
    }
}

/// Lazily extended closed-loop MPC trajectory of the lead car.
#[derive(Clone, Debug)]
pub struct LeadRun {
    controller: MpcController<f64>,
    obstacles: Vec<Obstacle<f64>>,
    speed: f64,
    input: ControlInput<f64>,
    states: Vec<CarState<f64>>,
    params: VehicleParams<f64>,
    tick: f64,
}

impl LeadRun {
    pub fn new(
        track: &Track<f64>,
        obstacles: Vec<Obstacle<f64>>,
        speed: f64,
        cfg: &SimConfig,
    ) -> Result<Self, SimError> {
        Ok(Self {
            controller: MpcController::new(cfg.mpc.clone(), cfg.vehicle)?,
            obstacles,
            speed,
            input: ControlInput::new(0.0, speed),
            states: vec![cfg.start_state(track, cfg.start_gap)],
            params: cfg.vehicle,
            tick: cfg.tick,
        })
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn obstacles(&self) -> &[Obstacle<f64>] {
        &self.obstacles
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Lead state at tick `k`, simulating forward as needed.
    pub fn state(&mut self, track: &Track<f64>, k: usize) -> Result<CarState<f64>, SimError> {
        while self.states.len() <= k {
            let i = self.states.len() - 1;
            let s = self.states[i];
            if i.is_multiple_of(self.controller.config.replan_ticks.max(1)) {
                let (u, _) =
                    self.controller
                        .lead_car_tick(track, &self.obstacles, &s, self.speed)?;
                self.input = u;
            }
            let next = step_plant(&s, &self.input, &self.params, self.tick)?;
            if !next.is_finite() {
                return Err(SimError::Diverged {
                    tick: i + 1,
                    reason: "lead car state is not finite".into(),
                });
            }
            self.states.push(next);
        }
        Ok(self.states[k])
    }

    pub fn states(&self) -> &[CarState<f64>] {
        &self.states
    }
}

/// Lead runs keyed by speed and obstacle seed.
#[derive(Debug, Default)]
pub struct LeadCache {
    runs: HashMap<(u64, u64), LeadRun>,
}

impl LeadCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &mut self,
        track: &Track<f64>,
        speed: f64,
        seed: u64,
        obstacles: &[Obstacle<f64>],
        cfg: &SimConfig,
    ) -> Result<&mut LeadRun, SimError> {
        let key = (speed.to_bits(), seed);
        Ok(match self.runs.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(LeadRun::new(track, obstacles.to_vec(), speed, cfg)?),
        })
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn clear(&mut self) {
        self.runs.clear();
    }
}

/// Source of the human action for one tick.
pub enum HandInput<'a> {
    /// Simulated driver pushing on the handle.
    Driver(&'a mut Driver),
    /// Scripted handle force (N).
    Force(f64),
    /// Handle position set directly, normalized to `[-1, 1]`.
    Position(f64),
}

/// Everything logged for one tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickSample {
    pub tick: usize,
    pub time: f64,
    pub rear: CarState<f64>,
    pub lead: CarState<f64>,
    pub progress: f64,
    pub offset: f64,
    pub steering: f64,
    pub handle_position: f64,
    pub feedback_force: f64,
    pub human_force: f64,
    pub on_road: bool,
}

/// Rear car, handle and coupling state.
#[derive(Clone, Debug)]
pub struct RearSim {
    pub speed: f64,
    pub gains: CouplingGains<f64>,
    pub state: CarState<f64>,
    pub handle: HandleState<f64>,
    tick: usize,
    progress: f64,
    last_s: f64,
    cfg: SimConfig,
}

impl RearSim {
    pub fn new(track: &Track<f64>, speed: f64, kp: f64, cfg: &SimConfig) -> Self {
        Self {
            speed,
            gains: cfg.gains(kp),
            state: cfg.start_state(track, 0.0),
            handle: HandleState::default(),
            tick: 0,
            progress: 0.0,
            last_s: 0.0,
            cfg: cfg.clone(),
        }
    }

    pub fn tick_index(&self) -> usize {
        self.tick
    }

    /// Unwrapped arc length travelled so far.
    pub fn progress(&self) -> f64 {
        self.progress
    }

    pub fn laps_done(&self, track: &Track<f64>) -> usize {
        (self.progress / track.total_length).floor().max(0.0) as usize
    }

    /// Advances one tick. The sample describes the state at the start of the tick
    /// and the forces and steering applied during it.
    pub fn step(
        &mut self,
        track: &Track<f64>,
        obstacles: &[Obstacle<f64>],
        lead: &CarState<f64>,
        input: HandInput<'_>,
    ) -> Result<TickSample, SimError> {
        let k = self.tick;
        let diverged = |reason: String| SimError::Diverged { tick: k, reason };
        if !self.state.is_finite() {
            return Err(diverged("rear car state is not finite".into()));
        }
        let rear =
            lateral_state(track, &self.state, self.speed).map_err(|e| diverged(e.to_string()))?;

        let feedback = if self.gains.is_disconnected() {
            0.0
        } else {
            let front =
                lateral_state(track, lead, self.speed).map_err(|e| diverged(e.to_string()))?;
            feedback_force(
                &CouplingError::between(&rear, &front),
                &self.gains,
                self.cfg.handle.force_limit,
            )
        };

        let h = self.cfg.tick;
        let (handle_now, human, handle_next) = match input {
            HandInput::Position(target) => {
                let hs = set_handle_position(&self.handle, target, feedback, h, &self.cfg.handle);
                (hs, 0.0, hs)
            }
            HandInput::Force(f) => {
                let next = step_handle(&self.handle, f, feedback, h, &self.cfg.handle);
                (self.handle, f, next)
            }
            HandInput::Driver(driver) => {
                let steering = blend(&self.handle, &self.cfg.handle);
                let scene = perceive(track, obstacles, &self.state, self.speed, &driver.params)
                    .map_err(|e| diverged(e.to_string()))?;
                let proprio = Proprioception {
                    steering,
                    handle_velocity: self.handle.velocity,
                };
                let f = driver.tick(scene, &proprio);
                let next = step_handle(&self.handle, f, feedback, h, &self.cfg.handle);
                (self.handle, f, next)
            }
        };

        let steering = blend(&handle_now, &self.cfg.handle);
        let sample = TickSample {
            tick: k,
            time: k as f64 * h,
            rear: self.state,
            lead: *lead,
            progress: self.progress,
            offset: rear.d,
            steering,
            handle_position: handle_now.position,
            feedback_force: feedback,
            human_force: human,
            on_road: rear.d.abs() <= track.half_width,
        };

        let next = step_plant(
            &self.state,
            &ControlInput::new(steering, self.speed),
            &self.cfg.vehicle,
            h,
        )?;
        if !next.is_finite() {
            return Err(diverged("rear car state is not finite".into()));
        }
        let s_next = track
            .project(next.position())
            .map_err(|e| diverged(e.to_string()))?
            .s;
        self.progress += track.s_delta(s_next, self.last_s);
        self.last_s = s_next;
        self.state = next;
        self.handle = HandleState {
            applied_human_force: human,
            applied_feedback_force: feedback,
            ..handle_next
        };
        self.tick += 1;
        Ok(sample)
    }
}

impl TrialSeries<f64> {
    pub fn push(&mut self, s: &TickSample) {
        self.x.push(s.rear.x);
        self.y.push(s.rear.y);
        self.phi.push(s.rear.phi);
        self.progress.push(s.progress);
        self.offset.push(s.offset);
        self.steering.push(s.steering);
        self.handle_position.push(s.handle_position);
        self.feedback_force.push(s.feedback_force);
        self.human_force.push(s.human_force);
        self.on_road.push(s.on_road);
        self.lead_x.push(s.lead.x);
        self.lead_y.push(s.lead.y);
        self.lead_phi.push(s.lead.phi);
    }
}

/// Human side of a headless run.
pub enum HeadlessHuman<'a> {
    Driver(Driver),
    /// Force per tick; zero once the script runs out.
    ForceScript(&'a [f64]),
    /// Normalized handle position per tick; the last value is held.
    PositionScript(&'a [f64]),
}

/// Runs the rear car until it has completed the configured laps.
pub fn run_headless(
    track: &Track<f64>,
    lead: &mut LeadRun,
    kp: f64,
    human: HeadlessHuman<'_>,
    cfg: &SimConfig,
) -> Result<TrialSeries<f64>, SimError> {
    let speed = lead.speed();
    let obstacles = lead.obstacles().to_vec();
    let mut rear = RearSim::new(track, speed, kp, cfg);
    let max_ticks = cfg.max_ticks(track, speed);
    let mut series = TrialSeries::with_capacity(cfg.tick, max_ticks);
    series.obstacles = obstacles.clone();
    series.track_length = track.total_length;
    let mut human = human;
    let goal = cfg.laps as f64 * track.total_length;
    let mut laps = 0;
    for k in 0..max_ticks {
        let lead_state = lead.state(track, k)?;
        let input = match &mut human {
            HeadlessHuman::Driver(d) => HandInput::Driver(d),
            HeadlessHuman::ForceScript(f) => HandInput::Force(f.get(k).copied().unwrap_or(0.0)),
            HeadlessHuman::PositionScript(p) => {
                HandInput::Position(p.get(k).or(p.last()).copied().unwrap_or(0.0))
            }
        };
        let sample = rear.step(track, &obstacles, &lead_state, input)?;
        series.push(&sample);
        let done = rear.laps_done(track);
        if done > laps {
            laps = done;
            series.lap_ends.push(k);
        }
        if rear.progress() >= goal {
            return Ok(series);
        }
    }
    Err(SimError::TimedOut { ticks: max_ticks })
}
