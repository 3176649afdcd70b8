//! Simulated rear-car drivers.
//!
//! A driver looks at a delayed snapshot of the road scene, predicts where the car
//! will be one preview distance ahead (pure pursuit), and pushes the handle toward
//! the steering angle that closes the gap to its target offset. The preview is a
//! fixed distance plus a fixed time at the current speed. The arm behaves like a
//! stiffness set by `force_gain` plus a velocity damping. Motor noise is a
//! low-pass filtered Gaussian added to the output force.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Obstacle, Side, Track, TrackError};
use crate::scalar::wrap_angle;
use crate::vehicle::CarState;

/// Driving lane offset (right lane, m).
pub const DRIVING_LANE: f64 = -1.5;
/// Half car length plus half obstacle size: an obstacle is cleared once the car's
/// center is this far past it.
const CLEARANCE: f64 = 3.35;
/// Extra distance before giving the lane back, so the target does not flip while
/// the car is beside the obstacle.
pub const RELEASE_HYSTERESIS: f64 = 2.0;
/// Correlation time of the motor noise (s).
pub const NOISE_TAU: f64 = 0.1;

pub const MAX_DRIVER_FORCE: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error("driver parameter {name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("reaction delay {delay} s is not a multiple of the {tick} s tick")]
    DelayNotOnTick { delay: f64, tick: f64 },
    #[error("max force {0} N exceeds the handle-side limit")]
    ForceTooLarge(f64),
    #[error("lookahead must be positive")]
    ZeroLookahead,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverParams {
    /// s
    pub reaction_delay: f64,
    /// Fixed part of the pure-pursuit preview (m).
    pub lookahead: f64,
    /// Speed-proportional part of the preview (s).
    pub preview_time: f64,
    /// Obstacles closer than this along the road trigger a lane change (m).
    pub sight_distance: f64,
    /// Stationary std of the motor noise (N).
    pub noise_std: f64,
    /// N per m of perceived lateral error.
    pub force_gain: f64,
    /// N
    pub max_force: f64,
    /// Arm damping on the handle (N s/m).
    pub arm_damping: f64,
    pub seed: u64,
}

impl DriverParams {
    pub fn expert() -> Self {
        skill_params(1.0, 0)
    }

    pub fn mid() -> Self {
        skill_params(0.5, 0)
    }

    pub fn novice() -> Self {
        skill_params(0.0, 0)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Preview distance at `speed` (m).
    pub fn preview(&self, speed: f64) -> f64 {
        self.lookahead + self.preview_time * speed.abs()
    }

    /// Delay in whole ticks.
    pub fn delay_ticks(&self, tick: f64) -> usize {
        (self.reaction_delay / tick).round() as usize
    }

    pub fn validate(&self, tick: f64) -> Result<(), DriverError> {
        for (name, value) in [
            ("reaction_delay", self.reaction_delay),
            ("lookahead", self.lookahead),
            ("preview_time", self.preview_time),
            ("sight_distance", self.sight_distance),
            ("noise_std", self.noise_std),
            ("force_gain", self.force_gain),
            ("max_force", self.max_force),
            ("arm_damping", self.arm_damping),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(DriverError::Negative { name, value });
            }
        }
        if self.lookahead == 0.0 && self.preview_time == 0.0 {
            return Err(DriverError::ZeroLookahead);
        }
        if self.max_force > MAX_DRIVER_FORCE {
            return Err(DriverError::ForceTooLarge(self.max_force));
        }
        let ticks = self.reaction_delay / tick;
        if (ticks - ticks.round()).abs() > 1e-6 {
            return Err(DriverError::DelayNotOnTick {
                delay: self.reaction_delay,
                tick,
            });
        }
        Ok(())
    }
}

/// Arm stiffness a driver presents at the handle at the reference speed (N/m).
pub const ARM_STIFFNESS: f64 = 500.0;
/// Speed at which `force_gain` is matched to `ARM_STIFFNESS` (m/s). The gain per
/// metre of error is held fixed, so the effective arm stiffens as the preview
/// grows with speed.
pub const REFERENCE_SPEED: f64 = 12.5;

/// Force gain at which the arm stiffness holds for a given lookahead: the
/// predicted offset moves by `L^2 / (2 l)` per unit of steering curvature, and
/// steering moves by `steer_gain` per metre of handle travel.
pub fn force_gain_for(stiffness: f64, lookahead: f64, wheelbase: f64, steer_gain: f64) -> f64 {
    stiffness * 2.0 * wheelbase / (steer_gain * lookahead * lookahead)
}

/// Parameters for a skill level in `[0, 1]` (0 novice, 1 expert). The delay is
/// quantized to the 5 ms tick. Slower drivers look further ahead in time.
pub fn skill_params(skill: f64, seed: u64) -> DriverParams {
    let k = skill.clamp(0.0, 1.0);
    let delay = 0.5 - 0.3 * k;
    let lookahead = 5.0;
    let preview_time = 0.9 - 0.6 * k;
    let reference = lookahead + preview_time * REFERENCE_SPEED;
    DriverParams {
        reaction_delay: (delay / 0.005).round() * 0.005,
        lookahead,
        preview_time,
        sight_distance: 12.0 + 8.0 * k,
        noise_std: 1.0 - k,
        force_gain: force_gain_for(ARM_STIFFNESS, reference, 2.7, 0.6 / 0.17),
        max_force: MAX_DRIVER_FORCE,
        arm_damping: 30.0,
        seed,
    }
}

/// Range of skills a cohort is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkillSpread {
    pub min: f64,
    pub max: f64,
}

impl Default for SkillSpread {
    fn default() -> Self {
        Self { min: 0.0, max: 1.0 }
    }
}

impl SkillSpread {
    /// Narrow band around the middle of the range.
    pub fn mid() -> Self {
        Self { min: 0.4, max: 0.6 }
    }
}

/// `n` drivers with skills stratified across the spread (one uniform draw per
/// stratum), each with its own noise seed.
pub fn make_driver_cohort(n: usize, spread: SkillSpread, seed: u64) -> Vec<DriverParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (spread.min.clamp(0.0, 1.0), spread.max.clamp(0.0, 1.0));
    let width = (hi - lo).max(0.0);
    (0..n)
        .map(|i| {
            let u: f64 = rng.gen();
            let skill = lo + width * (i as f64 + u) / n as f64;
            skill_params(skill, rng.gen())
        })
        .collect()
}

/// Upcoming obstacle as seen by the driver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleCue {
    /// Arc distance from the car to the obstacle, negative once passed.
    pub ahead: f64,
    pub side: Side,
}

/// What the driver sees; this is what gets delayed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerceivedScene {
    pub speed: f64,
    pub offset: f64,
    pub heading_error: f64,
    /// Road curvature over the preview, weighted toward the car (see
    /// [`curvature_ahead`]).
    pub curvature_ahead: f64,
    pub obstacles: Vec<ObstacleCue>,
}

/// What the driver feels without delay through the hand.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Proprioception {
    pub steering: f64,
    pub handle_velocity: f64,
}

/// Ground-truth scene for a car at `state`; obstacles are those between the
/// release point behind the car and the sight distance ahead of it.
pub fn perceive(
    track: &Track<f64>,
    obstacles: &[Obstacle<f64>],
    state: &CarState<f64>,
    speed: f64,
    params: &DriverParams,
) -> Result<PerceivedScene, TrackError> {
    let lookahead = params.preview(speed);
    let p = track.project(state.position())?;
    let cues = obstacles
        .iter()
        .filter_map(|o| {
            let ahead = track.s_delta(o.arc_position, p.s);
            (ahead >= -(CLEARANCE + RELEASE_HYSTERESIS) && ahead <= params.sight_distance)
                .then_some(ObstacleCue {
                    ahead,
                    side: o.side,
                })
        })
        .collect();
    Ok(PerceivedScene {
        speed,
        offset: p.d,
        heading_error: wrap_angle(state.phi - track.heading(p.s)),
        curvature_ahead: curvature_ahead(track, p.s, p.d, lookahead),
        obstacles: cues,
    })
}

/// `(2 / L^2) * integral_0^L (L - u) k(s + u) du`, the constant curvature that
/// produces the same lateral displacement over the lookahead as the road's own
/// profile. Curvature is piecewise constant per segment, so the integral is
/// evaluated exactly on the parallel curve at offset `d`.
pub fn curvature_ahead(track: &Track<f64>, s: f64, d: f64, lookahead: f64) -> f64 {
    let segs = &track.segments;
    let s = track.wrap_s(s);
    let mut i = segs.iter().rposition(|g| g.s_start <= s).unwrap_or(0);
    let mut u0 = 0.0;
    let mut sum = 0.0;
    // distance from s to the end of the current segment
    let mut seg_end = segs[i].s_start + segs[i].segment.length() - s;
    while u0 < lookahead {
        let u1 = seg_end.min(lookahead);
        let k = segs[i].segment.curvature();
        let k = k / (1.0 - k * d);
        let prim = |u: f64| lookahead * u - 0.5 * u * u;
        sum += k * (prim(u1) - prim(u0));
        u0 = u1;
        i = (i + 1) % segs.len();
        seg_end += segs[i].segment.length();
    }
    2.0 * sum / (lookahead * lookahead)
}

/// Lane center, moved to the free lane while an obstacle is in view.
pub fn target_offset(scene: &PerceivedScene) -> f64 {
    match scene
        .obstacles
        .iter()
        .min_by(|a, b| a.ahead.abs().total_cmp(&b.ahead.abs()))
    {
        Some(cue) => -cue.side.sign::<f64>() * DRIVING_LANE.abs(),
        None => DRIVING_LANE,
    }
}

/// Pure-pursuit prediction of the lateral offset one lookahead ahead, using the
/// current steering angle for the car's own path curvature.
pub fn predicted_offset(
    scene: &PerceivedScene,
    steering: f64,
    lookahead: f64,
    wheelbase: f64,
) -> f64 {
    let l = lookahead;
    scene.offset
        + l * scene.heading_error.sin()
        + 0.5 * l * l * (steering.tan() / wheelbase - scene.curvature_ahead)
}

/// Noise-free handle force for a scene, before clamping.
pub fn control_force(
    scene: &PerceivedScene,
    proprio: &Proprioception,
    params: &DriverParams,
    wheelbase: f64,
) -> f64 {
    let preview = params.preview(scene.speed);
    let error =
        target_offset(scene) - predicted_offset(scene, proprio.steering, preview, wheelbase);
    params.force_gain * error - params.arm_damping * proprio.handle_velocity
}

/// One tick of the driver law with an explicit noise sample (N).
pub fn driver_tick(
    scene: &PerceivedScene,
    proprio: &Proprioception,
    params: &DriverParams,
    wheelbase: f64,
    noise: f64,
) -> f64 {
    let f = control_force(scene, proprio, params, wheelbase) + noise;
    f.clamp(-params.max_force, params.max_force)
}

/// Fixed-length delay line: `push` returns the value pushed exactly `delay`
/// pushes earlier, or `None` while warming up.
#[derive(Clone, Debug)]
pub struct DelayLine<T> {
    delay: usize,
    buf: VecDeque<T>,
}

impl<T> DelayLine<T> {
    pub fn new(delay: usize) -> Self {
        Self {
            delay,
            buf: VecDeque::with_capacity(delay + 1),
        }
    }

    pub fn push(&mut self, value: T) -> Option<T> {
        self.buf.push_back(value);
        if self.buf.len() > self.delay {
            self.buf.pop_front()
        } else {
            None
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }
}

/// First-order Gauss-Markov noise with stationary std `std`.
#[derive(Clone, Debug)]
pub struct MotorNoise {
    rng: ChaCha8Rng,
    state: f64,
    decay: f64,
    drive: f64,
}

impl MotorNoise {
    pub fn new(std: f64, tick: f64, seed: u64) -> Self {
        let decay = (-tick / NOISE_TAU).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: f64 = rng.sample(StandardNormal);
        Self {
            rng,
            state: std * z,
            decay,
            drive: std * (1.0 - decay * decay).sqrt(),
        }
    }

    pub fn sample(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        self.state = self.decay * self.state + self.drive * z;
        self.state
    }
}

/// Stateful driver for one trial.
#[derive(Clone, Debug)]
pub struct Driver {
    pub params: DriverParams,
    wheelbase: f64,
    delay: DelayLine<PerceivedScene>,
    noise: MotorNoise,
}

impl Driver {
    pub fn new(params: DriverParams, tick: f64, wheelbase: f64) -> Result<Self, DriverError> {
        params.validate(tick)?;
        Ok(Self {
            delay: DelayLine::new(params.delay_ticks(tick)),
            noise: MotorNoise::new(params.noise_std, tick, params.seed),
            wheelbase,
            params,
        })
    }

    /// Feeds the current scene and returns the handle force. Zero until the delay
    /// line has filled.
    pub fn tick(&mut self, scene: PerceivedScene, proprio: &Proprioception) -> f64 {
        // the noise stream advances every tick so warm-up does not shift it
        let noise = self.noise.sample();
        match self.delay.push(scene) {
            Some(seen) => driver_tick(&seen, proprio, &self.params, self.wheelbase, noise),
            None => 0.0,
        }
    }
}
