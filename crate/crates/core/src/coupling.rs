//! Virtual-spring coupling between the lead car and the rear car's handle.
//!
//! The rear driver and the guidance spring push on the same handle; the handle
//! position is the rear car's steering command. The spring acts on road-frame
//! lateral offsets, each measured at the car's own arc length, so the constant
//! longitudinal gap between the cars never loads the spring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Track, TrackError};
use crate::scalar::{wrap_angle, Real};
use crate::vehicle::CarState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingConfigError {
    #[error("gains must be non-negative (kp {kp}, kd {kd})")]
    Negative { kp: f64, kd: f64 },
    #[error("zero stiffness must come with zero damping (kd {0})")]
    DampingWithoutStiffness(f64),
}

/// Spring stiffness `kp` (N/m) and damping `kd` (N s/m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingGains<T> {
    pub kp: T,
    pub kd: T,
}

impl<T: Real> CouplingGains<T> {
    pub fn new(kp: T, kd: T) -> Result<Self, CouplingConfigError> {
        if kp < T::zero() || kd < T::zero() {
            return Err(CouplingConfigError::Negative {
                kp: kp.to_f64_lossy(),
                kd: kd.to_f64_lossy(),
            });
        }
        if kp == T::zero() && kd != T::zero() {
            return Err(CouplingConfigError::DampingWithoutStiffness(
                kd.to_f64_lossy(),
            ));
        }
        Ok(Self { kp, kd })
    }

    /// `kd = 2 sqrt(kp m)`: critical damping of the spring against the handle mass.
    /// `kp = 0` gives a full disconnect.
    pub fn critically_damped(kp: T, handle_mass: T) -> Self {
        let kp = kp.max(T::zero());
        Self {
            kp,
            kd: T::two() * (kp * handle_mass).sqrt(),
        }
    }

    pub fn disconnected() -> Self {
        Self {
            kp: T::zero(),
            kd: T::zero(),
        }
    }

    pub fn is_disconnected(&self) -> bool {
        self.kp == T::zero()
    }
}

/// Virtual handle admittance and its mapping to steering.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real"))]
pub struct HandleConfig<T> {
    /// kg
    pub mass: T,
    /// N s/m
    pub damping: T,
    /// Workspace half extent (m); full extent maps to full steering.
    pub half_extent: T,
    /// Feedback force saturation (N).
    pub force_limit: T,
    /// Steering at the workspace edge (rad).
    pub delta_max: T,
}

impl<T: Real> Default for HandleConfig<T> {
    fn default() -> Self {
        Self {
            mass: T::lit(0.5),
            damping: T::lit(4.0),
            half_extent: T::lit(0.17),
            force_limit: T::lit(7.0),
            delta_max: T::lit(0.6),
        }
    }
}

impl<T: Real> HandleConfig<T> {
    /// rad per m of handle travel.
    pub fn steer_gain(&self) -> T {
        self.delta_max / self.half_extent
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HandleState<T> {
    /// Lateral handle position (m).
    pub position: T,
    pub velocity: T,
    pub applied_human_force: T,
    pub applied_feedback_force: T,
}

/// Lateral offset and lateral velocity in the road frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LateralState<T> {
    pub s: T,
    pub d: T,
    pub d_dot: T,
}

/// Road-frame lateral state of a car moving at `speed`: `d_dot = v sin(phi - phi_road)`.
pub fn lateral_state<T: Real>(
    track: &Track<T>,
    state: &CarState<T>,
    speed: T,
) -> Result<LateralState<T>, TrackError> {
    let p = track.project(state.position())?;
    let heading_error = wrap_angle(state.phi - track.heading(p.s));
    Ok(LateralState {
        s: p.s,
        d: p.d,
        d_dot: speed * heading_error.sin(),
    })
}

/// `dp = d_rear - d_front`, `dv = d_dot_rear - d_dot_front`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingError<T> {
    pub dp: T,
    pub dv: T,
}

impl<T: Real> CouplingError<T> {
    pub fn between(rear: &LateralState<T>, front: &LateralState<T>) -> Self {
        Self {
            dp: rear.d - front.d,
            dv: rear.d_dot - front.d_dot,
        }
    }
}

pub fn coupling_error<T: Real>(
    track: &Track<T>,
    rear: (&CarState<T>, T),
    front: (&CarState<T>, T),
) -> Result<CouplingError<T>, TrackError> {
    let r = lateral_state(track, rear.0, rear.1)?;
    let f = lateral_state(track, front.0, front.1)?;
    Ok(CouplingError::between(&r, &f))
}

/// Spring-damper force pulling the rear car toward the front car's lateral offset,
/// saturated to `[-limit, limit]`.
pub fn feedback_force<T: Real>(error: &CouplingError<T>, gains: &CouplingGains<T>, limit: T) -> T {
    if gains.is_disconnected() {
        return T::zero();
    }
    let raw = -(gains.kp * error.dp + gains.kd * error.dv);
    raw.max(-limit).min(limit)
}

/// Semi-implicit Euler step of `m x'' = F_human + F_feedback - b x'`, clamped to
/// the workspace. Hitting a workspace edge stops the handle.
pub fn step_handle<T: Real>(
    handle: &HandleState<T>,
    human_force: T,
    feedback: T,
    h: T,
    cfg: &HandleConfig<T>,
) -> HandleState<T> {
    let accel = (human_force + feedback - cfg.damping * handle.velocity) / cfg.mass;
    let mut velocity = handle.velocity + h * accel;
    let mut position = handle.position + h * velocity;
    if position > cfg.half_extent {
        position = cfg.half_extent;
        velocity = velocity.min(T::zero());
    } else if position < -cfg.half_extent {
        position = -cfg.half_extent;
        velocity = velocity.max(T::zero());
    }
    HandleState {
        position,
        velocity,
        applied_human_force: human_force,
        applied_feedback_force: feedback,
    }
}

/// Position-controlled handle (live operator): position comes from a normalized
/// input in `[-1, 1]`, velocity is the finite difference, and the feedback force
/// is kept for display.
pub fn set_handle_position<T: Real>(
    handle: &HandleState<T>,
    target: T,
    feedback: T,
    h: T,
    cfg: &HandleConfig<T>,
) -> HandleState<T> {
    let t = target.max(-T::one()).min(T::one());
    let position = t * cfg.half_extent;
    HandleState {
        position,
        velocity: (position - handle.position) / h,
        applied_human_force: T::zero(),
        applied_feedback_force: feedback,
    }
}

/// Steering command from the shared handle.
pub fn blend<T: Real>(handle: &HandleState<T>, cfg: &HandleConfig<T>) -> T {
    (cfg.steer_gain() * handle.position)
        .max(-cfg.delta_max)
        .min(cfg.delta_max)
}
