//! Kinematic car model, its Jacobians and the plant integrator.
//!
//! State is `(x, y, phi)`, input is `(delta, v)`:
//!
//! ```text
//! x'   = v cos(phi)
//! y'   = v sin(phi)
//! phi' = v tan(delta) / l
//! ```
//!
//! Input-side matrices always order their columns `(delta, v)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{wrap_angle, Real};

pub type Mat3<T> = [[T; 3]; 3];
pub type Mat3x2<T> = [[T; 2]; 3];

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum VehicleError {
    #[error("steering angle {0} rad is at or beyond the tangent singularity")]
    SteeringSingularity(f64),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CarState<T> {
    pub x: T,
    pub y: T,
    pub phi: T,
}

impl<T: Real> CarState<T> {
    pub fn new(x: T, y: T, phi: T) -> Self {
        Self {
            x,
            y,
            phi: wrap_angle(phi),
        }
    }

    pub fn position(&self) -> [T; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.phi.is_finite()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput<T> {
    pub delta: T,
    pub v: T,
}

impl<T: Real> ControlInput<T> {
    pub fn new(delta: T, v: T) -> Self {
        Self { delta, v }
    }

    pub fn as_array(&self) -> [T; 2] {
        [self.delta, self.v]
    }

    pub fn from_array([delta, v]: [T; 2]) -> Self {
        Self { delta, v }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real"))]
pub struct VehicleParams<T> {
    /// Wheelbase `l` (m).
    pub wheelbase: T,
    /// Steering limit (rad).
    pub delta_max: T,
}

impl<T: Real> Default for VehicleParams<T> {
    fn default() -> Self {
        Self {
            wheelbase: T::lit(2.7),
            delta_max: T::lit(0.6),
        }
    }
}

impl<T: Real> VehicleParams<T> {
    pub fn clamp_input(&self, u: ControlInput<T>) -> ControlInput<T> {
        ControlInput {
            delta: u.delta.max(-self.delta_max).min(self.delta_max),
            v: u.v.max(T::zero()),
        }
    }
}

fn check_steering<T: Real>(delta: T) -> Result<(), VehicleError> {
    if delta.is_finite() && delta.abs() < T::FRAC_PI_2() {
        Ok(())
    } else {
        Err(VehicleError::SteeringSingularity(delta.to_f64_lossy()))
    }
}

/// State derivative `(x', y', phi')`.
pub fn dynamics<T: Real>(
    state: &CarState<T>,
    input: &ControlInput<T>,
    params: &VehicleParams<T>,
) -> Result<[T; 3], VehicleError> {
    check_steering(input.delta)?;
    Ok(derivative(state.phi, input, params))
}

#[inline]
fn derivative<T: Real>(phi: T, u: &ControlInput<T>, p: &VehicleParams<T>) -> [T; 3] {
    let (s, c) = phi.sin_cos();
    [u.v * c, u.v * s, u.v / p.wheelbase * u.delta.tan()]
}

/// Continuous-time Jacobians `M = df/dstate`, `N = df/dinput`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jacobians<T> {
    pub m: Mat3<T>,
    pub n: Mat3x2<T>,
}

/// Analytic Jacobians at a reference state and input.
pub fn linearize<T: Real>(
    state: &CarState<T>,
    input: &ControlInput<T>,
    params: &VehicleParams<T>,
) -> Result<Jacobians<T>, VehicleError> {
    check_steering(input.delta)?;
    let z = T::zero();
    let (s, c) = state.phi.sin_cos();
    let v = input.v;
    let l = params.wheelbase;
    let cd = input.delta.cos();
    let m = [[z, z, -v * s], [z, z, v * c], [z, z, z]];
    let n = [[z, c], [z, s], [v / (l * cd * cd), input.delta.tan() / l]];
    Ok(Jacobians { m, n })
}

/// Euler-discretized deviation model `eta(k+1) = A eta(k) + B w(k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearizedModel<T> {
    pub m: Mat3<T>,
    pub n: Mat3x2<T>,
    pub a_eta: Mat3<T>,
    pub b_eta: Mat3x2<T>,
    pub h: T,
}

/// `A = M h + I`, `B = N h`.
pub fn discretize<T: Real>(jac: &Jacobians<T>, h: T) -> Result<LinearizedModel<T>, VehicleError> {
    if !(h > T::zero()) {
        return Err(VehicleError::NonPositiveStep(h.to_f64_lossy()));
    }
    let mut a_eta = [[T::zero(); 3]; 3];
    let mut b_eta = [[T::zero(); 2]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a_eta[i][j] = jac.m[i][j] * h + if i == j { T::one() } else { T::zero() };
        }
        for j in 0..2 {
            b_eta[i][j] = jac.n[i][j] * h;
        }
    }
    Ok(LinearizedModel {
        m: jac.m,
        n: jac.n,
        a_eta,
        b_eta,
        h,
    })
}

/// One RK4 step of the nonlinear model; heading is renormalized afterwards.
pub fn step_plant<T: Real>(
    state: &CarState<T>,
    input: &ControlInput<T>,
    params: &VehicleParams<T>,
    h: T,
) -> Result<CarState<T>, VehicleError> {
    check_steering(input.delta)?;
    if !(h > T::zero()) {
        return Err(VehicleError::NonPositiveStep(h.to_f64_lossy()));
    }
    let half = T::lit(0.5);
    let six = T::lit(6.0);
    let two = T::two();
    // x and y derivatives depend only on phi, so the stages only need the heading
    let k1 = derivative(state.phi, input, params);
    let k2 = derivative(state.phi + half * h * k1[2], input, params);
    let k3 = derivative(state.phi + half * h * k2[2], input, params);
    let k4 = derivative(state.phi + h * k3[2], input, params);
    let inc = |i: usize| h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
    Ok(CarState::new(
        state.x + inc(0),
        state.y + inc(1),
        state.phi + inc(2),
    ))
}
