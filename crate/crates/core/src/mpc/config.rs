use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::vehicle::VehicleError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),
    #[error("previous input deviation violates its bounds by {violation:.3e}")]
    InfeasibleStart { violation: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Track(#[from] crate::geometry::TrackError),
}

/// Horizon, weights, bounds and solver controls.
///
/// Input-side quantities are ordered `(delta, v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real"))]
pub struct MpcConfig<T> {
    /// Horizon length N (steps).
    pub horizon: usize,
    /// Model step h (s).
    pub step: T,
    /// Weight on the extended state `(x, y, phi, w_delta, w_v)`.
    pub q: [[T; 5]; 5],
    /// Weight on the input increments.
    pub r: [[T; 2]; 2],
    /// Obstacle potential weight S.
    pub obstacle_weight: T,
    /// Potential regularizer zeta (m^2).
    pub zeta: T,
    pub w_min: [T; 2],
    pub w_max: [T; 2],
    pub dw_min: [T; 2],
    pub dw_max: [T; 2],
    pub max_iters: usize,
    /// Stopping threshold on the projected-gradient mapping.
    pub tol: T,
    /// Obstacles farther than this from the car are ignored (m).
    pub detection_radius: T,
    /// Obstacles more than this far behind the car (arc length) are ignored (m).
    pub detection_behind: T,
    /// Lateral offset of the reference lane (m); negative is the right lane.
    pub lane_offset: T,
    /// Soft road-edge penalty weight.
    pub boundary_weight: T,
    /// Lateral offset magnitude where the road-edge penalty starts (m).
    pub boundary_margin: T,
    /// Replanning period in plant ticks.
    pub replan_ticks: usize,
    /// Treat an out-of-bounds previous input as an error instead of clamping it.
    pub reject_infeasible_start: bool,
}

impl<T: Real> Default for MpcConfig<T> {
    fn default() -> Self {
        let z = T::zero();
        let diag5 = [10.0, 10.0, 5.0, 1.0, 1.0];
        let mut q = [[z; 5]; 5];
        for (i, v) in diag5.into_iter().enumerate() {
            q[i][i] = T::lit(v);
        }
        Self {
            horizon: 25,
            step: T::lit(0.05),
            q,
            r: [[T::lit(50.0), z], [z, T::lit(50.0)]],
            obstacle_weight: T::lit(300.0),
            zeta: T::one(),
            w_min: [T::lit(-0.45), z],
            w_max: [T::lit(0.45), z],
            dw_min: [T::lit(-0.05), T::lit(-0.5)],
            dw_max: [T::lit(0.05), T::lit(0.5)],
            max_iters: 20,
            tol: T::lit(1e-4),
            detection_radius: T::lit(40.0),
            detection_behind: T::lit(5.0),
            lane_offset: T::lit(-1.5),
            boundary_weight: T::lit(200.0),
            boundary_margin: T::lit(2.2),
            replan_ticks: 5,
            reject_infeasible_start: false,
        }
    }
}

impl<T: Real> MpcConfig<T> {
    pub fn with_diagonal_weights(mut self, q: [T; 5], r: [T; 2]) -> Self {
        self.q = [[T::zero(); 5]; 5];
        for (i, v) in q.into_iter().enumerate() {
            self.q[i][i] = v;
        }
        self.r = [[r[0], T::zero()], [T::zero(), r[1]]];
        self
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: &str| Err(MpcError::InvalidConfig(m.to_owned()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.step > T::zero()) {
            return bad("step must be positive");
        }
        if !(self.zeta > T::zero()) {
            return bad("zeta must be positive");
        }
        if self.replan_ticks == 0 {
            return bad("replan_ticks must be at least 1");
        }
        for i in 0..2 {
            if !(self.w_min[i] <= self.w_max[i]) || !(self.dw_min[i] <= self.dw_max[i]) {
                return bad("bounds must satisfy min <= max");
            }
            if self.dw_min[i] > T::zero() || self.dw_max[i] < T::zero() {
                return bad("increment box must contain zero");
            }
            if self.w_min[i] > T::zero() || self.w_max[i] < T::zero() {
                return bad("input-deviation box must contain zero");
            }
        }
        if !is_symmetric(&self.q) || !is_symmetric(&self.r) {
            return bad("Q and R must be symmetric");
        }
        if !psd(&self.q, false) {
            return bad("Q must be positive semidefinite");
        }
        if !psd(&self.r, true) {
            return bad("R must be positive definite");
        }
        if self.obstacle_weight < T::zero() || self.boundary_weight < T::zero() {
            return bad("penalty weights must be non-negative");
        }
        Ok(())
    }
}

fn is_symmetric<T: Real, const D: usize>(m: &[[T; D]; D]) -> bool {
    (0..D).all(|i| (0..D).all(|j| m[i][j] == m[j][i]))
}

/// Semidefiniteness via an LDL^T factorization with a small pivot tolerance.
fn psd<T: Real, const D: usize>(m: &[[T; D]; D], strict: bool) -> bool {
    let mut a = *m;
    let scale = (0..D).fold(T::zero(), |acc, i| acc.max(a[i][i].abs()));
    let tol = scale * T::lit(1e-10);
    for k in 0..D {
        let p = a[k][k];
        if p < -tol || (strict && p <= tol) {
            return false;
        }
        if p.abs() <= tol {
            // zero pivot: the whole remaining row must vanish
            if (k + 1..D).any(|j| a[k][j].abs() > tol) {
                return false;
            }
            continue;
        }
        for i in k + 1..D {
            let f = a[i][k] / p;
            for j in k..D {
                a[i][j] = a[i][j] - f * a[k][j];
            }
        }
    }
    true
}
