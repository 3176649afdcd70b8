use serde::{Deserialize, Serialize};

use crate::geometry::Track;
use crate::scalar::Real;
use crate::vehicle::{CarState, ControlInput, VehicleParams};

/// Reference pose and input at one horizon step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint<T> {
    pub s: T,
    pub state: CarState<T>,
    pub input: ControlInput<T>,
}

/// `horizon + 1` reference points spaced `speed * step` apart along the lane
/// centerline at `lane_offset`, starting at arc length `s0`.
///
/// Reference steering follows the lane curvature, `delta_r = atan(l * kappa)`.
pub fn build_reference<T: Real>(
    track: &Track<T>,
    s0: T,
    speed: T,
    horizon: usize,
    step: T,
    lane_offset: T,
    params: &VehicleParams<T>,
) -> Vec<ReferencePoint<T>> {
    let spacing = speed * step;
    let mut s = track.wrap_s(s0);
    let mut out = Vec::with_capacity(horizon + 1);
    for i in 0..=horizon {
        if i > 0 {
            s = track.advance_offset(s, lane_offset, spacing);
        }
        let [x, y] = track.frenet_to_xy(s, lane_offset);
        let kappa = track.offset_curvature(s, lane_offset);
        out.push(ReferencePoint {
            s,
            state: CarState::new(x, y, track.heading(s)),
            input: ControlInput::new((params.wheelbase * kappa).atan(), speed),
        });
    }
    out
}
