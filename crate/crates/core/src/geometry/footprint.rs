use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Car body length (m).
pub const CAR_LENGTH: f64 = 4.7;
/// Car body width (m).
pub const CAR_WIDTH: f64 = 1.8;
/// Car body height (m). Recorded only; collision is planar.
pub const CAR_HEIGHT: f64 = 1.4;

/// Rectangle with arbitrary heading, anchored at its geometric center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox<T> {
    pub center: [T; 2],
    pub heading: T,
    pub half_length: T,
    pub half_width: T,
}

impl<T: Real> OrientedBox<T> {
    pub fn new(center: [T; 2], heading: T, length: T, width: T) -> Self {
        let half = T::lit(0.5);
        Self {
            center,
            heading,
            half_length: length * half,
            half_width: width * half,
        }
    }

    /// Car body footprint at a pose.
    pub fn car(x: T, y: T, heading: T) -> Self {
        Self::new([x, y], heading, T::lit(CAR_LENGTH), T::lit(CAR_WIDTH))
    }

    fn axes(&self) -> [[T; 2]; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [[T; 2]; 4] {
        let [u, v] = self.axes();
        let (a, b) = (self.half_length, self.half_width);
        let [cx, cy] = self.center;
        let at = |ka: T, kb: T| [cx + u[0] * ka + v[0] * kb, cy + u[1] * ka + v[1] * kb];
        [at(a, b), at(-a, b), at(-a, -b), at(a, -b)]
    }

    /// Half extent of the box projected onto a unit axis.
    fn radius_along(&self, axis: [T; 2]) -> T {
        let [u, v] = self.axes();
        self.half_length * (u[0] * axis[0] + u[1] * axis[1]).abs()
            + self.half_width * (v[0] * axis[0] + v[1] * axis[1]).abs()
    }

    /// Separating-axis overlap test. Touching boxes count as overlapping.
    pub fn overlaps(&self, other: &Self) -> bool {
        let d = [
            other.center[0] - self.center[0],
            other.center[1] - self.center[1],
        ];
        let [a0, a1] = self.axes();
        let [b0, b1] = other.axes();
        [a0, a1, b0, b1].into_iter().all(|axis| {
            let dist = (d[0] * axis[0] + d[1] * axis[1]).abs();
            dist <= self.radius_along(axis) + other.radius_along(axis)
        })
    }

    /// Half of the diagonal: the largest distance from the center to the boundary.
    pub fn circumradius(&self) -> T {
        self.half_length.hypot(self.half_width)
    }
}
