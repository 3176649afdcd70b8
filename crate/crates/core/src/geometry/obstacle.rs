use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::footprint::OrientedBox;
use super::track::Track;
use crate::scalar::Real;

pub const OBSTACLE_COUNT: usize = 5;
/// Edge length of the square obstacle footprint (m).
pub const OBSTACLE_SIZE: f64 = 2.0;
/// Recorded only; collision is planar.
pub const OBSTACLE_HEIGHT: f64 = 0.9;

const MIN_GAP: f64 = 20.0;
const MAX_GAP: f64 = 40.0;
/// Minimum arc length between the start line and the first obstacle.
const START_BUFFER: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign<T: Real>(self) -> T {
        match self {
            Side::Left => T::one(),
            Side::Right => -T::one(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle<T> {
    pub center: [T; 2],
    /// Road tangent at the obstacle; the footprint is aligned with it.
    pub heading: T,
    pub arc_position: T,
    pub side: Side,
    pub size: T,
}

impl<T: Real> Obstacle<T> {
    /// Obstacle centered mid-lane on `side` at arc length `s`.
    pub fn at(track: &Track<T>, s: T, side: Side) -> Self {
        let d = side.sign::<T>() * track.lane_offset();
        Self {
            center: track.frenet_to_xy(s, d),
            heading: track.heading(s),
            arc_position: track.wrap_s(s),
            side,
            size: T::lit(OBSTACLE_SIZE),
        }
    }

    pub fn footprint(&self) -> OrientedBox<T> {
        OrientedBox::new(self.center, self.heading, self.size, self.size)
    }

    pub fn distance_sq(&self, x: T, y: T) -> T {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        dx * dx + dy * dy
    }
}

/// Five obstacles with uniform 20-40 m arc-length gaps and uniformly drawn sides.
///
/// The first obstacle lands at least 50 m after the start line; the sequence is a
/// pure function of `seed`.
pub fn place_obstacles<T: Real>(track: &Track<T>, seed: u64) -> Vec<Obstacle<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = START_BUFFER - MIN_GAP;
    (0..OBSTACLE_COUNT)
        .map(|_| {
            s += rng.gen_range(MIN_GAP..=MAX_GAP);
            let side = if rng.gen_bool(0.5) {
                Side::Left
            } else {
                Side::Right
            };
            Obstacle::at(track, T::lit(s), side)
        })
        .collect()
}
