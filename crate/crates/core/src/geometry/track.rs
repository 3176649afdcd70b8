use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::obstacle::Obstacle;
use crate::scalar::{wrap_angle, Real};

/// Schema version of the exported [`TrackLayout`] document.
pub const LAYOUT_VERSION: u32 = 1;

const LANE_WIDTH: f64 = 3.0;
const SAMPLE_SPACING: f64 = 0.5;
const CLOSURE_TOL: f64 = 1e-6;
const MAX_PROJECTION_DISTANCE: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("segment plan does not close: position gap {position_gap:.3e} m, heading gap {heading_gap:.3e} rad")]
    NotClosed { position_gap: f64, heading_gap: f64 },
    #[error("point is {distance:.1} m from the centerline (limit {limit} m)")]
    FarFromTrack { distance: f64, limit: f64 },
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
}

/// One piece of the centerline. Arcs carry a signed sweep: positive turns left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment<T> {
    Straight { length: T },
    Arc { radius: T, sweep: T },
}

impl<T: Real> Segment<T> {
    pub fn length(&self) -> T {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, sweep } => radius * sweep.abs(),
        }
    }

    pub fn curvature(&self) -> T {
        match *self {
            Segment::Straight { .. } => T::zero(),
            Segment::Arc { radius, sweep } => sweep.signum() / radius,
        }
    }

    pub fn heading_change(&self) -> T {
        match *self {
            Segment::Straight { .. } => T::zero(),
            Segment::Arc { sweep, .. } => sweep,
        }
    }
}

/// Segment together with its starting arc length and pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedSegment<T> {
    pub segment: Segment<T>,
    pub s_start: T,
    pub start: [T; 2],
    pub heading: T,
}

impl<T: Real> PlacedSegment<T> {
    /// Position, heading and curvature at local distance `u` from the segment start.
    fn pose_at(&self, u: T) -> ([T; 2], T) {
        let [x0, y0] = self.start;
        match self.segment {
            Segment::Straight { .. } => {
                let (s, c) = self.heading.sin_cos();
                ([x0 + u * c, y0 + u * s], self.heading)
            }
            Segment::Arc { .. } => {
                let k = self.segment.curvature();
                let th = self.heading + k * u;
                let x = x0 + (th.sin() - self.heading.sin()) / k;
                let y = y0 - (th.cos() - self.heading.cos()) / k;
                ([x, y], th)
            }
        }
    }

    /// Nearest point on this segment: local distance, signed offset, unsigned distance.
    fn nearest(&self, p: [T; 2]) -> (T, T, T) {
        let len = self.segment.length();
        let u = match self.segment {
            Segment::Straight { .. } => {
                let (s, c) = self.heading.sin_cos();
                let t = (p[0] - self.start[0]) * c + (p[1] - self.start[1]) * s;
                t.max(T::zero()).min(len)
            }
            Segment::Arc { radius, sweep } => {
                let sigma = sweep.signum();
                let (hs, hc) = self.heading.sin_cos();
                // center lies on the inside normal of the start pose
                let cx = self.start[0] - sigma * radius * hs;
                let cy = self.start[1] + sigma * radius * hc;
                let start_angle = (self.start[1] - cy).atan2(self.start[0] - cx);
                let angle = (p[1] - cy).atan2(p[0] - cx);
                let progress = sigma * wrap_angle(angle - start_angle);
                progress.max(T::zero()).min(sweep.abs()) * radius
            }
        };
        let (foot, heading) = self.pose_at(u);
        let (dx, dy) = (p[0] - foot[0], p[1] - foot[1]);
        let dist = dx.hypot(dy);
        let side = -heading.sin() * dx + heading.cos() * dy;
        let signed = if side < T::zero() { -dist } else { dist };
        (u, signed, dist)
    }
}

/// Dense centerline sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSample<T> {
    pub s: T,
    pub x: T,
    pub y: T,
    pub heading: T,
    pub curvature: T,
}

/// Arc length and signed lateral offset (positive to the left of travel).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection<T> {
    pub s: T,
    pub d: T,
}

/// Closed two-lane loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track<T> {
    pub segments: Vec<PlacedSegment<T>>,
    pub lane_width: T,
    /// Distance from the road centerline to either road edge.
    pub half_width: T,
    pub total_length: T,
    /// Indices into `segments` of the designated turn arcs.
    pub turns: Vec<usize>,
    pub samples: Vec<TrackSample<T>>,
}

impl<T: Real> Track<T> {
    /// Lays the segments end to end starting at the origin heading along +x and
    /// checks closure.
    pub fn from_segments(plan: &[Segment<T>], turns: Vec<usize>) -> Result<Self, TrackError> {
        let mut segments = Vec::with_capacity(plan.len());
        let mut s = T::zero();
        let mut start = [T::zero(); 2];
        let mut heading = T::zero();
        for seg in plan {
            let ok = match *seg {
                Segment::Straight { length } => length > T::zero(),
                Segment::Arc { radius, sweep } => radius > T::zero() && sweep != T::zero(),
            };
            if !ok {
                return Err(TrackError::InvalidSegment(format!("{seg:?}")));
            }
            let placed = PlacedSegment {
                segment: *seg,
                s_start: s,
                start,
                heading,
            };
            let (end, end_heading) = placed.pose_at(seg.length());
            segments.push(placed);
            s = s + seg.length();
            start = end;
            heading = end_heading;
        }
        let position_gap = start[0].hypot(start[1]).to_f64_lossy();
        let heading_gap = wrap_angle(heading).abs().to_f64_lossy();
        // single precision accumulates rounding over a few hundred meters
        let tol = CLOSURE_TOL.max(100.0 * T::epsilon().to_f64_lossy() * s.to_f64_lossy());
        if !(position_gap <= tol && heading_gap <= tol) {
            return Err(TrackError::NotClosed {
                position_gap,
                heading_gap,
            });
        }
        let lane_width = T::lit(LANE_WIDTH);
        let mut track = Track {
            segments,
            lane_width,
            half_width: lane_width,
            total_length: s,
            turns,
            samples: Vec::new(),
        };
        track.samples = track.resample(T::lit(SAMPLE_SPACING));
        Ok(track)
    }

    fn resample(&self, spacing: T) -> Vec<TrackSample<T>> {
        let n = (self.total_length / spacing)
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        let step = self.total_length / T::from_count(n);
        (0..n)
            .map(|i| {
                let s = step * T::from_count(i);
                let ([x, y], heading) = self.pose(s);
                TrackSample {
                    s,
                    x,
                    y,
                    heading,
                    curvature: self.curvature(s),
                }
            })
            .collect()
    }

    /// Wraps an arc length into `[0, total_length)`.
    pub fn wrap_s(&self, s: T) -> T {
        let r = s % self.total_length;
        if r < T::zero() {
            r + self.total_length
        } else {
            r
        }
    }

    /// Signed arc-length difference `a - b` reduced to `(-L/2, L/2]`.
    pub fn s_delta(&self, a: T, b: T) -> T {
        let half = self.total_length * T::lit(0.5);
        let mut d = self.wrap_s(a - b);
        if d > half {
            d = d - self.total_length;
        }
        d
    }

    fn segment_index(&self, s: T) -> usize {
        let s = self.wrap_s(s);
        match self
            .segments
            .binary_search_by(|seg| seg.s_start.partial_cmp(&s).expect("finite arc length"))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// Centerline position and heading at arc length `s` (wrapped).
    pub fn pose(&self, s: T) -> ([T; 2], T) {
        let s = self.wrap_s(s);
        let seg = &self.segments[self.segment_index(s)];
        let (p, h) = seg.pose_at(s - seg.s_start);
        (p, wrap_angle(h))
    }

    pub fn heading(&self, s: T) -> T {
        self.pose(s).1
    }

    pub fn curvature(&self, s: T) -> T {
        self.segments[self.segment_index(s)].segment.curvature()
    }

    /// Point at arc length `s` and lateral offset `d`.
    pub fn frenet_to_xy(&self, s: T, d: T) -> [T; 2] {
        let ([x, y], h) = self.pose(s);
        [x - d * h.sin(), y + d * h.cos()]
    }

    /// Nearest centerline point to `p`.
    pub fn project(&self, p: [T; 2]) -> Result<Projection<T>, TrackError> {
        let mut best: Option<(T, T, T)> = None;
        for seg in &self.segments {
            let (u, d, dist) = seg.nearest(p);
            if best.is_none_or(|(_, _, b)| dist < b) {
                best = Some((seg.s_start + u, d, dist));
            }
        }
        let (s, d, dist) = best.expect("track has segments");
        if !(dist <= T::lit(MAX_PROJECTION_DISTANCE)) {
            return Err(TrackError::FarFromTrack {
                distance: dist.to_f64_lossy(),
                limit: MAX_PROJECTION_DISTANCE,
            });
        }
        Ok(Projection {
            s: self.wrap_s(s),
            d,
        })
    }

    /// Center-based on-road test: `|d| <= half_width`.
    pub fn is_on_road(&self, x: T, y: T) -> bool {
        match self.project([x, y]) {
            Ok(p) => p.d.abs() <= self.half_width,
            Err(_) => false,
        }
    }

    /// Arc length reached after travelling `dist` along the parallel curve at
    /// constant offset `d`.
    pub fn advance_offset(&self, s: T, d: T, dist: T) -> T {
        let mut s = self.wrap_s(s);
        let mut left = dist;
        for _ in 0..=2 * self.segments.len() {
            let seg = &self.segments[self.segment_index(s)];
            let end = seg.s_start + seg.segment.length();
            let factor = T::one() - seg.segment.curvature() * d;
            let avail = (end - s) * factor;
            if left <= avail {
                return self.wrap_s(s + left / factor);
            }
            left = left - avail;
            s = self.wrap_s(end);
        }
        s
    }

    /// Curvature of the parallel curve at offset `d`.
    pub fn offset_curvature(&self, s: T, d: T) -> T {
        let k = self.curvature(s);
        k / (T::one() - k * d)
    }

    /// Lateral offset of the lane centerlines: right lane at `-offset`, left at `+offset`.
    pub fn lane_offset(&self) -> T {
        self.lane_width * T::lit(0.5)
    }

    /// Versioned export of segments plus an obstacle layout.
    pub fn layout(&self, obstacles: &[Obstacle<T>]) -> TrackLayout<T> {
        TrackLayout {
            version: LAYOUT_VERSION,
            lane_width: self.lane_width,
            half_width: self.half_width,
            total_length: self.total_length,
            segments: self.segments.iter().map(|s| s.segment).collect(),
            turns: self.turns.clone(),
            obstacles: obstacles.to_vec(),
        }
    }
}

/// JSON document shared with the cockpit and embedded in logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackLayout<T> {
    pub version: u32,
    pub lane_width: T,
    pub half_width: T,
    pub total_length: T,
    pub segments: Vec<Segment<T>>,
    pub turns: Vec<usize>,
    pub obstacles: Vec<Obstacle<T>>,
}

impl<T: Real> TrackLayout<T> {
    pub fn to_track(&self) -> Result<Track<T>, TrackError> {
        let mut t = Track::from_segments(&self.segments, self.turns.clone())?;
        t.lane_width = self.lane_width;
        t.half_width = self.half_width;
        Ok(t)
    }
}

/// The 408 m loop: four +110 deg turns and two -40 deg reverse bends.
///
/// The plan is two copies of a half loop whose heading change is 180 deg, so the
/// second half retraces the first rotated by pi and position closure holds for
/// any straight lengths. The last straight of each half absorbs the remaining length.
pub fn build_default_track<T: Real>() -> Track<T> {
    let turn_radius = 16.0;
    let bend_radius = 30.0;
    let turn = 110f64.to_radians();
    let bend = -40f64.to_radians();
    let arcs = 2.0 * turn_radius * turn + bend_radius * bend.abs();
    let straights = 408.0 / 2.0 - arcs;
    let (a, b) = (50.0, 30.0);
    let c = straights - a - b;
    let half = [
        Segment::Straight { length: T::lit(a) },
        Segment::Arc {
            radius: T::lit(turn_radius),
            sweep: T::lit(turn),
        },
        Segment::Straight { length: T::lit(b) },
        Segment::Arc {
            radius: T::lit(bend_radius),
            sweep: T::lit(bend),
        },
        Segment::Straight { length: T::lit(c) },
        Segment::Arc {
            radius: T::lit(turn_radius),
            sweep: T::lit(turn),
        },
    ];
    let plan: Vec<_> = half.iter().chain(half.iter()).copied().collect();
    Track::from_segments(&plan, vec![1, 5, 7, 11]).expect("default plan closes")
}
