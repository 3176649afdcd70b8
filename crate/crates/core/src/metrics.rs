//! Driving-performance metrics over a trial's time series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Obstacle;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series too short: {len} samples, need at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("series lengths disagree: {0}")]
    Inconsistent(String),
    #[error("cutoff {cutoff} Hz must lie below Nyquist ({nyquist} Hz)")]
    BadCutoff { cutoff: f64, nyquist: f64 },
}

/// Tick-level log of the rear car, sampled uniformly at `tick` seconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct TrialSeries<T> {
    pub tick: T,
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub phi: Vec<T>,
    /// Unwrapped arc-length progress since the start line.
    pub progress: Vec<T>,
    pub offset: Vec<T>,
    pub steering: Vec<T>,
    pub handle_position: Vec<T>,
    pub feedback_force: Vec<T>,
    pub human_force: Vec<T>,
    pub on_road: Vec<bool>,
    pub lead_x: Vec<T>,
    pub lead_y: Vec<T>,
    pub lead_phi: Vec<T>,
    pub obstacles: Vec<Obstacle<T>>,
    pub track_length: T,
    /// Tick index at which each lap was completed.
    pub lap_ends: Vec<usize>,
}

impl<T: Real> TrialSeries<T> {
    pub fn with_capacity(tick: T, n: usize) -> Self {
        let v = || Vec::with_capacity(n);
        Self {
            tick,
            x: v(),
            y: v(),
            phi: v(),
            progress: v(),
            offset: v(),
            steering: v(),
            handle_position: v(),
            feedback_force: v(),
            human_force: v(),
            on_road: Vec::with_capacity(n),
            lead_x: v(),
            lead_y: v(),
            lead_phi: v(),
            obstacles: Vec::new(),
            track_length: T::zero(),
            lap_ends: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.len()).map(|i| T::from_count(i) * self.tick)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let n = self.len();
        let lens = [
            ("y", self.y.len()),
            ("phi", self.phi.len()),
            ("progress", self.progress.len()),
            ("offset", self.offset.len()),
            ("steering", self.steering.len()),
            ("handle_position", self.handle_position.len()),
            ("feedback_force", self.feedback_force.len()),
            ("human_force", self.human_force.len()),
            ("on_road", self.on_road.len()),
            ("lead_x", self.lead_x.len()),
            ("lead_y", self.lead_y.len()),
            ("lead_phi", self.lead_phi.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(MetricsError::Inconsistent(format!(
                    "{name} has {len} samples, x has {n}"
                )));
            }
        }
        if !(self.tick > T::zero()) {
            return Err(MetricsError::Inconsistent("tick must be positive".into()));
        }
        if self.lap_ends.iter().any(|&i| i >= n.max(1))
            || self.lap_ends.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(MetricsError::Inconsistent("lap ends out of order".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real"))]
pub struct MetricsConfig<T> {
    /// Low-pass cutoff applied before differencing (Hz).
    pub jerk_cutoff_hz: T,
    /// Half-width of the arc-length window around each obstacle (m).
    pub margin_window: T,
    /// Distance past an obstacle after which it counts as passed (m).
    pub pass_distance: T,
}

impl<T: Real> Default for MetricsConfig<T> {
    fn default() -> Self {
        Self {
            jerk_cutoff_hz: T::lit(10.0),
            margin_window: T::lit(20.0),
            pass_distance: T::lit(5.0),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct TrialMetrics<T> {
    /// RMS third derivative of the steering angle (rad/s^3).
    pub steering_jerk_rms: T,
    /// RMS magnitude of the third derivative of the rear car's position (m/s^3).
    pub path_jerk_rms: T,
    /// One margin per obstacle pass (m).
    pub obstacle_margins: Vec<T>,
    /// Obstacle passes that the trial did not complete.
    pub obstacles_not_passed: usize,
    pub times_off_road: usize,
    /// s
    pub off_road_mean_duration: T,
    pub max_feedback_force: T,
}

impl<T: Real> TrialMetrics<T> {
    pub fn mean_margin(&self) -> Option<T> {
        if self.obstacle_margins.is_empty() {
            None
        } else {
            let sum = self.obstacle_margins.iter().fold(T::zero(), |a, &b| a + b);
            Some(sum / T::from_count(self.obstacle_margins.len()))
        }
    }
}

/// Cascade of second-order sections in transposed direct form II.
#[derive(Clone, Debug, PartialEq)]
pub struct Biquad<T> {
    pub b: [T; 3],
    /// `a0` is normalized to one.
    pub a: [T; 2],
}

impl<T: Real> Biquad<T> {
    fn steady_state(&self, u: T) -> [T; 2] {
        let z2 = (self.b[2] - self.a[1]) * u;
        [(self.b[1] - self.a[0]) * u + z2, z2]
    }

    fn run(&self, x: &mut [T]) {
        let Some(&first) = x.first() else { return };
        let [mut z1, mut z2] = self.steady_state(first);
        for v in x.iter_mut() {
            let u = *v;
            let y = self.b[0] * u + z1;
            z1 = self.b[1] * u - self.a[0] * y + z2;
            z2 = self.b[2] * u - self.a[1] * y;
            *v = y;
        }
    }
}

/// Fourth-order Butterworth low-pass from the bilinear transform with prewarping.
pub fn butterworth4<T: Real>(cutoff_hz: T, sample_hz: T) -> Result<Vec<Biquad<T>>, MetricsError> {
    let nyquist = sample_hz / T::two();
    if !(cutoff_hz > T::zero() && cutoff_hz < nyquist) {
        return Err(MetricsError::BadCutoff {
            cutoff: cutoff_hz.to_f64_lossy(),
            nyquist: nyquist.to_f64_lossy(),
        });
    }
    let k = (T::PI() * cutoff_hz / sample_hz).tan();
    let k2 = k * k;
    let one = T::one();
    Ok((0..2)
        .map(|i| {
            let theta = T::PI() * T::from_count(2 * i + 1) / T::lit(8.0);
            let q = one / (T::two() * theta.cos());
            let norm = one / (one + k / q + k2);
            let b0 = k2 * norm;
            Biquad {
                b: [b0, T::two() * b0, b0],
                a: [T::two() * (k2 - one) * norm, (one - k / q + k2) * norm],
            }
        })
        .collect())
}

/// Zero-phase filtering: forward and backward passes over an odd-reflected
/// extension of the signal.
pub fn filtfilt<T: Real>(sections: &[Biquad<T>], x: &[T], pad: usize) -> Vec<T> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = pad.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (x0, xn) = (x[0], x[n - 1]);
    ext.extend((1..=pad).rev().map(|i| T::two() * x0 - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| T::two() * xn - x[n - 1 - i]));
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Samples covering three cutoff periods; used both as reflection padding and as
/// the edge band excluded from jerk statistics.
fn edge_band<T: Real>(tick: T, cutoff_hz: T) -> usize {
    (T::lit(3.0) / (cutoff_hz * tick))
        .ceil()
        .to_usize()
        .unwrap_or(0)
}

fn low_pass<T: Real>(x: &[T], tick: T, cutoff_hz: T) -> Result<Vec<T>, MetricsError> {
    let sections = butterworth4(cutoff_hz, T::one() / tick)?;
    Ok(filtfilt(&sections, x, 2 * edge_band(tick, cutoff_hz)))
}

/// Drops the filter's edge transients when the signal is long enough to spare them.
fn interior<T: Real>(j: &[T], tick: T, cutoff_hz: T) -> &[T] {
    let band = edge_band(tick, cutoff_hz);
    if j.len() > 4 * band {
        &j[band..j.len() - band]
    } else {
        j
    }
}

/// Third derivative by the five-point central stencil, or the single forward
/// difference when only four samples exist.
pub fn third_difference<T: Real>(x: &[T], h: T) -> Result<Vec<T>, MetricsError> {
    let n = x.len();
    let h3 = h * h * h;
    match n {
        0..=3 => Err(MetricsError::TooShort { len: n, need: 4 }),
        4 => Ok(vec![
            (x[3] - T::lit(3.0) * x[2] + T::lit(3.0) * x[1] - x[0]) / h3,
        ]),
        _ => Ok((2..n - 2)
            .map(|i| {
                (x[i + 2] - T::two() * x[i + 1] + T::two() * x[i - 1] - x[i - 2]) / (T::two() * h3)
            })
            .collect()),
    }
}

fn rms<T: Real>(v: impl Iterator<Item = T>) -> T {
    let (sum, n) = v.fold((T::zero(), 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        T::zero()
    } else {
        (sum / T::from_count(n)).sqrt()
    }
}

/// RMS jerk of a uniformly sampled signal after zero-phase low-pass filtering.
pub fn jerk_metric<T: Real>(signal: &[T], tick: T, cutoff_hz: T) -> Result<T, MetricsError> {
    if signal.len() < 4 {
        return Err(MetricsError::TooShort {
            len: signal.len(),
            need: 4,
        });
    }
    let j = third_difference(&low_pass(signal, tick, cutoff_hz)?, tick)?;
    Ok(rms(interior(&j, tick, cutoff_hz).iter().copied()))
}

/// RMS magnitude of the planar jerk of a path.
pub fn path_jerk_metric<T: Real>(
    x: &[T],
    y: &[T],
    tick: T,
    cutoff_hz: T,
) -> Result<T, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::Inconsistent("x and y lengths differ".into()));
    }
    let jx = third_difference(&low_pass(x, tick, cutoff_hz)?, tick)?;
    let jy = third_difference(&low_pass(y, tick, cutoff_hz)?, tick)?;
    let (jx, jy) = (
        interior(&jx, tick, cutoff_hz),
        interior(&jy, tick, cutoff_hz),
    );
    Ok(rms(jx
        .iter()
        .zip(jy)
        .map(|(&a, &b)| (a * a + b * b).sqrt())))
}

/// Per-pass obstacle margins and the number of passes not completed.
///
/// Every obstacle is met once per lap at unwrapped arc length
/// `arc_position + lap * track_length`. A pass counts once progress reaches
/// `pass_distance` beyond it; its margin is the minimum center distance over the
/// ticks within `window` of it.
pub fn obstacle_margin<T: Real>(
    x: &[T],
    y: &[T],
    progress: &[T],
    obstacles: &[Obstacle<T>],
    track_length: T,
    window: T,
    pass_distance: T,
) -> (Vec<T>, usize) {
    if progress.is_empty() || obstacles.is_empty() {
        return (Vec::new(), 0);
    }
    let start = progress[0];
    let end = progress.iter().fold(T::neg_infinity(), |m, &p| m.max(p));
    let laps = if track_length > T::zero() {
        ((end + window) / track_length)
            .floor()
            .to_usize()
            .unwrap_or(0)
            + 1
    } else {
        1
    };
    let mut passes = Vec::new();
    for lap in 0..laps {
        let offset = T::from_count(lap) * track_length;
        for o in obstacles {
            let at = o.arc_position + offset;
            if at >= start && at - window <= end {
                passes.push((at, o));
            }
        }
    }
    passes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    let mut margins = Vec::new();
    let mut missed = 0;
    for (at, o) in passes {
        if end < at + pass_distance {
            missed += 1;
            continue;
        }
        let best = progress
            .iter()
            .zip(x.iter().zip(y))
            .filter(|(p, _)| (**p - at).abs() <= window)
            .map(|(_, (&px, &py))| o.distance_sq(px, py))
            .fold(T::infinity(), T::min);
        if best.is_finite() {
            margins.push(best.sqrt());
        } else {
            missed += 1;
        }
    }
    (margins, missed)
}

/// Number of maximal off-road runs and their mean duration (s).
pub fn off_road_stats<T: Real>(on_road: &[bool], tick: T) -> (usize, T) {
    let mut runs = 0usize;
    let mut off_ticks = 0usize;
    let mut prev = true;
    for &on in on_road {
        if !on {
            off_ticks += 1;
            if prev {
                runs += 1;
            }
        }
        prev = on;
    }
    if runs == 0 {
        (0, T::zero())
    } else {
        (runs, T::from_count(off_ticks) / T::from_count(runs) * tick)
    }
}

pub fn compute_metrics<T: Real>(
    series: &TrialSeries<T>,
    cfg: &MetricsConfig<T>,
) -> Result<TrialMetrics<T>, MetricsError> {
    series.validate()?;
    let steering_jerk_rms = jerk_metric(&series.steering, series.tick, cfg.jerk_cutoff_hz)?;
    let path_jerk_rms = path_jerk_metric(&series.x, &series.y, series.tick, cfg.jerk_cutoff_hz)?;
    let (obstacle_margins, obstacles_not_passed) = obstacle_margin(
        &series.x,
        &series.y,
        &series.progress,
        &series.obstacles,
        series.track_length,
        cfg.margin_window,
        cfg.pass_distance,
    );
    let (times_off_road, off_road_mean_duration) = off_road_stats(&series.on_road, series.tick);
    let max_feedback_force = series
        .feedback_force
        .iter()
        .fold(T::zero(), |m, f| m.max(f.abs()));
    Ok(TrialMetrics {
        steering_jerk_rms,
        path_jerk_rms,
        obstacle_margins,
        obstacles_not_passed,
        times_off_road,
        off_road_mean_duration,
        max_feedback_force,
    })
}

/// Descriptive statistics of one metric over the trials of a condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single trial.
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

/// Metric names in CSV order.
pub const METRIC_NAMES: [&str; 5] = [
    "steering_jerk",
    "path_jerk",
    "obstacle_margin",
    "times_off_road",
    "off_road_duration",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionAggregate {
    pub steering_jerk: Option<Summary>,
    pub path_jerk: Option<Summary>,
    /// Over trials that passed at least one obstacle; each contributes its mean margin.
    pub obstacle_margin: Option<Summary>,
    pub times_off_road: Option<Summary>,
    pub off_road_duration: Option<Summary>,
}

impl ConditionAggregate {
    pub fn rows(&self) -> [(&'static str, Option<Summary>); 5] {
        [
            (METRIC_NAMES[0], self.steering_jerk),
            (METRIC_NAMES[1], self.path_jerk),
            (METRIC_NAMES[2], self.obstacle_margin),
            (METRIC_NAMES[3], self.times_off_road),
            (METRIC_NAMES[4], self.off_road_duration),
        ]
    }
}

pub fn aggregate_condition<T: Real>(trials: &[TrialMetrics<T>]) -> ConditionAggregate {
    let col = |f: &dyn Fn(&TrialMetrics<T>) -> Option<T>| -> Option<Summary> {
        let v: Vec<f64> = trials
            .iter()
            .filter_map(f)
            .map(|x| x.to_f64_lossy())
            .collect();
        Summary::of(&v)
    };
    ConditionAggregate {
        steering_jerk: col(&|m| Some(m.steering_jerk_rms)),
        path_jerk: col(&|m| Some(m.path_jerk_rms)),
        obstacle_margin: col(&|m| m.mean_margin()),
        times_off_road: col(&|m| Some(T::from_count(m.times_off_road))),
        off_road_duration: col(&|m| Some(m.off_road_mean_duration)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_default_track, Side};
    use proptest::prelude::*;

    const H: f64 = 0.005;

    fn sine(a: f64, w: f64, phase: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| a * (w * i as f64 * H + phase).sin())
            .collect()
    }

    #[test]
    fn constant_and_ramp_have_no_jerk() {
        let c = vec![0.3; 400];
        assert!(jerk_metric(&c, H, 10.0).unwrap() < 1e-9);
        let r: Vec<f64> = (0..400).map(|i| 0.01 * i as f64 * H - 0.2).collect();
        assert!(jerk_metric(&r, H, 10.0).unwrap() < 1e-6);
    }

    #[test]
    fn sinusoid_jerk_matches_closed_form() {
        for (a, f, phase) in [(0.1, 1.0, 0.0), (0.05, 2.0, 0.7), (0.2, 0.5, 2.0)] {
            let w = 2.0 * std::f64::consts::PI * f;
            let x = sine(a, w, phase, 4000);
            let got = jerk_metric(&x, H, 10.0).unwrap();
            let want = a * w.powi(3) / 2f64.sqrt();
            assert!((got / want - 1.0).abs() < 0.02, "f {f}: {got} vs {want}");
        }
    }

    #[test]
    fn filter_passes_dc_and_blocks_high_frequency() {
        let s = butterworth4(10.0f64, 200.0).unwrap();
        let dc = filtfilt(&s, &[1.0; 300], 60);
        assert!(dc.iter().all(|v: &f64| (v - 1.0).abs() < 1e-12));
        let hf = sine(1.0, 2.0 * std::f64::consts::PI * 60.0, 0.0, 2000);
        let out = filtfilt(&s, &hf, 60);
        let peak = out[200..1800].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 1e-3, "{peak}");
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(matches!(
            jerk_metric(&[0.0; 3], H, 10.0),
            Err(MetricsError::TooShort { .. })
        ));
        assert!(jerk_metric(&[0.0; 4], H, 10.0).is_ok());
        assert!(matches!(
            butterworth4(150.0, 200.0),
            Err(MetricsError::BadCutoff { .. })
        ));
    }

    #[test]
    fn third_difference_of_cubic_is_exact() {
        let h = 0.1;
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * h).powi(3)).collect();
        for j in third_difference(&x, h).unwrap() {
            assert!((j - 6.0).abs() < 1e-8);
        }
        assert!((third_difference(&x[..4], h).unwrap()[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn off_road_runs() {
        assert_eq!(off_road_stats(&[true; 50], H), (0, 0.0));
        let mut flags = vec![true; 10];
        flags.extend([false; 5]);
        flags.extend([true; 10]);
        flags.extend([false; 3]);
        flags.extend([true; 2]);
        let (n, d) = off_road_stats(&flags, H);
        assert_eq!(n, 2);
        assert!((d - 0.02).abs() < 1e-15);
        let mut one = vec![true; 5];
        one.extend([false; 200]);
        one.extend([true; 5]);
        let (n, d) = off_road_stats(&one, H);
        assert_eq!(n, 1);
        assert!((d - 1.0).abs() < 1e-12);
        // a run that is still open at the end counts
        assert_eq!(off_road_stats(&[true, false], H).0, 1);
    }

    fn straight_pass(lateral: f64, v: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Obstacle<f64>) {
        // obstacle at s = 30 on the first straight; car parallel to the road
        let t = build_default_track::<f64>();
        let o = Obstacle::at(&t, 30.0, Side::Right);
        let n = (50.0 / (v * H)) as usize;
        let (mut xs, mut ys, mut ps) = (vec![], vec![], vec![]);
        for i in 0..n {
            let s = 0.3 + i as f64 * v * H;
            let [x, y] = t.frenet_to_xy(s, -1.5 + lateral);
            xs.push(x);
            ys.push(y);
            ps.push(s);
        }
        (xs, ys, ps, o)
    }

    #[test]
    fn margin_of_parallel_pass() {
        let v = 12.5;
        let (x, y, p, o) = straight_pass(3.0, v);
        let (m, missed) = obstacle_margin(&x, &y, &p, &[o], 408.0, 20.0, 5.0);
        assert_eq!(missed, 0);
        assert_eq!(m.len(), 1);
        assert!((m[0] - 3.0).abs() <= H * v / 2.0, "{}", m[0]);
    }

    #[test]
    fn margin_through_center_is_near_zero() {
        let v = 10.0;
        let (x, y, p, o) = straight_pass(0.0, v);
        let (m, _) = obstacle_margin(&x, &y, &p, &[o], 408.0, 20.0, 5.0);
        assert!(m[0] <= H * v / 2.0);
    }

    #[test]
    fn unpassed_obstacle_is_flagged() {
        let (x, y, p, o) = straight_pass(3.0, 10.0);
        let cut = p.iter().position(|&s| s > 33.0).unwrap();
        let (m, missed) = obstacle_margin(&x[..cut], &y[..cut], &p[..cut], &[o], 408.0, 20.0, 5.0);
        assert!(m.is_empty());
        assert_eq!(missed, 1);
    }

    #[test]
    fn margin_counts_each_lap() {
        let t = build_default_track::<f64>();
        let o = Obstacle::at(&t, 100.0, Side::Left);
        let n = (2.0 * t.total_length / 0.05) as usize;
        let (mut xs, mut ys, mut ps) = (vec![], vec![], vec![]);
        for i in 0..n {
            let s = i as f64 * 0.05;
            let [x, y] = t.frenet_to_xy(s, -1.5);
            xs.push(x);
            ys.push(y);
            ps.push(s);
        }
        let (m, missed) = obstacle_margin(&xs, &ys, &ps, &[o], t.total_length, 20.0, 5.0);
        assert_eq!(m.len(), 2);
        assert_eq!(missed, 0);
        for v in m {
            assert!((v - 3.0).abs() < 0.05);
        }
    }

    #[test]
    fn aggregate_means_and_std() {
        let t = |k: usize, d: f64, j: f64| TrialMetrics {
            steering_jerk_rms: j,
            times_off_road: k,
            off_road_mean_duration: d,
            ..TrialMetrics::default()
        };
        let a = aggregate_condition(&[t(1, 0.1, 2.0), t(3, 0.3, 2.0)]);
        assert_eq!(a.times_off_road.unwrap().mean, 2.0);
        assert_eq!(a.steering_jerk.unwrap().std, 0.0);
        assert!(a.obstacle_margin.is_none());
        // five trials against a hand computation
        let ks = [0usize, 2, 1, 4, 3];
        let trials: Vec<_> = ks.iter().map(|&k| t(k, 0.0, 1.0)).collect();
        let s = aggregate_condition(&trials).times_off_road.unwrap();
        assert_eq!(s.n, 5);
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(Summary::of(&[4.0]).unwrap().std, 0.0);
    }

    proptest! {
        #[test]
        fn jerk_is_shift_invariant_and_linear(c in -1.0f64..1.0, k in 0.1f64..5.0, seed in 0u64..50) {
            let x = sine(0.05, 3.0 + (seed % 7) as f64, seed as f64 * 0.1, 600);
            let base = jerk_metric(&x, H, 10.0).unwrap();
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
            prop_assert!((jerk_metric(&shifted, H, 10.0).unwrap() - base).abs() <= 1e-6 * base.max(1.0));
            prop_assert!((jerk_metric(&scaled, H, 10.0).unwrap() - k * base).abs() <= 1e-9 * k * base.max(1.0));
        }

        #[test]
        fn off_road_ignores_trailing_on_road(flags in proptest::collection::vec(any::<bool>(), 0..200), extra in 0usize..50) {
            let a = off_road_stats(&flags, H);
            let mut longer = flags.clone();
            longer.extend(std::iter::repeat(true).take(extra));
            prop_assert_eq!(a, off_road_stats(&longer, H));
        }

        #[test]
        fn margin_rotation_invariant(theta in -3.0f64..3.0, lateral in 0.0f64..3.0) {
            let (x, y, p, o) = straight_pass(lateral, 10.0);
            let (m0, _) = obstacle_margin(&x, &y, &p, &[o], 408.0, 20.0, 5.0);
            let (s, c) = theta.sin_cos();
            let rot = |px: f64, py: f64| [c * px - s * py, s * px + c * py];
            let xr: Vec<f64> = x.iter().zip(&y).map(|(&a, &b)| rot(a, b)[0]).collect();
            let yr: Vec<f64> = x.iter().zip(&y).map(|(&a, &b)| rot(a, b)[1]).collect();
            let mut or = o;
            or.center = rot(o.center[0], o.center[1]);
            let (m1, _) = obstacle_margin(&xr, &yr, &p, &[or], 408.0, 20.0, 5.0);
            prop_assert!((m0[0] - m1[0]).abs() < 1e-9);
        }
    }
}
