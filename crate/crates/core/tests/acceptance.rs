//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.
//! Runs as a plain binary so the report is always printed.

use std::time::{Duration, Instant};

use hapdrive_core::driver::{make_driver_cohort, skill_params, Driver, SkillSpread};
use hapdrive_core::experiment::{
    rerun_manifest, run_experiment, CohortConfig, ExperimentConfig, SPEEDS,
};
use hapdrive_core::geometry::{
    build_default_track, place_obstacles, Obstacle, OrientedBox, Side, Track,
};
use hapdrive_core::metrics::{
    aggregate_condition, compute_metrics, jerk_metric, obstacle_margin, off_road_stats,
    MetricsConfig, TrialMetrics,
};
use hapdrive_core::mpc::MpcController;
use hapdrive_core::scalar::wrap_angle;
use hapdrive_core::sim::{
    run_headless, HandInput, HeadlessHuman, LeadCache, LeadRun, RearSim, SimConfig,
};
use hapdrive_core::vehicle::{dynamics, linearize, CarState, ControlInput, VehicleParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, name: &str, pass: bool, detail: String, took: Duration) {
        if !pass {
            self.failed += 1;
        }
        println!(
            "{} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
}

fn jacobian_fidelity(r: &mut Report) {
    let t0 = Instant::now();
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = CarState::new(
            rng.gen_range(-200.0..200.0),
            rng.gen_range(-200.0..200.0),
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let u = ControlInput::new(rng.gen_range(-0.6..0.6), rng.gen_range(5.0..20.0));
        let j = linearize(&s, &u, &p).unwrap();
        let f = |s: &CarState<f64>, u: &ControlInput<f64>| dynamics(s, u, &p).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        let xs = [s.x, s.y, s.phi];
        for c in 0..3 {
            let e = 1e-6 * xs[c].abs().max(1.0);
            let (mut a, mut b) = (xs, xs);
            a[c] += e;
            b[c] -= e;
            let (fa, fb) = (
                f(&CarState::new(a[0], a[1], a[2]), &u),
                f(&CarState::new(b[0], b[1], b[2]), &u),
            );
            for i in 0..3 {
                let fd = (fa[i] - fb[i]) / (2.0 * e);
                num += (fd - j.m[i][c]).powi(2);
                den += j.m[i][c].powi(2);
            }
        }
        let us = [u.delta, u.v];
        for c in 0..2 {
            let e = 1e-6 * us[c].abs().max(1.0);
            let (mut a, mut b) = (us, us);
            a[c] += e;
            b[c] -= e;
            let (fa, fb) = (
                f(&s, &ControlInput::new(a[0], a[1])),
                f(&s, &ControlInput::new(b[0], b[1])),
            );
            for i in 0..3 {
                let fd = (fa[i] - fb[i]) / (2.0 * e);
                num += (fd - j.n[i][c]).powi(2);
                den += j.n[i][c].powi(2);
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    let took = t0.elapsed();
    r.line(
        "jacobian fidelity",
        worst <= 1e-6 && took < Duration::from_secs(1),
        format!("worst relative error {worst:.2e} over 100 references (limit 1e-6, < 1 s)"),
        took,
    );
}

fn mpc_expert_lap(r: &mut Report, track: &Track<f64>) {
    let t0 = Instant::now();
    let cfg = SimConfig::default();
    let (mut collisions, mut off_road, mut laps) = (0usize, 0usize, 0usize);
    let mut closest = f64::INFINITY;
    for &speed in &SPEEDS {
        for seed in 0..20 {
            let obstacles = place_obstacles(track, seed);
            let mut lead = LeadRun::new(track, obstacles.clone(), speed, &cfg).unwrap();
            let start = track
                .project(lead.state(track, 0).unwrap().position())
                .unwrap()
                .s;
            let (mut last, mut progress) = (start, 0.0);
            let mut k = 0;
            while progress < track.total_length {
                let s = lead.state(track, k).unwrap();
                let pr = track.project(s.position()).unwrap();
                progress += track.s_delta(pr.s, last);
                last = pr.s;
                if pr.d.abs() > track.half_width {
                    off_road += 1;
                }
                let fp = OrientedBox::car(s.x, s.y, s.phi);
                for o in &obstacles {
                    closest = closest.min(o.distance_sq(s.x, s.y).sqrt());
                    if fp.overlaps(&o.footprint()) {
                        collisions += 1;
                    }
                }
                k += 1;
            }
            laps += 1;
        }
    }
    let took = t0.elapsed();
    r.line(
        "MPC expert lap",
        collisions == 0 && off_road == 0 && took < Duration::from_secs(120),
        format!(
            "{laps} laps over 3 speeds x 20 layouts: {collisions} collision ticks, {off_road} off-road ticks, closest center distance {closest:.2} m (< 2 min)"
        ),
        took,
    );
}

fn solver_feasibility(r: &mut Report, track: &Track<f64>) {
    let t0 = Instant::now();
    let base = SimConfig::default();
    let c = &base.mpc;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut infeasible, mut ascent, mut instances) = (0usize, 0usize, 0usize);
    let mut improved = 0usize;
    for i in 0..1000 {
        let speed = SPEEDS[i % 3];
        let s0 = rng.gen_range(0.0..track.total_length);
        let d = c.lane_offset + rng.gen_range(-2.0..2.0);
        let [x, y] = track.frenet_to_xy(s0, d);
        let state = CarState::new(
            x,
            y,
            wrap_angle(track.heading(s0) + rng.gen_range(-0.3..0.3)),
        );
        let mut obstacles = place_obstacles(track, rng.gen());
        let side = if rng.gen() { Side::Left } else { Side::Right };
        obstacles.push(Obstacle::at(track, s0 + rng.gen_range(4.0..30.0), side));
        let mut mpc = MpcController::new(c.clone(), base.vehicle).unwrap();
        let delta_ref = (base.vehicle.wheelbase * track.offset_curvature(s0, c.lane_offset)).atan();
        mpc.set_last_input(Some(ControlInput::new(
            delta_ref + rng.gen_range(c.w_min[0]..=c.w_max[0]) * 0.999,
            speed,
        )));
        let (sol, _) = mpc.solve(&state, track, &obstacles, s0, speed).unwrap();
        instances += 1;
        if sol.obstacles_considered > 0 && sol.cost < sol.zero_cost {
            improved += 1;
        }
        let mut w = sol.w0;
        let mut ok = !sol.start_clamped;
        for u in &sol.dw_sequence {
            for k in 0..2 {
                ok &= u[k] >= c.dw_min[k] && u[k] <= c.dw_max[k];
                w[k] += u[k];
                ok &= w[k] >= c.w_min[k] && w[k] <= c.w_max[k];
            }
        }
        if !ok {
            infeasible += 1;
        }
        if sol.cost.is_nan() || sol.cost > sol.zero_cost {
            ascent += 1;
        }
    }
    r.line(
        "solver feasibility & descent",
        infeasible == 0 && ascent == 0 && instances == 1000,
        format!(
            "{instances} instances: {infeasible} violate a box, {ascent} end above the zero-increment cost; {improved} strictly improve with obstacles in view"
        ),
        t0.elapsed(),
    );
}

/// Rear-car log a coupled trial produces against the given lead trajectory.
fn rear_log(
    track: &Track<f64>,
    lead: &[CarState<f64>],
    obstacles: &[Obstacle<f64>],
    speed: f64,
    kp: f64,
) -> Vec<[u64; 9]> {
    let cfg = SimConfig::default();
    let mut rear = RearSim::new(track, speed, kp, &cfg);
    let mut driver = Driver::new(skill_params(0.5, 3), cfg.tick, cfg.vehicle.wheelbase).unwrap();
    lead.iter()
        .map(|l| {
            let s = rear
                .step(track, obstacles, l, HandInput::Driver(&mut driver))
                .unwrap();
            [
                s.rear.x.to_bits(),
                s.rear.y.to_bits(),
                s.rear.phi.to_bits(),
                s.steering.to_bits(),
                s.handle_position.to_bits(),
                s.feedback_force.to_bits(),
                s.human_force.to_bits(),
                s.progress.to_bits(),
                s.on_road as u64,
            ]
        })
        .collect()
}

fn coupling_transparency(r: &mut Report, track: &Track<f64>) {
    let t0 = Instant::now();
    let cfg = SimConfig::default();
    let (mut identical, mut pairs, mut ticks) = (true, 0, 0);
    let mut coupled_differs = true;
    for &speed in &SPEEDS {
        let obstacles = place_obstacles(track, 3);
        let n = (track.total_length / (speed * cfg.tick)) as usize;
        let mut a = LeadRun::new(track, obstacles.clone(), speed, &cfg).unwrap();
        a.state(track, n).unwrap();
        let a = a.states()[..n].to_vec();
        // B: same lead swaying up to 1.2 m sideways
        let b: Vec<_> = a
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let off = 1.2 * (0.9 * k as f64 * cfg.tick).sin();
                CarState::new(
                    s.x - off * s.phi.sin(),
                    s.y + off * s.phi.cos(),
                    s.phi + 0.05 * off,
                )
            })
            .collect();
        // C: lead planned around a different layout
        let mut c = LeadRun::new(track, place_obstacles(track, 17), speed, &cfg).unwrap();
        c.state(track, n).unwrap();
        let c = c.states()[..n].to_vec();
        let base = rear_log(track, &a, &obstacles, speed, 0.0);
        for other in [&b, &c] {
            identical &= rear_log(track, other, &obstacles, speed, 0.0) == base;
            pairs += 1;
        }
        coupled_differs &= rear_log(track, &a, &obstacles, speed, 200.0)
            != rear_log(track, &b, &obstacles, speed, 200.0);
        ticks += n;
    }
    r.line(
        "coupling transparency",
        identical && coupled_differs,
        format!(
            "Kp=0 rear logs bitwise identical across {pairs} lead perturbations ({ticks} ticks per variant); Kp=200 logs differ: {coupled_differs}"
        ),
        t0.elapsed(),
    );
}

fn force_saturation(r: &mut Report) {
    let t0 = Instant::now();
    let cfg = ExperimentConfig {
        write_records: false,
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&cfg.plans(), &cfg, None).unwrap();
    let max = out
        .records
        .iter()
        .filter_map(|rec| rec.metrics.as_ref())
        .map(|m| m.max_feedback_force)
        .fold(0.0f64, f64::max);
    let invalid = out.manifest.invalid.len();
    r.line(
        "force saturation",
        max <= 7.0 && invalid == 0,
        format!(
            "{} trials of a {}-driver experiment ({invalid} invalid): max |feedback force| {max:.6} N (limit 7 N)",
            out.manifest.trial_count, cfg.cohort.size
        ),
        t0.elapsed(),
    );
}

/// Mid-skill cohort, trial i = driver i on layout i under every condition.
fn trend_run(track: &Track<f64>) -> (Vec<Vec<Vec<TrialMetrics<f64>>>>, usize) {
    let cfg = SimConfig::default();
    let mcfg = MetricsConfig::default();
    let drivers = make_driver_cohort(30, SkillSpread::mid(), 99);
    let mut leads = LeadCache::new();
    let mut invalid = 0;
    let mut out = vec![];
    for &speed in &SPEEDS {
        let mut by_gain = vec![];
        for &kp in &[0.0, 200.0, 500.0] {
            let mut ms = vec![];
            for (i, d) in drivers.iter().enumerate() {
                let obstacles = place_obstacles(track, i as u64);
                let lead = leads.get(track, speed, i as u64, &obstacles, &cfg).unwrap();
                let driver = Driver::new(*d, cfg.tick, cfg.vehicle.wheelbase).unwrap();
                match run_headless(track, lead, kp, HeadlessHuman::Driver(driver), &cfg)
                    .map_err(|e| e.to_string())
                    .and_then(|s| compute_metrics(&s, &mcfg).map_err(|e| e.to_string()))
                {
                    Ok(m) => ms.push(m),
                    Err(_) => invalid += 1,
                }
            }
            by_gain.push(ms);
        }
        out.push(by_gain);
    }
    (out, invalid)
}

fn trends(r: &mut Report, track: &Track<f64>) {
    let t0 = Instant::now();
    let (runs, invalid) = trend_run(track);
    let took = t0.elapsed();
    let agg: Vec<Vec<_>> = runs
        .iter()
        .map(|g| g.iter().map(|ms| aggregate_condition(ms)).collect())
        .collect();
    let complete = invalid == 0 && runs.iter().all(|g| g.iter().all(|ms| ms.len() == 30));

    let off: Vec<[f64; 3]> = agg
        .iter()
        .map(|g| [0, 1, 2].map(|j| g[j].off_road_duration.unwrap().mean))
        .collect();
    let never_worse = off.iter().all(|o| o[1] <= o[0] && o[2] <= o[0]);
    let strict = off.iter().filter(|o| o[1] < o[0] && o[2] < o[0]).count();
    let fmt3 = |v: [f64; 3], p: usize| format!("{:.p$}/{:.p$}/{:.p$}", v[0], v[1], v[2]);
    r.line(
        "trend: off-road duration",
        complete && never_worse && strict >= 2 && took < Duration::from_secs(600),
        format!(
            "mean off-road duration (s) at Kp 0/200/500: {}; feedback never worse, strictly better at {strict}/3 speeds; {invalid} invalid trials",
            SPEEDS
                .iter()
                .zip(&off)
                .map(|(v, o)| format!("{v} m/s {}", fmt3(*o, 3)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        took,
    );

    let jerk: Vec<[f64; 3]> = [0, 1, 2]
        .into_iter()
        .map(|j| [0, 1, 2].map(|i| agg[i][j].steering_jerk.unwrap().mean))
        .collect();
    let increasing = jerk.iter().all(|v| v[0] < v[1] && v[1] < v[2]);
    r.line(
        "trend: jerk vs speed",
        complete && increasing,
        format!(
            "mean steering jerk (rad/s^3) at 10/12.5/15 m/s: {}",
            ["Kp 0", "Kp 200", "Kp 500"]
                .iter()
                .zip(&jerk)
                .map(|(k, v)| format!("{k} {}", fmt3(*v, 1)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        took,
    );

    let pooled = |i: usize| {
        let v: Vec<f64> = runs[i]
            .iter()
            .flatten()
            .filter_map(|m| m.mean_margin())
            .collect();
        (v.iter().sum::<f64>() / v.len() as f64, v.len())
    };
    let ((m10, n10), (m15, n15)) = (pooled(0), pooled(2));
    r.line(
        "trend: obstacle margin vs speed",
        complete && m15 < m10 && n10 == 90 && n15 == 90,
        format!("mean margin pooled over feedback levels: {m15:.3} m at 15 m/s vs {m10:.3} m at 10 m/s ({n10}/{n15} trials)"),
        took,
    );
}

fn metric_oracles(r: &mut Report, track: &Track<f64>) {
    let t0 = Instant::now();
    let h = 0.005;
    let mut worst_jerk = 0.0f64;
    for (a, f) in [(0.1, 0.5), (0.05, 1.0), (0.2, 2.0), (0.02, 3.0)] {
        let w = 2.0 * std::f64::consts::PI * f;
        let x: Vec<f64> = (0..4000)
            .map(|i| a * (w * i as f64 * h + 0.3).sin())
            .collect();
        let want = a * w.powi(3) / 2f64.sqrt();
        worst_jerk = worst_jerk.max((jerk_metric(&x, h, 10.0).unwrap() / want - 1.0).abs());
    }

    let seq = |s: &str| s.chars().map(|c| c == '.').collect::<Vec<bool>>();
    // '.' on road, 'x' off road
    let cases = [
        ("..........", 0, 0),
        ("...xx...x.", 2, 3),
        ("x.x.x.x", 4, 4),
        ("..xxxxxxxx", 1, 8),
        ("xxxx....xx..xxxxxx", 3, 12),
    ];
    let runs_ok = cases.iter().all(|&(s, n, off_ticks)| {
        let (got_n, got_d) = off_road_stats(&seq(s), h);
        let want_d = if n == 0 {
            0.0
        } else {
            off_ticks as f64 / n as f64 * h
        };
        got_n == n && got_d == want_d
    });

    let mut margin_ok = true;
    let mut worst_margin = 0.0f64;
    for &v in &SPEEDS {
        for lateral in [0.0, 1.0, 2.5, 3.5] {
            let o = Obstacle::at(track, 30.0, Side::Right);
            let n = (50.0 / (v * h)) as usize;
            let (mut xs, mut ys, mut ps) = (vec![], vec![], vec![]);
            for i in 0..n {
                let s = 0.37 + i as f64 * v * h;
                let [x, y] = track.frenet_to_xy(s, -track.lane_offset() + lateral);
                xs.push(x);
                ys.push(y);
                ps.push(s);
            }
            let (m, missed) = obstacle_margin(&xs, &ys, &ps, &[o], track.total_length, 20.0, 5.0);
            let err = (m[0] - lateral).abs();
            worst_margin = worst_margin.max(err / (h * v / 2.0));
            margin_ok &= missed == 0 && m.len() == 1 && err <= h * v / 2.0;
        }
    }
    r.line(
        "metric oracles",
        worst_jerk <= 0.02 && runs_ok && margin_ok,
        format!(
            "sinusoid jerk worst error {:.3}% (limit 2%); off-road runs exact on {} sequences: {runs_ok}; margin error at most {:.2} of h*v/2",
            100.0 * worst_jerk,
            cases.len(),
            worst_margin
        ),
        t0.elapsed(),
    );
}

fn determinism(r: &mut Report) {
    let t0 = Instant::now();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let cfg = ExperimentConfig {
        cohort: CohortConfig {
            size: 2,
            ..CohortConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let first = run_experiment(&cfg.plans(), &cfg, Some(dirs[0].path())).unwrap();
    let m = &first.manifest;
    let csv = |i: usize| std::fs::read(dirs[i].path().join("aggregate.csv")).unwrap();
    rerun_manifest(m, Some(dirs[1].path())).unwrap();
    rerun_manifest(m, Some(dirs[2].path())).unwrap();
    let (a, b, c) = (csv(0), csv(1), csv(2));
    r.line(
        "determinism",
        a == b && b == c && !a.is_empty(),
        format!(
            "two re-runs from one manifest ({} trials) give byte-identical aggregate CSVs ({} bytes): {}",
            m.trial_count,
            a.len(),
            a == b && b == c
        ),
        t0.elapsed(),
    );
}

fn main() {
    let track = build_default_track::<f64>();
    let mut r = Report { failed: 0 };
    jacobian_fidelity(&mut r);
    mpc_expert_lap(&mut r, &track);
    solver_feasibility(&mut r, &track);
    coupling_transparency(&mut r, &track);
    force_saturation(&mut r);
    trends(&mut r, &track);
    metric_oracles(&mut r, &track);
    determinism(&mut r);
    if r.failed > 0 {
        println!("{} acceptance criteria failed", r.failed);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
