use hapdrive_core::driver::{Driver, DriverParams};
use hapdrive_core::geometry::{build_default_track, place_obstacles};
use hapdrive_core::metrics::{compute_metrics, MetricsConfig};
use hapdrive_core::sim::{run_headless, HeadlessHuman, LeadRun, SimConfig};

fn off_road_events(params: DriverParams, speed: f64, seeds: u64) -> usize {
    let t = build_default_track::<f64>();
    let cfg = SimConfig::default();
    (0..seeds)
        .map(|seed| {
            let mut lead = LeadRun::new(&t, place_obstacles(&t, seed), speed, &cfg).unwrap();
            let d = Driver::new(params.with_seed(seed), cfg.tick, cfg.vehicle.wheelbase).unwrap();
            let s = run_headless(&t, &mut lead, 0.0, HeadlessHuman::Driver(d), &cfg).unwrap();
            compute_metrics(&s, &MetricsConfig::default())
                .unwrap()
                .times_off_road
        })
        .sum()
}

#[test]
fn novice_leaves_the_road_more_often_than_expert() {
    let novice = off_road_events(DriverParams::novice(), 15.0, 30);
    let expert = off_road_events(DriverParams::expert(), 15.0, 30);
    assert!(novice > expert, "novice {novice} vs expert {expert}");
}

#[test]
fn instant_noiseless_stiff_driver_holds_the_lane_on_straights() {
    let t = build_default_track::<f64>();
    let cfg = SimConfig::default();
    let params = DriverParams {
        reaction_delay: 0.0,
        noise_std: 0.0,
        force_gain: 3.0 * DriverParams::expert().force_gain,
        ..DriverParams::expert()
    };
    for speed in [10.0, 15.0] {
        let mut lead = LeadRun::new(&t, vec![], speed, &cfg).unwrap();
        let d = Driver::new(params, cfg.tick, cfg.vehicle.wheelbase).unwrap();
        let s = run_headless(&t, &mut lead, 0.0, HeadlessHuman::Driver(d), &cfg).unwrap();
        let preview = params.preview(speed);
        // settled straight ticks: 30 m past the last curve, none within the preview
        let straight = |p: f64| {
            (-30..=(preview as i32 + 5)).all(|x| t.curvature(t.wrap_s(p + x as f64)) == 0.0)
        };
        let mut checked = 0;
        for i in 0..s.len() {
            if s.progress[i] < 20.0 || !straight(s.progress[i]) {
                continue;
            }
            checked += 1;
            let err = (s.offset[i] - cfg.lane_offset).abs();
            assert!(
                err <= 0.05,
                "{speed} m/s: {err:.3} m off lane center at s = {:.1}",
                s.progress[i]
            );
        }
        assert!(checked > 100, "only {checked} straight ticks");
    }
}
