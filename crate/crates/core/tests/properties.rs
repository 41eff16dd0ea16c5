use proptest::prelude::*;

use ecodrive::analytical::AnalyticalPlanner;
use ecodrive::signal::{observe, phase_at, Phase, SignalTimeline};
use ecodrive::stopgo::StopGoPlanner;
use ecodrive::{PlanContext, Planner, ScenarioConfig, Trajectory, VehicleState};

fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
    (
        50.0f64..400.0,
        1.0f64..15.0,
        0u64..1_000_000,
        0.0f64..10.0,
        0.0f64..60.0,
        (0.0f64..2.0, 0u32..4, 0.0f64..0.5, 0.0f64..0.3),
        (0.0f64..1.0, 0.1f64..2.0),
    )
        .prop_map(
            |(dist, v0, seed, ext, announce, (tau, delay, sigma, meas), (w1, w2))| {
                let mut c = ScenarioConfig::default();
                c.approach_distance = dist;
                c.v0 = v0;
                c.seed = seed;
                c.signal.extension_s = ext;
                c.signal.announce_at = announce;
                c.disturbance.actuator_tau = tau;
                c.disturbance.command_delay_steps = delay;
                c.disturbance.accel_noise_sigma = sigma;
                c.disturbance.measurement_noise_sigma_v = meas;
                c.weights.w1 = w1;
                c.weights.w2 = w2;
                c
            },
        )
}

fn context(extension: f64) -> (PlanContext, SignalTimeline) {
    let mut cfg = ScenarioConfig::default();
    cfg.signal.extension_s = extension;
    cfg.signal.announce_at = 0.0;
    (PlanContext::from_config(&cfg), cfg.signal)
}

proptest! {
    #[test]
    fn scenario_round_trips_through_toml(cfg in arb_config()) {
        let text = cfg.to_toml_string().unwrap();
        prop_assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn trajectory_slices_are_valid(n in 1usize..300, a in 0.0f64..40.0, b in 0.0f64..40.0) {
        let states = (0..n).map(|k| VehicleState::new(k as f64 * 0.1, k as f64 * 0.5, 5.0, 0.0)).collect();
        let traj = Trajectory::new(0.1, states).unwrap();
        let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
        if let Some(part) = traj.slice(t1, t2) {
            prop_assert!(part.check().is_ok());
            prop_assert!(part.start_time() > t1 && part.end_time() <= t2 + 1e-9);
        }
    }

    #[test]
    fn analytical_plans_respect_limits_and_signal(
        t in 0.0f64..50.0,
        x in 0.0f64..159.0,
        v in 0.0f64..10.0,
        ext in prop::sample::select(vec![0.0, 2.0, 4.0, 6.0]),
    ) {
        let (ctx, tl) = context(ext);
        let state = VehicleState::new(t, x, v, 0.0);
        let obs = observe(&tl, t);
        // a fast vehicle close to a red line has no admissible plan
        let Ok(plan) = AnalyticalPlanner::default().plan(&state, &obs, &ctx) else {
            return Ok(());
        };
        let l = &ctx.limits;
        for s in &plan.states.states {
            prop_assert!(s.a >= l.a_min - 1e-6 && s.a <= l.a_max + 1e-6, "a {} at {}", s.a, s.t);
            prop_assert!(s.v >= -1e-9 && s.v <= l.v_max + 1e-6, "v {} at {}", s.v, s.t);
            if s.x > ctx.x_light + 1e-6 {
                prop_assert!(phase_at(&tl, s.t) == Phase::Green, "crosses at {} ({:?})", s.t, phase_at(&tl, s.t));
            }
        }
        let before = x < ctx.x_light - 1e-6;
        let reaches = plan.states.states.iter().any(|s| (s.x - ctx.x_light).abs() < 1e-6);
        let passes = plan.states.last().x > ctx.x_light;
        prop_assert!(!before || reaches || passes);
    }

    #[test]
    fn stopgo_plans_never_run_the_light(
        t in 0.0f64..45.0,
        x in 0.0f64..150.0,
        v in 0.0f64..5.0,
        ext in prop::sample::select(vec![0.0, 2.0, 4.0, 6.0]),
    ) {
        let (ctx, tl) = context(ext);
        let state = VehicleState::new(t, x, v, 0.0);
        let Ok(plan) = StopGoPlanner.plan(&state, &observe(&tl, t), &ctx) else {
            return Ok(());
        };
        for s in &plan.states.states {
            prop_assert!(s.v >= 0.0 && s.v <= ctx.v_exp + 1e-6);
            if phase_at(&tl, s.t) != Phase::Green {
                prop_assert!(s.x <= ctx.x_light + 1e-9, "x {} at {}", s.x, s.t);
            }
        }
    }
}
