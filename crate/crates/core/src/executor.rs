//! Rolling-horizon closed loop: replan every `replan_interval`, track the
//! active plan through the plant, and archive every issued plan.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::disturbance::{Channel, DisturbanceSpec, RandomStream};
use crate::domain::{validate, Plan, ScenarioConfig, Trajectory, VehicleState};
use crate::error::{Error, Result};
use crate::planner::{PlanContext, Planner};
use crate::plant::{self, PlantState};
use crate::signal::{observe, phase_at, Phase, SignalTimeline};
use crate::stopgo::StopGoPlanner;

/// Positions this far past the stop line count as having crossed it.
pub const SAFETY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub controller: String,
    pub executed: Trajectory,
    pub plan_segments: Vec<(f64, Plan)>,
    /// Index into `plan_segments` of the plan tracked at each executed sample.
    pub active_plan_ids: Vec<usize>,
    pub realized_signal: SignalTimeline,
    pub benchmark: Trajectory,
    pub benchmark_pass_time: f64,
    pub config: ScenarioConfig,
    pub pass_time: f64,
    pub seed: u64,
}

struct LoopOutput {
    executed: Trajectory,
    segments: Vec<(f64, Plan)>,
    ids: Vec<usize>,
    pass_time: f64,
}

/// Runs `planner` in closed loop on `config` and scores nothing; see
/// [`crate::metrics::evaluate`] for the indicator.
pub fn run_episode(config: &ScenarioConfig, planner: &mut dyn Planner) -> Result<EpisodeRecord> {
    let config = validate(config.clone())?;
    let (benchmark, benchmark_pass_time) = benchmark_run(&config)?;
    planner.reset();
    let out = closed_loop(&config, planner, &config.signal, &config.disturbance)?;
    Ok(EpisodeRecord {
        controller: planner.name().to_string(),
        executed: out.executed,
        plan_segments: out.segments,
        active_plan_ids: out.ids,
        realized_signal: config.signal,
        benchmark,
        benchmark_pass_time,
        pass_time: out.pass_time,
        seed: config.seed,
        config,
    })
}

/// Stop-and-go on the realized timeline (extension visible from the start)
/// through a disturbance-free plant.
pub fn benchmark_episode(config: &ScenarioConfig) -> Result<Trajectory> {
    let config = validate(config.clone())?;
    Ok(benchmark_run(&config)?.0)
}

fn benchmark_run(config: &ScenarioConfig) -> Result<(Trajectory, f64)> {
    let signal = config.signal.announced_from_start();
    let out = closed_loop(
        config,
        &mut StopGoPlanner,
        &signal,
        &DisturbanceSpec::none(),
    )?;
    Ok((out.executed, out.pass_time))
}

fn closed_loop(
    cfg: &ScenarioConfig,
    planner: &mut dyn Planner,
    signal: &SignalTimeline,
    spec: &DisturbanceSpec,
) -> Result<LoopOutput> {
    let ctx = PlanContext::from_config(cfg);
    let dt = cfg.dt;
    let replan_steps = cfg.replan_steps().max(1);
    let pass_x = cfg.pass_position();
    let k_fb = cfg.controller.k_fb;

    let mut plant = PlantState::new(VehicleState::new(0.0, 0.0, cfg.v0, 0.0), spec);
    let mut act_rng = RandomStream::new(cfg.seed, Channel::Actuation);
    let mut meas_rng = RandomStream::new(cfg.seed, Channel::Measurement);

    let mut states = Vec::new();
    let mut ids = Vec::new();
    let mut segments: Vec<(f64, Plan)> = Vec::new();
    let mut issue_step = 0;
    let mut step = 0usize;

    // command for the current step from the active plan
    let command = |plan: &Plan, offset: usize, v_meas: f64, t: f64| -> Result<f64> {
        let p = plan.at_offset(offset).ok_or_else(|| Error::Planner {
            t,
            source: Box::new(Error::InvalidTrajectory(format!(
                "plan issued at {} ends before {t}",
                plan.issued_at
            ))),
        })?;
        Ok(p.a + k_fb * (p.v - v_meas))
    };

    loop {
        let t = plant.kinematics.t;
        if t > cfg.controller.t_max {
            return Err(Error::EpisodeTimeout(cfg.controller.t_max));
        }
        let meas = plant::measure(&plant, spec, &mut meas_rng);
        if step.is_multiple_of(replan_steps) {
            let plan = planner
                .plan(&meas, &observe(signal, t), &ctx)
                .map_err(|e| Error::Planner {
                    t,
                    source: Box::new(e),
                })?;
            segments.push((t, plan));
            issue_step = step;
        }
        let (_, plan) = segments.last().expect("a plan is issued at the first step");
        let a_cmd = command(plan, step - issue_step, meas.v, t)?;
        let next = plant::step(&plant, a_cmd, spec, &cfg.limits, dt, &mut act_rng);

        let k = plant.kinematics;
        let sample = VehicleState::new(k.t, k.x, k.v, next.applied_accel);
        check_safety(&sample, cfg, &cfg.signal)?;
        states.push(sample);
        ids.push(segments.len() - 1);
        plant = next;
        step += 1;

        if plant.kinematics.x >= pass_x {
            // the final sample carries the acceleration that would be applied next
            let k = plant.kinematics;
            let meas = plant::measure(&plant, spec, &mut meas_rng.clone());
            let offset = step - issue_step;
            let a = match command(plan, offset, meas.v, k.t) {
                Ok(cmd) => {
                    plant::step(&plant, cmd, spec, &cfg.limits, dt, &mut act_rng.clone())
                        .applied_accel
                }
                Err(_) => 0.0,
            };
            let last = VehicleState::new(k.t, k.x, k.v, a);
            check_safety(&last, cfg, &cfg.signal)?;
            states.push(last);
            ids.push(segments.len() - 1);
            return Ok(LoopOutput {
                executed: Trajectory::new(dt, states)?,
                segments,
                ids,
                pass_time: k.t,
            });
        }
    }
}

/// Fails when `s` lies beyond the stop line (and before the exit) while the
/// realized phase is red.
fn check_safety(s: &VehicleState, cfg: &ScenarioConfig, signal: &SignalTimeline) -> Result<()> {
    let beyond = s.x > cfg.approach_distance + SAFETY_EPS && s.x <= cfg.pass_position();
    if beyond && phase_at(signal, s.t) == Phase::Red {
        return Err(Error::SafetyViolation { t: s.t, x: s.x });
    }
    Ok(())
}

#[derive(Serialize)]
struct LogLine<'a> {
    t: f64,
    x: f64,
    v: f64,
    a: f64,
    phase: &'a str,
    active_plan_id: usize,
}

/// Writes one JSON object per executed sample.
pub fn write_log<W: Write>(record: &EpisodeRecord, mut out: W) -> Result<()> {
    for (s, id) in record.executed.states.iter().zip(&record.active_plan_ids) {
        let line = LogLine {
            t: s.t,
            x: s.x,
            v: s.v,
            a: s.a,
            phase: phase_at(&record.realized_signal, s.t).as_str(),
            active_plan_id: *id,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
