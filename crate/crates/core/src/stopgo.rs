//! Stop-and-go benchmark: cruise at `v_exp`, brake to a stop at the line
//! when the light is not green, leave again once it turns green.

use crate::domain::{kinematic_step, Limits, Plan, Trajectory, VehicleState};
use crate::error::{Error, Result};
use crate::planner::{PlanContext, Planner, LINE_EPS};
use crate::signal::{green_window_at_or_after, SignalObservation};

/// Within this distance of the line on red the vehicle is always stopping.
const STOP_BAND: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopGoConfig {
    pub v_exp: f64,
    pub a_comfort: f64,
    pub k_v: f64,
    pub reaction_delay: f64,
}

impl StopGoConfig {
    pub fn from_context(ctx: &PlanContext) -> Self {
        StopGoConfig {
            v_exp: ctx.v_exp,
            a_comfort: ctx.tuning.a_comfort,
            k_v: ctx.tuning.k_v,
            reaction_delay: ctx.tuning.reaction_delay,
        }
    }

    fn track(&self, v: f64) -> f64 {
        (self.k_v * (self.v_exp - v)).clamp(-self.a_comfort, self.a_comfort)
    }
}

/// Acceleration the three-phase rule commands in `state`.
fn command(
    state: &VehicleState,
    obs: &SignalObservation,
    cfg: &StopGoConfig,
    limits: &Limits,
    ctx: &PlanContext,
) -> f64 {
    let remaining = ctx.x_light - state.x;
    let (green_start, _) = green_window_at_or_after(obs, ctx.cycle_length, state.t);
    let green = state.t >= green_start - 1e-9;
    let may_depart = state.t >= green_start + cfg.reaction_delay - 1e-9;

    if remaining < -LINE_EPS {
        // past the line
        return cfg.track(state.v);
    }
    if state.v <= 1e-9 && remaining <= STOP_BAND {
        // waiting at the line
        return if may_depart { cfg.track(state.v) } else { 0.0 };
    }
    if !green {
        let braking_distance = state.v * state.v / (2.0 * cfg.a_comfort);
        if braking_distance >= remaining || remaining <= STOP_BAND {
            let decel = if remaining > LINE_EPS {
                state.v * state.v / (2.0 * remaining)
            } else {
                -limits.a_min
            };
            return (-decel).max(limits.a_min);
        }
    }
    cfg.track(state.v)
}

/// Forward-simulates the stop-and-go rule over the horizon.
pub fn plan(
    state: &VehicleState,
    obs: &SignalObservation,
    cfg: &StopGoConfig,
    ctx: &PlanContext,
) -> Result<Plan> {
    ctx.ensure_not_complete(state)?;
    let dt = ctx.dt;
    let n = crate::planner::steps_ceil(ctx.horizon, dt);
    let mut states = Vec::with_capacity(n + 1);
    let mut s = *state;
    for _ in 0..n {
        s.a = command(&s, obs, cfg, &ctx.limits, ctx);
        states.push(s);
        let (x, v) = kinematic_step(s.x, s.v, s.a, dt);
        s = VehicleState {
            t: s.t + dt,
            x,
            v,
            a: 0.0,
        };
    }
    s.a = command(&s, obs, cfg, &ctx.limits, ctx);
    states.push(s);
    if states.is_empty() {
        return Err(Error::InvalidTrajectory("empty stop-and-go plan".into()));
    }
    Plan::new(state.t, ctx.horizon, Trajectory::new(dt, states)?)
}

#[derive(Debug, Clone, Default)]
pub struct StopGoPlanner;

impl Planner for StopGoPlanner {
    fn name(&self) -> &'static str {
        "stopgo"
    }

    fn plan(
        &mut self,
        state: &VehicleState,
        obs: &SignalObservation,
        ctx: &PlanContext,
    ) -> Result<Plan> {
        plan(state, obs, &StopGoConfig::from_context(ctx), ctx)
    }
}
