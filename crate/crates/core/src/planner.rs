//! Planner interface and the pieces shared by the eco planners: arrival-time
//! targeting on the observed signal, step-exact acceleration profiles, and
//! the pass-through plan used once the stop line is reached.

use crate::domain::{
    kinematic_step, ControllerTuning, FuelCoefficients, Limits, Plan, ScenarioConfig, VehicleState,
    TIME_EPS,
};
use crate::error::{Error, Result};
use crate::signal::{green_window_at_or_after, SignalObservation};

/// Positions within this distance of the stop line count as at the line.
pub const LINE_EPS: f64 = 1e-6;

/// Scenario quantities every planner needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanContext {
    pub x_light: f64,
    pub exit_distance: f64,
    pub v_p: f64,
    pub v_exp: f64,
    pub horizon: f64,
    pub dt: f64,
    pub limits: Limits,
    pub fuel: FuelCoefficients,
    pub tuning: ControllerTuning,
    /// Base signal cycle, used to roll the observed green window forward.
    pub cycle_length: f64,
}

impl PlanContext {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        PlanContext {
            x_light: cfg.approach_distance,
            exit_distance: cfg.exit_distance,
            v_p: cfg.v_p,
            v_exp: cfg.v_exp,
            horizon: cfg.horizon,
            dt: cfg.dt,
            limits: cfg.limits,
            fuel: cfg.fuel,
            tuning: cfg.controller,
            cycle_length: cfg.signal.cycle_length(),
        }
    }

    pub fn pass_position(&self) -> f64 {
        self.x_light + self.exit_distance
    }

    pub(crate) fn ensure_not_complete(&self, state: &VehicleState) -> Result<()> {
        if state.x > self.pass_position() {
            Err(Error::EpisodeComplete(state.x))
        } else {
            Ok(())
        }
    }
}

/// A trajectory planner called once per replan instant.
pub trait Planner: Send {
    fn name(&self) -> &'static str;

    fn plan(
        &mut self,
        state: &VehicleState,
        obs: &SignalObservation,
        ctx: &PlanContext,
    ) -> Result<Plan>;

    /// Clears any state carried between calls (warm starts).
    fn reset(&mut self) {}
}

/// Rounds a duration up to a whole number of steps.
pub(crate) fn steps_ceil(duration: f64, dt: f64) -> usize {
    (duration / dt - 1e-9).ceil().max(0.0) as usize
}

/// Earliest grid time `>= not_before` (relative to `state.t`) that lies inside
/// an observed green window.
pub fn arrival_target(
    state: &VehicleState,
    obs: &SignalObservation,
    ctx: &PlanContext,
    not_before: f64,
) -> f64 {
    let mut t = not_before.max(state.t);
    loop {
        let (start, end) = green_window_at_or_after(obs, ctx.cycle_length, t);
        let candidate = t.max(start);
        let snapped = state.t + steps_ceil(candidate - state.t, ctx.dt) as f64 * ctx.dt;
        if snapped < end - TIME_EPS {
            return snapped;
        }
        t = end;
    }
}

/// Cruise arrival time at the stop line; infinite for a stopped vehicle.
pub fn predicted_arrival(state: &VehicleState, x_light: f64) -> f64 {
    if state.v <= 0.0 {
        f64::INFINITY
    } else {
        state.t + (x_light - state.x) / state.v
    }
}

/// Cruise arrival at the pass speed `v_p`. Used as the lower bound on the
/// target arrival so that a vehicle already slowed by its own plan does not
/// push the target later at every replan.
pub fn cruise_bound(state: &VehicleState, ctx: &PlanContext) -> f64 {
    state.t + (ctx.x_light - state.x).max(0.0) / ctx.v_p
}

/// Integrates `accels` from `start` with the shared step kinematics. Returns
/// `accels.len() + 1` states; the last one carries `a = 0`.
pub(crate) fn rollout(start: VehicleState, accels: &[f64], dt: f64) -> Vec<VehicleState> {
    let mut out = Vec::with_capacity(accels.len() + 1);
    let mut s = start;
    for &a in accels {
        s.a = a;
        out.push(s);
        let (x, v) = kinematic_step(s.x, s.v, a, dt);
        s = VehicleState {
            t: s.t + dt,
            x,
            v,
            a: 0.0,
        };
    }
    out.push(s);
    out
}

/// Per-step accelerations, linear in the step index, that carry `(x0, v0)` to
/// `(x0 + distance, v1)` in exactly `n` steps of the shared kinematics. The
/// sampled positions form a cubic in time.
pub fn grid_cubic_accels(distance: f64, v0: f64, v1: f64, n: usize, dt: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::HorizonTooShort { steps: n as i64 });
    }
    let nf = n as f64;
    // sum a_k dt = v1 - v0 ; sum a_k (n - k - 1/2) dt^2 = distance - n v0 dt
    let s0 = nf;
    let s1 = nf * (nf - 1.0) / 2.0;
    let t0 = nf * nf / 2.0;
    let t1 = nf * (nf - 1.0) * (2.0 * nf - 1.0) / 12.0;
    let r0 = (v1 - v0) / dt;
    let r1 = (distance - nf * v0 * dt) / (dt * dt);
    let det = s0 * t1 - s1 * t0;
    let p = (r0 * t1 - s1 * r1) / det;
    let q = (s0 * r1 - t0 * r0) / det;
    Ok((0..n).map(|k| p + q * k as f64).collect())
}

/// Accelerations ramping linearly to zero that change speed by `dv`, with the
/// peak magnitude bounded by half the acceleration limit on that side.
pub(crate) fn speed_ramp(dv: f64, limits: &Limits, dt: f64) -> Vec<f64> {
    if dv.abs() < 1e-12 {
        return Vec::new();
    }
    let peak = if dv > 0.0 {
        0.5 * limits.a_max
    } else {
        0.5 * -limits.a_min
    };
    let n = steps_ceil(2.0 * dv.abs() / peak, dt).max(1);
    let nf = n as f64;
    let scale = 2.0 * dv / (nf * dt) / nf;
    (0..n).map(|k| scale * (nf - k as f64 - 0.5)).collect()
}

/// Plan for a vehicle at or beyond the stop line, or too close to stop: wait
/// at the line while the observed phase is not green, then ramp to `v_p` and
/// cruise.
pub fn pass_through_plan(
    state: &VehicleState,
    obs: &SignalObservation,
    ctx: &PlanContext,
) -> Result<Plan> {
    let dt = ctx.dt;
    let mut accels = Vec::new();
    let at_line = (state.x - ctx.x_light).abs() <= LINE_EPS;
    if at_line && state.v <= 1e-9 && !obs.is_green_at(state.t) {
        let (green_start, _) = green_window_at_or_after(obs, ctx.cycle_length, state.t);
        let wait = steps_ceil(green_start - state.t, dt);
        accels.resize(wait, 0.0);
    }
    accels.extend(speed_ramp(ctx.v_p - state.v, &ctx.limits, dt));
    let states = rollout(*state, &accels, dt);
    Plan::cruise_to_horizon(state.t, ctx.horizon, dt, states)
}

/// Whether the vehicle is at or past the line, or will reach it within two
/// steps at its current speed.
pub(crate) fn committed_to_line(state: &VehicleState, ctx: &PlanContext) -> bool {
    let remaining = ctx.x_light - state.x;
    remaining <= LINE_EPS || remaining < 2.0 * state.v * ctx.dt
}
