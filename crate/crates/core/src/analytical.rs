//! Closed-form cubic approach planner.
//!
//! Arrival at the stop line is targeted at the earliest green instant not
//! earlier than the cruise arrival at the pass speed `v_p`. When a single cubic can reach the
//! line at that instant within the limits (`t_e <= t* <= t_c`) it is used
//! directly; otherwise the vehicle follows a cubic to a stop at the line,
//! waits, and departs on a second cubic.

use crate::domain::{Limits, Plan, VehicleState};
use crate::error::{Error, Result};
use crate::planner::{
    arrival_target, committed_to_line, cruise_bound, grid_cubic_accels, pass_through_plan, rollout,
    speed_ramp, steps_ceil, PlanContext, Planner, LINE_EPS,
};
use crate::signal::{green_window_at_or_after, SignalObservation};

pub use crate::planner::predicted_arrival;

/// Bisection stops once the bracket is this narrow (s).
pub const DURATION_RESOLUTION: f64 = 0.01;

/// `x(t) = a3 t^3 + a2 t^2 + a1 t + a0` in time local to the segment start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicCoeffs {
    pub a3: f64,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl CubicCoeffs {
    pub fn position(&self, t: f64) -> f64 {
        ((self.a3 * t + self.a2) * t + self.a1) * t + self.a0
    }

    pub fn velocity(&self, t: f64) -> f64 {
        (3.0 * self.a3 * t + 2.0 * self.a2) * t + self.a1
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        6.0 * self.a3 * t + 2.0 * self.a2
    }
}

/// Earliest, predicted and latest no-stop arrival times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalTimes {
    pub t_e: f64,
    pub t_p: f64,
    pub t_c: f64,
}

/// Which construction produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproachCase {
    /// Constant speed arrival at `t_p`.
    Cruise,
    /// Single cubic to the line.
    Cubic,
    /// Cubic to a stop at the line, wait, cubic departure.
    StopAndGo,
    /// At or past the line.
    PassThrough,
}

/// Unique cubic with `x(0)=x0, x'(0)=v0, x(T)=x1, x'(T)=v1`.
///
/// The 4×4 boundary system is triangular in `(a0, a1)`; the remaining 2×2
/// block is eliminated in closed form, which keeps consistent cruise data
/// (`x1 = x0 + v0 T`, `v1 = v0`) exactly linear.
pub fn solve_cubic(x0: f64, v0: f64, x1: f64, v1: f64, duration: f64) -> Result<CubicCoeffs> {
    if !(duration > 0.0) {
        return Err(Error::NonPositiveDuration(duration));
    }
    let t = duration;
    let gap = x1 - x0 - v0 * t;
    let dv = v1 - v0;
    Ok(CubicCoeffs {
        a3: (dv * t - 2.0 * gap) / (t * t * t),
        a2: (3.0 * gap - dv * t) / (t * t),
        a1: v0,
        a0: x0,
    })
}

/// Whether the cubic over `duration` keeps speed in `[v_floor, v_max]` and
/// acceleration within limits at every `dt` sample and at the endpoint.
fn cubic_within_limits(
    distance: f64,
    v0: f64,
    v1: f64,
    duration: f64,
    v_floor: f64,
    limits: &Limits,
    dt: f64,
) -> bool {
    let Ok(c) = solve_cubic(0.0, v0, distance, v1, duration) else {
        return false;
    };
    let ok = |t: f64| {
        let v = c.velocity(t);
        let a = c.acceleration(t);
        v >= v_floor - 1e-12
            && v <= limits.v_max + 1e-12
            && a >= limits.a_min - 1e-12
            && a <= limits.a_max + 1e-12
    };
    let n = (duration / dt).floor() as usize;
    (0..=n).all(|k| ok(k as f64 * dt)) && ok(duration)
}

/// Shortest and longest cubic durations to the line that respect the limits
/// with speed kept at or above `v_crawl`, each to `DURATION_RESOLUTION`.
pub fn feasible_duration_range(
    state: &VehicleState,
    x_light: f64,
    v_p: f64,
    limits: &Limits,
    v_crawl: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    let distance = x_light - state.x;
    if !(distance > 0.0) {
        return Err(Error::CubicInfeasible);
    }
    let v0 = state.v;
    let floor = v_crawl.max(limits.v_min);
    let feasible = |t: f64| cubic_within_limits(distance, v0, v_p, t, floor, limits, dt);

    // a feasible seed: constant acceleration, cruise at either speed, then a coarse scan
    let mut seeds = vec![];
    if v0 + v_p > 0.0 {
        seeds.push(2.0 * distance / (v0 + v_p));
    }
    for v in [v0, v_p] {
        if v > 0.0 {
            seeds.push(distance / v);
        }
    }
    let mut upper = 2.0 * distance / floor + 1.0;
    let seed = seeds.into_iter().find(|&t| feasible(t)).or_else(|| {
        let step = 0.5;
        (1..)
            .map(|k| k as f64 * step)
            .take_while(|&t| t < upper)
            .find(|&t| feasible(t))
    });
    let seed = seed.ok_or(Error::CubicInfeasible)?;

    let mut lower = 1e-3;
    let t_min = if feasible(lower) {
        lower
    } else {
        let mut hi = seed;
        while hi - lower > DURATION_RESOLUTION {
            let mid = 0.5 * (lower + hi);
            if feasible(mid) {
                hi = mid;
            } else {
                lower = mid;
            }
        }
        hi
    };

    while feasible(upper) {
        upper *= 2.0;
        if upper > 1e6 {
            return Ok((t_min, upper));
        }
    }
    let mut lo = seed;
    while upper - lo > DURATION_RESOLUTION {
        let mid = 0.5 * (lo + upper);
        if feasible(mid) {
            lo = mid;
        } else {
            upper = mid;
        }
    }
    Ok((t_min, lo))
}

/// Arrival times for the current state; `t_e`/`t_c` are infinite when no
/// single cubic is feasible.
pub fn arrival_times(state: &VehicleState, ctx: &PlanContext) -> ArrivalTimes {
    let t_p = predicted_arrival(state, ctx.x_light);
    match feasible_duration_range(
        state,
        ctx.x_light,
        ctx.v_p,
        &ctx.limits,
        ctx.tuning.v_crawl,
        ctx.dt,
    ) {
        Ok((lo, hi)) => ArrivalTimes {
            t_e: state.t + lo,
            t_p,
            t_c: state.t + hi,
        },
        Err(_) => ArrivalTimes {
            t_e: f64::INFINITY,
            t_p,
            t_c: f64::NEG_INFINITY,
        },
    }
}

/// Chooses the approach case for a target arrival `t_star`.
pub fn select_case(times: &ArrivalTimes, t_star: f64, cruise_arrival_ok: bool) -> ApproachCase {
    if cruise_arrival_ok {
        ApproachCase::Cruise
    } else if t_star >= times.t_e - 1e-9 && t_star <= times.t_c + 1e-9 {
        ApproachCase::Cubic
    } else {
        ApproachCase::StopAndGo
    }
}

const NEARBY_STEPS: usize = 20;
const ARRIVAL_SPEED_STEP: f64 = 0.25;

fn accels_within(accels: &[f64], limits: &Limits) -> bool {
    accels
        .iter()
        .all(|a| *a >= limits.a_min - 1e-6 && *a <= limits.a_max + 1e-6)
}

/// Plans the approach and reports which case was used.
pub fn plan_with_case(
    state: &VehicleState,
    obs: &SignalObservation,
    ctx: &PlanContext,
) -> Result<(Plan, ApproachCase)> {
    ctx.ensure_not_complete(state)?;
    let dt = ctx.dt;
    if committed_to_line(state, ctx) {
        return Ok((
            pass_through_plan(state, obs, ctx)?,
            ApproachCase::PassThrough,
        ));
    }
    let distance = ctx.x_light - state.x;
    let times = arrival_times(state, ctx);

    let cruise_arrival_ok = (state.v - ctx.v_p).abs() <= 1e-9 && times.t_p.is_finite() && {
        let (start, _) = green_window_at_or_after(obs, ctx.cycle_length, times.t_p);
        times.t_p >= start - 1e-9
    };
    if cruise_arrival_ok {
        let mut s = *state;
        s.a = 0.0;
        let plan = Plan::cruise_to_horizon(state.t, ctx.horizon, dt, vec![s])?;
        return Ok((plan, ApproachCase::Cruise));
    }

    let bound = cruise_bound(state, ctx);
    let not_before = if times.t_e.is_finite() {
        bound.max(times.t_e)
    } else {
        bound
    };
    let t_star = if not_before.is_finite() {
        arrival_target(state, obs, ctx, not_before)
    } else {
        f64::INFINITY
    };

    if select_case(&times, t_star, false) == ApproachCase::Cubic {
        let n = ((t_star - state.t) / dt).round() as usize;
        let accels = grid_cubic_accels(distance, state.v, ctx.v_p, n, dt)?;
        let states = rollout(*state, &accels, dt);
        return Ok((
            Plan::cruise_to_horizon(state.t, ctx.horizon, dt, states)?,
            ApproachCase::Cubic,
        ));
    }

    // near the line the continuous window can close between grid points; a
    // nearby grid arrival inside green may still admit a cubic
    if t_star.is_finite() {
        if let Some(states) = nearby_grid_cubic(state, obs, ctx, t_star, false) {
            return Ok((
                Plan::cruise_to_horizon(state.t, ctx.horizon, dt, states)?,
                ApproachCase::Cubic,
            ));
        }
    }
    if obs.is_green_at(state.t) {
        return Ok((
            pass_through_plan(state, obs, ctx)?,
            ApproachCase::PassThrough,
        ));
    }

    // stop at the line, wait for green, depart
    let (green_start, _) = green_window_at_or_after(obs, ctx.cycle_length, state.t);
    let to_green = green_start - state.t;
    let stop_duration = if state.v > 0.0 {
        // zero terminal acceleration stop covers the distance in 3d/(2v)
        let smooth = 1.5 * distance / state.v;
        if to_green > 2.0 * dt {
            smooth.min(to_green)
        } else {
            smooth
        }
    } else {
        (6.0 * distance / (0.5 * ctx.limits.a_max)).sqrt()
    };
    // lengthen the stop up to the constant-deceleration duration 2d/v if the
    // preferred one is too harsh; beyond that the speed would turn negative
    let n_first = steps_ceil(stop_duration, dt).max(2);
    let n_last = if state.v > 0.0 {
        ((2.0 * distance / state.v) / dt + 1e-9).floor() as usize
    } else {
        n_first
    };
    let stop = (n_first..=n_last.max(n_first)).find_map(|n| {
        let accels = grid_cubic_accels(distance, state.v, 0.0, n, dt).ok()?;
        let speeds_ok = rollout(*state, &accels, dt).iter().all(|s| s.v >= -1e-9);
        (accels_within(&accels, &ctx.limits) && speeds_ok).then_some((n, accels))
    });
    let Some((n_stop, stop)) = stop else {
        // too fast to stop: arrive slower than v_p at the start of green
        let slow = t_star
            .is_finite()
            .then(|| nearby_grid_cubic(state, obs, ctx, t_star, true))
            .flatten();
        return match slow {
            Some(states) => Ok((
                Plan::cruise_to_horizon(state.t, ctx.horizon, dt, states)?,
                ApproachCase::Cubic,
            )),
            None => Err(Error::InfeasibleApproach(format!(
                "cannot stop within {distance:.2} m from {:.2} m/s inside the deceleration limit",
                state.v
            ))),
        };
    };
    let stop_end = state.t + n_stop as f64 * dt;
    let n_wait = steps_ceil(green_start - stop_end, dt);
    let mut accels = stop;
    accels.extend(std::iter::repeat_n(0.0, n_wait));
    accels.extend(speed_ramp(ctx.v_p, &ctx.limits, dt));
    let mut states = rollout(*state, &accels, dt);
    // the stop segment ends exactly at rest on the line
    for s in states.iter_mut().skip(n_stop).take(n_wait + 1) {
        s.x = ctx.x_light;
        s.v = 0.0;
    }
    let states = resettle(states, n_stop + n_wait, dt);
    Ok((
        Plan::cruise_to_horizon(state.t, ctx.horizon, dt, states)?,
        ApproachCase::StopAndGo,
    ))
}

/// Grid cubic arriving within `NEARBY_STEPS` steps of `t_star`, inside a
/// green window, with accelerations in limits, speed never negative and no
/// crossing before the arrival step. Arrives at `v_p`, or with `slow` at
/// progressively lower speeds followed by a ramp back to `v_p`.
fn nearby_grid_cubic(
    state: &VehicleState,
    obs: &SignalObservation,
    ctx: &PlanContext,
    t_star: f64,
    slow: bool,
) -> Option<Vec<VehicleState>> {
    let dt = ctx.dt;
    let first = ((t_star - state.t) / dt).round() as usize;
    // closest to the target first, later before earlier
    let steps: Vec<usize> = (0..=NEARBY_STEPS as isize)
        .flat_map(|k| [k, -k])
        .skip(1)
        .filter_map(|k| first.checked_add_signed(k))
        .filter(|&n| {
            let arrival = state.t + n as f64 * dt;
            let (start, _) = green_window_at_or_after(obs, ctx.cycle_length, arrival);
            n >= 2 && arrival >= start - 1e-9
        })
        .collect();
    let floor = ctx.tuning.v_crawl.max(ctx.limits.v_min);
    let n_speeds = ((ctx.v_p - floor) / ARRIVAL_SPEED_STEP).floor().max(0.0) as usize;
    let speeds = if slow { 1..=n_speeds } else { 0..=0 };
    let speeds = speeds.map(|k| ctx.v_p - k as f64 * ARRIVAL_SPEED_STEP);
    let attempt = |n: usize, v1: f64| {
        let mut accels = grid_cubic_accels(ctx.x_light - state.x, state.v, v1, n, dt).ok()?;
        if !accels_within(&accels, &ctx.limits) {
            return None;
        }
        accels.extend(speed_ramp(ctx.v_p - v1, &ctx.limits, dt));
        let states = rollout(*state, &accels, dt);
        let before_line = states[..n].iter().all(|s| s.x <= ctx.x_light + LINE_EPS);
        (before_line && states.iter().all(|s| s.v >= 0.0)).then_some(states)
    };
    speeds
        .into_iter()
        .find_map(|v1| steps.iter().find_map(|&n| attempt(n, v1)))
}

/// Re-integrates everything after index `from` so the states stay an exact
/// rollout of their accelerations.
fn resettle(mut states: Vec<VehicleState>, from: usize, dt: f64) -> Vec<VehicleState> {
    for k in from..states.len().saturating_sub(1) {
        let s = states[k];
        let (x, v) = crate::domain::kinematic_step(s.x, s.v, s.a, dt);
        states[k + 1].x = x;
        states[k + 1].v = v;
    }
    states
}

#[derive(Debug, Clone, Default)]
pub struct AnalyticalPlanner {
    /// Case used by the most recent plan.
    pub last_case: Option<ApproachCase>,
}

impl Planner for AnalyticalPlanner {
    fn name(&self) -> &'static str {
        "analytical"
    }

    fn plan(
        &mut self,
        state: &VehicleState,
        obs: &SignalObservation,
        ctx: &PlanContext,
    ) -> Result<Plan> {
        let (plan, case) = plan_with_case(state, obs, ctx)?;
        self.last_case = Some(case);
        Ok(plan)
    }

    fn reset(&mut self) {
        self.last_case = None;
    }
}
