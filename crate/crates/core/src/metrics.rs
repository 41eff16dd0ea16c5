//! Fuel, utility, tracking error and the retention indicator.

use serde::{Deserialize, Serialize};

use crate::disturbance::common_support;
use crate::domain::{FuelCoefficients, Plan, Trajectory, UtilityWeights, TIME_EPS};
use crate::error::{Error, Result};

/// Instantaneous fuel rate, floored at zero.
pub fn fuel_rate(v: f64, a: f64, c: &FuelCoefficients) -> f64 {
    c.polynomial(v, a).max(0.0)
}

/// Left Riemann sum of the fuel rate: every sample contributes one `dt` slice.
pub fn energy(traj: &Trajectory, c: &FuelCoefficients) -> f64 {
    traj.states
        .iter()
        .map(|s| fuel_rate(s.v, s.a, c) * traj.dt)
        .sum()
}

/// `-w1 * (time before passing pass_x) - w2 * energy`, accumulated slice by
/// slice so that it is additive over any split of the samples.
pub fn utility(traj: &Trajectory, w: &UtilityWeights, c: &FuelCoefficients, pass_x: f64) -> f64 {
    traj.states
        .iter()
        .map(|s| {
            let waiting = if s.x < pass_x { w.w1 * traj.dt } else { 0.0 };
            -waiting - w.w2 * fuel_rate(s.v, s.a, c) * traj.dt
        })
        .sum()
}

/// Position RMSE over the common support.
pub fn rmse(executed: &Trajectory, planned_concat: &Trajectory) -> Result<f64> {
    let n = common_support(executed, planned_concat)?;
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = executed
        .states
        .iter()
        .zip(&planned_concat.states)
        .take(n)
        .map(|(a, b)| (a.x - b.x).powi(2))
        .sum();
    Ok((sum / n as f64).sqrt())
}

/// Joins the first-`delta` window of every plan. Each segment contributes its
/// samples in `[issued_at, issued_at + delta)`; the last one also keeps the
/// sample at `issued_at + delta` when present.
pub fn concat_plan_prefixes(segments: &[(f64, Plan)], delta: f64) -> Result<Trajectory> {
    let Some((_, first)) = segments.first() else {
        return Err(Error::SegmentCoverage("no plan segments".into()));
    };
    let dt = first.states.dt;
    let mut states = Vec::new();
    for (i, (issued, plan)) in segments.iter().enumerate() {
        if (plan.issued_at - issued).abs() > TIME_EPS || (plan.states.dt - dt).abs() > TIME_EPS {
            return Err(Error::SegmentCoverage(format!(
                "segment {i} is inconsistent with its issue time or step"
            )));
        }
        if let Some(prev) = states.last() {
            let expected = prev_end(prev, dt);
            if (issued - expected).abs() > TIME_EPS {
                return Err(Error::SegmentCoverage(format!(
                    "segment {i} issued at {issued} but coverage ends at {expected}"
                )));
            }
        }
        let last = i + 1 == segments.len();
        let end = issued + delta;
        for s in &plan.states.states {
            let inside = if last {
                s.t <= end + TIME_EPS
            } else {
                s.t < end - TIME_EPS
            };
            if inside {
                states.push(*s);
            }
        }
        if !last && plan.states.end_time() < end - dt - TIME_EPS {
            return Err(Error::SegmentCoverage(format!(
                "segment {i} is shorter than the replan interval"
            )));
        }
    }
    Trajectory::new(dt, states)
}

fn prev_end(s: &crate::domain::VehicleState, dt: f64) -> f64 {
    s.t + dt
}

/// Retention ratio `(U_exec - U_bench) / (U_planned - U_bench)`.
pub fn indicator(u_exec: f64, u_bench: f64, u_planned_concat: f64) -> Result<f64> {
    let denom = u_planned_concat - u_bench;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::ZeroDenominator);
    }
    Ok((u_exec - u_bench) / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub u_executed: f64,
    pub u_benchmark: f64,
    pub u_planned_concat: f64,
    pub rmse_m: f64,
    pub indicator: f64,
    pub pass_time_s: f64,
    pub energy_l: f64,
}

/// Scores an executed trajectory against its planned reference and the
/// benchmark. The reference is cut to the executed time span.
pub fn evaluate(
    executed: &Trajectory,
    planned_concat: &Trajectory,
    benchmark: &Trajectory,
    pass_time: f64,
    w: &UtilityWeights,
    c: &FuelCoefficients,
    pass_x: f64,
) -> Result<IndicatorReport> {
    let n = common_support(executed, planned_concat)?;
    let reference = Trajectory::new(planned_concat.dt, planned_concat.states[..n].to_vec())?;
    let u_executed = utility(executed, w, c, pass_x);
    let u_benchmark = utility(benchmark, w, c, pass_x);
    let u_planned_concat = utility(&reference, w, c, pass_x);
    Ok(IndicatorReport {
        u_executed,
        u_benchmark,
        u_planned_concat,
        rmse_m: rmse(executed, &reference)?,
        indicator: indicator(u_executed, u_benchmark, u_planned_concat)?,
        pass_time_s: pass_time,
        energy_l: energy(executed, c),
    })
}
