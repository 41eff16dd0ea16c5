//! Value types shared by every module: kinematic states, sampled
//! trajectories, plans, limits, fuel and utility parameters, and the
//! scenario configuration with its validation and file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::disturbance::DisturbanceSpec;
use crate::error::{Error, Result};
use crate::signal::SignalTimeline;

/// Tolerance used for every timestamp comparison.
pub const TIME_EPS: f64 = 1e-9;

/// Kinematic snapshot. `x` is distance traveled from the episode origin; the
/// stop line sits at `ScenarioConfig::approach_distance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

impl VehicleState {
    pub fn new(t: f64, x: f64, v: f64, a: f64) -> Self {
        Self { t, x, v, a }
    }

    /// Advances by one step holding `self.a` constant, clamping speed at zero.
    pub fn advance(&self, dt: f64) -> VehicleState {
        let (x, v) = kinematic_step(self.x, self.v, self.a, dt);
        VehicleState {
            t: self.t + dt,
            x,
            v,
            a: self.a,
        }
    }
}

/// One step of the constant-acceleration integrator used by planners and the
/// plant alike: `x + v dt + a dt^2 / 2`, `v + a dt`. A vehicle that would
/// reverse within the step instead stops where its speed reaches zero.
#[inline]
pub fn kinematic_step(x: f64, v: f64, a: f64, dt: f64) -> (f64, f64) {
    let v_next = v + a * dt;
    if v_next < 0.0 {
        (x + v * v / (-2.0 * a), 0.0)
    } else {
        (x + v * dt + 0.5 * a * dt * dt, v_next)
    }
}

/// Uniformly sampled, non-empty sequence of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<VehicleState>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<VehicleState>) -> Result<Self> {
        let traj = Trajectory { dt, states };
        traj.check()?;
        Ok(traj)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidTrajectory(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if self.states.is_empty() {
            return Err(Error::InvalidTrajectory("empty trajectory".into()));
        }
        for (i, w) in self.states.windows(2).enumerate() {
            let gap = w[1].t - w[0].t;
            if (gap - self.dt).abs() > TIME_EPS {
                return Err(Error::InvalidTrajectory(format!(
                    "spacing {gap} at index {i} differs from dt {}",
                    self.dt
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &VehicleState {
        &self.states[0]
    }

    pub fn last(&self) -> &VehicleState {
        &self.states[self.states.len() - 1]
    }

    pub fn start_time(&self) -> f64 {
        self.first().t
    }

    pub fn end_time(&self) -> f64 {
        self.last().t
    }

    /// States with `t1 < t <= t2`, or `None` when that window holds no sample.
    pub fn slice(&self, t1: f64, t2: f64) -> Option<Trajectory> {
        let states: Vec<_> = self
            .states
            .iter()
            .filter(|s| s.t > t1 + TIME_EPS && s.t <= t2 + TIME_EPS)
            .copied()
            .collect();
        if states.is_empty() {
            None
        } else {
            Some(Trajectory {
                dt: self.dt,
                states,
            })
        }
    }

    /// Index of the sample at time `t`, if one exists within tolerance.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let rel = (t - self.start_time()) / self.dt;
        let idx = rel.round();
        if idx < 0.0 || (rel - idx).abs() * self.dt > TIME_EPS {
            return None;
        }
        let idx = idx as usize;
        (idx < self.states.len()).then_some(idx)
    }
}

/// Planner output issued at a replan instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub issued_at: f64,
    pub horizon: f64,
    pub states: Trajectory,
}

impl Plan {
    pub fn new(issued_at: f64, horizon: f64, states: Trajectory) -> Result<Self> {
        if (states.start_time() - issued_at).abs() > TIME_EPS {
            return Err(Error::InvalidTrajectory(format!(
                "plan starts at {} but was issued at {issued_at}",
                states.start_time()
            )));
        }
        Ok(Plan {
            issued_at,
            horizon,
            states,
        })
    }

    /// Extends the plan at constant speed (zero acceleration) until it covers
    /// `issued_at + horizon`.
    pub fn cruise_to_horizon(
        issued_at: f64,
        horizon: f64,
        dt: f64,
        mut states: Vec<VehicleState>,
    ) -> Result<Self> {
        let n_needed = (horizon / dt - TIME_EPS).ceil() as usize + 1;
        if let Some(last) = states.last_mut() {
            last.a = 0.0;
        }
        while states.len() < n_needed {
            let last = *states.last().expect("plan has at least its issue state");
            states.push(last.advance(dt));
        }
        Plan::new(issued_at, horizon, Trajectory::new(dt, states)?)
    }

    pub fn at_offset(&self, step: usize) -> Option<&VehicleState> {
        self.states.states.get(step)
    }
}

/// Box limits on speed, acceleration and jerk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub v_min: f64,
    pub v_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub j_min: f64,
    pub j_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            v_min: 0.0,
            v_max: 15.0,
            a_min: -3.0,
            a_max: 3.0,
            j_min: -2.0,
            j_max: 2.0,
        }
    }
}

impl Limits {
    pub fn clamp_accel(&self, a: f64) -> f64 {
        a.clamp(self.a_min, self.a_max)
    }
}

/// Coefficients of the instantaneous fuel polynomial
/// `alpha + beta v + gamma v^2 + theta v a + eta a^2` (liters per second).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuelCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub eta: f64,
}

impl Default for FuelCoefficients {
    fn default() -> Self {
        FuelCoefficients {
            alpha: 0.15,
            beta: 0.0025,
            gamma: 0.00006,
            theta: 0.00035,
            eta: 0.0004,
        }
    }
}

impl FuelCoefficients {
    /// Raw polynomial, not floored.
    #[inline]
    pub fn polynomial(&self, v: f64, a: f64) -> f64 {
        self.alpha + self.beta * v + self.gamma * v * v + self.theta * v * a + self.eta * a * a
    }

    /// Partial derivatives of the raw polynomial with respect to `v` and `a`.
    #[inline]
    pub fn gradient(&self, v: f64, a: f64) -> (f64, f64) {
        (
            self.beta + 2.0 * self.gamma * v + self.theta * a,
            self.theta * v + 2.0 * self.eta * a,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityWeights {
    /// Utility per second of pass time.
    pub w1: f64,
    /// Utility per liter of fuel.
    pub w2: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        UtilityWeights { w1: 0.05, w2: 1.0 }
    }
}

/// Controller and loop parameters that are not part of the physical scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerTuning {
    /// Stop-and-go nominal acceleration/deceleration magnitude.
    pub a_comfort: f64,
    /// Stop-and-go speed-tracking gain (1/s).
    pub k_v: f64,
    /// Stop-and-go departure delay after green onset.
    pub reaction_delay: f64,
    /// Executor proportional speed feedback gain (1/s).
    pub k_fb: f64,
    /// Minimum speed of a no-stop cubic approach.
    pub v_crawl: f64,
    /// Episode time cap.
    pub t_max: f64,
}

impl Default for ControllerTuning {
    fn default() -> Self {
        ControllerTuning {
            a_comfort: 1.5,
            k_v: 1.0,
            reaction_delay: 0.0,
            k_fb: 0.5,
            v_crawl: 0.5,
            t_max: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Distance from the origin to the stop line.
    pub approach_distance: f64,
    /// Clearance beyond the stop line after which the vehicle has passed.
    pub exit_distance: f64,
    pub v0: f64,
    /// Benchmark cruise speed.
    pub v_exp: f64,
    /// Target speed at the stop line for the eco planners.
    pub v_p: f64,
    pub dt: f64,
    pub replan_interval: f64,
    pub horizon: f64,
    pub seed: u64,
    pub limits: Limits,
    pub fuel: FuelCoefficients,
    pub weights: UtilityWeights,
    pub signal: SignalTimeline,
    pub disturbance: DisturbanceSpec,
    pub controller: ControllerTuning,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            approach_distance: 160.0,
            exit_distance: 20.0,
            v0: 5.0,
            v_exp: 5.0,
            v_p: 5.0,
            dt: 0.1,
            replan_interval: 1.0,
            horizon: 40.0,
            seed: 0,
            limits: Limits::default(),
            fuel: FuelCoefficients::default(),
            weights: UtilityWeights::default(),
            signal: SignalTimeline::default(),
            disturbance: DisturbanceSpec::default(),
            controller: ControllerTuning::default(),
        }
    }
}

fn violation(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

fn require(ok: bool, field: &'static str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(violation(field, reason))
    }
}

impl ScenarioConfig {
    /// Position after which the vehicle counts as having passed.
    pub fn pass_position(&self) -> f64 {
        self.approach_distance + self.exit_distance
    }

    /// Number of simulation steps between replans.
    pub fn replan_steps(&self) -> usize {
        (self.replan_interval / self.dt).round() as usize
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        validate(Self::from_toml_str(&text)?)
    }
}

/// Returns `config` unchanged when every invariant holds, otherwise the first
/// violation found, naming the offending field.
pub fn validate(config: ScenarioConfig) -> Result<ScenarioConfig> {
    let c = &config;
    let l = &c.limits;
    let finite = [
        c.approach_distance,
        c.exit_distance,
        c.v0,
        c.v_exp,
        c.v_p,
        c.dt,
        c.replan_interval,
        c.horizon,
        l.v_min,
        l.v_max,
        l.a_min,
        l.a_max,
        l.j_min,
        l.j_max,
    ];
    require(
        finite.iter().all(|v| v.is_finite()),
        "scenario",
        "all numeric fields must be finite",
    )?;

    require(
        c.approach_distance > 0.0,
        "approach_distance",
        "must be > 0",
    )?;
    require(c.exit_distance >= 0.0, "exit_distance", "must be >= 0")?;
    require(l.v_min >= 0.0, "limits.v_min", "must be >= 0")?;
    require(l.v_min < l.v_max, "limits.v_max", "v_min < v_max required")?;
    require(l.a_min < l.a_max, "limits.a_max", "a_min < a_max required")?;
    require(
        l.a_min < 0.0 && l.a_max > 0.0,
        "limits.a_min",
        "acceleration box must contain 0",
    )?;
    require(l.j_min < l.j_max, "limits.j_max", "j_min < j_max required")?;
    require(
        l.j_min < 0.0 && l.j_max > 0.0,
        "limits.j_min",
        "jerk box must contain 0",
    )?;
    require(
        c.v0 >= l.v_min && c.v0 <= l.v_max,
        "v0",
        "must lie within [v_min, v_max]",
    )?;
    require(
        c.v_exp > l.v_min && c.v_exp <= l.v_max,
        "v_exp",
        "must lie within (v_min, v_max]",
    )?;
    require(
        c.v_p > 0.0 && c.v_p >= l.v_min && c.v_p <= l.v_max,
        "v_p",
        "must be positive and within limits",
    )?;

    require(c.dt > 0.0, "dt", "must be > 0")?;
    require(c.replan_interval > 0.0, "replan_interval", "must be > 0")?;
    require(
        c.replan_interval < c.horizon,
        "replan_interval",
        "replan_interval < horizon required",
    )?;
    let ratio = c.replan_interval / c.dt;
    require(
        ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() * c.dt <= 1e-9,
        "replan_interval",
        "must be a multiple of dt",
    )?;

    let f = &c.fuel;
    require(
        f.alpha > 0.0,
        "fuel.alpha",
        "idle consumption must be positive",
    )?;
    let w = &c.weights;
    require(
        w.w1 >= 0.0 && w.w2 >= 0.0,
        "weights",
        "weights must be non-negative",
    )?;
    require(
        w.w1 > 0.0 || w.w2 > 0.0,
        "weights",
        "weights must not both be zero",
    )?;

    let t = &c.controller;
    require(
        t.a_comfort > 0.0 && t.a_comfort <= l.a_max.min(-l.a_min),
        "controller.a_comfort",
        "must lie within (0, min(|a_min|, a_max)]",
    )?;
    require(t.k_v > 0.0, "controller.k_v", "must be > 0")?;
    require(
        t.reaction_delay >= 0.0,
        "controller.reaction_delay",
        "must be >= 0",
    )?;
    require(t.k_fb >= 0.0, "controller.k_fb", "must be >= 0")?;
    require(
        t.v_crawl > 0.0 && t.v_crawl < c.v_p,
        "controller.v_crawl",
        "must lie within (0, v_p)",
    )?;
    require(t.t_max > 0.0, "controller.t_max", "must be > 0")?;

    c.signal.check()?;
    c.disturbance.check()?;
    Ok(config)
}
