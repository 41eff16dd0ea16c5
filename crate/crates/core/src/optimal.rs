//! Fuel-minimal planner: direct transcription over per-step jerk.
//!
//! The decision variables are the jerks `j_0..j_{N-2}`; accelerations,
//! speeds and positions follow from the exact forward recursions. Jerk bounds
//! are enforced by projection, the terminal conditions by augmented
//! Lagrangian multipliers and the speed/acceleration boxes by
//! Powell–Hestenes–Rockafellar penalties. Each inner problem is minimized by
//! projected Newton steps whose direction comes from a Riccati sweep.
//!
//! Substituting `a_k = (v_{k+1} - v_k) / dt` telescopes the `theta v a` term of
//! the fuel polynomial into `theta/2 v_N^2 - theta dt^2/2 sum a_k^2`, so the
//! objective is `dt (eta - theta dt / 2) sum a_k^2` plus convex terms: for the
//! step sizes used here it is strictly convex in the jerks and every
//! stationary point is the global optimum.

use log::warn;

use crate::analytical;
use crate::domain::{FuelCoefficients, Limits, Plan, Trajectory, VehicleState};
use crate::error::{Error, Result};
use crate::planner::{
    arrival_target, committed_to_line, cruise_bound, pass_through_plan, rollout, PlanContext,
    Planner,
};
use crate::signal::SignalObservation;

/// Newton iterations allowed across all outer updates of one solve.
pub const MAX_ITERATIONS: usize = 5000;

const EQ_TOL: f64 = 1e-8;
const BOX_TOL: f64 = 1e-10;
const RHO_INIT: f64 = 10.0;
const RHO_MAX: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryProblem {
    pub n_steps: usize,
    pub dt: f64,
    pub t0: f64,
    pub x0: f64,
    pub v0: f64,
    /// Acceleration over the first step; fixed by the current state.
    pub a0: f64,
    pub x_goal: f64,
    pub v_goal: f64,
    pub limits: Limits,
    pub fuel: FuelCoefficients,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    /// Fuel over the planned states, terminal sample included.
    pub objective: f64,
    pub max_equality_residual: f64,
    pub max_box_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the projected Lagrangian gradient over `1 + |objective|`.
    pub projected_gradient_norm: f64,
}

/// Sets up the fixed-time program from `state` to `(x_light, v_p)` at `t_star`.
pub fn build(
    state: &VehicleState,
    t_star: f64,
    v_p: f64,
    x_light: f64,
    limits: &Limits,
    fuel: &FuelCoefficients,
    dt: f64,
) -> Result<TrajectoryProblem> {
    let steps = ((t_star - state.t) / dt).round();
    if steps < 2.0 {
        return Err(Error::HorizonTooShort {
            steps: steps as i64,
        });
    }
    if x_light <= state.x {
        return Err(Error::InvalidTrajectory(format!(
            "goal {x_light} is not ahead of {}",
            state.x
        )));
    }
    if v_p < limits.v_min || v_p > limits.v_max {
        return Err(Error::InvalidConfig {
            field: "v_p",
            reason: "terminal speed outside the speed limits".into(),
        });
    }
    Ok(TrajectoryProblem {
        n_steps: steps as usize,
        dt,
        t0: state.t,
        x0: state.x,
        v0: state.v,
        a0: state.a,
        x_goal: x_light,
        v_goal: v_p,
        limits: *limits,
        fuel: *fuel,
    })
}

impl TrajectoryProblem {
    pub fn n_controls(&self) -> usize {
        self.n_steps - 1
    }

    /// `a_0..a_{N-1}` from the jerks.
    pub fn accelerations(&self, jerk: &[f64]) -> Vec<f64> {
        let mut a = Vec::with_capacity(self.n_steps);
        a.push(self.a0);
        for j in jerk.iter().take(self.n_steps - 1) {
            let prev = *a.last().unwrap();
            a.push(prev + j * self.dt);
        }
        a
    }

    /// `(x_k, v_k)` for `k = 0..=N` by the exact recursions.
    pub fn positions_speeds(&self, accels: &[f64]) -> Vec<(f64, f64)> {
        let dt = self.dt;
        let mut out = Vec::with_capacity(accels.len() + 1);
        let (mut x, mut v) = (self.x0, self.v0);
        out.push((x, v));
        for a in accels {
            x += v * dt + 0.5 * a * dt * dt;
            v += a * dt;
            out.push((x, v));
        }
        out
    }

    /// Fuel over the planned samples `0..=N`; the terminal sample carries `a = 0`.
    pub fn objective(&self, jerk: &[f64]) -> f64 {
        let accels = self.accelerations(jerk);
        let xv = self.positions_speeds(&accels);
        let mut total = 0.0;
        for (k, &(_, v)) in xv.iter().enumerate() {
            let a = accels.get(k).copied().unwrap_or(0.0);
            total += self.fuel.polynomial(v, a) * self.dt;
        }
        total
    }

    /// Adjoint gradient of [`objective`](Self::objective) with respect to the jerks.
    pub fn objective_gradient(&self, jerk: &[f64]) -> Vec<f64> {
        let accels = self.accelerations(jerk);
        let xv = self.positions_speeds(&accels);
        let n = self.n_steps;
        let mut grads = Vec::with_capacity(n + 1);
        for (k, &(_, v)) in xv.iter().enumerate() {
            let a = accels.get(k).copied().unwrap_or(0.0);
            let (gv, ga) = self.fuel.gradient(v, a);
            let ga = if k < n { ga } else { 0.0 };
            grads.push([0.0, gv * self.dt, ga * self.dt]);
        }
        self.adjoint(&grads)
    }

    /// Back-propagates per-stage state gradients to the jerks.
    fn adjoint(&self, stage_grads: &[[f64; 3]]) -> Vec<f64> {
        let n = self.n_steps;
        let mut lam = stage_grads[n];
        let mut out = vec![0.0; n - 1];
        for k in (1..n).rev() {
            let next = transpose_mul(&lam, self.dt);
            lam = add3(&stage_grads[k], &next);
            // control k-1 drives a_k
            out[k - 1] = self.dt * lam[2];
        }
        out
    }

    /// Initial jerks reproducing `warm`'s accelerations from `t0` on, as far as
    /// the jerk bounds allow.
    pub fn jerk_from_plan(&self, warm: &Plan) -> Vec<f64> {
        let traj = &warm.states;
        let start = traj.index_of(self.t0);
        let mut jerk = Vec::with_capacity(self.n_controls());
        let mut a = self.a0;
        for k in 1..self.n_steps {
            let target = start
                .and_then(|i| traj.states.get(i + k))
                .map(|s| s.a)
                .unwrap_or(0.0);
            let j = ((target - a) / self.dt).clamp(self.limits.j_min, self.limits.j_max);
            a += j * self.dt;
            jerk.push(j);
        }
        jerk
    }

    fn start_state(&self) -> VehicleState {
        VehicleState::new(self.t0, self.x0, self.v0, self.a0)
    }

    /// Samples `0..=N` of the plan driven by `jerk`.
    pub fn states(&self, jerk: &[f64]) -> Vec<VehicleState> {
        rollout(self.start_state(), &self.accelerations(jerk), self.dt)
    }

    fn box_violation(&self, accels: &[f64], xv: &[(f64, f64)]) -> f64 {
        let l = &self.limits;
        let mut worst: f64 = 0.0;
        for &(_, v) in &xv[1..] {
            worst = worst.max(l.v_min - v).max(v - l.v_max);
        }
        for &a in &accels[1..] {
            worst = worst.max(l.a_min - a).max(a - l.a_max);
        }
        worst
    }
}

fn transpose_mul(lam: &[f64; 3], dt: f64) -> [f64; 3] {
    [
        lam[0],
        dt * lam[0] + lam[1],
        0.5 * dt * dt * lam[0] + dt * lam[1] + lam[2],
    ]
}

fn add3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

type Mat3 = [[f64; 3]; 3];

/// `A^T P A` for the constant-acceleration transition.
fn at_p_a(p: &Mat3, dt: f64) -> Mat3 {
    let a = [[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]];
    let mut pa = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            pa[i][j] = (0..3).map(|k| p[i][k] * a[k][j]).sum();
        }
    }
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[k][i] * pa[k][j]).sum();
        }
    }
    out
}

// --- reachability -----------------------------------------------------------

/// Longest distance coverable in `duration` from `v0` ending at `v1`:
/// full acceleration, cruise at the speed cap, full braking. `None` when the
/// speed change alone does not fit.
pub fn max_distance(v0: f64, v1: f64, duration: f64, limits: &Limits) -> Option<f64> {
    let (up, down) = (limits.a_max, -limits.a_min);
    let cap = limits.v_max.max(v0).max(v1);
    let peak = (duration + v0 / up + v1 / down) / (1.0 / up + 1.0 / down);
    if peak < v0.max(v1) - 1e-12 {
        return None;
    }
    let p = peak.min(cap);
    let (tu, td) = ((p - v0).max(0.0) / up, (p - v1).max(0.0) / down);
    let tc = (duration - tu - td).max(0.0);
    Some(0.5 * (v0 + p) * tu + p * tc + 0.5 * (p + v1) * td)
}

/// Shortest distance: full braking, wait at the speed floor, full acceleration.
pub fn min_distance(v0: f64, v1: f64, duration: f64, limits: &Limits) -> Option<f64> {
    let (up, down) = (limits.a_max, -limits.a_min);
    let floor = limits.v_min.min(v0).min(v1);
    let trough = (v0 / down + v1 / up - duration) / (1.0 / down + 1.0 / up);
    if trough > v0.min(v1) + 1e-12 {
        return None;
    }
    let q = trough.max(floor);
    let (td, tu) = ((v0 - q).max(0.0) / down, (v1 - q).max(0.0) / up);
    let tc = (duration - td - tu).max(0.0);
    Some(0.5 * (v0 + q) * td + q * tc + 0.5 * (q + v1) * tu)
}

/// Whether `(distance, v1)` is reachable from `v0` in exactly `duration` under
/// the speed and acceleration boxes.
pub fn is_reachable(v0: f64, v1: f64, distance: f64, duration: f64, limits: &Limits) -> bool {
    match (
        min_distance(v0, v1, duration, limits),
        max_distance(v0, v1, duration, limits),
    ) {
        (Some(lo), Some(hi)) => distance >= lo - 1e-9 && distance <= hi + 1e-9,
        _ => false,
    }
}

/// Smallest `t` with `ok(t)`, for a predicate that stays true once true.
fn first_true(ok: impl Fn(f64) -> bool) -> Option<f64> {
    let mut hi = 1e-3;
    while !ok(hi) {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Time-optimal duration to cover `distance` arriving at `v1`; `None` when no
/// duration works. The longest coverable distance grows with the duration
/// and the shortest shrinks, so the feasible durations form a half-line.
pub fn min_arrival_duration(v0: f64, v1: f64, distance: f64, limits: &Limits) -> Option<f64> {
    let far_enough =
        first_true(|t| max_distance(v0, v1, t, limits).is_some_and(|d| d >= distance))?;
    let short_enough =
        first_true(|t| min_distance(v0, v1, t, limits).is_some_and(|d| d <= distance + 1e-9))?;
    Some(far_enough.max(short_enough))
}

// --- augmented Lagrangian ---------------------------------------------------

#[derive(Debug, Clone)]
struct Multipliers {
    x: f64,
    v: f64,
    /// Per stage: `[v_lo, v_hi, a_lo, a_hi]`.
    boxes: Vec<[f64; 4]>,
}

/// One PHR inequality `g <= 0` with `g = sign * s + offset`.
fn phr(mu: f64, rho: f64, g: f64) -> (f64, f64, bool) {
    let shifted = mu + rho * g;
    // curvature is counted on the kink itself so Newton can step off it
    if shifted >= 0.0 {
        ((shifted * shifted - mu * mu) / (2.0 * rho), shifted, true)
    } else {
        (-mu * mu / (2.0 * rho), 0.0, false)
    }
}

struct Stage {
    value: f64,
    grad: [f64; 3],
    hess: Mat3,
}

fn stage(
    p: &TrajectoryProblem,
    k: usize,
    x: f64,
    v: f64,
    a: f64,
    m: &Multipliers,
    rho: f64,
) -> Stage {
    let dt = p.dt;
    let n = p.n_steps;
    let f = &p.fuel;
    let terminal = k == n;
    let a_eff = if terminal { 0.0 } else { a };
    let mut value = f.polynomial(v, a_eff) * dt;
    let (gv, ga) = f.gradient(v, a_eff);
    let mut grad = [0.0, gv * dt, if terminal { 0.0 } else { ga * dt }];
    let mut hess = [[0.0; 3]; 3];
    hess[1][1] = 2.0 * f.gamma * dt;
    if !terminal {
        hess[1][2] = f.theta * dt;
        hess[2][1] = f.theta * dt;
        hess[2][2] = 2.0 * f.eta * dt;
    }
    if k == 0 {
        return Stage { value, grad, hess };
    }
    let l = &p.limits;
    let mu = m.boxes[k];
    // (multiplier slot, state index, sign, constraint value)
    let mut rows = vec![(0, 1, -1.0, l.v_min - v), (1, 1, 1.0, v - l.v_max)];
    if !terminal {
        rows.push((2, 2, -1.0, l.a_min - a));
        rows.push((3, 2, 1.0, a - l.a_max));
    }
    for (slot, idx, sign, g) in rows {
        let (val, d, active) = phr(mu[slot], rho, g);
        value += val;
        grad[idx] += d * sign;
        if active {
            hess[idx][idx] += rho;
        }
    }
    if terminal {
        let (hx, hv) = (x - p.x_goal, v - p.v_goal);
        value += m.x * hx + 0.5 * rho * hx * hx + m.v * hv + 0.5 * rho * hv * hv;
        grad[0] += m.x + rho * hx;
        grad[1] += m.v + rho * hv;
        hess[0][0] += rho;
        hess[1][1] += rho;
    }
    Stage { value, grad, hess }
}

struct Evaluation {
    value: f64,
    grad: Vec<f64>,
    stages: Vec<Stage>,
}

fn evaluate(
    p: &TrajectoryProblem,
    jerk: &[f64],
    m: &Multipliers,
    rho: f64,
    with_hessian: bool,
) -> Evaluation {
    let accels = p.accelerations(jerk);
    let xv = p.positions_speeds(&accels);
    let stages: Vec<Stage> = xv
        .iter()
        .enumerate()
        .map(|(k, &(x, v))| stage(p, k, x, v, accels.get(k).copied().unwrap_or(0.0), m, rho))
        .collect();
    let value = stages.iter().map(|s| s.value).sum();
    let grads: Vec<[f64; 3]> = stages.iter().map(|s| s.grad).collect();
    let grad = p.adjoint(&grads);
    Evaluation {
        value,
        grad,
        stages: if with_hessian { stages } else { Vec::new() },
    }
}

/// Newton direction over the free jerks by a backward Riccati sweep of the
/// stage Hessians; fixed jerks get a zero step.
fn newton_direction(p: &TrajectoryProblem, stages: &[Stage], fixed: &[bool]) -> Vec<f64> {
    let n = p.n_steps;
    let dt = p.dt;
    let mut pm = stages[n].hess;
    let mut pv = stages[n].grad;
    // stage n-1 has no control of its own (its jerk only moves a_n)
    {
        let apa = at_p_a(&pm, dt);
        let atp = transpose_mul(&pv, dt);
        pm = add_mat(&stages[n - 1].hess, &apa);
        pv = add3(&stages[n - 1].grad, &atp);
    }
    let mut gains = vec![(0.0, [0.0; 3]); n - 1];
    for k in (0..n - 1).rev() {
        // control k drives a_{k+1}: B = (0, 0, dt)
        let apa = at_p_a(&pm, dt);
        let atp = transpose_mul(&pv, dt);
        let a = [[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]];
        let mut new_p = add_mat(&stages[k].hess, &apa);
        let mut new_v = add3(&stages[k].grad, &atp);
        if !fixed[k] {
            let quu = dt * dt * pm[2][2];
            let qu = dt * pv[2];
            let qus: [f64; 3] =
                std::array::from_fn(|j| dt * (0..3).map(|i| pm[2][i] * a[i][j]).sum::<f64>());
            let quu = if quu > 1e-14 { quu } else { 1e-14 };
            let kff = -qu / quu;
            let kfb = std::array::from_fn(|j| -qus[j] / quu);
            gains[k] = (kff, kfb);
            for i in 0..3 {
                for j in 0..3 {
                    new_p[i][j] -= qus[i] * qus[j] / quu;
                }
                new_v[i] -= qus[i] * qu / quu;
            }
        }
        pm = new_p;
        pv = new_v;
    }
    let mut ds = [0.0; 3];
    let mut du = vec![0.0; n - 1];
    for k in 0..n - 1 {
        let (kff, kfb) = gains[k];
        let u = if fixed[k] {
            0.0
        } else {
            kff + kfb[0] * ds[0] + kfb[1] * ds[1] + kfb[2] * ds[2]
        };
        du[k] = u;
        ds = [
            ds[0] + dt * ds[1] + 0.5 * dt * dt * ds[2],
            ds[1] + dt * ds[2],
            ds[2] + dt * u,
        ];
    }
    du
}

fn add_mat(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] + b[i][j]))
}

fn project(u: &mut [f64], limits: &Limits) {
    for x in u.iter_mut() {
        *x = x.clamp(limits.j_min, limits.j_max);
    }
}

fn projected_gradient_inf(u: &[f64], g: &[f64], limits: &Limits) -> f64 {
    u.iter()
        .zip(g)
        .map(|(&x, &gx)| (x - (x - gx).clamp(limits.j_min, limits.j_max)).abs())
        .fold(0.0, f64::max)
}

/// Minimizes the augmented Lagrangian for fixed multipliers. Returns the
/// Newton iterations used and the final projected-gradient norm.
fn inner_solve(
    p: &TrajectoryProblem,
    u: &mut Vec<f64>,
    m: &Multipliers,
    rho: f64,
    budget: usize,
) -> (usize, f64) {
    let l = &p.limits;
    let mut iters = 0;
    let mut stalls = 0;
    let mut eval = evaluate(p, u, m, rho, true);
    loop {
        let pg = projected_gradient_inf(u, &eval.grad, l);
        if pg <= 1e-12 * (1.0 + eval.value.abs()) || iters >= budget {
            return (iters, pg);
        }
        iters += 1;
        let eps = pg.min(1e-6);
        let fixed: Vec<bool> = u
            .iter()
            .zip(&eval.grad)
            .map(|(&x, &g)| (x <= l.j_min + eps && g > 0.0) || (x >= l.j_max - eps && g < 0.0))
            .collect();
        let du = newton_direction(p, &eval.stages, &fixed);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = u.iter().zip(&du).map(|(x, d)| x + step * d).collect();
            project(&mut trial, l);
            let e = evaluate(p, &trial, m, rho, false);
            let decrease: f64 = eval
                .grad
                .iter()
                .zip(u.iter().zip(&trial))
                .map(|(g, (a, b))| g * (b - a))
                .sum();
            if e.value <= eval.value + 1e-4 * decrease.min(0.0) && e.value <= eval.value {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            // no descent along the Newton direction: take a projected gradient step
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let mut trial: Vec<f64> = u
                    .iter()
                    .zip(&eval.grad)
                    .map(|(x, g)| x - step * g)
                    .collect();
                project(&mut trial, l);
                let e = evaluate(p, &trial, m, rho, false);
                if e.value < eval.value {
                    *u = trial;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                return (iters, pg);
            }
            eval = evaluate(p, u, m, rho, true);
            continue;
        };
        *u = next;
        let before = eval.value;
        eval = evaluate(p, u, m, rho, true);
        // progress below the resolution of the objective value
        if eval.value >= before - 1e-15 * before.abs() {
            stalls += 1;
            if stalls >= 3 {
                return (iters, projected_gradient_inf(u, &eval.grad, l));
            }
        } else {
            stalls = 0;
        }
    }
}

/// Solves the fixed-time program. Returns the best iterate with a
/// non-converged report when the iteration cap is hit.
pub fn solve(
    problem: &TrajectoryProblem,
    warm_start: Option<&Plan>,
) -> Result<(Plan, SolveReport)> {
    let p = problem;
    if p.n_steps < 2 {
        return Err(Error::HorizonTooShort {
            steps: p.n_steps as i64,
        });
    }
    let duration = p.n_steps as f64 * p.dt;
    let distance = p.x_goal - p.x0;
    if !is_reachable(p.v0, p.v_goal, distance, duration, &p.limits) {
        return Err(Error::TerminalUnreachable(format!(
            "{distance:.3} m ending at {:.3} m/s in {duration:.2} s from {:.3} m/s",
            p.v_goal, p.v0
        )));
    }

    let mut u = match warm_start {
        Some(plan) => p.jerk_from_plan(plan),
        None => vec![0.0; p.n_controls()],
    };
    project(&mut u, &p.limits);
    let mut m = Multipliers {
        x: 0.0,
        v: 0.0,
        boxes: vec![[0.0; 4]; p.n_steps + 1],
    };
    let mut rho = RHO_INIT;
    let mut iterations = 0;
    let mut prev_violation = f64::INFINITY;
    let mut report = SolveReport {
        objective: f64::NAN,
        max_equality_residual: f64::INFINITY,
        max_box_violation: f64::INFINITY,
        iterations: 0,
        converged: false,
        projected_gradient_norm: f64::INFINITY,
    };

    while iterations < MAX_ITERATIONS {
        let (used, pg) = inner_solve(p, &mut u, &m, rho, MAX_ITERATIONS - iterations);
        iterations += used.max(1);

        let accels = p.accelerations(&u);
        let xv = p.positions_speeds(&accels);
        let (x_n, v_n) = xv[p.n_steps];
        let (hx, hv) = (x_n - p.x_goal, v_n - p.v_goal);
        let eq = hx.abs().max(hv.abs());
        let bx = p.box_violation(&accels, &xv);
        let objective = p.objective(&u);
        report = SolveReport {
            objective,
            max_equality_residual: eq,
            max_box_violation: bx,
            iterations,
            converged: false,
            projected_gradient_norm: pg / (1.0 + objective.abs()),
        };
        if eq < EQ_TOL && bx < BOX_TOL && report.projected_gradient_norm < 1e-6 {
            report.converged = true;
            break;
        }

        m.x += rho * hx;
        m.v += rho * hv;
        let l = &p.limits;
        for k in 1..=p.n_steps {
            let v = xv[k].1;
            let mu = &mut m.boxes[k];
            mu[0] = (mu[0] + rho * (l.v_min - v)).max(0.0);
            mu[1] = (mu[1] + rho * (v - l.v_max)).max(0.0);
            if k < p.n_steps {
                let a = accels[k];
                mu[2] = (mu[2] + rho * (l.a_min - a)).max(0.0);
                mu[3] = (mu[3] + rho * (a - l.a_max)).max(0.0);
            }
        }
        let violation = eq.max(bx);
        if violation > 0.25 * prev_violation {
            rho = (rho * 10.0).min(RHO_MAX);
        }
        prev_violation = violation;
    }

    let states = p.states(&u);
    let plan = Plan::new(p.t0, duration, Trajectory::new(p.dt, states)?)?;
    Ok((plan, report))
}

/// Rolling-horizon wrapper around [`solve`].
#[derive(Debug, Clone, Default)]
pub struct OptimalPlanner {
    previous: Option<Plan>,
    pub last_report: Option<SolveReport>,
    /// Replans that fell back to the analytical planner.
    pub fallbacks: usize,
}

impl OptimalPlanner {
    fn solve_for(
        &mut self,
        state: &VehicleState,
        obs: &SignalObservation,
        ctx: &PlanContext,
    ) -> Result<Plan> {
        let distance = ctx.x_light - state.x;
        let reach =
            min_arrival_duration(state.v, ctx.v_p, distance, &ctx.limits).ok_or_else(|| {
                Error::TerminalUnreachable(format!("{distance:.3} m at {:.3} m/s", state.v))
            })?;
        let bound = cruise_bound(state, ctx).max(state.t + reach);
        let t_star = arrival_target(state, obs, ctx, bound);
        let problem = build(
            state,
            t_star,
            ctx.v_p,
            ctx.x_light,
            &ctx.limits,
            &ctx.fuel,
            ctx.dt,
        )?;
        let (plan, report) = solve(&problem, self.previous.as_ref())?;
        self.last_report = Some(report);
        if !report.converged {
            return Err(Error::NotConverged {
                iterations: report.iterations,
                residual: report.max_equality_residual.max(report.max_box_violation),
            });
        }
        Plan::cruise_to_horizon(state.t, ctx.horizon, ctx.dt, plan.states.states)
    }
}

impl Planner for OptimalPlanner {
    fn name(&self) -> &'static str {
        "optimal"
    }

    fn plan(
        &mut self,
        state: &VehicleState,
        obs: &SignalObservation,
        ctx: &PlanContext,
    ) -> Result<Plan> {
        ctx.ensure_not_complete(state)?;
        if committed_to_line(state, ctx) {
            let plan = pass_through_plan(state, obs, ctx)?;
            self.previous = Some(plan.clone());
            return Ok(plan);
        }
        let plan = match self.solve_for(state, obs, ctx) {
            Ok(plan) => plan,
            Err(err) => {
                warn!(
                    "optimal planner at t = {:.2}: {err}; using the analytical plan",
                    state.t
                );
                self.fallbacks += 1;
                analytical::plan_with_case(state, obs, ctx)?.0
            }
        };
        self.previous = Some(plan.clone());
        Ok(plan)
    }

    fn reset(&mut self) {
        self.previous = None;
        self.last_report = None;
        self.fallbacks = 0;
    }
}
