//! Brute-force fuel optima over discretized accelerations, used to check the
//! optimizer at desk scale.
//!
//! Both oracles choose one acceleration per step from a finite set (jerk is
//! not constrained) and score paths exactly like
//! [`TrajectoryProblem::objective`]: one `dt` slice per sample, the terminal
//! sample at zero acceleration. Speeds may not leave `[v_min, v_max]` and
//! positions may not leave the lattice span; the terminal sample must lie
//! within the grid's terminal tolerance (one cell by default) of the goal.

use crate::domain::{Trajectory, VehicleState};
use crate::error::{Error, Result};
use crate::optimal::TrajectoryProblem;

/// Largest `n_steps * n_pos * n_vel` the lattice program accepts.
pub const DP_GUARD: u64 = 100_000_000;
/// Largest number of sequences the exhaustive search accepts.
pub const ENUMERATION_GUARD: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DpGrid {
    pub n_pos: usize,
    pub n_vel: usize,
    pub pos_step: f64,
    pub vel_step: f64,
    pub accel_options: Vec<f64>,
    /// Terminal samples within these distances of the goal are accepted.
    pub terminal_tol_x: f64,
    pub terminal_tol_v: f64,
}

impl DpGrid {
    /// Lattice from `x0` to one cell past the goal and over the speed box.
    pub fn covering(
        problem: &TrajectoryProblem,
        pos_step: f64,
        vel_step: f64,
        accel_options: Vec<f64>,
    ) -> Self {
        let l = &problem.limits;
        let n_pos = ((problem.x_goal - problem.x0) / pos_step - 1e-9).ceil() as usize + 2;
        let n_vel = ((l.v_max - l.v_min) / vel_step + 1e-9).floor() as usize + 1;
        DpGrid {
            n_pos,
            n_vel,
            pos_step,
            vel_step,
            accel_options,
            terminal_tol_x: pos_step,
            terminal_tol_v: vel_step,
        }
    }

    /// Defaults: 1 m, 0.25 m/s, `{-3, -1.5, 0, 1.5, 3}` m/s².
    pub fn default_for(problem: &TrajectoryProblem) -> Self {
        Self::covering(problem, 1.0, 0.25, vec![-3.0, -1.5, 0.0, 1.5, 3.0])
    }
}

/// Feasibility rules shared by both oracles.
struct Rules<'a> {
    p: &'a TrajectoryProblem,
    x_hi: f64,
    tol_x: f64,
    tol_v: f64,
}

impl Rules<'_> {
    fn step(&self, x: f64, v: f64, a: f64) -> Option<(f64, f64)> {
        let dt = self.p.dt;
        let l = &self.p.limits;
        let v1 = v + a * dt;
        let x1 = x + v * dt + 0.5 * a * dt * dt;
        let ok = v1 >= l.v_min - 1e-12
            && v1 <= l.v_max + 1e-12
            && x1 >= self.p.x0 - 1e-12
            && x1 <= self.x_hi + 1e-12;
        ok.then_some((x1, v1))
    }

    fn terminal_ok(&self, x: f64, v: f64) -> bool {
        (x - self.p.x_goal).abs() <= self.tol_x + 1e-12
            && (v - self.p.v_goal).abs() <= self.tol_v + 1e-12
    }

    fn cost(&self, v: f64, a: f64) -> f64 {
        self.p.fuel.polynomial(v, a) * self.p.dt
    }
}

fn check_options(p: &TrajectoryProblem, options: &[f64]) -> Result<()> {
    if options.is_empty() {
        return Err(Error::InvalidConfig {
            field: "accel_options",
            reason: "empty".into(),
        });
    }
    if options
        .iter()
        .any(|a| *a < p.limits.a_min - 1e-12 || *a > p.limits.a_max + 1e-12)
    {
        return Err(Error::InvalidConfig {
            field: "accel_options",
            reason: "outside the acceleration limits".into(),
        });
    }
    Ok(())
}

fn path_trajectory(p: &TrajectoryProblem, accels: &[f64]) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(accels.len() + 1);
    let (mut x, mut v) = (p.x0, p.v0);
    for (k, &a) in accels.iter().enumerate() {
        states.push(VehicleState::new(p.t0 + k as f64 * p.dt, x, v, a));
        x += v * p.dt + 0.5 * a * p.dt * p.dt;
        v += a * p.dt;
    }
    states.push(VehicleState::new(
        p.t0 + accels.len() as f64 * p.dt,
        x,
        v,
        0.0,
    ));
    Trajectory::new(p.dt, states)
}

/// Backward dynamic program over the `(position, speed)` lattice; successors
/// snap to the nearest node. The problem's `a0` is ignored (the first
/// acceleration is a free choice like the others).
pub fn dp_min_fuel(problem: &TrajectoryProblem, grid: &DpGrid) -> Result<(f64, Trajectory)> {
    let p = problem;
    check_options(p, &grid.accel_options)?;
    let n = p.n_steps;
    let cells = (n as u64) * (grid.n_pos as u64) * (grid.n_vel as u64);
    if cells > DP_GUARD {
        return Err(Error::GuardExceeded(format!("{cells} lattice cells")));
    }
    let l = &p.limits;
    let rules = Rules {
        p,
        x_hi: p.x0 + (grid.n_pos - 1) as f64 * grid.pos_step,
        tol_x: grid.terminal_tol_x,
        tol_v: grid.terminal_tol_v,
    };
    let node = |i: usize, j: usize| {
        (
            p.x0 + i as f64 * grid.pos_step,
            l.v_min + j as f64 * grid.vel_step,
        )
    };
    let snap = |x: f64, v: f64| {
        let i = ((x - p.x0) / grid.pos_step).round();
        let j = ((v - l.v_min) / grid.vel_step).round();
        (i >= 0.0 && (i as usize) < grid.n_pos && j >= 0.0 && (j as usize) < grid.n_vel)
            .then_some((i as usize, j as usize))
    };
    let width = grid.n_pos * grid.n_vel;
    let idx = |i: usize, j: usize| i * grid.n_vel + j;

    // cost-to-go at the terminal stage
    let mut next = vec![f64::INFINITY; width];
    for i in 0..grid.n_pos {
        for j in 0..grid.n_vel {
            let (x, v) = node(i, j);
            if rules.terminal_ok(x, v) {
                next[idx(i, j)] = rules.cost(v, 0.0);
            }
        }
    }
    let mut policy: Vec<Vec<u8>> = vec![Vec::new(); n];
    for k in (1..n).rev() {
        let mut here = vec![f64::INFINITY; width];
        let mut choice = vec![u8::MAX; width];
        for i in 0..grid.n_pos {
            for j in 0..grid.n_vel {
                let (x, v) = node(i, j);
                for (o, &a) in grid.accel_options.iter().enumerate() {
                    let Some((x1, v1)) = rules.step(x, v, a) else {
                        continue;
                    };
                    let Some((i1, j1)) = snap(x1, v1) else {
                        continue;
                    };
                    let total = rules.cost(v, a) + next[idx(i1, j1)];
                    if total < here[idx(i, j)] {
                        here[idx(i, j)] = total;
                        choice[idx(i, j)] = o as u8;
                    }
                }
            }
        }
        policy[k] = choice;
        next = here;
    }

    // the start state need not be a lattice node
    let mut best = (f64::INFINITY, u8::MAX);
    for (o, &a) in grid.accel_options.iter().enumerate() {
        let Some((x1, v1)) = rules.step(p.x0, p.v0, a) else {
            continue;
        };
        let Some((i1, j1)) = snap(x1, v1) else {
            continue;
        };
        let total = rules.cost(p.v0, a) + next[idx(i1, j1)];
        if total < best.0 {
            best = (total, o as u8);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::NoFeasiblePath);
    }

    let mut accels = vec![grid.accel_options[best.1 as usize]];
    let (x1, v1) = rules
        .step(p.x0, p.v0, accels[0])
        .expect("chosen transition is feasible");
    let (mut i, mut j) = snap(x1, v1).expect("chosen transition lands on the lattice");
    for choice in policy.iter().take(n).skip(1) {
        let o = choice[idx(i, j)] as usize;
        let a = grid.accel_options[o];
        accels.push(a);
        let (x, v) = node(i, j);
        let (x1, v1) = rules.step(x, v, a).expect("policy transition is feasible");
        (i, j) = snap(x1, v1).expect("policy transition lands on the lattice");
    }
    Ok((best.0, path_trajectory(p, &accels)?))
}

/// Exhaustive search over every acceleration sequence with exact (unsnapped)
/// dynamics. The lattice span and terminal tolerance come from `grid`, so the
/// two oracles solve the same problem whenever the dynamics stay on lattice
/// nodes.
pub fn exhaustive_min_fuel(
    problem: &TrajectoryProblem,
    grid: &DpGrid,
) -> Result<(f64, Trajectory)> {
    let p = problem;
    let options = &grid.accel_options;
    check_options(p, options)?;
    let count = (options.len() as f64).powi(p.n_steps as i32);
    if count > ENUMERATION_GUARD as f64 {
        return Err(Error::GuardExceeded(format!(
            "{count} acceleration sequences"
        )));
    }
    let rules = Rules {
        p,
        x_hi: p.x0 + (grid.n_pos - 1) as f64 * grid.pos_step,
        tol_x: grid.terminal_tol_x,
        tol_v: grid.terminal_tol_v,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut seq = vec![0usize; p.n_steps];
    let mut path = vec![(0.0, 0.0); p.n_steps + 1];
    'outer: loop {
        path[0] = (p.x0, p.v0);
        let mut feasible = true;
        for k in 0..p.n_steps {
            let (x, v) = path[k];
            match rules.step(x, v, options[seq[k]]) {
                Some(s) => path[k + 1] = s,
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible {
            let (xn, vn) = path[p.n_steps];
            if rules.terminal_ok(xn, vn) {
                // accumulate from the end, in the lattice program's order
                let mut cost = rules.cost(vn, 0.0);
                for k in (0..p.n_steps).rev() {
                    cost = rules.cost(path[k].1, options[seq[k]]) + cost;
                }
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, seq.iter().map(|&o| options[o]).collect()));
                }
            }
        }
        // next sequence (odometer)
        for digit in seq.iter_mut().rev() {
            *digit += 1;
            if *digit < options.len() {
                continue 'outer;
            }
            *digit = 0;
        }
        break;
    }
    let (cost, accels) = best.ok_or(Error::NoFeasiblePath)?;
    Ok((cost, path_trajectory(p, &accels)?))
}

/// Fuel spread of one lattice cell over the whole horizon: the slack allowed
/// when comparing a continuous solution with a lattice optimum.
pub fn quantization_slack(problem: &TrajectoryProblem, grid: &DpGrid) -> f64 {
    let f = &problem.fuel;
    let l = &problem.limits;
    let a_abs = l.a_max.max(-l.a_min);
    let dv = (f.beta + 2.0 * f.gamma * l.v_max + f.theta * a_abs).abs() * grid.vel_step;
    (problem.n_steps + 1) as f64 * problem.dt * dv + f.beta * grid.pos_step
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FuelCoefficients, Limits};

    /// Dyadic instance: dt = 0.5, speeds on 0.5 multiples, accelerations in
    /// {-1, 0, 1}, so every reachable state is a lattice node.
    fn dyadic(n_steps: usize, distance: f64, v0: f64, v_goal: f64) -> (TrajectoryProblem, DpGrid) {
        let p = TrajectoryProblem {
            n_steps,
            dt: 0.5,
            t0: 0.0,
            x0: 0.0,
            v0,
            a0: 0.0,
            x_goal: distance,
            v_goal,
            limits: Limits {
                v_max: 4.0,
                ..Limits::default()
            },
            fuel: FuelCoefficients::default(),
        };
        let grid = DpGrid::covering(&p, 0.125, 0.5, vec![-1.0, 0.0, 1.0]);
        (p, grid)
    }

    #[test]
    fn single_step_cost() {
        let (p, _) = dyadic(1, 1.125, 2.0, 2.5);
        let grid = DpGrid::covering(&p, 0.125, 0.5, vec![1.0]);
        let (cost, traj) = dp_min_fuel(&p, &grid).unwrap();
        let f = FuelCoefficients::default();
        let expected = f.polynomial(2.0, 1.0) * 0.5 + f.polynomial(2.5, 0.0) * 0.5;
        assert!((cost - expected).abs() < 1e-15);
        assert_eq!(traj.len(), 2);
    }

    #[test]
    fn three_steps_enumerates_all_sequences() {
        let (p, grid) = dyadic(3, 3.0, 2.0, 2.0);
        let (cost, traj) = exhaustive_min_fuel(&p, &grid).unwrap();
        let (dp_cost, _) = dp_min_fuel(&p, &grid).unwrap();
        assert_eq!(cost, dp_cost);
        // brute force by hand over 27 sequences
        let mut best = f64::INFINITY;
        for a in 0..27 {
            let seq = [a / 9, (a / 3) % 3, a % 3].map(|o| [-1.0, 0.0, 1.0][o]);
            let (mut x, mut v, mut c) = (0.0f64, 2.0f64, 0.0f64);
            let mut ok = true;
            for acc in seq {
                c += p.fuel.polynomial(v, acc) * 0.5;
                x += v * 0.5 + 0.25 * acc * 0.5;
                v += acc * 0.5;
                ok &= (0.0..=4.0).contains(&v);
            }
            c += p.fuel.polynomial(v, 0.0) * 0.5;
            if ok && (x - 3.0).abs() <= 0.125 && (v - 2.0).abs() <= 0.5 {
                best = best.min(c);
            }
        }
        assert!((cost - best).abs() < 1e-12);
        assert_eq!(traj.len(), 4);
    }

    #[test]
    fn oracles_agree_on_lattice_instances() {
        for (n, d, v0, v1) in [
            (6, 9.0, 2.0, 2.0),
            (8, 10.0, 3.0, 2.0),
            (10, 12.0, 2.0, 3.0),
            (9, 6.0, 1.0, 1.5),
        ] {
            let (p, grid) = dyadic(n, d, v0, v1);
            let (dp, _) = dp_min_fuel(&p, &grid).unwrap();
            let (ex, _) = exhaustive_min_fuel(&p, &grid).unwrap();
            assert_eq!(dp, ex, "instance ({n}, {d}, {v0}, {v1})");
        }
    }

    #[test]
    fn finer_nested_grids_never_worse() {
        let (p, _) = dyadic(8, 10.0, 3.0, 2.0);
        // coarse nodes and options are a subset of the fine ones; same span and tolerance
        let coarse = DpGrid {
            n_pos: 43,
            n_vel: 5,
            pos_step: 0.25,
            vel_step: 1.0,
            accel_options: vec![-2.0, 0.0, 2.0],
            terminal_tol_x: 0.25,
            terminal_tol_v: 0.5,
        };
        let fine = DpGrid {
            n_pos: 85,
            n_vel: 9,
            pos_step: 0.125,
            vel_step: 0.5,
            accel_options: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            ..coarse.clone()
        };
        let (c, _) = dp_min_fuel(&p, &coarse).unwrap();
        let (f, _) = dp_min_fuel(&p, &fine).unwrap();
        assert!(f <= c + 1e-12, "fine {f} coarse {c}");
    }

    #[test]
    fn forced_cruise() {
        let (mut p, _) = dyadic(10, 10.0, 2.0, 2.0);
        p.limits.v_max = 2.0;
        let grid = DpGrid::covering(&p, 0.125, 0.5, vec![-1.0, 0.0, 1.0]);
        let (cost, traj) = dp_min_fuel(&p, &grid).unwrap();
        let cruise = 11.0 * 0.5 * p.fuel.polynomial(2.0, 0.0);
        assert!((cost - cruise).abs() <= quantization_slack(&p, &grid));
        assert!(traj.states.iter().all(|s| s.v <= 2.0 + 1e-12));
    }

    #[test]
    fn infeasible_terminal_and_guards() {
        let (p, grid) = dyadic(3, 30.0, 2.0, 2.0);
        assert!(matches!(
            exhaustive_min_fuel(&p, &grid),
            Err(Error::NoFeasiblePath)
        ));
        assert!(matches!(dp_min_fuel(&p, &grid), Err(Error::NoFeasiblePath)));
        let (big, grid) = dyadic(20, 10.0, 2.0, 2.0);
        assert!(matches!(
            exhaustive_min_fuel(
                &big,
                &DpGrid {
                    accel_options: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
                    ..grid.clone()
                }
            ),
            Err(Error::GuardExceeded(_))
        ));
        let huge = DpGrid {
            n_pos: 100_000,
            n_vel: 100_000,
            ..grid
        };
        assert!(matches!(
            dp_min_fuel(&big, &huge),
            Err(Error::GuardExceeded(_))
        ));
    }
}
