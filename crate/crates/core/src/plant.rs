//! Discrete longitudinal vehicle dynamics behind the disturbance channels.

use std::collections::VecDeque;

use crate::disturbance::{DisturbanceSpec, RandomStream};
use crate::domain::{kinematic_step, Limits, VehicleState};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// True state; `kinematics.a` mirrors `applied_accel`.
    pub kinematics: VehicleState,
    /// Acceleration actually applied during the most recent step.
    pub applied_accel: f64,
    /// Commands waiting to take effect, oldest first.
    pub delay_buffer: VecDeque<f64>,
}

impl PlantState {
    pub fn new(initial: VehicleState, spec: &DisturbanceSpec) -> Self {
        let delay_buffer =
            std::iter::repeat_n(initial.a, spec.command_delay_steps as usize).collect();
        PlantState {
            kinematics: initial,
            applied_accel: initial.a,
            delay_buffer,
        }
    }
}

/// Applies `a_cmd` through delay, lag, noise and saturation, then integrates
/// one step. The returned state's `kinematics.a` is the acceleration that was
/// applied over the step.
pub fn step(
    plant: &PlantState,
    a_cmd: f64,
    spec: &DisturbanceSpec,
    limits: &Limits,
    dt: f64,
    rng: &mut RandomStream,
) -> PlantState {
    let mut buffer = plant.delay_buffer.clone();
    let a_cmd = if a_cmd.is_finite() { a_cmd } else { 0.0 };
    let delayed = if buffer.is_empty() {
        a_cmd
    } else {
        buffer.push_back(a_cmd);
        buffer.pop_front().unwrap_or(a_cmd)
    };

    let tau = spec.actuator_tau;
    let lagged = if tau < dt / 10.0 {
        delayed
    } else {
        // gain capped at 1 so tau below dt cannot overshoot
        let gain = (dt / tau).min(1.0);
        plant.applied_accel + gain * (delayed - plant.applied_accel)
    };
    let applied = limits.clamp_accel(lagged + rng.truncated_normal(spec.accel_noise_sigma));

    let k = &plant.kinematics;
    let (x, v) = kinematic_step(k.x, k.v, applied, dt);
    PlantState {
        kinematics: VehicleState {
            t: k.t + dt,
            x,
            v,
            a: applied,
        },
        applied_accel: applied,
        delay_buffer: buffer,
    }
}

/// Measured state: speed carries truncated Gaussian noise and is clamped at
/// zero; position and acceleration are exact.
pub fn measure(plant: &PlantState, spec: &DisturbanceSpec, rng: &mut RandomStream) -> VehicleState {
    let mut s = plant.kinematics;
    s.v = (s.v + rng.truncated_normal(spec.measurement_noise_sigma_v)).max(0.0);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturbance::Channel;

    fn rng() -> RandomStream {
        RandomStream::new(1, Channel::Actuation)
    }

    fn plant(v: f64) -> PlantState {
        PlantState::new(
            VehicleState::new(0.0, 0.0, v, 0.0),
            &DisturbanceSpec::none(),
        )
    }

    #[test]
    fn constant_speed_step() {
        let p = step(
            &plant(5.0),
            0.0,
            &DisturbanceSpec::none(),
            &Limits::default(),
            0.1,
            &mut rng(),
        );
        assert!((p.kinematics.x - 0.5).abs() < 1e-12);
        assert_eq!(p.kinematics.v, 5.0);
    }

    #[test]
    fn accelerating_step() {
        let p = step(
            &plant(5.0),
            1.0,
            &DisturbanceSpec::none(),
            &Limits::default(),
            0.1,
            &mut rng(),
        );
        assert_eq!(p.applied_accel, 1.0);
        assert!((p.kinematics.x - 0.505).abs() < 1e-12);
        assert!((p.kinematics.v - 5.1).abs() < 1e-12);
    }

    #[test]
    fn speed_never_goes_negative() {
        let p = step(
            &plant(0.05),
            -3.0,
            &DisturbanceSpec::none(),
            &Limits::default(),
            0.1,
            &mut rng(),
        );
        assert_eq!(p.kinematics.v, 0.0);
    }

    #[test]
    fn command_is_saturated() {
        let p = step(
            &plant(5.0),
            50.0,
            &DisturbanceSpec::none(),
            &Limits::default(),
            0.1,
            &mut rng(),
        );
        assert_eq!(p.applied_accel, 3.0);
        let p = step(
            &plant(5.0),
            f64::NAN,
            &DisturbanceSpec::none(),
            &Limits::default(),
            0.1,
            &mut rng(),
        );
        assert_eq!(p.applied_accel, 0.0);
    }

    #[test]
    fn delay_shifts_commands() {
        let spec = DisturbanceSpec {
            command_delay_steps: 2,
            ..DisturbanceSpec::none()
        };
        let mut p = PlantState::new(VehicleState::new(0.0, 0.0, 5.0, 0.0), &spec);
        let mut applied = vec![];
        for cmd in [1.0, 2.0, 0.5, 0.5] {
            p = step(&p, cmd, &spec, &Limits::default(), 0.1, &mut rng());
            applied.push(p.applied_accel);
            assert_eq!(p.delay_buffer.len(), 2);
        }
        assert_eq!(applied, vec![0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn lag_approaches_command() {
        let spec = DisturbanceSpec::with_tau(0.5);
        let mut p = plant(5.0);
        p = step(&p, 1.0, &spec, &Limits::default(), 0.1, &mut rng());
        assert!((p.applied_accel - 0.2).abs() < 1e-12);
        for _ in 0..100 {
            p = step(&p, 1.0, &spec, &Limits::default(), 0.1, &mut rng());
        }
        assert!((p.applied_accel - 1.0).abs() < 1e-6);
    }

    #[test]
    fn measurement_noise() {
        let spec = DisturbanceSpec {
            measurement_noise_sigma_v: 0.1,
            ..DisturbanceSpec::none()
        };
        let p = plant(5.0);
        assert_eq!(
            measure(&p, &DisturbanceSpec::none(), &mut rng()),
            p.kinematics
        );
        let m1 = measure(&p, &spec, &mut RandomStream::new(3, Channel::Measurement));
        let m2 = measure(&p, &spec, &mut RandomStream::new(3, Channel::Measurement));
        assert_eq!(m1, m2);
        assert_ne!(m1.v, 5.0);
        assert_eq!(m1.x, p.kinematics.x);
        let stopped = plant(0.0);
        let mut r = RandomStream::new(5, Channel::Measurement);
        for _ in 0..100 {
            assert!(measure(&stopped, &spec, &mut r).v >= 0.0);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn zero_disturbance_reproduces_kinematics(accels in proptest::collection::vec(-3.0f64..3.0, 1..60)) {
                let spec = DisturbanceSpec::none();
                let mut p = plant(6.0);
                let mut reference = p.kinematics;
                let mut r = rng();
                for a in accels {
                    p = step(&p, a, &spec, &Limits::default(), 0.1, &mut r);
                    reference.a = a;
                    reference = reference.advance(0.1);
                    prop_assert_eq!(p.kinematics.x, reference.x);
                    prop_assert_eq!(p.kinematics.v, reference.v);
                }
            }

            #[test]
            fn applied_accel_within_limits_and_x_monotone(
                cmds in proptest::collection::vec(-100.0f64..100.0, 1..80),
                tau in 0.0f64..1.0,
                sigma in 0.0f64..2.0,
                delay in 0u32..4,
            ) {
                let spec = DisturbanceSpec { actuator_tau: tau, command_delay_steps: delay, accel_noise_sigma: sigma, measurement_noise_sigma_v: 0.0 };
                let limits = Limits::default();
                let mut p = PlantState::new(VehicleState::new(0.0, 0.0, 3.0, 0.0), &spec);
                let mut r = rng();
                for c in cmds {
                    let x_prev = p.kinematics.x;
                    p = step(&p, c, &spec, &limits, 0.1, &mut r);
                    prop_assert!(p.applied_accel >= limits.a_min && p.applied_accel <= limits.a_max);
                    prop_assert!(p.kinematics.v >= 0.0);
                    prop_assert!(p.kinematics.x >= x_prev - 1e-12);
                }
            }
        }
    }
}
