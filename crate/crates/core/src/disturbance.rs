//! Internal execution disturbances, external signal deviation, and the
//! seeded random streams that realize them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{Trajectory, TIME_EPS};
use crate::error::{Error, Result};
use crate::signal::SignalObservation;

/// Gaussian draws are rejected beyond this many standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSpec {
    /// First-order actuator lag time constant (s).
    #[serde(rename = "tau")]
    pub actuator_tau: f64,
    /// Commands are applied this many steps late.
    #[serde(rename = "delay_steps")]
    pub command_delay_steps: u32,
    /// Additive acceleration noise (m/s^2).
    #[serde(rename = "accel_sigma")]
    pub accel_noise_sigma: f64,
    /// Speed measurement noise fed to planners (m/s).
    #[serde(rename = "meas_sigma_v")]
    pub measurement_noise_sigma_v: f64,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl DisturbanceSpec {
    pub const fn none() -> Self {
        DisturbanceSpec {
            actuator_tau: 0.0,
            command_delay_steps: 0,
            accel_noise_sigma: 0.0,
            measurement_noise_sigma_v: 0.0,
        }
    }

    pub fn with_tau(tau: f64) -> Self {
        DisturbanceSpec {
            actuator_tau: tau,
            ..Self::none()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.actuator_tau == 0.0
            && self.command_delay_steps == 0
            && self.accel_noise_sigma == 0.0
            && self.measurement_noise_sigma_v == 0.0
    }

    pub fn check(&self) -> Result<()> {
        let scalars = [
            ("disturbance.tau", self.actuator_tau),
            ("disturbance.accel_sigma", self.accel_noise_sigma),
            ("disturbance.meas_sigma_v", self.measurement_noise_sigma_v),
        ];
        for (field, value) in scalars {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig {
                    field,
                    reason: "must be a finite value >= 0".into(),
                });
            }
        }
        Ok(())
    }
}

/// Independent random channels drawn within one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Actuation = 1,
    Measurement = 2,
}

/// Seeded stream of truncated standard normal draws. Equal `(seed, channel)`
/// pairs give identical sequences; `counter` records how many draws were made.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, channel: Channel) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(channel as u64);
        RandomStream {
            seed,
            counter: 0,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Zero-mean Gaussian with standard deviation `sigma`, truncated at
    /// `±4 sigma`. Consumes no randomness when `sigma == 0`.
    pub fn truncated_normal(&mut self, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            return 0.0;
        }
        loop {
            self.counter += 1;
            let z: f64 = self.rng.sample(StandardNormal);
            if z.abs() <= TRUNCATION_SIGMAS {
                return sigma * z;
            }
        }
    }
}

/// Elementwise `executed − planned` state difference at one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlError {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

/// Checks that both trajectories start together with equal spacing and
/// returns the length of their common support.
pub(crate) fn common_support(a: &Trajectory, b: &Trajectory) -> Result<usize> {
    if (a.dt - b.dt).abs() > TIME_EPS {
        return Err(Error::TimestampMismatch(format!("dt {} vs {}", a.dt, b.dt)));
    }
    if (a.start_time() - b.start_time()).abs() > TIME_EPS {
        return Err(Error::TimestampMismatch(format!(
            "start {} vs {}",
            a.start_time(),
            b.start_time()
        )));
    }
    let n = a.len().min(b.len());
    for (i, (sa, sb)) in a.states.iter().zip(&b.states).take(n).enumerate() {
        if (sa.t - sb.t).abs() > TIME_EPS {
            return Err(Error::TimestampMismatch(format!(
                "sample {i}: t {} vs {}",
                sa.t, sb.t
            )));
        }
    }
    Ok(n)
}

/// Control error series `z_t = s_t − s*_t` over the common support.
pub fn control_error_series(
    executed: &Trajectory,
    planned_concat: &Trajectory,
) -> Result<Vec<ControlError>> {
    let n = common_support(executed, planned_concat)?;
    Ok(executed
        .states
        .iter()
        .zip(&planned_concat.states)
        .take(n)
        .map(|(s, p)| ControlError {
            t: s.t,
            x: s.x - p.x,
            v: s.v - p.v,
            a: s.a - p.a,
        })
        .collect())
}

/// Shift in the observed green start between two planning cycles. Zero when
/// the older observation's window has already closed by the newer one's time,
/// since the two then share no horizon.
pub fn external_deviation(o_new: &SignalObservation, o_old: &SignalObservation) -> f64 {
    if o_old.next_green_end <= o_new.t + TIME_EPS {
        return 0.0;
    }
    o_new.next_green_start - o_old.next_green_start
}
