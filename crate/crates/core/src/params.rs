//! Physical constants and the sampled controller gains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stability thresholds, all expressed in Hz (RoCoF in Hz/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub tau_ss: f64,
    pub tau_nadir: f64,
    pub tau_rocof: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tau_ss: 0.5,
            tau_nadir: 0.8,
            tau_rocof: 1.0,
        }
    }
}

/// System constants of the single-area LFC model with VSM feedback.
///
/// Defaults reproduce the reference parameter table: `r = 0.06`, `tau = 10 s`,
/// `M0 = 6 s`, `D0 = 5`, `dP = -0.12` p.u., thresholds 0.5 / 0.8 / 1.0.
/// The 50 Hz base frequency and the 60 s / 1 ms grid are choices of this crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Droop gain (p.u.).
    pub r: f64,
    /// Governor time constant (s).
    pub tau: f64,
    /// Nominal inertia (s).
    pub m0: f64,
    /// Nominal damping (p.u.).
    pub d0: f64,
    /// Step load disturbance (p.u.).
    pub delta_p: f64,
    /// Base frequency used to convert p.u. to Hz.
    pub f_base: f64,
    pub thresholds: Thresholds,
    /// Simulation horizon `T` (s).
    pub horizon_t: f64,
    /// Integration step (s).
    pub dt: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            r: 0.06,
            tau: 10.0,
            m0: 6.0,
            d0: 5.0,
            delta_p: -0.12,
            f_base: 50.0,
            thresholds: Thresholds::default(),
            horizon_t: 60.0,
            dt: 1e-3,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.r > 0.0, "r must be > 0"),
            (self.tau > 0.0, "tau must be > 0"),
            (self.m0 > 0.0, "m0 must be > 0"),
            (self.dt > 0.0, "dt must be > 0"),
            (self.horizon_t >= self.dt, "horizon_t must be >= dt"),
            (self.f_base > 0.0, "f_base must be > 0"),
            (self.thresholds.tau_ss > 0.0, "tau_ss must be > 0"),
            (self.thresholds.tau_nadir > 0.0, "tau_nadir must be > 0"),
            (self.thresholds.tau_rocof > 0.0, "tau_rocof must be > 0"),
            (self.d0.is_finite() && self.delta_p.is_finite(), "d0 and delta_p must be finite"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParams(msg.to_string()));
            }
        }
        self.n_steps().map(|_| ())
    }

    /// Number of Euler steps on `[0, T]`. `dt` must divide `T` to within 1e-9 s.
    pub fn n_steps(&self) -> Result<usize> {
        let n = (self.horizon_t / self.dt).round();
        if !(n >= 1.0) || (n * self.dt - self.horizon_t).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "dt = {} does not divide horizon_t = {}",
                self.dt, self.horizon_t
            )));
        }
        Ok(n as usize)
    }

    /// Grid time of step `n`, computed as `n * dt` so that no drift accumulates.
    pub fn time_at(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn with_grid(mut self, dt: f64, horizon_t: f64) -> Self {
        self.dt = dt;
        self.horizon_t = horizon_t;
        self
    }
}

/// Controller gains `theta = [K11, K12, K21, K22]`.
///
/// `M = M0 - K11 x1 - K12 x2` and `D = D0 - K21 x1 - K22 x2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GainVector {
    pub k11: f64,
    pub k12: f64,
    pub k21: f64,
    pub k22: f64,
}

impl GainVector {
    pub const ZERO: GainVector = GainVector {
        k11: 0.0,
        k12: 0.0,
        k21: 0.0,
        k22: 0.0,
    };

    pub const fn new(k11: f64, k12: f64, k21: f64, k22: f64) -> Self {
        GainVector { k11, k12, k21, k22 }
    }

    pub const fn from_array(a: [f64; 4]) -> Self {
        GainVector::new(a[0], a[1], a[2], a[3])
    }

    pub const fn to_array(self) -> [f64; 4] {
        [self.k11, self.k12, self.k21, self.k22]
    }

    /// `self + step * dir`, componentwise.
    pub fn axpy(self, step: f64, dir: &[f64; 4]) -> Self {
        let a = self.to_array();
        GainVector::from_array(std::array::from_fn(|i| a[i] + step * dir[i]))
    }

    /// Copy with component `i` replaced by `value`.
    pub fn with_component(self, i: usize, value: f64) -> Self {
        let mut a = self.to_array();
        a[i] = value;
        GainVector::from_array(a)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// LFC state `x = [omega, omega_dot]` in p.u. and p.u./s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x1: f64,
    pub x2: f64,
}

impl State {
    pub const fn new(x1: f64, x2: f64) -> Self {
        State { x1, x2 }
    }

    pub const fn get(&self, row: usize) -> f64 {
        if row == 0 {
            self.x1
        } else {
            self.x2
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }
}

/// Sensitivity block `dx/dtheta`: two rows (states), four columns (gains).
pub type Tangent = [[f64; 4]; 2];

/// `dF/dx` for the two-state model.
pub type Jacobian2 = [[f64; 2]; 2];

pub const ZERO_TANGENT: Tangent = [[0.0; 4]; 2];
