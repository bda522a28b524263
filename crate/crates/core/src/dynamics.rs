//! Closed-loop LFC model with adaptive virtual inertia and damping.
//!
//! With `M = M0 - K11 x1 - K12 x2` and `D = D0 - K21 x1 - K22 x2`:
//!
//! ```text
//! x1' = x2
//! x2' = -(1/(r tau M) + D/(tau M)) x1 - (D/M + 1/tau) x2 + dP/(tau M)
//! ```
//!
//! Every Jacobian here is closed-form. The second component is written as
//! `x2' = N / (tau M) - x2 / tau` with `N = dP - x1/r - D (x1 + tau x2)`,
//! which keeps the chain terms through `M(x)` and `D(x)` short.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{GainVector, Jacobian2, State, SystemParams, Tangent, ZERO_TANGENT};

/// Smallest admissible effective inertia (s).
pub const M_MIN: f64 = 1e-6;

/// Effective inertia `M(x)`.
#[inline]
pub fn inertia(x: &State, theta: &GainVector, p: &SystemParams) -> f64 {
    p.m0 - theta.k11 * x.x1 - theta.k12 * x.x2
}

/// Effective damping `D(x)`. Unconstrained: negative damping is allowed.
#[inline]
pub fn damping(x: &State, theta: &GainVector, p: &SystemParams) -> f64 {
    p.d0 - theta.k21 * x.x1 - theta.k22 * x.x2
}

#[inline]
fn checked_inertia(x: &State, theta: &GainVector, p: &SystemParams, time: f64) -> Result<f64> {
    let m = inertia(x, theta, p);
    // NaN also fails this test
    if !(m > M_MIN) {
        return Err(Error::NonPhysical {
            time,
            inertia: m,
            floor: M_MIN,
        });
    }
    Ok(m)
}

/// Right-hand side and both Jacobians evaluated at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    pub f: State,
    pub jac_x: Jacobian2,
    pub jac_theta: Tangent,
}

/// Evaluates `f`, `df/dx` and `df/dtheta` sharing the common subexpressions.
/// `time` is only used for error reporting.
pub fn linearize(x: &State, theta: &GainVector, p: &SystemParams, time: f64) -> Result<Linearization> {
    let m = checked_inertia(x, theta, p, time)?;
    let d = damping(x, theta, p);
    let (x1, x2) = (x.x1, x.x2);
    let tau = p.tau;
    let tm = tau * m;
    let lever = x1 + tau * x2;
    let n = p.delta_p - x1 / p.r - d * lever;
    let n_over_tm2 = n / (tm * m);

    // dN/dx1 = -1/r - D + K21 (x1 + tau x2), dN/dx2 = -tau D + K22 (x1 + tau x2)
    let dn_dx1 = -1.0 / p.r - d + theta.k21 * lever;
    let dn_dx2 = -tau * d + theta.k22 * lever;

    let f = State::new(x2, n / tm - x2 / tau);
    let jac_x = [
        [0.0, 1.0],
        [
            dn_dx1 / tm + theta.k11 * n_over_tm2,
            dn_dx2 / tm + theta.k12 * n_over_tm2 - 1.0 / tau,
        ],
    ];
    let jac_theta = [
        [0.0; 4],
        [
            x1 * n_over_tm2,
            x2 * n_over_tm2,
            x1 * lever / tm,
            x2 * lever / tm,
        ],
    ];
    Ok(Linearization { f, jac_x, jac_theta })
}

/// State derivative `f(x, theta)`.
pub fn rhs(x: &State, theta: &GainVector, p: &SystemParams) -> Result<State> {
    let m = checked_inertia(x, theta, p, f64::NAN)?;
    let d = damping(x, theta, p);
    let n = p.delta_p - x.x1 / p.r - d * (x.x1 + p.tau * x.x2);
    Ok(State::new(x.x2, n / (p.tau * m) - x.x2 / p.tau))
}

/// `df/dx`, exact.
pub fn jac_x(x: &State, theta: &GainVector, p: &SystemParams) -> Result<Jacobian2> {
    linearize(x, theta, p, f64::NAN).map(|l| l.jac_x)
}

/// `df/dtheta`, exact. Row 0 is identically zero.
pub fn jac_theta(x: &State, theta: &GainVector, p: &SystemParams) -> Result<Tangent> {
    linearize(x, theta, p, f64::NAN).map(|l| l.jac_theta)
}

/// Feasibility of a gain vector with respect to the initial-RoCoF quadratic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainVerdict {
    pub feasible: bool,
    /// `m0^2 - 4 K12 dP`
    pub discriminant: f64,
}

pub fn discriminant(theta: &GainVector, p: &SystemParams) -> f64 {
    p.m0 * p.m0 - 4.0 * theta.k12 * p.delta_p
}

pub fn validate_gains(theta: &GainVector, p: &SystemParams) -> GainVerdict {
    let discriminant = discriminant(theta, p);
    GainVerdict {
        feasible: discriminant >= 0.0 && theta.is_finite(),
        discriminant,
    }
}

/// Post-disturbance state `[0, omega_dot(0+)]`.
///
/// `omega_dot(0+)` is the root of `K12 w^2 - M0 w + dP = 0` that stays finite
/// as `K12 -> 0`, i.e. `(M0 - sqrt(disc)) / (2 K12)`. It is evaluated in the
/// rationalized form `2 dP / (M0 + sqrt(disc))`, which equals the former for
/// `K12 != 0`, gives `dP / M0` at `K12 = 0`, and has no cancellation near it.
pub fn initial_state(theta: &GainVector, p: &SystemParams) -> Result<State> {
    let verdict = validate_gains(theta, p);
    if !verdict.feasible {
        return Err(Error::InfeasibleGain {
            discriminant: verdict.discriminant,
        });
    }
    let s = verdict.discriminant.sqrt();
    Ok(State::new(0.0, 2.0 * p.delta_p / (p.m0 + s)))
}

/// Initial sensitivity block `dx(0+)/dtheta`.
///
/// Only the `K12` column is non-zero. Implicit differentiation of the
/// quadratic gives `d omega_dot(0+) / dK12 = w^2 / sqrt(disc)`, which tends to
/// `dP^2 / M0^3` as `K12 -> 0` and is singular at zero discriminant.
pub fn initial_tangents(theta: &GainVector, p: &SystemParams) -> Result<Tangent> {
    let verdict = validate_gains(theta, p);
    if !verdict.feasible {
        return Err(Error::InfeasibleGain {
            discriminant: verdict.discriminant,
        });
    }
    if verdict.discriminant == 0.0 {
        return Err(Error::SingularInitialTangent { k12: theta.k12 });
    }
    let s = verdict.discriminant.sqrt();
    let w = 2.0 * p.delta_p / (p.m0 + s);
    let mut t = ZERO_TANGENT;
    t[1][1] = w * w / s;
    Ok(t)
}

/// Closed-form step response of the `theta = 0` model.
///
/// With constant `M0`, `D0` the model is the linear second-order system
/// `w'' + 2 zeta wn w' + wn^2 w = dP / (tau M0)`, started from
/// `w(0) = 0`, `w'(0) = dP / M0`. Only the underdamped branch is implemented.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResponse {
    pub natural_freq: f64,
    pub damping_ratio: f64,
    pub steady_state: f64,
    decay: f64,
    damped_freq: f64,
    cos_coef: f64,
    sin_coef: f64,
}

impl StepResponse {
    pub fn new(p: &SystemParams) -> Result<Self> {
        let stiffness = (1.0 / p.r + p.d0) / (p.tau * p.m0);
        let friction = p.d0 / p.m0 + 1.0 / p.tau;
        if !(stiffness > 0.0) {
            return Err(Error::Unsupported {
                op: "analytic_solution_k0",
                reason: format!("non-positive stiffness {stiffness}"),
            });
        }
        let natural_freq = stiffness.sqrt();
        let damping_ratio = friction / (2.0 * natural_freq);
        if !(damping_ratio > 0.0 && damping_ratio < 1.0) {
            return Err(Error::Unsupported {
                op: "analytic_solution_k0",
                reason: format!("damping ratio {damping_ratio} outside (0, 1)"),
            });
        }
        let steady_state = p.delta_p / (1.0 / p.r + p.d0);
        let decay = damping_ratio * natural_freq;
        let damped_freq = natural_freq * (1.0 - damping_ratio * damping_ratio).sqrt();
        let cos_coef = -steady_state;
        let sin_coef = (p.delta_p / p.m0 + decay * cos_coef) / damped_freq;
        Ok(StepResponse {
            natural_freq,
            damping_ratio,
            steady_state,
            decay,
            damped_freq,
            cos_coef,
            sin_coef,
        })
    }

    pub fn at(&self, t: f64) -> State {
        let e = (-self.decay * t).exp();
        let (s, c) = (self.damped_freq * t).sin_cos();
        let (a, b) = (self.cos_coef, self.sin_coef);
        let x1 = self.steady_state + e * (a * c + b * s);
        let x2 = e * ((-self.decay * a + self.damped_freq * b) * c + (-self.decay * b - self.damped_freq * a) * s);
        State::new(x1, x2)
    }
}

/// Exact `theta = 0` trajectory value at time `t`.
pub fn analytic_solution_k0(t: f64, p: &SystemParams) -> Result<State> {
    if !(t >= 0.0) {
        return Err(Error::Degenerate(format!("time must be >= 0, got {t}")));
    }
    Ok(StepResponse::new(p)?.at(t))
}

/// Equilibrium frequency deviation.
///
/// At rest (`x2 = 0`) the model reduces to `(1/r + D0) x - K21 x^2 = dP`; the
/// root continuous with `dP / (1/r + D0)` at `K21 = 0` is returned. Only `K21`
/// enters: the other gains multiply `x2` or only scale `M`.
pub fn steady_state_exact(theta: &GainVector, p: &SystemParams) -> Result<f64> {
    let a = 1.0 / p.r + p.d0;
    let disc = a * a - 4.0 * theta.k21 * p.delta_p;
    if disc < 0.0 {
        return Err(Error::NoEquilibrium { discriminant: disc });
    }
    let denom = a + disc.sqrt();
    if denom == 0.0 {
        return Err(Error::NoEquilibrium { discriminant: disc });
    }
    Ok(2.0 * p.delta_p / denom)
}
