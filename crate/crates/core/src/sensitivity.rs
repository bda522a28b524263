//! Signed per-criterion search gradients, the finite-difference baseline,
//! and the percentage-error metric used to compare them.

use serde::{Deserialize, Serialize};

use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::ode::{integrate, IntegrateOptions, Snapshot, Trajectory, TrajectorySummary};
use crate::params::{GainVector, State, SystemParams};

/// Absolute floor on percentage-error denominators.
pub const PCT_FLOOR: f64 = 1e-12;

/// Which side of the boundary the search heads for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Shrink every criterion value.
    Stabilize,
    /// Grow every criterion value.
    Destabilize,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Stabilize => -1.0,
            Direction::Destabilize => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::Stabilize => Direction::Destabilize,
            Direction::Destabilize => Direction::Stabilize,
        }
    }
}

/// `d|criterion|/dtheta` for each criterion, with the search sign applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub rocof: [f64; 4],
    pub nadir: [f64; 4],
    pub ss: [f64; 4],
    pub direction: Direction,
}

impl GradientSet {
    pub fn get(&self, c: Criterion) -> &[f64; 4] {
        match c {
            Criterion::Rocof => &self.rocof,
            Criterion::Nadir => &self.nadir,
            Criterion::Ss => &self.ss,
        }
    }

    /// The same gradients under the opposite search direction.
    pub fn with_direction(&self, direction: Direction) -> Self {
        if direction == self.direction {
            return *self;
        }
        let neg = |g: &[f64; 4]| g.map(|v| -v);
        GradientSet {
            rocof: neg(&self.rocof),
            nadir: neg(&self.nadir),
            ss: neg(&self.ss),
            direction,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.rocof, self.nadir, self.ss].iter().flatten().all(|v| v.is_finite())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn criterion_snapshot(summary: &TrajectorySummary, c: Criterion) -> &Snapshot {
    match c {
        Criterion::Rocof => &summary.rocof,
        Criterion::Nadir => &summary.nadir,
        Criterion::Ss => &summary.terminal,
    }
}

/// Reads `sign(x_row(t_c)) * dx_row(t_c)/dtheta` off the tangents at each
/// critical time, then applies the direction sign.
///
/// The argmax is held fixed. At an interior maximum `d|x|/dt = 0`, so moving
/// the critical time contributes nothing to first order.
pub fn extract_gradients(summary: &TrajectorySummary, direction: Direction) -> Result<GradientSet> {
    let grad = |c: Criterion| -> Result<[f64; 4]> {
        let snap = criterion_snapshot(summary, c);
        let tangent = snap.tangent.ok_or(Error::MissingTangents)?;
        let row = c.row();
        let s = sign(snap.state.get(row)) * direction.sign();
        Ok(tangent[row].map(|v| s * v))
    };
    Ok(GradientSet {
        rocof: grad(Criterion::Rocof)?,
        nadir: grad(Criterion::Nadir)?,
        ss: grad(Criterion::Ss)?,
        direction,
    })
}

pub fn extract_gradients_from(traj: &Trajectory, direction: Direction) -> Result<GradientSet> {
    if traj.tangents.is_none() {
        return Err(Error::MissingTangents);
    }
    if traj.is_empty() {
        return Err(Error::Degenerate("empty trajectory".into()));
    }
    extract_gradients(&traj.summarize(), direction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdScheme {
    Forward,
    Central,
}

/// Perturbation size for finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum Epsilon {
    /// `eps * max(1, |theta_i|)`
    Relative(f64),
    Absolute(f64),
}

impl Epsilon {
    pub fn for_component(self, theta_i: f64) -> f64 {
        match self {
            Epsilon::Relative(e) => e * theta_i.abs().max(1.0),
            Epsilon::Absolute(e) => e,
        }
    }

    fn raw(self) -> f64 {
        match self {
            Epsilon::Relative(e) | Epsilon::Absolute(e) => e,
        }
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Relative(1e-6)
    }
}

/// Finite-difference gradients plus the runs they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct FdGradients {
    pub gradients: GradientSet,
    /// Summary of the unperturbed run; its critical indices are the ones
    /// differenced.
    pub reference: TrajectorySummary,
    /// Critical times of each perturbed run, `[component][plus, minus]`.
    /// Forward differences leave the minus slot empty.
    pub perturbed_times: [[Option<crate::criteria::CriticalTimes>; 2]; 4],
}

fn states_only(theta: &GainVector, p: &SystemParams) -> Result<Trajectory> {
    Ok(integrate(theta, p, &IntegrateOptions::states_only())?
        .into_trajectory()
        .expect("full storage"))
}

/// Difference quotients of `|x_row(t_c)|`, with `t_c` frozen at the reference
/// run's grid index so that they estimate the same quantity the tangents do.
pub fn finite_diff_gradients(
    theta: &GainVector,
    p: &SystemParams,
    eps: Epsilon,
    scheme: FdScheme,
    direction: Direction,
) -> Result<FdGradients> {
    let e = eps.raw();
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::Degenerate(format!("finite-difference epsilon must be > 0, got {e}")));
    }
    let base = states_only(theta, p)?;
    let reference = base.summarize();
    let crits = [Criterion::Rocof, Criterion::Nadir, Criterion::Ss];
    let idx = crits.map(|c| criterion_snapshot(&reference, c).index);
    let value = |traj: &Trajectory, k: usize| traj.states[idx[k]].get(crits[k].row()).abs();
    let base_vals: [f64; 3] = std::array::from_fn(|k| value(&base, k));

    let mut grads = [[0.0; 4]; 3];
    let mut perturbed_times = [[None; 2]; 4];
    let theta_arr = theta.to_array();
    for i in 0..4 {
        let h = eps.for_component(theta_arr[i]);
        let run = |sgn: f64| -> Result<Trajectory> {
            let shifted = theta.with_component(i, theta_arr[i] + sgn * h);
            states_only(&shifted, p).map_err(|source| Error::InfeasiblePerturbation {
                component: i,
                source: Box::new(source),
            })
        };
        let plus = run(1.0)?;
        perturbed_times[i][0] = Some(crate::criteria::CriticalTimes::from_summary(&plus.summarize()));
        match scheme {
            FdScheme::Forward => {
                for k in 0..3 {
                    grads[k][i] = (value(&plus, k) - base_vals[k]) / h;
                }
            }
            FdScheme::Central => {
                let minus = run(-1.0)?;
                perturbed_times[i][1] = Some(crate::criteria::CriticalTimes::from_summary(&minus.summarize()));
                for k in 0..3 {
                    grads[k][i] = (value(&plus, k) - value(&minus, k)) / (2.0 * h);
                }
            }
        }
    }
    let s = direction.sign();
    Ok(FdGradients {
        gradients: GradientSet {
            rocof: grads[0].map(|v| s * v),
            nadir: grads[1].map(|v| s * v),
            ss: grads[2].map(|v| s * v),
            direction,
        },
        reference,
        perturbed_times,
    })
}

/// Largest componentwise `100 * |value - reference| / max(|reference|, floor)`.
pub fn max_abs_pct_error(values: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(values.len(), reference.len());
    values
        .iter()
        .zip(reference)
        .map(|(v, r)| 100.0 * (v - r).abs() / r.abs().max(PCT_FLOOR))
        .fold(0.0, f64::max)
}

pub fn state_pct_error(value: &State, reference: &State) -> f64 {
    max_abs_pct_error(&[value.x1, value.x2], &[reference.x1, reference.x2])
}
