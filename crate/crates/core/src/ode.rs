//! Fixed-step integration of the LFC model and its tangent-augmented form.
//!
//! The augmented system carries ten scalars: the state `x` and the 2x4 block
//! `X = dx/dtheta`, advanced as `X' = (df/dx) X + df/dtheta`. With forward
//! Euler the tangent update is exactly the derivative of the discrete Euler
//! map, so the tangents agree with differences of the discrete solution up
//! to round-off.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, linearize};
use crate::error::{Error, Result};
use crate::params::{GainVector, Jacobian2, State, SystemParams, Tangent, ZERO_TANGENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    #[default]
    Full,
    Streaming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub integrator: Integrator,
    pub with_tangents: bool,
    pub storage: Storage,
}

impl IntegrateOptions {
    pub fn states_only() -> Self {
        IntegrateOptions::default()
    }

    pub fn augmented() -> Self {
        IntegrateOptions {
            with_tangents: true,
            ..Default::default()
        }
    }

    pub fn streaming(mut self) -> Self {
        self.storage = Storage::Streaming;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }
}

/// The ten augmented scalars at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentedState {
    pub base: State,
    pub tangent: Tangent,
}

/// Full time history on the uniform grid `t_n = n dt`, `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub tangents: Option<Vec<Tangent>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn snapshot(&self, index: usize) -> Snapshot {
        Snapshot {
            index,
            time: self.times[index],
            state: self.states[index],
            tangent: self.tangents.as_ref().map(|t| t[index]),
        }
    }

    /// Argmax of `|x_row|` over the grid, earliest index on ties.
    pub fn argmax_abs(&self, row: usize) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, s) in self.states.iter().enumerate() {
            let v = s.get(row).abs();
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        best
    }

    /// Collapses the history to the quantities the streaming mode keeps.
    pub fn summarize(&self) -> TrajectorySummary {
        assert!(!self.is_empty(), "empty trajectory");
        TrajectorySummary {
            n_points: self.len(),
            rocof: self.snapshot(self.argmax_abs(1)),
            nadir: self.snapshot(self.argmax_abs(0)),
            terminal: self.snapshot(self.len() - 1),
        }
    }
}

/// One grid point of a trajectory, with its tangent block when tracked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub index: usize,
    pub time: f64,
    pub state: State,
    pub tangent: Option<Tangent>,
}

/// What streaming integration retains: running argmax of `|x2|` (RoCoF) and
/// `|x1|` (nadir), and the terminal point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySummary {
    pub n_points: usize,
    pub rocof: Snapshot,
    pub nadir: Snapshot,
    pub terminal: Snapshot,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Integrated {
    Full(Trajectory),
    Streaming(TrajectorySummary),
}

impl Integrated {
    pub fn summary(&self) -> TrajectorySummary {
        match self {
            Integrated::Full(traj) => traj.summarize(),
            Integrated::Streaming(s) => *s,
        }
    }

    pub fn trajectory(&self) -> Option<&Trajectory> {
        match self {
            Integrated::Full(traj) => Some(traj),
            Integrated::Streaming(_) => None,
        }
    }

    pub fn into_trajectory(self) -> Option<Trajectory> {
        match self {
            Integrated::Full(traj) => Some(traj),
            Integrated::Streaming(_) => None,
        }
    }
}

#[inline]
fn mat_tangent(j: &Jacobian2, t: &Tangent) -> Tangent {
    let mut out = ZERO_TANGENT;
    for r in 0..2 {
        for c in 0..4 {
            out[r][c] = j[r][0] * t[0][c] + j[r][1] * t[1][c];
        }
    }
    out
}

#[inline]
fn tangent_axpy(base: &Tangent, h: f64, d: &Tangent) -> Tangent {
    let mut out = *base;
    for r in 0..2 {
        for c in 0..4 {
            out[r][c] += h * d[r][c];
        }
    }
    out
}

#[inline]
fn state_axpy(base: &State, h: f64, d: &State) -> State {
    State::new(base.x1 + h * d.x1, base.x2 + h * d.x2)
}

fn tangent_is_finite(t: &Tangent) -> bool {
    t.iter().flatten().all(|v| v.is_finite())
}

/// Time derivative of the augmented state.
fn augmented_rhs(
    y: &AugmentedState,
    theta: &GainVector,
    p: &SystemParams,
    time: f64,
    with_tangents: bool,
) -> Result<AugmentedState> {
    if with_tangents {
        let lin = linearize(&y.base, theta, p, time)?;
        let mut dt = mat_tangent(&lin.jac_x, &y.tangent);
        dt = tangent_axpy(&dt, 1.0, &lin.jac_theta);
        Ok(AugmentedState {
            base: lin.f,
            tangent: dt,
        })
    } else {
        let f = dynamics::rhs(&y.base, theta, p).map_err(|e| match e {
            Error::NonPhysical { inertia, floor, .. } => Error::NonPhysical { time, inertia, floor },
            other => other,
        })?;
        Ok(AugmentedState {
            base: f,
            tangent: ZERO_TANGENT,
        })
    }
}

fn combine(y: &AugmentedState, h: f64, k: &AugmentedState, with_tangents: bool) -> AugmentedState {
    AugmentedState {
        base: state_axpy(&y.base, h, &k.base),
        tangent: if with_tangents {
            tangent_axpy(&y.tangent, h, &k.tangent)
        } else {
            ZERO_TANGENT
        },
    }
}

/// Advances the augmented state by one step of `dt` from time `t`.
fn step(
    y: &AugmentedState,
    theta: &GainVector,
    p: &SystemParams,
    t: f64,
    integrator: Integrator,
    with_tangents: bool,
) -> Result<AugmentedState> {
    let dt = p.dt;
    match integrator {
        Integrator::Euler => {
            let k1 = augmented_rhs(y, theta, p, t, with_tangents)?;
            Ok(combine(y, dt, &k1, with_tangents))
        }
        Integrator::Rk4 => {
            let half = 0.5 * dt;
            let k1 = augmented_rhs(y, theta, p, t, with_tangents)?;
            let k2 = augmented_rhs(&combine(y, half, &k1, with_tangents), theta, p, t + half, with_tangents)?;
            let k3 = augmented_rhs(&combine(y, half, &k2, with_tangents), theta, p, t + half, with_tangents)?;
            let k4 = augmented_rhs(&combine(y, dt, &k3, with_tangents), theta, p, t + dt, with_tangents)?;
            let w = dt / 6.0;
            let mut out = combine(y, w, &k1, with_tangents);
            out = combine(&out, 2.0 * w, &k2, with_tangents);
            out = combine(&out, 2.0 * w, &k3, with_tangents);
            Ok(combine(&out, w, &k4, with_tangents))
        }
    }
}

fn initial_augmented(theta: &GainVector, p: &SystemParams, with_tangents: bool) -> Result<AugmentedState> {
    let base = dynamics::initial_state(theta, p)?;
    let tangent = if with_tangents {
        dynamics::initial_tangents(theta, p)?
    } else {
        ZERO_TANGENT
    };
    Ok(AugmentedState { base, tangent })
}

struct RunningMax {
    snap: Snapshot,
    value: f64,
}

impl RunningMax {
    fn new(snap: Snapshot, row: usize) -> Self {
        RunningMax {
            value: snap.state.get(row).abs(),
            snap,
        }
    }

    #[inline]
    fn offer(&mut self, snap: impl FnOnce() -> Snapshot, value: f64) {
        // strict: earliest index wins ties
        if value > self.value {
            self.value = value;
            self.snap = snap();
        }
    }
}

/// Integrates the model on `[0, T]` for one gain vector.
pub fn integrate(theta: &GainVector, p: &SystemParams, opts: &IntegrateOptions) -> Result<Integrated> {
    p.validate()?;
    let n_steps = p.n_steps()?;
    let with_tangents = opts.with_tangents;
    let mut y = initial_augmented(theta, p, with_tangents)?;
    let snap_of = |n: usize, y: &AugmentedState| Snapshot {
        index: n,
        time: p.time_at(n),
        state: y.base,
        tangent: with_tangents.then_some(y.tangent),
    };

    match opts.storage {
        Storage::Full => {
            let mut times = Vec::with_capacity(n_steps + 1);
            let mut states = Vec::with_capacity(n_steps + 1);
            let mut tangents = with_tangents.then(|| Vec::with_capacity(n_steps + 1));
            times.push(0.0);
            states.push(y.base);
            if let Some(t) = tangents.as_mut() {
                t.push(y.tangent);
            }
            for n in 0..n_steps {
                y = step(&y, theta, p, p.time_at(n), opts.integrator, with_tangents)?;
                check_finite(&y, p.time_at(n + 1), with_tangents)?;
                times.push(p.time_at(n + 1));
                states.push(y.base);
                if let Some(t) = tangents.as_mut() {
                    t.push(y.tangent);
                }
            }
            Ok(Integrated::Full(Trajectory { times, states, tangents }))
        }
        Storage::Streaming => {
            let first = snap_of(0, &y);
            let mut rocof = RunningMax::new(first, 1);
            let mut nadir = RunningMax::new(first, 0);
            for n in 0..n_steps {
                y = step(&y, theta, p, p.time_at(n), opts.integrator, with_tangents)?;
                check_finite(&y, p.time_at(n + 1), with_tangents)?;
                rocof.offer(|| snap_of(n + 1, &y), y.base.x2.abs());
                nadir.offer(|| snap_of(n + 1, &y), y.base.x1.abs());
            }
            Ok(Integrated::Streaming(TrajectorySummary {
                n_points: n_steps + 1,
                rocof: rocof.snap,
                nadir: nadir.snap,
                terminal: snap_of(n_steps, &y),
            }))
        }
    }
}

fn check_finite(y: &AugmentedState, time: f64, with_tangents: bool) -> Result<()> {
    if !y.base.is_finite() || (with_tangents && !tangent_is_finite(&y.tangent)) {
        return Err(Error::Diverged { time });
    }
    Ok(())
}

/// Integrates every gain vector in parallel. Output order follows input order
/// and each element is identical to a standalone [`integrate`] call.
pub fn integrate_batch(
    thetas: &[GainVector],
    p: &SystemParams,
    opts: &IntegrateOptions,
) -> Vec<Result<Integrated>> {
    thetas.par_iter().map(|theta| integrate(theta, p, opts)).collect()
}

/// Directional sensitivity `(dx/dtheta) v` along the Euler trajectory,
/// propagated as a single tangent column.
pub fn integrate_directional(theta: &GainVector, p: &SystemParams, v: &[f64; 4]) -> Result<Vec<State>> {
    p.validate()?;
    let n_steps = p.n_steps()?;
    let t0 = dynamics::initial_tangents(theta, p)?;
    let mut x = dynamics::initial_state(theta, p)?;
    let dot = |row: &[f64; 4]| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let mut s = State::new(dot(&t0[0]), dot(&t0[1]));
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(s);
    for n in 0..n_steps {
        let lin = linearize(&x, theta, p, p.time_at(n))?;
        let j = &lin.jac_x;
        let ds = State::new(
            j[0][0] * s.x1 + j[0][1] * s.x2 + dot(&lin.jac_theta[0]),
            j[1][0] * s.x1 + j[1][1] * s.x2 + dot(&lin.jac_theta[1]),
        );
        x = state_axpy(&x, p.dt, &lin.f);
        s = state_axpy(&s, p.dt, &ds);
        out.push(s);
    }
    Ok(out)
}

/// Observed order of accuracy against the closed-form `theta = 0` response.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `(dt, max abs error over the grid)` per probed step size.
    pub errors: Vec<(f64, f64)>,
    /// Least-squares slope of `ln(error)` against `ln(dt)`.
    pub order: f64,
}

pub fn convergence_probe(p: &SystemParams, dts: &[f64], row: usize, integrator: Integrator) -> Result<ConvergenceReport> {
    if dts.len() < 2 {
        return Err(Error::Degenerate(format!(
            "convergence probe needs at least two step sizes, got {}",
            dts.len()
        )));
    }
    let exact = dynamics::StepResponse::new(p)?;
    let mut errors = Vec::with_capacity(dts.len());
    for &dt in dts {
        let q = p.with_grid(dt, p.horizon_t);
        let out = integrate(&GainVector::ZERO, &q, &IntegrateOptions::states_only().with_integrator(integrator))?;
        let traj = out.into_trajectory().expect("full storage");
        let err = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(&t, s)| (s.get(row) - exact.at(t).get(row)).abs())
            .fold(0.0, f64::max);
        errors.push((dt, err));
    }
    let pts: Vec<(f64, f64)> = errors.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("step sizes must differ".into()));
    }
    Ok(ConvergenceReport { errors, order: sxy / sxx })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(dt: f64, horizon: f64) -> SystemParams {
        SystemParams::default().with_grid(dt, horizon)
    }

    #[test]
    fn single_euler_step_by_hand() {
        let p = short(0.01, 0.01);
        let traj = integrate(&GainVector::ZERO, &p, &IntegrateOptions::states_only())
            .unwrap()
            .into_trajectory()
            .unwrap();
        assert_eq!(traj.len(), 2);
        let x = traj.states[1];
        // rhs([0, -0.02]) = [-0.02, 1/60]
        assert!((x.x1 + 0.0002).abs() < 1e-18);
        assert!((x.x2 - (-0.02 + 0.01 / 60.0)).abs() < 1e-17);
        assert!((x.x2 + 0.019833333333333333).abs() < 1e-15);
    }

    #[test]
    fn zero_disturbance_stays_at_origin() {
        let p = SystemParams {
            delta_p: 0.0,
            ..short(1e-2, 5.0)
        };
        let theta = GainVector::new(30.0, -20.0, 10.0, 40.0);
        let traj = integrate(&theta, &p, &IntegrateOptions::augmented())
            .unwrap()
            .into_trajectory()
            .unwrap();
        assert!(traj.states.iter().all(|s| *s == State::default()));
        // dw/dK12 at dP = 0 is w^2/sqrt(disc) = 0
        assert!(traj.tangents.unwrap().iter().all(|t| *t == ZERO_TANGENT));
    }

    #[test]
    fn grid_shape() {
        let p = short(1e-3, 2.0);
        let traj = integrate(&GainVector::ZERO, &p, &IntegrateOptions::augmented())
            .unwrap()
            .into_trajectory()
            .unwrap();
        assert_eq!(traj.len(), 2001);
        assert_eq!(traj.tangents.as_ref().unwrap().len(), 2001);
        assert_eq!(traj.final_time(), 2.0);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_non_dividing_step() {
        let p = short(0.3, 1.0);
        assert!(matches!(
            integrate(&GainVector::ZERO, &p, &IntegrateOptions::default()),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn reports_inertia_collapse_time() {
        // large K11 against a growing |x1| drives M(x) through zero
        let p = short(1e-3, 30.0);
        let theta = GainVector::new(-1200.0, 0.0, 0.0, 0.0);
        match integrate(&theta, &p, &IntegrateOptions::augmented()) {
            Err(Error::NonPhysical { time, inertia, .. }) => {
                assert!(time > 0.0 && time <= 30.0);
                assert!(inertia <= dynamics::M_MIN);
            }
            other => panic!("expected NonPhysical, got {other:?}"),
        }
    }

    #[test]
    fn streaming_matches_full() {
        let p = short(1e-3, 10.0);
        for theta in [
            GainVector::ZERO,
            GainVector::new(40.0, -30.0, 20.0, -60.0),
            GainVector::new(-10.0, 70.0, -45.0, 15.0),
        ] {
            let full = integrate(&theta, &p, &IntegrateOptions::augmented()).unwrap();
            let stream = integrate(&theta, &p, &IntegrateOptions::augmented().streaming()).unwrap();
            assert_eq!(full.summary(), stream.summary());
            assert!(stream.trajectory().is_none());
        }
    }

    #[test]
    fn batch_isolates_failures() {
        let p = short(1e-3, 1.0);
        let thetas = [
            GainVector::ZERO,
            GainVector::new(0.0, -80.0, 0.0, 0.0),
            GainVector::new(5.0, 5.0, 5.0, 5.0),
        ];
        let out = integrate_batch(&thetas, &p, &IntegrateOptions::augmented());
        assert_eq!(out.len(), 3);
        assert!(out[0].is_ok());
        assert!(matches!(out[1], Err(Error::InfeasibleGain { .. })));
        assert_eq!(
            out[2].as_ref().unwrap(),
            &integrate(&thetas[2], &p, &IntegrateOptions::augmented()).unwrap()
        );
    }

    #[test]
    fn rk4_tracks_closed_form_closely() {
        let p = short(1e-2, 20.0);
        let exact = dynamics::StepResponse::new(&p).unwrap();
        let traj = integrate(&GainVector::ZERO, &p, &IntegrateOptions::augmented().with_integrator(Integrator::Rk4))
            .unwrap()
            .into_trajectory()
            .unwrap();
        let err = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(&t, s)| (s.x1 - exact.at(t).x1).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn convergence_probe_needs_two_steps() {
        assert!(matches!(
            convergence_probe(&SystemParams::default(), &[1e-3], 0, Integrator::Euler),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn convergence_order_on_derivative_state() {
        let p = short(1e-3, 20.0);
        let rep = convergence_probe(&p, &[1e-2, 5e-3], 1, Integrator::Euler).unwrap();
        assert!((rep.order - 1.0).abs() <= 0.3, "{rep:?}");
    }
}
