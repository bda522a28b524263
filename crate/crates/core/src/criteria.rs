//! Frequency-stability criteria, critical times, and labels.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, IntegrateOptions, Trajectory, TrajectorySummary};
use crate::params::{GainVector, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Rocof,
    Nadir,
    Ss,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Rocof, Criterion::Nadir, Criterion::Ss];

    /// State row the criterion reads: `x2` for RoCoF, `x1` otherwise.
    pub const fn row(self) -> usize {
        match self {
            Criterion::Rocof => 1,
            Criterion::Nadir | Criterion::Ss => 0,
        }
    }

    pub fn threshold(self, p: &SystemParams) -> f64 {
        match self {
            Criterion::Rocof => p.thresholds.tau_rocof,
            Criterion::Nadir => p.thresholds.tau_nadir,
            Criterion::Ss => p.thresholds.tau_ss,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Criterion::Rocof => "rocof",
            Criterion::Nadir => "nadir",
            Criterion::Ss => "ss",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which criteria take part in labeling. Defaults to RoCoF and nadir.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaSet {
    pub rocof: bool,
    pub nadir: bool,
    pub ss: bool,
}

impl Default for CriteriaSet {
    fn default() -> Self {
        CriteriaSet {
            rocof: true,
            nadir: true,
            ss: false,
        }
    }
}

impl CriteriaSet {
    pub const ALL: CriteriaSet = CriteriaSet {
        rocof: true,
        nadir: true,
        ss: true,
    };

    pub fn contains(&self, c: Criterion) -> bool {
        match c {
            Criterion::Rocof => self.rocof,
            Criterion::Nadir => self.nadir,
            Criterion::Ss => self.ss,
        }
    }

    /// Enabled criteria in canonical order (rocof, nadir, ss).
    pub fn iter(&self) -> impl Iterator<Item = Criterion> + '_ {
        Criterion::ALL.into_iter().filter(|c| self.contains(*c))
    }

    pub fn is_empty(&self) -> bool {
        self.iter().next().is_none()
    }
}

/// Stability label. `Stable` is 0, `Unstable` is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Stable,
    Unstable,
    Invalid,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Stable => "0",
            Label::Unstable => "1",
            Label::Invalid => "invalid",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "0" => Some(Label::Stable),
            "1" => Some(Label::Unstable),
            "invalid" => Some(Label::Invalid),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalTimes {
    pub t_rocof: f64,
    pub t_nadir: f64,
    pub t_ss: f64,
}

impl CriticalTimes {
    pub fn from_summary(s: &TrajectorySummary) -> Self {
        CriticalTimes {
            t_rocof: s.rocof.time,
            t_nadir: s.nadir.time,
            t_ss: s.terminal.time,
        }
    }
}

/// Grid argmax of `|x2|` and `|x1|` (earliest on ties) and the final time.
pub fn critical_times(traj: &Trajectory) -> Result<CriticalTimes> {
    if traj.is_empty() {
        return Err(Error::Degenerate("empty trajectory".into()));
    }
    Ok(CriticalTimes::from_summary(&traj.summarize()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub critical: CriticalTimes,
    /// Signed `x2(t_rocof) * f_base`.
    pub rocof_hz_s: f64,
    /// Signed `x1(t_nadir) * f_base`.
    pub nadir_hz: f64,
    /// Signed `x1(T) * f_base`.
    pub ss_hz: f64,
    pub pass_rocof: bool,
    pub pass_nadir: bool,
    pub pass_ss: bool,
    pub enabled: CriteriaSet,
    pub label: Label,
}

impl StabilityReport {
    pub fn value(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Rocof => self.rocof_hz_s,
            Criterion::Nadir => self.nadir_hz,
            Criterion::Ss => self.ss_hz,
        }
    }

    pub fn passes(&self, c: Criterion) -> bool {
        match c {
            Criterion::Rocof => self.pass_rocof,
            Criterion::Nadir => self.pass_nadir,
            Criterion::Ss => self.pass_ss,
        }
    }
}

/// Converts a trajectory summary to Hz and applies the thresholds. A
/// criterion passes when `|value| <= threshold`.
pub fn evaluate(summary: &TrajectorySummary, p: &SystemParams, enabled: CriteriaSet) -> StabilityReport {
    let rocof_hz_s = summary.rocof.state.x2 * p.f_base;
    let nadir_hz = summary.nadir.state.x1 * p.f_base;
    let ss_hz = summary.terminal.state.x1 * p.f_base;
    let pass_rocof = rocof_hz_s.abs() <= p.thresholds.tau_rocof;
    let pass_nadir = nadir_hz.abs() <= p.thresholds.tau_nadir;
    let pass_ss = ss_hz.abs() <= p.thresholds.tau_ss;
    let passes = [(Criterion::Rocof, pass_rocof), (Criterion::Nadir, pass_nadir), (Criterion::Ss, pass_ss)];
    let stable = passes.iter().filter(|(c, _)| enabled.contains(*c)).all(|(_, ok)| *ok);
    StabilityReport {
        critical: CriticalTimes::from_summary(summary),
        rocof_hz_s,
        nadir_hz,
        ss_hz,
        pass_rocof,
        pass_nadir,
        pass_ss,
        enabled,
        label: if stable { Label::Stable } else { Label::Unstable },
    }
}

pub fn evaluate_trajectory(traj: &Trajectory, p: &SystemParams, enabled: CriteriaSet) -> Result<StabilityReport> {
    if traj.is_empty() {
        return Err(Error::Degenerate("empty trajectory".into()));
    }
    Ok(evaluate(&traj.summarize(), p, enabled))
}

/// Simulates and labels a single operating point.
pub fn label_one(theta: &GainVector, p: &SystemParams, enabled: CriteriaSet) -> Result<StabilityReport> {
    let out = integrate(theta, p, &IntegrateOptions::states_only().streaming())?;
    Ok(evaluate(&out.summary(), p, enabled))
}

/// Labels every gain vector in parallel, keeping input order. Failed
/// simulations stay as errors so they are never mistaken for a 0/1 label.
pub fn label_dataset(thetas: &[GainVector], p: &SystemParams, enabled: CriteriaSet) -> Vec<Result<StabilityReport>> {
    thetas.par_iter().map(|theta| label_one(theta, p, enabled)).collect()
}

/// Label of a labeling outcome, mapping failures to [`Label::Invalid`].
pub fn outcome_label(outcome: &Result<StabilityReport>) -> Label {
    outcome.as_ref().map_or(Label::Invalid, |r| r.label)
}
