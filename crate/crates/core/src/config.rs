//! JSON run configuration.
//!
//! One document with the sections `system`, `solver`, `criteria`, `sampler`,
//! `bench` and `output`. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::Method;
use crate::criteria::{CriteriaSet, Criterion};
use crate::error::{Error, Result};
use crate::ode::Integrator;
use crate::params::{SystemParams, Thresholds};
use crate::sampler::{DirectionPolicy, GradientMode, Rule, SamplerConfig};
use crate::sensitivity::{Epsilon, FdScheme};
use crate::surgery::{ProjectionForm, SurgeryConfig};

/// The configuration shipped with the crate (reference parameter table).
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../config/default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub r: f64,
    pub tau: f64,
    pub m0: f64,
    pub d0: f64,
    pub delta_p: f64,
    pub f_base: f64,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub integrator: Integrator,
    pub dt: f64,
    pub horizon_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub alpha: f64,
    pub max_iter: usize,
    pub batch_size: usize,
    pub rule: Rule,
    pub direction: DirectionPolicy,
    pub normalize_step: bool,
    pub backtrack_limit: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub surgery_order: Vec<Criterion>,
    pub shuffle_seed: Option<u64>,
    pub projection: ProjectionForm,
    pub initial: InitialSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub batch_size: usize,
    pub runs: usize,
    pub methods: Vec<Method>,
    pub reference: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradSection {
    pub scheme: FdScheme,
    pub epsilon: Epsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub timestamp: bool,
    pub tangents: bool,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub solver: SolverSection,
    pub criteria: CriteriaSet,
    pub sampler: SamplerSection,
    pub grad: GradSection,
    pub bench: BenchSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_json(DEFAULT_CONFIG_JSON).expect("shipped config parses")
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        self.system_params().validate()?;
        self.sampler_config().validate()?;
        if self.bench.runs == 0 || self.bench.batch_size == 0 {
            return Err(Error::Config("bench runs and batch_size must be >= 1".into()));
        }
        if self.sampler.initial.std < 0.0 {
            return Err(Error::Config("initial std must be >= 0".into()));
        }
        Ok(())
    }

    pub fn system_params(&self) -> SystemParams {
        let s = &self.system;
        SystemParams {
            r: s.r,
            tau: s.tau,
            m0: s.m0,
            d0: s.d0,
            delta_p: s.delta_p,
            f_base: s.f_base,
            thresholds: s.thresholds,
            horizon_t: self.solver.horizon_t,
            dt: self.solver.dt,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let s = &self.sampler;
        SamplerConfig {
            alpha: s.alpha,
            max_iter: s.max_iter,
            batch_size: s.batch_size,
            rule: s.rule,
            direction_policy: s.direction,
            criteria: self.criteria,
            normalize_step: s.normalize_step,
            backtrack_limit: s.backtrack_limit,
            seed: s.seed,
            gradient_mode: s.gradient_mode,
            surgery: Some(SurgeryConfig {
                order: s.surgery_order.clone(),
                shuffle_seed: s.shuffle_seed,
                form: s.projection,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_is_the_reference_table() {
        let cfg = RunConfig::default();
        let p = cfg.system_params();
        assert_eq!((p.r, p.tau, p.m0, p.d0, p.delta_p), (0.06, 10.0, 6.0, 5.0, -0.12));
        assert_eq!(
            (p.thresholds.tau_ss, p.thresholds.tau_nadir, p.thresholds.tau_rocof),
            (0.5, 0.8, 1.0)
        );
        assert_eq!(p, SystemParams::default());
        let mut s = SamplerConfig::default();
        s.surgery = Some(SurgeryConfig::for_criteria(s.criteria));
        assert_eq!(cfg.sampler_config(), s);
    }

    #[test]
    fn round_trips_losslessly() {
        let cfg = RunConfig::default();
        let again = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        v["system"]["extra"] = serde_json::json!(1);
        assert!(RunConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        v["bogus"] = serde_json::json!({});
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        v["solver"]["dt"] = serde_json::json!(0.7);
        assert!(RunConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
        v["sampler"]["rule"] = serde_json::json!("margin:-1");
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }
}
