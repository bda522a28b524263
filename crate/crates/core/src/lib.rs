//! Gradient-guided sampling of labeled frequency-stability data for a
//! load-frequency-control model with virtual-synchronous-machine feedback.
//!
//! The pipeline: integrate the tangent-augmented ODE ([`ode`]) to get the
//! trajectory and its gain sensitivities in one pass, read critical times and
//! labels off it ([`criteria`]), turn tangents into signed per-criterion
//! gradients ([`sensitivity`]), merge them with conflict-aware projection
//! ([`surgery`]), and step gains toward the stability boundary ([`sampler`]).

pub mod bench;
pub mod config;
pub mod criteria;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod ode;
pub mod params;
pub mod sampler;
pub mod sensitivity;
pub mod surgery;

pub use criteria::{CriteriaSet, Criterion, CriticalTimes, Label, StabilityReport};
pub use error::{Error, Result};
pub use ode::{Integrated, IntegrateOptions, Integrator, Storage, Trajectory, TrajectorySummary};
pub use params::{GainVector, State, SystemParams, Tangent, Thresholds};
