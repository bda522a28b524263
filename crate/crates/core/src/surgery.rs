//! Conflict-aware aggregation of per-criterion gradients.
//!
//! Each gradient is projected onto the normal plane of every other gradient
//! it conflicts with (negative inner product), one target at a time, and the
//! projected gradients are summed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criteria::{CriteriaSet, Criterion};
use crate::error::{Error, Result};
use crate::sensitivity::GradientSet;

/// Projection targets with a smaller norm are skipped.
pub const MIN_TARGET_NORM: f64 = 1e-15;

/// Numerator used in the projection coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionForm {
    /// `g <- g - (g.g' / |g'|^2) g'`, an orthogonal projection.
    #[default]
    Orthogonal,
    /// `g <- g - (g.g / |g'|^2) g'`. Does not produce an orthogonal result;
    /// kept only for side-by-side comparison.
    SelfNumerator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeryConfig {
    /// Order of the outer loop, and of the inner loop unless shuffled.
    pub order: Vec<Criterion>,
    /// When set, each inner loop visits the other gradients in an order
    /// drawn from a generator seeded with this value.
    pub shuffle_seed: Option<u64>,
    #[serde(default)]
    pub form: ProjectionForm,
}

impl Default for SurgeryConfig {
    fn default() -> Self {
        SurgeryConfig {
            order: vec![Criterion::Rocof, Criterion::Nadir, Criterion::Ss],
            shuffle_seed: None,
            form: ProjectionForm::Orthogonal,
        }
    }
}

impl SurgeryConfig {
    /// Default order restricted to the enabled criteria.
    pub fn for_criteria(enabled: CriteriaSet) -> Self {
        SurgeryConfig {
            order: enabled.iter().collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; 3];
        for c in &self.order {
            let i = *c as usize;
            if seen[i] {
                return Err(Error::Config(format!("criterion {c} repeated in surgery order")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

#[inline]
pub fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
pub fn norm(a: &[f64; 4]) -> f64 {
    dot(a, a).sqrt()
}

/// Single projection step of `g` against `target`, applied only on conflict.
/// Returns whether a projection happened.
pub fn project_if_conflicting(g: &mut [f64; 4], target: &[f64; 4], form: ProjectionForm) -> bool {
    let target_sq = dot(target, target);
    if target_sq.sqrt() < MIN_TARGET_NORM {
        return false;
    }
    let inner = dot(g, target);
    if !(inner < 0.0) {
        return false;
    }
    let numerator = match form {
        ProjectionForm::Orthogonal => inner,
        ProjectionForm::SelfNumerator => dot(g, g),
    };
    let coef = numerator / target_sq;
    for (gi, ti) in g.iter_mut().zip(target) {
        *gi -= coef * ti;
    }
    true
}

/// Aggregates `grads` (in outer-loop order) into one direction.
pub fn surgery(grads: &[[f64; 4]], shuffle_seed: Option<u64>, form: ProjectionForm) -> Result<[f64; 4]> {
    if grads.is_empty() {
        return Err(Error::EmptyGradientSet);
    }
    let mut rng = shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut total = [0.0; 4];
    for (i, g) in grads.iter().enumerate() {
        let mut projected = *g;
        let mut others: Vec<usize> = (0..grads.len()).filter(|&j| j != i).collect();
        if let Some(rng) = rng.as_mut() {
            others.shuffle(rng);
        }
        for j in others {
            project_if_conflicting(&mut projected, &grads[j], form);
        }
        for (t, v) in total.iter_mut().zip(projected) {
            *t += v;
        }
    }
    Ok(total)
}

/// Runs [`surgery`] on the criteria named in `cfg.order`.
pub fn aggregate(set: &GradientSet, cfg: &SurgeryConfig) -> Result<[f64; 4]> {
    let grads: Vec<[f64; 4]> = cfg.order.iter().map(|c| *set.get(*c)).collect();
    surgery(&grads, cfg.shuffle_seed, cfg.form)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E1: [f64; 4] = [1.0, 0.0, 0.0, 0.0];
    const E2: [f64; 4] = [0.0, 1.0, 0.0, 0.0];

    #[test]
    fn orthogonal_gradients_sum() {
        assert_eq!(surgery(&[E1, E2], None, ProjectionForm::Orthogonal).unwrap(), [1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn worked_conflict_example() {
        // (2,0,0,0) against (-1,1,0,0): inner -2, coef -1 -> (1,1,0,0)
        // (-1,1,0,0) against (2,0,0,0): inner -2, coef -1/2 -> (0,1,0,0)
        let out = surgery(&[[2.0, 0.0, 0.0, 0.0], [-1.0, 1.0, 0.0, 0.0]], None, ProjectionForm::Orthogonal).unwrap();
        assert_eq!(out, [1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn antiparallel_cancels() {
        let out = surgery(&[E1, [-1.0, 0.0, 0.0, 0.0]], None, ProjectionForm::Orthogonal).unwrap();
        assert_eq!(out, [0.0; 4]);
    }

    #[test]
    fn empty_set_rejected() {
        assert_eq!(surgery(&[], None, ProjectionForm::Orthogonal), Err(Error::EmptyGradientSet));
    }

    #[test]
    fn zero_targets_are_skipped() {
        let out = surgery(&[[1.0, -2.0, 0.5, 0.0], [0.0; 4]], None, ProjectionForm::Orthogonal).unwrap();
        assert_eq!(out, [1.0, -2.0, 0.5, 0.0]);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn self_numerator_form_differs() {
        // g = (2,0,0,0), g' = (-1,1,0,0): g.g = 4, |g'|^2 = 2 -> (2,0) - 2 (-1,1) = (4,-2)
        let mut g = [2.0, 0.0, 0.0, 0.0];
        assert!(project_if_conflicting(&mut g, &[-1.0, 1.0, 0.0, 0.0], ProjectionForm::SelfNumerator));
        assert_eq!(g, [4.0, -2.0, 0.0, 0.0]);
    }

    #[test]
    fn seeded_shuffle_is_reproducible() {
        let grads = [
            [1.0, -0.5, 0.2, 0.0],
            [-0.3, 1.0, -0.4, 0.1],
            [-0.8, -0.2, 1.0, 0.3],
        ];
        let a = surgery(&grads, Some(7), ProjectionForm::Orthogonal).unwrap();
        let b = surgery(&grads, Some(7), ProjectionForm::Orthogonal).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_rejects_repeats() {
        let cfg = SurgeryConfig {
            order: vec![Criterion::Rocof, Criterion::Rocof],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(SurgeryConfig::for_criteria(CriteriaSet::default()).validate().is_ok());
    }
}
