//! Finite-difference checks of the analytic hierarchical-loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::aggregation::AggregationMode;
use crate::error::{Error, Result};
use crate::losses::{softmax, HierarchicalLoss, TargetSpec};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Gradient entries smaller than this are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub trials: usize,
    pub step: f64,
    pub max_rel_error: f64,
    /// `(trial, leaf index)` of the worst entry.
    pub worst: (usize, usize),
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// A random leaf input suited to the loss's aggregation mode: a softmax
/// distribution for sum, independent scores in `[0.01, 0.99]` for union.
pub fn random_leaf_input<R: Rng>(rng: &mut R, num_leaves: usize, mode: AggregationMode) -> Vec<f64> {
    match mode {
        AggregationMode::Sum => {
            let logits: Vec<f64> = (0..num_leaves).map(|_| rng.sample(StandardNormal)).collect();
            softmax(&logits)
        }
        AggregationMode::Union => (0..num_leaves).map(|_| rng.gen_range(0.01..=0.99)).collect(),
    }
}

/// Compares [`HierarchicalLoss::gradient_raw`] with central differences on
/// `trials` seeded random inputs and targets.
pub fn check_hierarchical_gradient(
    loss: &HierarchicalLoss<'_>,
    trials: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if !(step > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    let t = loss.taxonomy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_error: f64 = 0.0;
    let mut worst = (0, 0);
    for trial in 0..trials {
        let x = random_leaf_input(&mut rng, t.num_leaves(), loss.mode());
        let target = TargetSpec::new(t, rng.gen_range(0..t.num_leaves()))?;
        let analytic = loss.gradient_raw(&x, &target)?;
        let numeric = central_difference(
            |p| {
                loss.evaluate_raw(p, &target)
                    .map(|b| b.total)
                    .unwrap_or(f64::NAN)
            },
            &x,
            step,
        );
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let e = relative_error(*a, *n);
            if e.is_nan() || e > max_rel_error {
                max_rel_error = if e.is_nan() { f64::INFINITY } else { e };
                worst = (trial, i);
            }
        }
    }
    Ok(GradCheckReport {
        trials,
        step,
        max_rel_error,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], 1e-4);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 2.0), 0.0);
        assert!((relative_error(100.0, 101.0) - 1.0 / 101.0).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-6) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn random_inputs_respect_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_leaf_input(&mut rng, 5, AggregationMode::Sum);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let s = random_leaf_input(&mut rng, 5, AggregationMode::Union);
        assert!(s.iter().all(|v| (0.01..=0.99).contains(v)));
    }
}
