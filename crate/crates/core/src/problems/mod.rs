//! Cost-function families, their deterministic gradients and stochastic
//! gradient oracles.

mod dataset;
mod huber;
mod logistic;
mod noise;
mod quadratic;

use std::path::PathBuf;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::Stream;

pub use dataset::{load_dataset_csv, partition_even, Dataset};
pub use huber::{huber_derivative, huber_local_grad, huber_value, make_huber_instance, HuberRegressionInstance};
pub use logistic::{geman_mcclure, geman_mcclure_grad, LogisticGmInstance, GEMAN_MCCLURE_COEFF};
pub use noise::{sample_truncated_gaussian, TruncGaussianSpec};
pub use quadratic::{make_quadratic_instance, QuadraticInstance};

/// A network of `n` local costs `f_i : R^d → R` with deterministic gradients
/// and an unbiased stochastic gradient oracle.
pub trait Problem: Send + Sync {
    fn nodes(&self) -> usize;

    fn dim(&self) -> usize;

    /// Deterministic local cost `f_i(x)`.
    fn local_loss(&self, node: usize, x: &DVector<f64>) -> f64;

    /// `∇f_i(x)`.
    fn local_grad(&self, node: usize, x: &DVector<f64>) -> DVector<f64>;

    /// One draw of `∇F_i(x, ξ)` using the caller's stream.
    fn stochastic_grad(&self, node: usize, x: &DVector<f64>, rng: &mut Stream) -> Result<DVector<f64>>;

    /// Smoothness constant `L` of every `f_i`.
    fn smoothness(&self) -> f64;

    /// Almost-sure bound `G` on stochastic gradient norms, when one is known.
    fn gradient_bound(&self) -> Option<f64>;

    /// `σ` with `E‖∇F_i(x, ξ) − ∇f_i(x)‖² ≤ σ²` for all `x`, when known.
    fn noise_bound(&self) -> Option<f64>;

    /// A valid lower bound on `f` (the optimal value itself when known).
    fn lower_bound(&self) -> f64;

    fn manifest(&self) -> ProblemManifest;

    fn global_loss(&self, x: &DVector<f64>) -> f64 {
        let n = self.nodes();
        (0..n).map(|i| self.local_loss(i, x)).sum::<f64>() / n as f64
    }

    fn global_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.nodes();
        let mut acc = DVector::zeros(self.dim());
        for i in 0..n {
            acc += self.local_grad(i, x);
        }
        acc / n as f64
    }
}

/// Reproducible description of a problem instance; the `[problem]` table of an
/// experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Huber {
        d: usize,
        #[serde(default = "default_huber_threshold")]
        huber_threshold: f64,
        #[serde(default = "default_noise_variance")]
        noise_variance: f64,
        #[serde(default = "default_noise_threshold")]
        noise_threshold: f64,
        #[serde(default)]
        seed: u64,
    },
    LogisticGm {
        dataset: PathBuf,
        /// Number of classes; inferred from the largest label when absent.
        #[serde(default)]
        classes: Option<usize>,
    },
    Quadratic {
        d: usize,
        #[serde(default = "default_eig_min")]
        eig_min: f64,
        #[serde(default = "default_eig_max")]
        eig_max: f64,
        /// Standard deviation of the linear terms `b_i`.
        #[serde(default = "default_b_scale")]
        b_scale: f64,
        /// Additive Gaussian gradient noise.
        #[serde(default)]
        sigma: f64,
        /// Radius of the ball on which the gradient bound `G` is certified.
        #[serde(default)]
        radius: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

fn default_huber_threshold() -> f64 {
    1.0
}
fn default_noise_variance() -> f64 {
    0.04
}
fn default_noise_threshold() -> f64 {
    0.1
}
fn default_eig_min() -> f64 {
    0.5
}
fn default_eig_max() -> f64 {
    2.0
}
fn default_b_scale() -> f64 {
    1.0
}

/// A [`ProblemSpec`] bound to a node count (and batch size for data-driven problems).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemManifest {
    pub n: usize,
    pub batch_size: usize,
    pub spec: ProblemSpec,
}

impl ProblemSpec {
    pub fn build(&self, n: usize, batch_size: usize) -> Result<Box<dyn Problem>> {
        Ok(match self {
            ProblemSpec::Huber { d, huber_threshold, noise_variance, noise_threshold, seed } => {
                let noise = TruncGaussianSpec::new(*noise_variance, *noise_threshold)?;
                Box::new(make_huber_instance(n, *d, *huber_threshold, noise, *seed)?)
            }
            ProblemSpec::LogisticGm { dataset, classes } => {
                let data = load_dataset_csv(dataset, *classes)?;
                Box::new(LogisticGmInstance::new(partition_even(&data, n)?, data.classes(), batch_size)?.with_source(dataset.clone()))
            }
            ProblemSpec::Quadratic { d, eig_min, eig_max, b_scale, sigma, radius, seed } => {
                let mut q = make_quadratic_instance(n, *d, (*eig_min, *eig_max), *b_scale, *sigma, *seed)?;
                if let Some(r) = radius {
                    q = q.with_radius(*r);
                }
                Box::new(q)
            }
        })
    }
}

/// Central differences of the deterministic local loss with per-coordinate step
/// `h·(1 + |x_j|)`.
pub fn finite_diff_grad(problem: &dyn Problem, node: usize, x: &DVector<f64>, h: f64) -> DVector<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |j, _| {
        let step = h * (1.0 + x[j].abs());
        probe[j] = x[j] + step;
        let up = problem.local_loss(node, &probe);
        probe[j] = x[j] - step;
        let down = problem.local_loss(node, &probe);
        probe[j] = x[j];
        (up - down) / (2.0 * step)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_differences_are_exact_on_quadratics() {
        let q = make_quadratic_instance(2, 4, (0.5, 3.0), 1.0, 0.0, 3).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.7]);
        for i in 0..2 {
            let fd = finite_diff_grad(&q, i, &x, 1e-5);
            let g = q.local_grad(i, &x);
            assert!((fd - &g).norm() <= 1e-8 * g.norm().max(1.0));
        }
    }

    #[test]
    fn spec_rejects_unknown_keys() {
        let ok: std::result::Result<ProblemSpec, _> = toml::from_str("type = \"huber\"\nd = 3\n");
        assert!(ok.is_ok());
        let bad: std::result::Result<ProblemSpec, _> = toml::from_str("type = \"huber\"\nd = 3\nsigmaa = 1.0\n");
        assert!(bad.is_err());
    }

    #[test]
    fn manifest_rebuilds_identical_instance() {
        let spec = ProblemSpec::Huber {
            d: 3,
            huber_threshold: 1.0,
            noise_variance: 0.04,
            noise_threshold: 0.1,
            seed: 9,
        };
        let p = spec.build(4, 1).unwrap();
        let text = toml::to_string(&p.manifest()).unwrap();
        let back: ProblemManifest = toml::from_str(&text).unwrap();
        let q = back.spec.build(back.n, back.batch_size).unwrap();
        let x = DVector::from_vec(vec![0.1, 0.2, -0.3]);
        for i in 0..4 {
            assert_eq!(p.local_grad(i, &x), q.local_grad(i, &x));
        }
    }
}
