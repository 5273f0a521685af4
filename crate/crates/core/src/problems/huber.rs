use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::noise::{sample_truncated_gaussian, TruncGaussianSpec};
use super::{Problem, ProblemManifest, ProblemSpec};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Stream};

/// Eigenvalue range of the generated regressors.
pub const EIGEN_RANGE: (f64, f64) = (0.05, 1.0);

/// Scalar Huber loss.
pub fn huber_value(z: f64, threshold: f64) -> f64 {
    if z.abs() <= threshold {
        0.5 * z * z
    } else {
        threshold * (z.abs() - 0.5 * threshold)
    }
}

/// Derivative of [`huber_value`]: identity inside the threshold, saturated outside.
pub fn huber_derivative(z: f64, threshold: f64) -> f64 {
    z.clamp(-threshold, threshold)
}

/// Robust linear regression: node `i` observes `θ = Φ_i x* + η` and pays the
/// entrywise-summed Huber loss of `θ − Φ_i x`.
#[derive(Debug, Clone)]
pub struct HuberRegressionInstance {
    phis: Vec<DMatrix<f64>>,
    x_star: DVector<f64>,
    threshold: f64,
    noise: TruncGaussianSpec,
    seed: u64,
    phi_norm_max: f64,
}

impl HuberRegressionInstance {
    pub fn new(
        phis: Vec<DMatrix<f64>>,
        x_star: DVector<f64>,
        threshold: f64,
        noise: TruncGaussianSpec,
        seed: u64,
    ) -> Result<Self> {
        if phis.is_empty() {
            return Err(Error::InvalidArgument("need at least one node".into()));
        }
        if !(threshold > 0.0) {
            return Err(Error::InvalidArgument(format!("Huber threshold must be positive, got {threshold}")));
        }
        let d = x_star.len();
        for phi in &phis {
            if phi.nrows() != d || phi.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: phi.nrows() });
            }
        }
        let phi_norm_max = phis.iter().map(|p| p.clone().singular_values().max()).fold(0.0, f64::max);
        Ok(HuberRegressionInstance { phis, x_star, threshold, noise, seed, phi_norm_max })
    }

    pub fn phis(&self) -> &[DMatrix<f64>] {
        &self.phis
    }

    pub fn phi(&self, node: usize) -> &DMatrix<f64> {
        &self.phis[node]
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn noise(&self) -> &TruncGaussianSpec {
        &self.noise
    }

    /// Noise-free target `Φ_i x*`.
    pub fn clean_target(&self, node: usize) -> DVector<f64> {
        &self.phis[node] * &self.x_star
    }

    /// Draws a noisy target `Φ_i x* + η`.
    pub fn sample_target(&self, node: usize, rng: &mut Stream) -> Result<DVector<f64>> {
        let mut theta = self.clean_target(node);
        for v in theta.iter_mut() {
            *v += sample_truncated_gaussian(&self.noise, rng)?;
        }
        Ok(theta)
    }

    /// `E_η[H(r + η)]` for a single residual coordinate.
    fn expected_huber(&self, r: f64) -> f64 {
        let t = self.threshold;
        let (pl, m1l, _) = self.noise.partial_moments(f64::NEG_INFINITY, -t - r);
        let (pm, m1m, m2m) = self.noise.partial_moments(-t - r, t - r);
        let (pu, m1u, _) = self.noise.partial_moments(t - r, f64::INFINITY);
        t * ((-r - 0.5 * t) * pl - m1l) + 0.5 * (r * r * pm + 2.0 * r * m1m + m2m) + t * ((r - 0.5 * t) * pu + m1u)
    }

    /// `E_η[ψ(r + η)]` for a single residual coordinate.
    fn expected_derivative(&self, r: f64) -> f64 {
        let t = self.threshold;
        let (pl, _, _) = self.noise.partial_moments(f64::NEG_INFINITY, -t - r);
        let (pm, m1m, _) = self.noise.partial_moments(-t - r, t - r);
        let (pu, _, _) = self.noise.partial_moments(t - r, f64::INFINITY);
        -t * pl + r * pm + m1m + t * pu
    }

    fn clean_residual(&self, node: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.phis[node] * (&self.x_star - x)
    }
}

/// `−Φ_iᵀ ψ(θ − Φ_i x)` for an explicit target `θ`.
pub fn huber_local_grad(
    inst: &HuberRegressionInstance,
    node: usize,
    x: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let d = inst.x_star.len();
    if node >= inst.phis.len() {
        return Err(Error::InvalidArgument(format!("node {node} out of range")));
    }
    for len in [x.len(), theta.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, got: len });
        }
    }
    let phi = &inst.phis[node];
    let psi = (theta - phi * x).map(|z| huber_derivative(z, inst.threshold));
    Ok(-(phi.transpose() * psi))
}

/// Random instance: `x*` uniform on `[-1, 1]^d`, `Φ_i = Q Λ Qᵀ` with `Q` from the
/// QR factor of a Gaussian matrix and `Λ` uniform on [`EIGEN_RANGE`].
pub fn make_huber_instance(
    n: usize,
    d: usize,
    threshold: f64,
    noise: TruncGaussianSpec,
    seed: u64,
) -> Result<HuberRegressionInstance> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("need n >= 1 and d >= 1, got n={n}, d={d}")));
    }
    let mut global = rng::stream(seed, rng::GLOBAL, Purpose::Data);
    let x_star = DVector::from_fn(d, |_, _| global.random_range(-1.0..=1.0));
    let phis = (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, i as u64, Purpose::Data);
            let gauss = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
            let q = gauss.qr().q();
            let lambda = DVector::from_fn(d, |_, _| r.random_range(EIGEN_RANGE.0..=EIGEN_RANGE.1));
            let phi = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
            // exact symmetry
            (&phi + phi.transpose()) * 0.5
        })
        .collect();
    HuberRegressionInstance::new(phis, x_star, threshold, noise, seed)
}

impl Problem for HuberRegressionInstance {
    fn nodes(&self) -> usize {
        self.phis.len()
    }

    fn dim(&self) -> usize {
        self.x_star.len()
    }

    /// Expected loss over the truncated noise, in closed form.
    fn local_loss(&self, node: usize, x: &DVector<f64>) -> f64 {
        self.clean_residual(node, x).iter().map(|&r| self.expected_huber(r)).sum()
    }

    fn local_grad(&self, node: usize, x: &DVector<f64>) -> DVector<f64> {
        let psi = self.clean_residual(node, x).map(|r| self.expected_derivative(r));
        -(self.phis[node].transpose() * psi)
    }

    fn stochastic_grad(&self, node: usize, x: &DVector<f64>, rng: &mut Stream) -> Result<DVector<f64>> {
        let theta = self.sample_target(node, rng)?;
        huber_local_grad(self, node, x, &theta)
    }

    /// `max_i ‖Φ_i‖²`, since `|ψ'| ≤ 1`.
    fn smoothness(&self) -> f64 {
        self.phi_norm_max * self.phi_norm_max
    }

    /// `ς √d max_i ‖Φ_i‖`.
    fn gradient_bound(&self) -> Option<f64> {
        Some(self.threshold * (self.dim() as f64).sqrt() * self.phi_norm_max)
    }

    /// `max_i ‖Φ_i‖ √(d Var η)`: `ψ` is 1-Lipschitz, so it cannot increase the
    /// per-coordinate noise variance, and truncation only shrinks it.
    fn noise_bound(&self) -> Option<f64> {
        Some(self.phi_norm_max * (self.dim() as f64 * self.noise.variance()).sqrt())
    }

    /// The Huber loss is nonnegative.
    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn manifest(&self) -> ProblemManifest {
        ProblemManifest {
            n: self.phis.len(),
            batch_size: 1,
            spec: ProblemSpec::Huber {
                d: self.dim(),
                huber_threshold: self.threshold,
                noise_variance: self.noise.variance(),
                noise_threshold: self.noise.threshold(),
                seed: self.seed,
            },
        }
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}
