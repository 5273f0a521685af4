use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Normal, StandardNormal};

use super::huber::sorted_eigenvalues;
use super::{Problem, ProblemManifest, ProblemSpec};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Stream};

/// Heterogeneous quadratics `f_i(x) = ½ xᵀQ_i x − b_iᵀx` with optional additive
/// Gaussian gradient noise. The global minimiser is available in closed form.
#[derive(Debug, Clone)]
pub struct QuadraticInstance {
    qs: Vec<DMatrix<f64>>,
    bs: Vec<DVector<f64>>,
    sigma: f64,
    radius: Option<f64>,
    generator: Option<(f64, f64, f64, u64)>,
    minimizer: DVector<f64>,
    optimum: f64,
    smoothness: f64,
}

impl QuadraticInstance {
    pub fn new(qs: Vec<DMatrix<f64>>, bs: Vec<DVector<f64>>, sigma: f64) -> Result<Self> {
        if qs.is_empty() || qs.len() != bs.len() {
            return Err(Error::InvalidArgument("need one (Q_i, b_i) pair per node".into()));
        }
        if !(sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise std must be nonnegative, got {sigma}")));
        }
        let d = bs[0].len();
        for (q, b) in qs.iter().zip(&bs) {
            if q.nrows() != d || q.ncols() != d || b.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: q.nrows().max(b.len()) });
            }
            if (q - q.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidArgument("Q_i must be symmetric".into()));
            }
            if sorted_eigenvalues(q)[0] < -1e-12 {
                return Err(Error::InvalidArgument("Q_i must be positive semidefinite".into()));
            }
        }
        let n = qs.len() as f64;
        let q_sum = qs.iter().fold(DMatrix::zeros(d, d), |acc, q| acc + q);
        let b_sum = bs.iter().fold(DVector::zeros(d), |acc, b| acc + b);
        let minimizer = q_sum
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("average Hessian is singular".into()))?
            .solve(&b_sum);
        let optimum = (0.5 * minimizer.dot(&(&q_sum * &minimizer)) - b_sum.dot(&minimizer)) / n;
        let smoothness = qs.iter().map(|q| *sorted_eigenvalues(q).last().unwrap()).fold(0.0, f64::max);
        Ok(QuadraticInstance { qs, bs, sigma, radius: None, generator: None, minimizer, optimum, smoothness })
    }

    /// Certifies the gradient bound on the ball `‖x‖ ≤ radius` (noise-free only).
    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = Some(radius);
        self
    }

    pub fn minimizer(&self) -> &DVector<f64> {
        &self.minimizer
    }

    pub fn optimal_value(&self) -> f64 {
        self.optimum
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn q(&self, node: usize) -> &DMatrix<f64> {
        &self.qs[node]
    }

    pub fn b(&self, node: usize) -> &DVector<f64> {
        &self.bs[node]
    }

    /// `max_i (‖Q_i‖ r + ‖b_i‖)`, a bound on `‖∇f_i(x)‖` for `‖x‖ ≤ r`.
    pub fn gradient_bound_on_ball(&self, r: f64) -> f64 {
        self.qs
            .iter()
            .zip(&self.bs)
            .map(|(q, b)| sorted_eigenvalues(q).last().unwrap() * r + b.norm())
            .fold(0.0, f64::max)
    }
}

/// Random instance with `Q_i = U Λ Uᵀ` (eigenvalues uniform in `eig_range`) and
/// `b_i ~ N(0, b_scale²)`.
pub fn make_quadratic_instance(
    n: usize,
    d: usize,
    eig_range: (f64, f64),
    b_scale: f64,
    sigma: f64,
    seed: u64,
) -> Result<QuadraticInstance> {
    let (lo, hi) = eig_range;
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("need n >= 1 and d >= 1, got n={n}, d={d}")));
    }
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidArgument(format!("eigenvalue range ({lo}, {hi}) must be positive and ordered")));
    }
    let mut qs = Vec::with_capacity(n);
    let mut bs = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream(seed, i as u64, Purpose::Data);
        let u = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal)).qr().q();
        let lambda = DVector::from_fn(d, |_, _| r.random_range(lo..=hi));
        let q = &u * DMatrix::from_diagonal(&lambda) * u.transpose();
        qs.push((&q + q.transpose()) * 0.5);
        bs.push(DVector::from_fn(d, |_, _| b_scale * r.sample::<f64, _>(StandardNormal)));
    }
    let mut inst = QuadraticInstance::new(qs, bs, sigma)?;
    inst.generator = Some((lo, hi, b_scale, seed));
    Ok(inst)
}

impl Problem for QuadraticInstance {
    fn nodes(&self) -> usize {
        self.qs.len()
    }

    fn dim(&self) -> usize {
        self.minimizer.len()
    }

    fn local_loss(&self, node: usize, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.qs[node] * x)) - self.bs[node].dot(x)
    }

    fn local_grad(&self, node: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.qs[node] * x - &self.bs[node]
    }

    fn stochastic_grad(&self, node: usize, x: &DVector<f64>, rng: &mut Stream) -> Result<DVector<f64>> {
        let mut g = self.local_grad(node, x);
        if self.sigma > 0.0 {
            let noise = Normal::new(0.0, self.sigma).map_err(|e| Error::Internal(e.to_string()))?;
            for v in g.iter_mut() {
                *v += rng.sample(noise);
            }
        }
        Ok(g)
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn gradient_bound(&self) -> Option<f64> {
        match self.radius {
            Some(r) if self.sigma == 0.0 => Some(self.gradient_bound_on_ball(r)),
            _ => None,
        }
    }

    fn noise_bound(&self) -> Option<f64> {
        Some(self.sigma * (self.dim() as f64).sqrt())
    }

    fn lower_bound(&self) -> f64 {
        self.optimum
    }

    fn manifest(&self) -> ProblemManifest {
        let (eig_min, eig_max, b_scale, seed) = self.generator.unwrap_or((f64::NAN, f64::NAN, f64::NAN, 0));
        ProblemManifest {
            n: self.qs.len(),
            batch_size: 1,
            spec: ProblemSpec::Quadratic {
                d: self.dim(),
                eig_min,
                eig_max,
                b_scale,
                sigma: self.sigma,
                radius: self.radius,
                seed,
            },
        }
    }
}
