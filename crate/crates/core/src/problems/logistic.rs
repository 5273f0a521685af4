use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::dataset::Dataset;
use super::{Problem, ProblemManifest, ProblemSpec};
use crate::error::{Error, Result};
use crate::rng::Stream;

pub const GEMAN_MCCLURE_COEFF: f64 = 0.01;

/// `Σ 0.01·w²/(1 + w²)` over all entries.
pub fn geman_mcclure(w: &[f64]) -> f64 {
    w.iter().map(|&x| GEMAN_MCCLURE_COEFF * x * x / (1.0 + x * x)).sum()
}

/// Entrywise `0.02·w/(1 + w²)²`.
pub fn geman_mcclure_grad(w: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|&x| {
            let den = 1.0 + x * x;
            2.0 * GEMAN_MCCLURE_COEFF * x / (den * den)
        })
        .collect()
}

/// Largest entry of [`geman_mcclure_grad`] in magnitude, attained at `w = 1/√3`.
const GM_GRAD_MAX: f64 = 2.0 * GEMAN_MCCLURE_COEFF * 3.0 * 1.732_050_807_568_877_2 / 16.0;

/// Softmax regression with a Geman-McClure penalty. The decision variable is
/// the `c × d_f` weight matrix flattened row-major.
#[derive(Debug, Clone)]
pub struct LogisticGmInstance {
    nodes: Vec<Dataset>,
    classes: usize,
    feature_dim: usize,
    batch_size: usize,
    source: Option<PathBuf>,
}

impl LogisticGmInstance {
    pub fn new(nodes: Vec<Dataset>, classes: usize, batch_size: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("need at least one node".into()));
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        let feature_dim = nodes[0].feature_dim();
        for (i, ds) in nodes.iter().enumerate() {
            if ds.is_empty() {
                return Err(Error::EmptyLocalDataset { node: i });
            }
            if ds.feature_dim() != feature_dim {
                return Err(Error::DimensionMismatch { expected: feature_dim, got: ds.feature_dim() });
            }
            if ds.classes() != classes {
                return Err(Error::InvalidArgument(format!("node {i} has {} classes, expected {classes}", ds.classes())));
            }
        }
        Ok(LogisticGmInstance { nodes, classes, feature_dim, batch_size, source: None })
    }

    pub(crate) fn with_source(mut self, path: PathBuf) -> Self {
        self.source = Some(path);
        self
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn local_data(&self, node: usize) -> &Dataset {
        &self.nodes[node]
    }

    fn check(&self, node: usize, w: &DVector<f64>) -> Result<()> {
        if node >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!("node {node} out of range")));
        }
        let d = self.classes * self.feature_dim;
        if w.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: w.len() });
        }
        Ok(())
    }

    fn weights(&self, w: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.classes, self.feature_dim, w.as_slice())
    }

    /// Softmax of `W y`, computed with the max-shift.
    fn softmax(weights: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let logits = weights * y;
        let top = logits.max();
        let e = logits.map(|z| (z - top).exp());
        let s = e.sum();
        e / s
    }

    /// Mean negative log-likelihood over `rows` of node `node`'s data plus the regularizer.
    pub fn loss_on_rows(&self, node: usize, w: &DVector<f64>, rows: &[usize]) -> Result<f64> {
        self.check(node, w)?;
        let ds = &self.nodes[node];
        let weights = self.weights(w);
        let mut nll = 0.0;
        for &k in rows {
            let logits = &weights * ds.sample(k);
            let top = logits.max();
            let lse = top + logits.map(|z| (z - top).exp()).sum().ln();
            nll += lse - logits[ds.label(k)];
        }
        Ok(nll / rows.len() as f64 + geman_mcclure(w.as_slice()))
    }

    /// Gradient of [`Self::loss_on_rows`]; row indices may repeat.
    pub fn grad_on_rows(&self, node: usize, w: &DVector<f64>, rows: &[usize]) -> Result<DVector<f64>> {
        self.check(node, w)?;
        if rows.is_empty() {
            return Err(Error::EmptyLocalDataset { node });
        }
        let ds = &self.nodes[node];
        let weights = self.weights(w);
        let mut acc = DMatrix::<f64>::zeros(self.classes, self.feature_dim);
        for &k in rows {
            let y = ds.sample(k);
            let mut p = Self::softmax(&weights, &y);
            p[ds.label(k)] -= 1.0;
            acc += p * y.transpose();
        }
        acc /= rows.len() as f64;
        let mut flat = DVector::from_iterator(acc.len(), acc.transpose().iter().copied());
        for (g, r) in flat.iter_mut().zip(geman_mcclure_grad(w.as_slice())) {
            *g += r;
        }
        Ok(flat)
    }

    /// Mini-batch gradient: `batch_size` rows drawn uniformly with replacement.
    pub fn minibatch_grad(&self, node: usize, w: &DVector<f64>, batch_size: usize, rng: &mut Stream) -> Result<DVector<f64>> {
        self.check(node, w)?;
        let m = self.nodes[node].len();
        if m == 0 {
            return Err(Error::EmptyLocalDataset { node });
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        let rows: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..m)).collect();
        self.grad_on_rows(node, w, &rows)
    }

    fn all_rows(&self, node: usize) -> Vec<usize> {
        (0..self.nodes[node].len()).collect()
    }

    fn max_feature_norm(&self) -> f64 {
        self.nodes
            .iter()
            .flat_map(|ds| (0..ds.len()).map(move |k| ds.features().row(k).norm()))
            .fold(0.0, f64::max)
    }
}

impl Problem for LogisticGmInstance {
    fn nodes(&self) -> usize {
        self.nodes.len()
    }

    fn dim(&self) -> usize {
        self.classes * self.feature_dim
    }

    fn local_loss(&self, node: usize, x: &DVector<f64>) -> f64 {
        self.loss_on_rows(node, x, &self.all_rows(node)).expect("dimension checked by caller")
    }

    fn local_grad(&self, node: usize, x: &DVector<f64>) -> DVector<f64> {
        self.grad_on_rows(node, x, &self.all_rows(node)).expect("dimension checked by caller")
    }

    fn stochastic_grad(&self, node: usize, x: &DVector<f64>, rng: &mut Stream) -> Result<DVector<f64>> {
        self.minibatch_grad(node, x, self.batch_size, rng)
    }

    /// `½ max‖y‖² + 0.02`: log-sum-exp has Hessian norm at most ½ and the
    /// penalty's second derivative peaks at `w = 0`.
    fn smoothness(&self) -> f64 {
        let y = self.max_feature_norm();
        0.5 * y * y + 2.0 * GEMAN_MCCLURE_COEFF
    }

    /// `√2 max‖y‖ + 0.0065·√d` from `‖softmax − onehot‖ ≤ √2`.
    fn gradient_bound(&self) -> Option<f64> {
        Some(2f64.sqrt() * self.max_feature_norm() + GM_GRAD_MAX * (self.dim() as f64).sqrt())
    }

    /// A bounded random vector has variance at most its squared bound.
    fn noise_bound(&self) -> Option<f64> {
        self.gradient_bound()
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn manifest(&self) -> ProblemManifest {
        ProblemManifest {
            n: self.nodes.len(),
            batch_size: self.batch_size,
            spec: ProblemSpec::LogisticGm { dataset: self.source.clone().unwrap_or_default(), classes: Some(self.classes) },
        }
    }
}
