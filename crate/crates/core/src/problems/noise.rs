use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

const MAX_ATTEMPTS: usize = 1_000_000;

/// Zero-mean normal with the given (untruncated) variance, conditioned on
/// `[-threshold, threshold]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncGaussianSpec {
    variance: f64,
    threshold: f64,
}

impl TruncGaussianSpec {
    pub fn new(variance: f64, threshold: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance must be positive, got {variance}")));
        }
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!("truncation threshold must be positive, got {threshold}")));
        }
        Ok(TruncGaussianSpec { variance, threshold })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Unnormalised Gaussian moments over `[a, b] ∩ [-threshold, threshold]`,
    /// divided by the truncation mass: `(P, E[η·1], E[η²·1])` restricted to the interval.
    pub(crate) fn partial_moments(&self, a: f64, b: f64) -> (f64, f64, f64) {
        let c = self.threshold;
        let (a, b) = (a.max(-c), b.min(c));
        if a >= b {
            return (0.0, 0.0, 0.0);
        }
        let s = self.std_dev();
        let z = gauss_mass(-c / s, c / s);
        let p = gauss_mass(a / s, b / s);
        let (pa, pb) = (density(a, s), density(b, s));
        let m1 = self.variance * (pa - pb);
        let m2 = self.variance * p + self.variance * (a * pa - b * pb);
        (p / z, m1 / z, m2 / z)
    }
}

fn density(x: f64, s: f64) -> f64 {
    (-(x * x) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
}

/// Standard normal mass on `[lo, hi]`, using complementary error functions in the tails.
fn gauss_mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        0.5 * (libm::erfc(lo * FRAC_1_SQRT_2) - libm::erfc(hi * FRAC_1_SQRT_2))
    } else if hi <= 0.0 {
        0.5 * (libm::erfc(-hi * FRAC_1_SQRT_2) - libm::erfc(-lo * FRAC_1_SQRT_2))
    } else {
        0.5 * (libm::erf(hi * FRAC_1_SQRT_2) - libm::erf(lo * FRAC_1_SQRT_2))
    }
}

/// Rejection sampler for [`TruncGaussianSpec`].
pub fn sample_truncated_gaussian(spec: &TruncGaussianSpec, rng: &mut Stream) -> Result<f64> {
    let normal = Normal::new(0.0, spec.std_dev()).map_err(|e| Error::Internal(e.to_string()))?;
    for _ in 0..MAX_ATTEMPTS {
        let x = normal.sample(rng);
        if x.abs() <= spec.threshold {
            return Ok(x);
        }
    }
    Err(Error::Internal(format!("truncated Gaussian rejection exceeded {MAX_ATTEMPTS} attempts")))
}
