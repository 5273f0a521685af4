//! Synchronous iteration maps over network state: the gradient-tracking
//! adaptive method and four baselines.

mod run;
mod state;
mod steps;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use run::{run, run_with_observer, RunOptions, XInit};
pub use state::{NetworkState, NodeState, NoiseStreams, StreamPolicy};
pub use steps::{
    adaptive_diminishing_init, adaptive_diminishing_step, clip_elementwise, diminishing_stepsize, dsgd_step,
    gt_adaptive_init, gt_adaptive_step, gt_step, momentum_dsgd_step, plain_init,
};

/// Parameters of the adaptive methods. Baselines read only the fields they need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Clip `v` at initialization as well as in every step.
    pub clip_init: bool,
}

impl AlgoParams {
    pub fn new(alpha: f64, beta1: f64, beta2: f64, v_min: f64, v_max: f64) -> Result<Self> {
        let p = AlgoParams { alpha, beta1, beta2, v_min, v_max, clip_init: true };
        p.validate()?;
        Ok(p)
    }

    /// `alpha = 0.01, beta1 = 0.9, beta2 = 0.999, v ∈ [1e-8, 100]`.
    pub fn reference() -> Self {
        AlgoParams { alpha: 0.01, beta1: 0.9, beta2: 0.999, v_min: 1e-8, v_max: 100.0, clip_init: true }
    }

    pub fn with_clip_init(mut self, clip_init: bool) -> Self {
        self.clip_init = clip_init;
        self
    }

    /// `alpha > 0`, `beta1, beta2 ∈ [0, 1)` and `v_max ≥ 1 ≥ v_min > 0`.
    ///
    /// `beta = 0` is accepted so degenerate cases (plain SGD, no momentum) can be
    /// expressed with the same machinery.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad(format!("beta1 must lie in [0, 1), got {}", self.beta1));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("beta2 must lie in [0, 1), got {}", self.beta2));
        }
        if !(self.v_min > 0.0 && self.v_min <= 1.0) {
            return bad(format!("v_min must lie in (0, 1], got {}", self.v_min));
        }
        if !(self.v_max >= 1.0 && self.v_max.is_finite()) {
            return bad(format!("v_max must be finite and at least 1, got {}", self.v_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gt-adaptive")]
    GtAdaptive,
    #[serde(rename = "dsgd")]
    Dsgd,
    #[serde(rename = "gt")]
    Gt,
    #[serde(rename = "momentum-dsgd")]
    MomentumDsgd,
    #[serde(rename = "adaptive-diminishing")]
    AdaptiveDiminishing,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::GtAdaptive, Method::Dsgd, Method::Gt, Method::MomentumDsgd, Method::AdaptiveDiminishing];

    pub fn id(self) -> &'static str {
        match self {
            Method::GtAdaptive => "gt-adaptive",
            Method::Dsgd => "dsgd",
            Method::Gt => "gt",
            Method::MomentumDsgd => "momentum-dsgd",
            Method::AdaptiveDiminishing => "adaptive-diminishing",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::Validation(format!("unknown algorithm id `{s}`")))
    }
}
