//! Analysis constants, stepsize feasibility and the explicit finite-horizon
//! optimality-gap bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem, network and algorithm quantities the constants depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    /// Smoothness constant.
    pub l: f64,
    /// Bound on stochastic gradient entries.
    pub g: f64,
    /// Noise standard deviation bound.
    pub sigma: f64,
    pub rho_a: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Free analysis parameter trading the `β₁` condition against `N₂′`.
    pub omega: f64,
    pub n: usize,
    /// `‖x₁ − x̃₁‖²`.
    pub delta1: f64,
    /// `‖v₁ − ṽ₁‖²`.
    pub delta2: f64,
    /// `‖s₁ − s̃₁‖²`.
    pub delta3: f64,
}

impl TheoryInputs {
    pub fn delta(&self) -> f64 {
        self.delta1 + self.delta2 + self.delta3
    }

    fn common(&self) -> f64 {
        self.v_max.sqrt() + 2.0 * self.alpha * self.alpha * (self.l + 1.0)
    }

    fn one_minus_rho2(&self) -> f64 {
        1.0 - self.rho_a * self.rho_a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MConstants {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub m5: f64,
    pub m6: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NConstants {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
}

pub fn compute_m(tc: &TheoryInputs) -> MConstants {
    let inv = 1.0 / tc.v_min;
    let n = tc.n as f64;
    let c = tc.common();
    let a2 = tc.alpha * tc.alpha;
    let m3 = tc.beta1 * tc.beta1 * inv / (n * (1.0 - tc.beta1).powi(2))
        * (16.0 * tc.v_max.sqrt() + 32.0 * a2 * (tc.l + 1.0) + a2 * tc.l * tc.l);
    MConstants {
        m1: 4.0 * inv * tc.l / n * c,
        m2: 18.0 * inv / n * c,
        m3,
        m4: m3,
        m5: tc.g * tc.g * inv.powi(3) / n * c,
        m6: 4.0 * inv / n * c,
    }
}

pub fn compute_n(tc: &TheoryInputs) -> NConstants {
    let inv = 1.0 / tc.v_min;
    let r = tc.one_minus_rho2();
    let l2 = tc.l * tc.l;
    let b2 = tc.beta1 * tc.beta1;
    NConstants {
        n1: 14400.0 * l2 * inv / r.powi(4) + 72.0 * inv / (r * r) * (4.0 + 20.0 * l2 / 3.0),
        n2: 504.0 * inv / (r * r),
        n3: 12.0 + 216.0 / (r * r),
        n4: (720.0 * l2 / r.powi(5) + 24.0 * l2 / r).max(2.0 * b2 / (1.0 - b2)).max(0.5),
    }
}

/// `36 v_min⁻¹ v_max^{1/2} + L + 1`.
pub fn mu(tc: &TheoryInputs) -> f64 {
    36.0 * tc.v_max.sqrt() / tc.v_min + tc.l + 1.0
}

/// `72 G³ v_min⁻² / (1 − ρ)²`, shared by `N₂′` and `N₄′`.
fn g_cubed_term(tc: &TheoryInputs) -> f64 {
    72.0 * tc.g.powi(3) / (tc.v_min * tc.v_min) / (1.0 - tc.rho_a).powi(2)
}

pub fn compute_n2_prime(tc: &TheoryInputs) -> f64 {
    let n2 = compute_n(tc).n2;
    let mu = mu(tc);
    let l = tc.l;
    n2 * (l / 9.0 * mu + mu + g_cubed_term(tc))
        + 0.5 / tc.v_min.sqrt()
        + (l + 1.0) / tc.v_min
        + tc.omega * (mu + l * l / 36.0) * (3.0 + 4.0 * n2 * (l * l + 1.0))
}

/// `(N₃′, N₄′)`.
pub fn compute_n34_prime(tc: &TheoryInputs) -> (f64, f64) {
    let NConstants { n3, n4, .. } = compute_n(tc);
    let mu = mu(tc);
    let (l, w, n) = (tc.l, tc.omega, tc.n as f64);
    let l2 = l * l;
    let a2 = tc.alpha * tc.alpha;
    let r = tc.one_minus_rho2();
    let n3p = mu * n3 * (l / 9.0 + w * (4.0 + 4.0 * l2) + 1.0)
        + n3 * (w * l2 / 9.0 + l2 * l2 / 10.0)
        + mu * (1.0 / 9.0 + 3.0 * w)
        + w * l2 / 24.0;
    let n4p = mu * n4 / n * (10.0 * l / 81.0 + 1.0 + w * a2 * (8.0 + 20.0 * l2 / 3.0) + g_cubed_term(tc))
        + (2.0 * l * mu / (9.0 * n * r) + 12.0 * w * l2 * a2 / (n * r))
            .max(tc.g * tc.g / (tc.v_min * tc.v_min) * mu / (18.0 * n * (1.0 - tc.beta2 * tc.beta2)));
    (n3p, n4p)
}

/// Every derived constant for one set of inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub inputs: TheoryInputs,
    pub m: MConstants,
    pub n: NConstants,
    pub mu: f64,
    pub n2_prime: f64,
    pub n3_prime: f64,
    pub n4_prime: f64,
}

impl TheoryConstants {
    pub fn new(inputs: TheoryInputs) -> Self {
        let (n3_prime, n4_prime) = compute_n34_prime(&inputs);
        TheoryConstants {
            inputs,
            m: compute_m(&inputs),
            n: compute_n(&inputs),
            mu: mu(&inputs),
            n2_prime: compute_n2_prime(&inputs),
            n3_prime,
            n4_prime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Supremum of admissible stepsizes at the given `ω`.
    pub alpha_max: f64,
    /// Largest `β₁` satisfying `β₁²/(ω(1−β₁)²) ≤ α²` at the given `α`, `ω`.
    pub beta1_max: f64,
    /// `ω` on a log grid over `[1e-3, 1e3]` giving the largest `alpha_max`.
    pub best_omega: f64,
    pub best_alpha_max: f64,
    /// Why the configuration is infeasible, if it is.
    pub reason: Option<String>,
}

pub const OMEGA_GRID: (f64, f64, usize) = (1e-3, 1e3, 61);

/// `sqrt(min{1/(2N₁), v_min(1−ρ²)²/72, v_max⁻¹/N₂′²})`.
pub fn alpha_max(tc: &TheoryInputs) -> f64 {
    let n1 = compute_n(tc).n1;
    let r = tc.one_minus_rho2();
    let n2p = compute_n2_prime(tc);
    (1.0 / (2.0 * n1)).min(tc.v_min * r * r / 72.0).min(1.0 / (tc.v_max * n2p * n2p)).sqrt()
}

/// `β₁/(1−β₁) = α√ω`.
pub fn beta1_max(alpha: f64, omega: f64) -> f64 {
    let k = alpha * omega.sqrt();
    k / (1.0 + k)
}

pub fn stepsize_feasible(tc: &TheoryInputs) -> Feasibility {
    let amax = alpha_max(tc);
    let b1max = beta1_max(tc.alpha, tc.omega);
    let (lo, hi, steps) = OMEGA_GRID;
    let (best_omega, best_alpha_max) = (0..steps)
        .map(|k| {
            let w = lo * (hi / lo).powf(k as f64 / (steps - 1) as f64);
            (w, alpha_max(&TheoryInputs { omega: w, ..*tc }))
        })
        .fold((f64::NAN, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });

    let beta_ok = tc.beta1 * tc.beta1 / (tc.omega * (1.0 - tc.beta1).powi(2)) <= tc.alpha * tc.alpha;
    let reason = if !(tc.alpha > 0.0) {
        Some("stepsize must be positive".to_string())
    } else if !(tc.alpha < amax) {
        Some(format!("alpha = {:e} is not below alpha_max = {:e}", tc.alpha, amax))
    } else if !beta_ok {
        Some(format!("beta1 = {} exceeds beta1_max = {:e} for omega = {}", tc.beta1, b1max, tc.omega))
    } else {
        None
    };
    Feasibility { feasible: reason.is_none(), alpha_max: amax, beta1_max: b1max, best_omega, best_alpha_max, reason }
}

/// The two parts of the explicit bound on `(1/T) Σ_t gap(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapBound {
    /// Bound on `(1/T) Σ ‖∇f(x̄_t)‖²`.
    pub gradient_term: f64,
    /// Bound on `(1/(nT)) Σ ‖x_t − x̃_t‖²`.
    pub consensus_term: f64,
    pub total: f64,
}

/// Explicit finite-`T` bound on the time-averaged optimality gap, with
/// `f_gap = f(x̄₁) − f*`.
pub fn predicted_gap_bound(tc: &TheoryInputs, iterations: usize, f_gap: f64) -> Result<GapBound> {
    let n2p = compute_n2_prime(tc);
    let den = tc.alpha * (1.0 / tc.v_max.sqrt() - tc.alpha * n2p);
    if !(den > 0.0) {
        return Err(Error::InfeasibleConfig(format!(
            "alpha (v_max^-1/2 - alpha N2') = {den:e} is not positive"
        )));
    }
    let NConstants { n2, n3, n4, .. } = compute_n(tc);
    let (n3p, n4p) = compute_n34_prime(tc);
    let t = iterations as f64;
    let n = tc.n as f64;
    let delta = tc.delta();
    let sigma2 = tc.sigma * tc.sigma;
    let r = tc.one_minus_rho2();
    let k = tc.alpha * tc.alpha / tc.v_min / (r * r);

    let gradient_term = (f_gap + n4p * delta) / (t * den) + n3p * sigma2 / den;
    let consensus_term = 80.0 * n2 * k / den * f_gap / t
        + (80.0 * k * (n2 * n4p / den + n4 / n) + 2.0 / (n * r)) * delta / t
        + 40.0 * k * (2.0 * n2 * n3p / den + 2.0 * n3) * sigma2;
    Ok(GapBound { gradient_term, consensus_term, total: gradient_term + consensus_term })
}
