//! Evaluation quantities and checks on recorded runs.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::algorithms::{AlgoParams, Method, NetworkState};
use crate::error::{Error, Result};
use crate::problems::Problem;

pub const CSV_HEADER: &str = "seed,t,loss,grad_norm_sq,consensus_x,consensus_s,consensus_m,consensus_v,gap";

/// Metrics of one network state, all evaluated with deterministic gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// `f(x̄)`.
    pub loss: f64,
    /// `‖∇f(x̄)‖²`.
    pub grad_norm_sq: f64,
    pub consensus_x: f64,
    pub consensus_s: f64,
    pub consensus_m: f64,
    pub consensus_v: f64,
    /// `grad_norm_sq + consensus_x / n`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub method: Method,
    pub config_digest: String,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub snapshots: Vec<NetworkState>,
    pub final_state: Option<NetworkState>,
}

impl RunHistory {
    pub fn new(method: Method, seed: u64) -> Self {
        RunHistory {
            method,
            config_digest: String::new(),
            seed,
            records: Vec::new(),
            snapshots: Vec::new(),
            final_state: None,
        }
    }

    pub fn snapshot(&self, t: usize) -> Option<&NetworkState> {
        // Snapshots are stored in increasing t.
        self.snapshots.binary_search_by_key(&t, |s| s.t).ok().map(|k| &self.snapshots[k])
    }

    fn require(&self, t: usize) -> Result<&NetworkState> {
        self.snapshot(t).ok_or(Error::SnapshotMissing { t })
    }

    /// Largest `T` such that snapshots `1..=T` are all present.
    fn contiguous_span(&self) -> Result<usize> {
        self.require(1)?;
        let mut t = 1;
        while self.snapshot(t + 1).is_some() {
            t += 1;
        }
        Ok(t)
    }

    /// CSV with a `# config_digest=` comment line, the header and one row per record.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# config_digest={}\n{CSV_HEADER}\n", self.config_digest);
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.seed,
                r.t,
                r.loss,
                r.grad_norm_sq,
                r.consensus_x,
                r.consensus_s,
                r.consensus_m,
                r.consensus_v,
                r.gap
            );
        }
        out
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

pub fn mean_vector(rows: &[DVector<f64>]) -> DVector<f64> {
    assert!(!rows.is_empty(), "mean of an empty set of vectors");
    let mut acc = DVector::zeros(rows[0].len());
    for r in rows {
        acc += r;
    }
    acc / rows.len() as f64
}

/// `Σ_i ‖ζ_i − ζ̄‖²`.
pub fn consensus_error(rows: &[DVector<f64>]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mean = mean_vector(rows);
    rows.iter().map(|r| (r - &mean).norm_squared()).sum()
}

/// `‖∇f(x̄)‖² + (1/n) Σ_i ‖x_i − x̄‖²`.
pub fn optimality_gap(xs: &[DVector<f64>], problem: &dyn Problem) -> f64 {
    let mean = mean_vector(xs);
    problem.global_grad(&mean).norm_squared() + consensus_error(xs) / xs.len() as f64
}

/// `z_1 = x_1`; for `t ≥ 2`, `z_t = (x_t − β₁ x_{t−1}) / (1 − β₁)`.
pub fn z_sequence(
    x_t: &[DVector<f64>],
    x_prev: Option<&[DVector<f64>]>,
    beta1: f64,
    t: usize,
) -> Result<Vec<DVector<f64>>> {
    if t <= 1 {
        return Ok(x_t.to_vec());
    }
    let prev = x_prev.ok_or(Error::MissingPrevious)?;
    if prev.len() != x_t.len() {
        return Err(Error::DimensionMismatch { expected: x_t.len(), got: prev.len() });
    }
    Ok(x_t.iter().zip(prev).map(|(x, p)| (x - p * beta1) / (1.0 - beta1)).collect())
}

pub fn record_state(state: &NetworkState, problem: &dyn Problem) -> IterationRecord {
    let xs = state.xs();
    let mean = mean_vector(&xs);
    let grad_norm_sq = problem.global_grad(&mean).norm_squared();
    let consensus_x = consensus_error(&xs);
    IterationRecord {
        t: state.t,
        loss: problem.global_loss(&mean),
        grad_norm_sq,
        consensus_x,
        consensus_s: consensus_error(&state.collect(|n| &n.s)),
        consensus_m: consensus_error(&state.collect(|n| &n.m)),
        consensus_v: consensus_error(&state.collect(|n| &n.v)),
        gap: grad_norm_sq + consensus_x / state.n() as f64,
    }
}

/// `(1/n) Σ_i f(i)`.
fn node_mean(state: &NetworkState, f: impl Fn(usize) -> DVector<f64>) -> DVector<f64> {
    let mut acc = DVector::zeros(state.dim());
    for i in 0..state.n() {
        acc += f(i);
    }
    acc / state.n() as f64
}

/// `m / √v` with `0/0 = 0`.
fn scaled(m: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    m.zip_map(v, |mj, vj| if mj == 0.0 { 0.0 } else { mj / vj.sqrt() })
}

fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

/// Largest max-norm violation of each exact relation between the averaged
/// sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasicRelationsReport {
    /// `s̄_t = ḡ_t`.
    pub a: f64,
    /// `x̄_{t+1} − x̄_t = −(α/n) Σ v_{t+1}^{-1/2} ⊙ (β₁ m_t + (1−β₁) s_t)`.
    pub b: f64,
    /// `z̄_{t+1} − z̄_t = −(β₁/(1−β₁))(α/n) Σ (v_{t+1}^{-1/2} − v_t^{-1/2}) ⊙ m_t − (α/n) Σ v_{t+1}^{-1/2} ⊙ s_t`.
    pub c: f64,
    /// `z̄_t − x̄_t = −(β₁/(1−β₁))(α/n) Σ v_t^{-1/2} ⊙ m_t`.
    pub d: f64,
    /// `z̄_t − x̄_t = (β₁/(1−β₁))(x̄_t − x̄_{t−1})`.
    pub telescoping: f64,
    /// Number of iterations checked.
    pub iterations: usize,
}

impl BasicRelationsReport {
    pub fn max_violation(&self) -> f64 {
        self.a.max(self.b).max(self.c).max(self.d).max(self.telescoping)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

/// Checks the exact averaged-sequence relations of the gradient-tracking
/// adaptive method on every consecutive pair of snapshots. Needs snapshot
/// cadence 1 (the final state included).
pub fn verify_basic_relations(history: &RunHistory, params: &AlgoParams) -> Result<BasicRelationsReport> {
    let last = history.contiguous_span()?;
    if last < 2 {
        return Err(Error::SnapshotMissing { t: 2 });
    }
    let (alpha, b1) = (params.alpha, params.beta1);
    let k = b1 / (1.0 - b1);
    let mut rep = BasicRelationsReport { a: 0.0, b: 0.0, c: 0.0, d: 0.0, telescoping: 0.0, iterations: 0 };
    let mut z_prev: Option<DVector<f64>> = None;
    let zbar = |t: usize| -> Result<DVector<f64>> {
        let cur = history.require(t)?.xs();
        let prev = if t > 1 { Some(history.require(t - 1)?.xs()) } else { None };
        Ok(mean_vector(&z_sequence(&cur, prev.as_deref(), b1, t)?))
    };
    for t in 1..=last {
        let st = history.require(t)?;
        let xbar = mean_vector(&st.xs());
        let sbar = node_mean(st, |i| st.nodes[i].s.clone());
        let gbar = node_mean(st, |i| st.nodes[i].g.clone());
        rep.a = rep.a.max(max_abs_diff(&sbar, &gbar));

        let z_t = match z_prev.take() {
            Some(z) => z,
            None => zbar(t)?,
        };
        let d_rhs = node_mean(st, |i| scaled(&st.nodes[i].m, &st.nodes[i].v)) * (-k * alpha);
        rep.d = rep.d.max(max_abs_diff(&(&z_t - &xbar), &d_rhs));
        if t > 1 {
            let xbar_prev = mean_vector(&history.require(t - 1)?.xs());
            rep.telescoping = rep.telescoping.max(max_abs_diff(&(&z_t - &xbar), &((&xbar - xbar_prev) * k)));
        }

        if t < last {
            let nx = history.require(t + 1)?;
            let xbar_next = mean_vector(&nx.xs());
            let b_rhs = node_mean(st, |i| {
                let drive = &st.nodes[i].m * b1 + &st.nodes[i].s * (1.0 - b1);
                scaled(&drive, &nx.nodes[i].v)
            }) * (-alpha);
            rep.b = rep.b.max(max_abs_diff(&(&xbar_next - &xbar), &b_rhs));

            let z_next = zbar(t + 1)?;
            let c_rhs = node_mean(st, |i| {
                let (m, s) = (&st.nodes[i].m, &st.nodes[i].s);
                (scaled(m, &nx.nodes[i].v) - scaled(m, &st.nodes[i].v)) * (-k * alpha) - scaled(s, &nx.nodes[i].v) * alpha
            });
            rep.c = rep.c.max(max_abs_diff(&(&z_next - &z_t), &c_rhs));
            z_prev = Some(z_next);
            rep.iterations += 1;
        }
    }
    Ok(rep)
}

/// Inputs of the summed consensus-error inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaInputs {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub v_min: f64,
    /// Bound on every coordinate of every stochastic gradient.
    pub g_bound: f64,
    pub rho_a: f64,
}

impl LemmaInputs {
    pub fn new(params: &AlgoParams, g_bound: f64, rho_a: f64) -> Self {
        LemmaInputs {
            alpha: params.alpha,
            beta1: params.beta1,
            beta2: params.beta2,
            v_min: params.v_min,
            g_bound,
            rho_a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
}

impl Inequality {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaReport {
    /// `Σ‖m − m̃‖² ≤ 4 Σ‖s − s̃‖²`.
    pub momentum: Inequality,
    /// Largest excess of `‖m_{t+1} − m̃_{t+1}‖` over `β₁‖m_t − m̃_t‖ + (1−β₁)‖s_t − s̃_t‖`.
    pub momentum_recursion: f64,
    /// `Σ‖x − x̃‖² ≤ 40α²/(v_min(1−ρ²)²) Σ‖s − s̃‖² + 2Δ₁/(1−ρ²)`.
    pub estimate: Inequality,
    /// `Σ‖v − ṽ‖² ≤ 36G²/(1−ρ)² Σ‖s − s̃‖² + 2Δ₂/(1−β₂²)`.
    pub adaptive: Inequality,
    pub delta1: f64,
    pub delta2: f64,
    pub iterations: usize,
}

impl LemmaReport {
    pub fn passes(&self, slack: f64) -> bool {
        self.momentum.holds(slack) && self.momentum_recursion <= slack && self.estimate.holds(slack) && self.adaptive.holds(slack)
    }
}

/// Path-wise check of the three summed consensus inequalities over the
/// contiguous snapshots `t = 1..=T`.
pub fn verify_lemma_inequalities(history: &RunHistory, inputs: &LemmaInputs) -> Result<LemmaReport> {
    let last = history.contiguous_span()?;
    let mut sum_m = 0.0;
    let mut sum_s = 0.0;
    let mut sum_x = 0.0;
    let mut sum_v = 0.0;
    let mut recursion: f64 = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for t in 1..=last {
        let st = history.require(t)?;
        let cm = consensus_error(&st.collect(|n| &n.m));
        let cs = consensus_error(&st.collect(|n| &n.s));
        sum_m += cm;
        sum_s += cs;
        sum_x += consensus_error(&st.xs());
        sum_v += consensus_error(&st.collect(|n| &n.v));
        if let Some((pm, ps)) = prev {
            let bound = inputs.beta1 * pm.sqrt() + (1.0 - inputs.beta1) * ps.sqrt();
            recursion = recursion.max(cm.sqrt() - bound);
        }
        prev = Some((cm, cs));
    }
    let first = history.require(1)?;
    let delta1 = consensus_error(&first.xs());
    let delta2 = consensus_error(&first.collect(|n| &n.v));
    let rho2 = 1.0 - inputs.rho_a * inputs.rho_a;
    Ok(LemmaReport {
        momentum: Inequality { lhs: sum_m, rhs: 4.0 * sum_s },
        momentum_recursion: recursion.max(0.0),
        estimate: Inequality {
            lhs: sum_x,
            rhs: 40.0 * inputs.alpha * inputs.alpha / (inputs.v_min * rho2 * rho2) * sum_s + 2.0 / rho2 * delta1,
        },
        adaptive: Inequality {
            lhs: sum_v,
            rhs: 36.0 * inputs.g_bound * inputs.g_bound / (1.0 - inputs.rho_a).powi(2) * sum_s
                + 2.0 / (1.0 - inputs.beta2 * inputs.beta2) * delta2,
        },
        delta1,
        delta2,
        iterations: last,
    })
}
