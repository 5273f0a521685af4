use nalgebra::DVector;

use super::state::{NetworkState, NodeState, NoiseStreams};
use super::AlgoParams;
use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::topology::MixingMatrix;

/// Elementwise `max(min(v, v_max), v_min)`.
pub fn clip_elementwise(v: &DVector<f64>, v_min: f64, v_max: f64) -> DVector<f64> {
    debug_assert!(v_min <= v_max);
    v.map(|c| c.min(v_max).max(v_min))
}

/// `100 α / (100 + √t)`.
pub fn diminishing_stepsize(alpha: f64, t: usize) -> f64 {
    100.0 * alpha / (100.0 + (t as f64).sqrt())
}

fn check_inputs(problem: &dyn Problem, x_init: &[DVector<f64>], streams: &NoiseStreams) -> Result<()> {
    let (n, d) = (problem.nodes(), problem.dim());
    if x_init.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x_init.len() });
    }
    if streams.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: streams.len() });
    }
    if let Some(bad) = x_init.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    Ok(())
}

fn check_step(state: &NetworkState, a: &MixingMatrix, problem: &dyn Problem) -> Result<()> {
    if a.n() != state.n() || problem.nodes() != state.n() {
        return Err(Error::DimensionMismatch { expected: state.n(), got: a.n() });
    }
    if state.dim() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: state.dim() });
    }
    Ok(())
}

fn sample_all(problem: &dyn Problem, xs: &[DVector<f64>], streams: &mut NoiseStreams) -> Result<Vec<DVector<f64>>> {
    xs.iter().enumerate().map(|(i, x)| problem.stochastic_grad(i, x, streams.node(i))).collect()
}

/// `Σ_j A_ij field_j` over the current state.
fn mix(a: &MixingMatrix, state: &NetworkState, i: usize, field: impl Fn(&NodeState) -> &DVector<f64>) -> DVector<f64> {
    let mut acc = DVector::zeros(state.dim());
    for (j, node) in state.nodes.iter().enumerate() {
        let w = a.get(i, j);
        if w != 0.0 {
            acc.axpy(w, field(node), 1.0);
        }
    }
    acc
}

/// `α v^{-1/2} ⊙ m`, with `0/0` read as zero so an unclipped zero `v` paired
/// with zero momentum gives no step.
fn scaled_step(alpha: f64, v: &DVector<f64>, m: &DVector<f64>) -> DVector<f64> {
    m.zip_map(v, |mj, vj| if mj == 0.0 { 0.0 } else { alpha * mj / vj.sqrt() })
}

fn finish(next: NetworkState) -> Result<NetworkState> {
    next.check_finite()?;
    Ok(next)
}

/// Samples `g₁` at `x₁` and sets `s₁ = g₁`, `m₁ = 0`,
/// `v₁ = Clip(s₁ ⊙ s₁)` (unclipped when `params.clip_init` is false).
pub fn gt_adaptive_init(
    problem: &dyn Problem,
    params: &AlgoParams,
    x_init: &[DVector<f64>],
    streams: &mut NoiseStreams,
) -> Result<NetworkState> {
    check_inputs(problem, x_init, streams)?;
    let gs = sample_all(problem, x_init, streams)?;
    let nodes = x_init
        .iter()
        .zip(gs)
        .map(|(x, g)| {
            let sq = g.component_mul(&g);
            let v = if params.clip_init { clip_elementwise(&sq, params.v_min, params.v_max) } else { sq };
            NodeState { x: x.clone(), m: DVector::zeros(x.len()), v, s: g.clone(), g }
        })
        .collect();
    finish(NetworkState { t: 1, nodes })
}

/// Initialization for the non-adaptive baselines: `g₁` sampled, `s₁ = g₁`,
/// `m₁ = 0`, `v₁ = 0`.
pub fn plain_init(problem: &dyn Problem, x_init: &[DVector<f64>], streams: &mut NoiseStreams) -> Result<NetworkState> {
    check_inputs(problem, x_init, streams)?;
    let gs = sample_all(problem, x_init, streams)?;
    let nodes = x_init
        .iter()
        .zip(gs)
        .map(|(x, g)| NodeState {
            x: x.clone(),
            m: DVector::zeros(x.len()),
            v: DVector::zeros(x.len()),
            s: g.clone(),
            g,
        })
        .collect();
    finish(NetworkState { t: 1, nodes })
}

/// Same as [`gt_adaptive_init`]; the adaptive vector is built from `g`.
pub fn adaptive_diminishing_init(
    problem: &dyn Problem,
    params: &AlgoParams,
    x_init: &[DVector<f64>],
    streams: &mut NoiseStreams,
) -> Result<NetworkState> {
    gt_adaptive_init(problem, params, x_init, streams)
}

/// Draws `g⁺` at each new iterate and assembles the next state.
#[allow(clippy::too_many_arguments)]
fn complete(
    state: &NetworkState,
    a: &MixingMatrix,
    problem: &dyn Problem,
    xs: Vec<DVector<f64>>,
    ms: Vec<DVector<f64>>,
    vs: Vec<DVector<f64>>,
    track: bool,
    streams: &mut NoiseStreams,
) -> Result<NetworkState> {
    let gs = sample_all(problem, &xs, streams)?;
    let nodes = xs
        .into_iter()
        .zip(ms)
        .zip(vs)
        .zip(gs)
        .enumerate()
        .map(|(i, (((x, m), v), g))| {
            let s = if track { mix(a, state, i, |n| &n.s) + &g - &state.nodes[i].g } else { g.clone() };
            NodeState { x, m, v, s, g }
        })
        .collect();
    finish(NetworkState { t: state.t + 1, nodes })
}

/// One synchronous iteration of the gradient-tracking adaptive method:
///
/// ```text
/// m⁺ = β₁ m + (1−β₁) s
/// v⁺ = Clip(β₂ v + (1−β₂) s⊙s)
/// x⁺ = Σ_j A_ij x_j − α (v⁺)^{-1/2} ⊙ m⁺
/// s⁺ = Σ_j A_ij s_j + g(x⁺) − g
/// ```
pub fn gt_adaptive_step(
    state: &NetworkState,
    a: &MixingMatrix,
    problem: &dyn Problem,
    params: &AlgoParams,
    streams: &mut NoiseStreams,
) -> Result<NetworkState> {
    check_step(state, a, problem)?;
    let (b1, b2) = (params.beta1, params.beta2);
    let mut xs = Vec::with_capacity(state.n());
    let mut ms = Vec::with_capacity(state.n());
    let mut vs = Vec::with_capacity(state.n());
    for (i, node) in state.nodes.iter().enumerate() {
        let m = &node.m * b1 + &node.s * (1.0 - b1);
        let v_hat = &node.v * b2 + node.s.component_mul(&node.s) * (1.0 - b2);
        let v = clip_elementwise(&v_hat, params.v_min, params.v_max);
        xs.push(mix(a, state, i, |n| &n.x) - scaled_step(params.alpha, &v, &m));
        ms.push(m);
        vs.push(v);
    }
    complete(state, a, problem, xs, ms, vs, true, streams)
}

/// `x⁺ = Σ_j A_ij x_j − α g`.
pub fn dsgd_step(
    state: &NetworkState,
    a: &MixingMatrix,
    problem: &dyn Problem,
    alpha: f64,
    streams: &mut NoiseStreams,
) -> Result<NetworkState> {
    check_step(state, a, problem)?;
    let xs = (0..state.n()).map(|i| mix(a, state, i, |n| &n.x) - &state.nodes[i].g * alpha).collect();
    let zeros = vec![DVector::zeros(state.dim()); state.n()];
    complete(state, a, problem, xs, zeros.clone(), zeros, false, streams)
}

/// `x⁺ = Σ_j A_ij x_j − α s`, followed by the tracking update of `s`.
pub fn gt_step(
    state: &NetworkState,
    a: &MixingMatrix,
    problem: &dyn Problem,
    alpha: f64,
    streams: &mut NoiseStreams,
) -> Result<NetworkState> {
    check_step(state, a, problem)?;
    let xs = (0..state.n()).map(|i| mix(a, state, i, |n| &n.x) - &state.nodes[i].s * alpha).collect();
    let zeros = vec![DVector::zeros(state.dim()); state.n()];
    complete(state, a, problem, xs, zeros.clone(), zeros, true, streams)
}

/// `m⁺ = β₁ m + (1−β₁) g`, `x⁺ = Σ_j A_ij x_j − α m⁺`.
pub fn momentum_dsgd_step(
    state: &NetworkState,
    a: &MixingMatrix,
    problem: &dyn Problem,
    alpha: f64,
    beta1: f64,
    streams: &mut NoiseStreams,
) -> Result<NetworkState> {
    check_step(state, a, problem)?;
    let ms: Vec<_> = state.nodes.iter().map(|n| &n.m * beta1 + &n.g * (1.0 - beta1)).collect();
    let xs = ms.iter().enumerate().map(|(i, m)| mix(a, state, i, |n| &n.x) - m * alpha).collect();
    let zeros = vec![DVector::zeros(state.dim()); state.n()];
    complete(state, a, problem, xs, ms, zeros, false, streams)
}

/// Local clipped adaptive-momentum update driven by `g` (no tracking) with
/// stepsize `100α/(100 + √t)`.
pub fn adaptive_diminishing_step(
    state: &NetworkState,
    a: &MixingMatrix,
    problem: &dyn Problem,
    params: &AlgoParams,
    streams: &mut NoiseStreams,
) -> Result<NetworkState> {
    check_step(state, a, problem)?;
    let alpha_t = diminishing_stepsize(params.alpha, state.t);
    let (b1, b2) = (params.beta1, params.beta2);
    let mut xs = Vec::with_capacity(state.n());
    let mut ms = Vec::with_capacity(state.n());
    let mut vs = Vec::with_capacity(state.n());
    for (i, node) in state.nodes.iter().enumerate() {
        let m = &node.m * b1 + &node.g * (1.0 - b1);
        let v_hat = &node.v * b2 + node.g.component_mul(&node.g) * (1.0 - b2);
        let v = clip_elementwise(&v_hat, params.v_min, params.v_max);
        xs.push(mix(a, state, i, |n| &n.x) - scaled_step(alpha_t, &v, &m));
        ms.push(m);
        vs.push(v);
    }
    complete(state, a, problem, xs, ms, vs, false, streams)
}
