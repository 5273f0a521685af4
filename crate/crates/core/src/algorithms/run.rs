use nalgebra::DVector;
use rand::Rng;

use super::state::{NetworkState, NoiseStreams, StreamPolicy};
use super::steps::*;
use super::{AlgoParams, Method};
use crate::error::{Error, Result};
use crate::metrics::{record_state, RunHistory};
use crate::problems::Problem;
use crate::rng::{self, Purpose};
use crate::topology::MixingMatrix;

/// Starting points `x₁`.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum XInit {
    #[default]
    Zeros,
    /// Coordinates uniform in `[-scale, scale]`, from `stream(seed, i, Init)`.
    Uniform { scale: f64 },
    Explicit(Vec<DVector<f64>>),
}

impl XInit {
    pub fn build(&self, n: usize, d: usize, seed: u64) -> Vec<DVector<f64>> {
        match self {
            XInit::Zeros => vec![DVector::zeros(d); n],
            XInit::Uniform { scale } => (0..n)
                .map(|i| {
                    let mut r = rng::stream(seed, i as u64, Purpose::Init);
                    DVector::from_fn(d, |_, _| r.random_range(-1.0..=1.0) * scale)
                })
                .collect(),
            XInit::Explicit(xs) => xs.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub x_init: XInit,
    /// Keep a full state every `cadence` iterations (0 = never). The final
    /// state `T + 1` is kept whenever cadence is nonzero.
    pub snapshot_cadence: usize,
    pub stream_policy: StreamPolicy,
}

impl RunOptions {
    pub fn with_snapshots(mut self, cadence: usize) -> Self {
        self.snapshot_cadence = cadence;
        self
    }

    pub fn with_x_init(mut self, x_init: XInit) -> Self {
        self.x_init = x_init;
        self
    }

    pub fn with_stream_policy(mut self, policy: StreamPolicy) -> Self {
        self.stream_policy = policy;
        self
    }
}

/// Initializes and performs `T` iterations, recording metrics at `t = 1..=T`
/// (each taken before the step from `t`).
pub fn run(
    method: Method,
    problem: &dyn Problem,
    a: &MixingMatrix,
    params: &AlgoParams,
    iterations: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunHistory> {
    run_with_observer(method, problem, a, params, iterations, seed, opts, &mut |_| {})
}

/// [`run`] that also hands every state `t = 1..=T+1` to `observer`.
#[allow(clippy::too_many_arguments)]
pub fn run_with_observer(
    method: Method,
    problem: &dyn Problem,
    a: &MixingMatrix,
    params: &AlgoParams,
    iterations: usize,
    seed: u64,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&NetworkState),
) -> Result<RunHistory> {
    params.validate()?;
    if iterations == 0 {
        return Err(Error::Validation("iteration count T must be at least 1".into()));
    }
    let (n, d) = (problem.nodes(), problem.dim());
    if a.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.n() });
    }
    let wrap = |t: usize| move |e: Error| Error::Run { method: method.id().to_string(), t, source: Box::new(e) };

    let x_init = opts.x_init.build(n, d, seed);
    let mut streams = NoiseStreams::new(seed, n, opts.stream_policy);
    let mut state = match method {
        Method::GtAdaptive => gt_adaptive_init(problem, params, &x_init, &mut streams),
        Method::AdaptiveDiminishing => adaptive_diminishing_init(problem, params, &x_init, &mut streams),
        Method::Dsgd | Method::Gt | Method::MomentumDsgd => plain_init(problem, &x_init, &mut streams),
    }
    .map_err(wrap(1))?;

    let mut history = RunHistory::new(method, seed);
    let keep = |t: usize| opts.snapshot_cadence > 0 && (t - 1).is_multiple_of(opts.snapshot_cadence);
    for _ in 0..iterations {
        history.records.push(record_state(&state, problem));
        if keep(state.t) {
            history.snapshots.push(state.clone());
        }
        observer(&state);
        let t = state.t;
        state = match method {
            Method::GtAdaptive => gt_adaptive_step(&state, a, problem, params, &mut streams),
            Method::Dsgd => dsgd_step(&state, a, problem, params.alpha, &mut streams),
            Method::Gt => gt_step(&state, a, problem, params.alpha, &mut streams),
            Method::MomentumDsgd => momentum_dsgd_step(&state, a, problem, params.alpha, params.beta1, &mut streams),
            Method::AdaptiveDiminishing => adaptive_diminishing_step(&state, a, problem, params, &mut streams),
        }
        .map_err(wrap(t))?;
    }
    observer(&state);
    if opts.snapshot_cadence > 0 {
        history.snapshots.push(state.clone());
    }
    history.final_state = Some(state);
    Ok(history)
}
