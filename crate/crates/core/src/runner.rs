//! Config-driven experiments: build the graph and problem, run every
//! (algorithm, seed) pair, aggregate across seeds and write CSV/JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{self, AlgoParams, Method, RunOptions, XInit};
use crate::error::{Error, Result};
use crate::metrics::{verify_basic_relations, verify_lemma_inequalities, BasicRelationsReport, IterationRecord, LemmaInputs, LemmaReport, RunHistory};
use crate::problems::{Problem, ProblemSpec};
use crate::theory::{predicted_gap_bound, stepsize_feasible, Feasibility, GapBound, TheoryConstants, TheoryInputs};
use crate::topology::{generate_erdos_renyi, metropolis_weights, Graph, MixingMatrix};

/// Tolerance of the exact relations and slack of the path-wise inequalities.
pub const VERIFY_TOL: f64 = 1e-9;
/// Iterations of the instrumented verification run.
pub const VERIFY_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    ErdosRenyi {
        n: usize,
        p: f64,
        #[serde(default)]
        seed: u64,
    },
    Path {
        n: usize,
    },
    Complete {
        n: usize,
    },
}

impl GraphSpec {
    pub fn n(&self) -> usize {
        match *self {
            GraphSpec::ErdosRenyi { n, .. } | GraphSpec::Path { n } | GraphSpec::Complete { n } => n,
        }
    }

    pub fn build(&self) -> Result<Graph> {
        match *self {
            GraphSpec::ErdosRenyi { n, p, seed } => generate_erdos_renyi(n, p, seed),
            GraphSpec::Path { n } => Graph::path(n),
            GraphSpec::Complete { n } => Graph::complete(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub id: Method,
    pub alpha: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_true")]
    pub clip_init: bool,
}

impl AlgorithmSpec {
    pub fn params(&self) -> AlgoParams {
        AlgoParams {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            v_min: self.v_min,
            v_max: self.v_max,
            clip_init: self.clip_init,
        }
    }
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_v_min() -> f64 {
    1e-8
}
fn default_v_max() -> f64 {
    100.0
}
fn default_true() -> bool {
    true
}
fn default_one() -> usize {
    1
}
fn default_omega() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub iterations: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_one")]
    pub batch_size: usize,
    /// 0 keeps no snapshots.
    #[serde(default)]
    pub snapshot_cadence: usize,
    /// Starting points uniform in `[-s, s]^d`; zeros when absent.
    #[serde(default)]
    pub x_init_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub emit_summary: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { directory: None, emit_summary: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySpec {
    #[serde(default = "default_omega")]
    pub omega: f64,
}

impl Default for TheorySpec {
    fn default() -> Self {
        TheorySpec { omega: default_omega() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub problem: ProblemSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub theory: TheorySpec,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.graph.n() == 0 {
            return bad("graph must have at least one node".into());
        }
        if let GraphSpec::ErdosRenyi { p, .. } = self.graph {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("edge probability p = {p} outside [0, 1]"));
            }
        }
        if self.run.iterations == 0 {
            return bad("run.iterations must be at least 1".into());
        }
        if self.run.seeds.is_empty() {
            return bad("run.seeds must list at least one seed".into());
        }
        if self.run.batch_size == 0 {
            return bad("run.batch_size must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("at least one [[algorithms]] entry is required".into());
        }
        for a in &self.algorithms {
            a.params().validate().map_err(|e| Error::Validation(format!("algorithm {}: {}", a.id, e)))?;
        }
        if !(self.theory.omega > 0.0) {
            return bad(format!("theory.omega must be positive, got {}", self.theory.omega));
        }
        if let Some(s) = self.run.x_init_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("run.x_init_scale must be finite and nonnegative, got {s}"));
            }
        }
        Ok(())
    }

    /// SHA-256 over the config without its output section.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn x_init(&self) -> XInit {
        match self.run.x_init_scale {
            Some(scale) if scale > 0.0 => XInit::Uniform { scale },
            _ => XInit::Zeros,
        }
    }

    pub fn mixing_matrix(&self) -> Result<MixingMatrix> {
        metropolis_weights(&self.graph.build()?)
    }

    pub fn build_problem(&self) -> Result<Box<dyn Problem>> {
        self.problem.build(self.graph.n(), self.run.batch_size)
    }
}

fn toml_error(location: &str, text: &str, e: toml::de::Error) -> Error {
    let location = match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("{location}:{line}")
        }
        None => location.to_string(),
    };
    Error::Parse { location, message: e.message().to_string() }
}

pub fn parse_config_str(text: &str, location: &str) -> Result<ExperimentConfig> {
    parse_with_overrides(text, location, &[])
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    load_config(path, &[])
}

/// Reads a config and applies dotted `key=value` overrides before validation.
pub fn load_config(path: impl AsRef<Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_with_overrides(&text, &path.display().to_string(), overrides)?;
    // Dataset paths are relative to the config file.
    if let ProblemSpec::LogisticGm { dataset, .. } = &mut cfg.problem {
        if dataset.is_relative() {
            if let Some(dir) = path.parent() {
                *dataset = dir.join(&*dataset);
            }
        }
    }
    Ok(cfg)
}

pub fn parse_with_overrides(text: &str, location: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(location, text, e))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: ExperimentConfig = if overrides.is_empty() {
        toml::from_str(text).map_err(|e| toml_error(location, text, e))?
    } else {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse { location: location.to_string(), message: e.message().to_string() })?
    };
    cfg.validate()?;
    Ok(cfg)
}

/// `a.b.c=value`; numeric segments index arrays (`algorithms.0.alpha=0.1`).
/// The value is read as a TOML literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let bad = |m: &str| Error::Parse { location: format!("override `{assignment}`"), message: m.to_string() };
    let (key, raw) = assignment.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let mut cur: &mut toml::Value = table
        .entry(parts[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    for part in &parts[1..] {
        cur = match cur {
            toml::Value::Table(t) => t.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let k: usize = part.parse().map_err(|_| bad("array segments must be indices"))?;
                a.get_mut(k).ok_or_else(|| bad("array index out of range"))?
            }
            _ => return Err(bad("cannot descend into a scalar")),
        };
    }
    *cur = value;
    Ok(())
}

/// Per-iteration mean, min and max of every record column across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateSeries {
    pub method: Method,
    pub t: Vec<usize>,
    pub columns: BTreeMap<&'static str, Envelope>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub const METRIC_COLUMNS: [&str; 7] =
    ["loss", "grad_norm_sq", "consensus_x", "consensus_s", "consensus_m", "consensus_v", "gap"];

fn column(r: &IterationRecord, name: &str) -> f64 {
    match name {
        "loss" => r.loss,
        "grad_norm_sq" => r.grad_norm_sq,
        "consensus_x" => r.consensus_x,
        "consensus_s" => r.consensus_s,
        "consensus_m" => r.consensus_m,
        "consensus_v" => r.consensus_v,
        "gap" => r.gap,
        _ => unreachable!("unknown column {name}"),
    }
}

impl AggregateSeries {
    /// Aggregates histories of equal length. Returns `None` when empty.
    pub fn from_histories(method: Method, runs: &[&RunHistory]) -> Option<Self> {
        let first = runs.first()?;
        let len = runs.iter().map(|h| h.records.len()).min().unwrap_or(0);
        let t = first.records[..len].iter().map(|r| r.t).collect();
        let columns = METRIC_COLUMNS
            .iter()
            .map(|&name| {
                let mut env = Envelope { mean: Vec::with_capacity(len), min: Vec::with_capacity(len), max: Vec::with_capacity(len) };
                for k in 0..len {
                    let vals = runs.iter().map(|h| column(&h.records[k], name));
                    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
                    for v in vals {
                        lo = lo.min(v);
                        hi = hi.max(v);
                        sum += v;
                    }
                    // Clamp so rounding in the sum cannot push the mean outside the envelope.
                    env.mean.push((sum / runs.len() as f64).clamp(lo, hi));
                    env.min.push(lo);
                    env.max.push(hi);
                }
                (name, env)
            })
            .collect();
        Some(AggregateSeries { method, t, columns })
    }

    pub fn final_mean(&self, name: &str) -> Option<f64> {
        self.columns.get(name).and_then(|e| e.mean.last().copied())
    }

    pub fn to_csv(&self, digest: &str) -> String {
        let mut out = format!("# config_digest={digest}\nt");
        for name in METRIC_COLUMNS {
            let _ = write!(out, ",{name}_mean,{name}_min,{name}_max");
        }
        out.push('\n');
        for (k, t) in self.t.iter().enumerate() {
            let _ = write!(out, "{t}");
            for name in METRIC_COLUMNS {
                let e = &self.columns[name];
                let _ = write!(out, ",{:.16e},{:.16e},{:.16e}", e.mean[k], e.min[k], e.max[k]);
            }
            out.push('\n');
        }
        out
    }
}

/// Outcome of one (algorithm, seed) pair.
#[derive(Debug)]
pub struct RunOutcome {
    pub algorithm: usize,
    pub method: Method,
    pub seed: u64,
    pub result: Result<RunHistory>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_gap: Option<f64>,
    pub final_loss: Option<f64>,
    pub mean_gap: Option<f64>,
    pub gap_bound: Option<GapBound>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub id: Method,
    pub params: AlgoParams,
    pub final_gap_mean: Option<f64>,
    pub final_loss_mean: Option<f64>,
    pub seeds: Vec<SeedSummary>,
    pub theory: Option<TheoryConstants>,
    pub feasibility: Option<Feasibility>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub config_digest: String,
    pub nodes: usize,
    pub dim: usize,
    pub edges: usize,
    pub rho_a: f64,
    pub smoothness: f64,
    pub gradient_bound: Option<f64>,
    pub noise_bound: Option<f64>,
    pub lower_bound: f64,
    pub iterations: usize,
    pub algorithms: Vec<AlgorithmSummary>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunOutcome>,
    pub aggregates: Vec<AggregateSeries>,
    pub summary: ExperimentSummary,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(|r| r.result.is_err())
    }

    pub fn aggregate(&self, method: Method) -> Option<&AggregateSeries> {
        self.aggregates.iter().find(|a| a.method == method)
    }
}

/// Analysis inputs for a configured algorithm; `Δ` terms come from `first`
/// (the metrics of the run's initial state) when given.
pub fn theory_inputs(
    problem: &dyn Problem,
    rho_a: f64,
    params: &AlgoParams,
    omega: f64,
    first: Option<&IterationRecord>,
) -> Option<TheoryInputs> {
    Some(TheoryInputs {
        l: problem.smoothness(),
        g: problem.gradient_bound()?,
        sigma: problem.noise_bound().unwrap_or(0.0),
        rho_a,
        v_min: params.v_min,
        v_max: params.v_max,
        alpha: params.alpha,
        beta1: params.beta1,
        beta2: params.beta2,
        omega,
        n: problem.nodes(),
        delta1: first.map_or(0.0, |r| r.consensus_x),
        delta2: first.map_or(0.0, |r| r.consensus_v),
        delta3: first.map_or(0.0, |r| r.consensus_s),
    })
}

/// Runs every (algorithm, seed) pair in parallel, aggregates across seeds and,
/// when `cfg.output.directory` is set, writes the CSV and JSON outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let graph = cfg.graph.build()?;
    let a = metropolis_weights(&graph)?;
    let problem = cfg.build_problem()?;
    let digest = cfg.digest();
    let opts = RunOptions::default().with_x_init(cfg.x_init()).with_snapshots(cfg.run.snapshot_cadence);

    let jobs: Vec<(usize, u64)> =
        (0..cfg.algorithms.len()).flat_map(|k| cfg.run.seeds.iter().map(move |&s| (k, s))).collect();
    let runs: Vec<RunOutcome> = jobs
        .into_par_iter()
        .map(|(k, seed)| {
            let spec = &cfg.algorithms[k];
            let result = algorithms::run(spec.id, problem.as_ref(), &a, &spec.params(), cfg.run.iterations, seed, &opts)
                .map(|mut h| {
                    h.config_digest = digest.clone();
                    h
                });
            RunOutcome { algorithm: k, method: spec.id, seed, result }
        })
        .collect();

    let mut aggregates = Vec::new();
    let mut summaries = Vec::new();
    for (k, spec) in cfg.algorithms.iter().enumerate() {
        let params = spec.params();
        let mine: Vec<&RunOutcome> = runs.iter().filter(|r| r.algorithm == k).collect();
        let ok: Vec<&RunHistory> = mine.iter().filter_map(|r| r.result.as_ref().ok()).collect();
        let agg = AggregateSeries::from_histories(spec.id, &ok);
        let adaptive_tracking = spec.id == Method::GtAdaptive;
        let base_inputs = theory_inputs(problem.as_ref(), a.rho_a(), &params, cfg.theory.omega, None);
        let seeds = mine
            .iter()
            .map(|r| match &r.result {
                Ok(h) => {
                    let first = h.records.first();
                    let gap_bound = if adaptive_tracking {
                        theory_inputs(problem.as_ref(), a.rho_a(), &params, cfg.theory.omega, first).and_then(|tc| {
                            let f_gap = first.map_or(0.0, |f| f.loss) - problem.lower_bound();
                            predicted_gap_bound(&tc, cfg.run.iterations, f_gap.max(0.0)).ok()
                        })
                    } else {
                        None
                    };
                    SeedSummary {
                        seed: r.seed,
                        final_gap: h.final_record().map(|x| x.gap),
                        final_loss: h.final_record().map(|x| x.loss),
                        mean_gap: Some(h.records.iter().map(|x| x.gap).sum::<f64>() / h.records.len() as f64),
                        gap_bound,
                        error: None,
                    }
                }
                Err(e) => SeedSummary {
                    seed: r.seed,
                    final_gap: None,
                    final_loss: None,
                    mean_gap: None,
                    gap_bound: None,
                    error: Some(e.to_string()),
                },
            })
            .collect();
        summaries.push(AlgorithmSummary {
            id: spec.id,
            params,
            final_gap_mean: agg.as_ref().and_then(|g| g.final_mean("gap")),
            final_loss_mean: agg.as_ref().and_then(|g| g.final_mean("loss")),
            seeds,
            theory: base_inputs.filter(|_| adaptive_tracking).map(TheoryConstants::new),
            feasibility: base_inputs.filter(|_| adaptive_tracking).map(|tc| stepsize_feasible(&tc)),
        });
        aggregates.extend(agg);
    }

    let summary = ExperimentSummary {
        config_digest: digest.clone(),
        nodes: problem.nodes(),
        dim: problem.dim(),
        edges: graph.edge_count(),
        rho_a: a.rho_a(),
        smoothness: problem.smoothness(),
        gradient_bound: problem.gradient_bound(),
        noise_bound: problem.noise_bound(),
        lower_bound: problem.lower_bound(),
        iterations: cfg.run.iterations,
        algorithms: summaries,
    };
    let outcome = ExperimentOutcome { runs, aggregates, summary };
    if let Some(dir) = &cfg.output.directory {
        write_outputs(&outcome, cfg, dir)?;
    }
    Ok(outcome)
}

fn write_file(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Per-run histories, per-algorithm aggregates and (optionally) `summary.json`.
pub fn write_outputs(outcome: &ExperimentOutcome, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in &outcome.runs {
        if let Ok(h) = &r.result {
            write_file(dir.join(format!("history_{}_{}.csv", r.method, r.seed)), &h.to_csv())?;
        }
    }
    for agg in &outcome.aggregates {
        write_file(dir.join(format!("aggregate_{}.csv", agg.method)), &agg.to_csv(&outcome.summary.config_digest))?;
    }
    if cfg.output.emit_summary {
        let json = serde_json::to_string_pretty(&outcome.summary).map_err(|e| Error::Internal(e.to_string()))?;
        write_file(dir.join("summary.json"), &(json + "\n"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub method: Method,
    pub seed: u64,
    pub iterations: usize,
    pub rho_a: f64,
    pub alpha_interval: Option<(f64, f64)>,
    pub feasibility: Option<Feasibility>,
    pub basic_relations: BasicRelationsReport,
    /// `None` when the problem has no certified gradient bound.
    pub lemmas: Option<LemmaReport>,
    /// Largest stochastic-gradient entry observed during the run.
    pub max_gradient_entry: f64,
    /// Certified `G`; the run fails verification if an entry exceeds it.
    pub gradient_bound: Option<f64>,
    pub tolerance: f64,
}

impl VerifyReport {
    pub fn passes(&self) -> bool {
        self.basic_relations.passes(self.tolerance)
            && self.lemmas.is_none_or(|l| l.passes(self.tolerance))
            && self.gradient_bound.is_none_or(|g| self.max_gradient_entry <= g + self.tolerance)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let b = &self.basic_relations;
        let _ = writeln!(out, "method = {}", self.method);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "rho_a = {:.6e}", self.rho_a);
        match self.alpha_interval {
            Some((lo, hi)) => {
                let _ = writeln!(out, "alpha_interval = (0, {hi:.6e})  [lower end {lo}]");
            }
            None => {
                let _ = writeln!(out, "alpha_interval = unavailable (no gradient bound)");
            }
        }
        if let Some(f) = &self.feasibility {
            let _ = writeln!(out, "feasible = {}", f.feasible);
        }
        let pf = |v: f64| if v <= self.tolerance { "ok" } else { "VIOLATED" };
        let _ = writeln!(out, "relation_a = {:.3e} {}", b.a, pf(b.a));
        let _ = writeln!(out, "relation_b = {:.3e} {}", b.b, pf(b.b));
        let _ = writeln!(out, "relation_c = {:.3e} {}", b.c, pf(b.c));
        let _ = writeln!(out, "relation_d = {:.3e} {}", b.d, pf(b.d));
        let _ = writeln!(out, "telescoping = {:.3e} {}", b.telescoping, pf(b.telescoping));
        if let Some(l) = &self.lemmas {
            let ok = |i: &crate::metrics::Inequality| if i.holds(self.tolerance) { "ok" } else { "VIOLATED" };
            let _ = writeln!(out, "momentum_sum = {:.6e} <= {:.6e} {}", l.momentum.lhs, l.momentum.rhs, ok(&l.momentum));
            let _ = writeln!(out, "momentum_recursion = {:.3e} {}", l.momentum_recursion, pf(l.momentum_recursion));
            let _ = writeln!(out, "estimate_sum = {:.6e} <= {:.6e} {}", l.estimate.lhs, l.estimate.rhs, ok(&l.estimate));
            let _ = writeln!(out, "adaptive_sum = {:.6e} <= {:.6e} {}", l.adaptive.lhs, l.adaptive.rhs, ok(&l.adaptive));
        }
        match self.gradient_bound {
            Some(g) => {
                let ok = if self.max_gradient_entry <= g + self.tolerance { "ok" } else { "VIOLATED" };
                let _ = writeln!(out, "max_gradient_entry = {:.6e} <= G = {g:.6e} {ok}", self.max_gradient_entry);
            }
            None => {
                let _ = writeln!(out, "max_gradient_entry = {:.6e}", self.max_gradient_entry);
            }
        }
        let _ = writeln!(out, "result = {}", if self.passes() { "PASS" } else { "FAIL" });
        out
    }
}

/// Short instrumented run of the first `gt-adaptive` entry (or the first entry)
/// with all exact-relation and path-wise checks.
pub fn verify_suite(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let a = cfg.mixing_matrix()?;
    verify_suite_with_matrix(cfg, &a)
}

/// [`verify_suite`] on an explicit mixing matrix, e.g. a deliberately broken fixture.
pub fn verify_suite_with_matrix(cfg: &ExperimentConfig, a: &MixingMatrix) -> Result<VerifyReport> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let spec = cfg.algorithms.iter().find(|s| s.id == Method::GtAdaptive).unwrap_or(&cfg.algorithms[0]);
    let params = spec.params();
    let seed = cfg.run.seeds[0];
    let opts = RunOptions::default().with_x_init(cfg.x_init()).with_snapshots(1);
    let mut max_entry: f64 = 0.0;
    let history = algorithms::run_with_observer(
        Method::GtAdaptive,
        problem.as_ref(),
        a,
        &params,
        VERIFY_ITERATIONS,
        seed,
        &opts,
        &mut |st| {
            for node in &st.nodes {
                max_entry = max_entry.max(node.g.amax());
            }
        },
    )?;
    let basic_relations = verify_basic_relations(&history, &params)?;
    let g = problem.gradient_bound();
    let lemmas = match g {
        Some(g) => Some(verify_lemma_inequalities(&history, &LemmaInputs::new(&params, g, a.rho_a()))?),
        None => None,
    };
    let inputs = theory_inputs(problem.as_ref(), a.rho_a(), &params, cfg.theory.omega, history.records.first());
    let feasibility = inputs.map(|tc| stepsize_feasible(&tc));
    Ok(VerifyReport {
        method: Method::GtAdaptive,
        seed,
        iterations: VERIFY_ITERATIONS,
        rho_a: a.rho_a(),
        alpha_interval: feasibility.as_ref().map(|f| (0.0, f.alpha_max)),
        feasibility,
        basic_relations,
        lemmas,
        max_gradient_entry: max_entry,
        gradient_bound: g,
        tolerance: VERIFY_TOL,
    })
}

/// Theory constants and feasibility for every `gt-adaptive` entry, with
/// `Δ = 0` (no run is performed).
pub fn constants_report(cfg: &ExperimentConfig) -> Result<Vec<(AlgorithmSpec, TheoryConstants, Feasibility)>> {
    cfg.validate()?;
    let a = cfg.mixing_matrix()?;
    let problem = cfg.build_problem()?;
    let mut out = Vec::new();
    for spec in cfg.algorithms.iter().filter(|s| s.id == Method::GtAdaptive) {
        let tc = theory_inputs(problem.as_ref(), a.rho_a(), &spec.params(), cfg.theory.omega, None).ok_or_else(|| {
            Error::Validation("theory constants need a gradient bound G; set problem.radius for quadratics".into())
        })?;
        out.push((spec.clone(), TheoryConstants::new(tc), stepsize_feasible(&tc)));
    }
    if out.is_empty() {
        return Err(Error::Validation("no gt-adaptive entry in [[algorithms]]".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[graph]
type = "erdos_renyi"
n = 4
p = 0.8
seed = 1

[problem]
type = "quadratic"
d = 3
radius = 5.0
seed = 2

[[algorithms]]
id = "gt-adaptive"
alpha = 0.01

[[algorithms]]
id = "dsgd"
alpha = 0.01

[run]
iterations = 30
seeds = [1, 2, 3]
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = parse_config_str(SMALL, "small").unwrap();
        assert_eq!(cfg.algorithms[0].beta1, 0.9);
        assert_eq!(cfg.algorithms[0].v_min, 1e-8);
        assert_eq!(cfg.run.snapshot_cadence, 0);
        assert_eq!(cfg.theory.omega, 1.0);
        assert!(cfg.output.directory.is_none());
        assert!(cfg.output.emit_summary);
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let text = SMALL.replace("alpha = 0.01\n\n[[algorithms]]", "alpha_typo = 0.01\nalpha = 0.01\n\n[[algorithms]]");
        match parse_config_str(&text, "cfg").unwrap_err() {
            Error::Parse { location, message } => {
                assert!(location.starts_with("cfg:"), "{location}");
                assert!(message.contains("alpha_typo"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn beta1_one_is_a_validation_error() {
        let text = SMALL.replacen("alpha = 0.01", "alpha = 0.01\nbeta1 = 1.0", 1);
        assert!(matches!(parse_config_str(&text, "cfg"), Err(Error::Validation(_))));
    }

    #[test]
    fn overrides() {
        let cfg = parse_with_overrides(
            SMALL,
            "cfg",
            &["run.iterations=7".into(), "algorithms.1.alpha=0.5".into(), "graph.type=complete".into()],
        );
        // `p` and `seed` are not fields of a complete graph.
        assert!(cfg.is_err());
        let cfg = parse_with_overrides(SMALL, "cfg", &["run.iterations=7".into(), "algorithms.1.alpha=0.5".into()]).unwrap();
        assert_eq!(cfg.run.iterations, 7);
        assert_eq!(cfg.algorithms[1].alpha, 0.5);
        assert!(parse_with_overrides(SMALL, "cfg", &["run.iterations".into()]).is_err());
        assert!(parse_with_overrides(SMALL, "cfg", &["algorithms.9.alpha=1".into()]).is_err());
    }

    #[test]
    fn digest_ignores_output_section() {
        let a = parse_config_str(SMALL, "a").unwrap();
        let mut b = a.clone();
        b.output.directory = Some("elsewhere".into());
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.run.iterations += 1;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn counts_and_envelope() {
        let cfg = parse_config_str(SMALL, "s").unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.runs.len(), 6);
        assert_eq!(out.aggregates.len(), 2);
        for agg in &out.aggregates {
            for e in agg.columns.values() {
                for k in 0..e.mean.len() {
                    assert!(e.min[k] <= e.mean[k] && e.mean[k] <= e.max[k]);
                }
            }
        }
        let gt = &out.summary.algorithms[0];
        assert!(gt.theory.is_some() && gt.feasibility.is_some());
        assert!(out.summary.algorithms[1].theory.is_none());
    }

    #[test]
    fn failing_pair_is_marked_and_others_continue() {
        let text = SMALL.replacen("id = \"dsgd\"\nalpha = 0.01", "id = \"dsgd\"\nalpha = 1e200", 1);
        let cfg = parse_config_str(&text, "s").unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.failures().count(), 3);
        assert!(out.failures().all(|r| r.method == Method::Dsgd));
        assert!(out.aggregate(Method::GtAdaptive).is_some());
        assert!(out.aggregate(Method::Dsgd).is_none());
        assert!(out.summary.algorithms[1].seeds.iter().all(|s| s.error.is_some()));
    }
}
