use std::fs;
use std::path::PathBuf;

use gt_adaptive::runner::{self, parse_config, run_experiment, verify_suite, verify_suite_with_matrix, AggregateSeries};
use gt_adaptive::topology::MixingMatrix;
use nalgebra::DMatrix;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const TWO_BY_THREE: &str = r#"
[graph]
type = "path"
n = 3

[problem]
type = "quadratic"
d = 2
sigma = 0.1
seed = 4

[[algorithms]]
id = "gt-adaptive"
alpha = 0.01

[[algorithms]]
id = "momentum-dsgd"
alpha = 0.05

[run]
iterations = 40
seeds = [10, 11, 12]
snapshot_cadence = 0
x_init_scale = 1.0
"#;

fn sorted_listing(dir: &std::path::Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn shipped_configs_parse() {
    let huber = parse_config(configs_dir().join("huber_paper.cfg")).unwrap();
    let ours = &huber.algorithms[0];
    assert_eq!((ours.alpha, ours.beta1, ours.beta2, ours.v_max, ours.v_min), (0.01, 0.9, 0.999, 100.0, 1e-8));
    assert_eq!(huber.graph.n(), 16);
    assert_eq!(huber.run.iterations, 20_000);
    parse_config(configs_dir().join("quadratic_default.toml")).unwrap();
}

#[test]
fn outputs_are_counted_and_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = runner::parse_config_str(TWO_BY_THREE, "inline").unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cfg.output.directory = Some(a.clone());
    run_experiment(&cfg).unwrap();
    cfg.output.directory = Some(b.clone());
    run_experiment(&cfg).unwrap();

    let names = sorted_listing(&a);
    assert_eq!(names.iter().filter(|n| n.starts_with("history_")).count(), 6);
    assert_eq!(names.iter().filter(|n| n.starts_with("aggregate_")).count(), 2);
    assert!(names.contains(&"summary.json".to_string()));
    assert_eq!(names, sorted_listing(&b));
    let digest = format!("# config_digest={}", cfg.digest());
    for name in &names {
        let (x, y) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert_eq!(x, y, "{name} differs between runs");
        if name.ends_with(".csv") {
            assert!(String::from_utf8(x).unwrap().starts_with(&digest), "{name} lacks the digest line");
        }
    }
}

#[test]
fn aggregate_envelope_contains_mean() {
    let cfg = runner::parse_config_str(TWO_BY_THREE, "inline").unwrap();
    let out = run_experiment(&cfg).unwrap();
    for agg in &out.aggregates {
        assert_eq!(agg.t.len(), 40);
        for env in agg.columns.values() {
            for k in 0..env.mean.len() {
                assert!(env.min[k] <= env.mean[k] && env.mean[k] <= env.max[k]);
            }
        }
    }
    let hs: Vec<_> = out.runs.iter().filter(|r| r.algorithm == 0).map(|r| r.result.as_ref().unwrap()).collect();
    let again = AggregateSeries::from_histories(hs[0].method, &hs).unwrap();
    assert_eq!(&again, out.aggregate(hs[0].method).unwrap());
}

#[test]
fn default_quadratic_config_verifies() {
    let cfg = parse_config(configs_dir().join("quadratic_default.toml")).unwrap();
    let rep = verify_suite(&cfg).unwrap();
    assert!(rep.passes(), "{}", rep.to_text());
    assert!(rep.lemmas.is_some());
    assert!(rep.rho_a > 0.0 && rep.rho_a < 1.0);
    let (lo, hi) = rep.alpha_interval.unwrap();
    assert!(lo == 0.0 && hi > 0.0);
    let text = rep.to_text();
    assert!(text.contains("rho_a") && text.contains("alpha_interval"));
}

#[test]
fn row_stochastic_fixture_flags_relation_a() {
    let cfg = parse_config(configs_dir().join("quadratic_default.toml")).unwrap();
    let n = cfg.graph.n();
    // Row sums are one, column sums are not.
    let raw = DMatrix::from_fn(n, n, |i, j| 1.0 + ((7 * i + 3 * j) % 5) as f64);
    let mut w = raw.clone();
    for i in 0..n {
        let total = raw.row(i).sum();
        w.row_mut(i).scale_mut(1.0 / total);
    }
    assert!((w.column(0).sum() - 1.0).abs() > 1e-3);
    let a = MixingMatrix::from_weights(w).unwrap();
    let rep = verify_suite_with_matrix(&cfg, &a).unwrap();
    assert!(rep.basic_relations.a > 1e-9, "{}", rep.to_text());
    assert!(!rep.passes());
}

#[test]
fn constants_report_covers_adaptive_entries() {
    let cfg = parse_config(configs_dir().join("quadratic_default.toml")).unwrap();
    let rows = runner::constants_report(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    let (_, tc, feas) = &rows[0];
    assert!(tc.n.n1 > 0.0 && feas.alpha_max > 0.0);
}
