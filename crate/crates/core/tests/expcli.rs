use std::collections::HashSet;
use std::process::Command;

use chaoslab::experiments::{evaluate, run, verify_dir, ExperimentConfig, ExperimentId, Metrics, Verdict};
use chaoslab::par::map_indexed;
use chaoslab::rng::stream_id;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chaoslab"))
}

#[test]
fn stream_ids_do_not_collide() {
    let mut seen = HashSet::with_capacity(1_000_000);
    for id in ExperimentId::ALL {
        for r in 0..100_000u64 {
            assert!(seen.insert(stream_id(20240611, id.code(), r)), "{} replica {r}", id.code());
        }
    }
    assert_eq!(seen.len(), 1_000_000);
}

#[test]
fn identical_configs_give_identical_metrics() {
    let cfg = ExperimentConfig::for_experiment(ExperimentId::E2);
    let a = run(ExperimentId::E2, &cfg).unwrap();
    let b = run(ExperimentId::E2, &cfg).unwrap();
    assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
}

#[test]
fn replica_results_keep_index_order() {
    let v = map_indexed(1000, |i| (i as f64).sqrt());
    assert!(v.iter().enumerate().all(|(i, x)| *x == (i as f64).sqrt()));
}

#[test]
fn zero_replicas_rejected() {
    let mut cfg = ExperimentConfig::for_experiment(ExperimentId::E1);
    cfg.replicas = Some(0);
    assert!(run(ExperimentId::E1, &cfg).is_err());
}

#[test]
fn invalid_regimes_rejected() {
    let mut cfg = ExperimentConfig::for_experiment(ExperimentId::E2);
    cfg.gamma = 2.0;
    assert!(cfg.validate(ExperimentId::E2).is_err());
    cfg.gamma = -0.5;
    assert!(cfg.validate(ExperimentId::E2).is_err());
    let mut cfg = ExperimentConfig::for_experiment(ExperimentId::E8);
    cfg.delta = 0.3;
    assert!(cfg.validate(ExperimentId::E8).is_err(), "γ - δ <= 1 in a coupling experiment");
    let mut cfg = ExperimentConfig::for_experiment(ExperimentId::E4);
    cfg.n_max = 17;
    assert!(cfg.validate(ExperimentId::E4).is_err());
}

#[test]
fn empty_bundle_is_not_run() {
    let dir = tempfile::tempdir().unwrap();
    let lines = verify_dir(dir.path()).unwrap();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|l| l.verdict == Verdict::NotRun));
}

#[test]
fn yurinskii_violation_prints_both_numbers() {
    let mut m = Metrics::default();
    for law in ["rademacher", "two_point_asym"] {
        m.push(&format!("failure_{law}"), Some(0), 0.31, 0.01, 1024);
        m.push(&format!("bound_{law}"), Some(0), 0.125, 0.0, 0);
    }
    let lines = evaluate(Some(ExperimentId::E6), &m);
    let l = lines.iter().find(|l| l.id == "E6.yurinskii").unwrap();
    assert_eq!(l.verdict, Verdict::Fail);
    assert!(l.measured.contains("3.1000e-1") && l.measured.contains("1.2500e-1"), "{}", l.measured);
}

#[test]
fn gaussian_partition_residual_is_exactly_zero() {
    let mut cfg = ExperimentConfig::for_experiment(ExperimentId::E2);
    cfg.coefficients.law = chaoslab::Law::Gaussian;
    let b = run(ExperimentId::E2, &cfg).unwrap();
    assert_eq!(b.metrics.value("gaussian_residual_max"), Some(0.0));
}

#[test]
fn cli_list_run_verify() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), ExperimentId::ALL.len());

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"experiment": "E2", "gamma": 1.2, "seed": 7}"#).unwrap();
    let bundle = dir.path().join("bundle");
    let run = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&bundle).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["metrics.csv", "manifest.json"] {
        assert!(bundle.join(f).exists(), "{f}");
    }
    let verify = bin().args(["verify", "--bundle"]).arg(&bundle).output().unwrap();
    assert!(verify.status.success());
    assert_eq!(String::from_utf8(verify.stdout).unwrap(), String::from_utf8(run.stdout).unwrap());

    let empty = tempfile::tempdir().unwrap();
    let v = bin().args(["verify", "--bundle"]).arg(empty.path()).output().unwrap();
    assert!(v.status.success());
    assert!(String::from_utf8(v.stdout).unwrap().lines().all(|l| l.starts_with("NOT RUN")));
}

#[test]
fn cli_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["run", "--experiment", "E1", "--replicas", "0", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replicas"));
}
