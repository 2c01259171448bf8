use std::path::Path;
use std::process::{Command, Output};

use bima_core::io::{read_dataset, read_json, read_tensor, write_dataset};
use bima_core::mediation::MediationReport;
use bima_core::sem_model::MediationDataset;

fn bima(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bima")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = bima(dir, args);
    assert!(out.status.success(), "bima {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    bima(dir, args).status.code().unwrap()
}

#[test]
fn simulate_writes_expected_shapes_and_repeats_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let args = ["simulate", "--n", "200", "--grid", "20x20x4", "--pattern", "sparse", "--seed", "7"];
    ok(d, &[&args[..], &["--out", "a"]].concat());
    ok(d, &[&args[..], &["--out", "b"]].concat());
    assert_eq!(read_tensor(&d.join("a/m.bimt")).unwrap().dims, vec![200, 400]);
    let loaded = read_dataset(&d.join("a")).unwrap();
    assert_eq!((loaded.data.n(), loaded.data.p()), (200, 400));
    for f in ["m.bimt", "y.bimt", "manifest.json", "svme0.bimt"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap());
    }
    assert_eq!(code(d, &["simulate", "--n", "0", "--out", "z"]), 2);
    assert_eq!(code(d, &["simulate", "--grid", "20x20x3", "--out", "z"]), 2);
}

#[test]
fn fit_mediate_and_error_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "--n", "40", "--grid", "10x10x4", "--seed", "1", "--out", "data"]);
    let fit = ["--data", "data", "--iters", "1000", "--burnin", "0.5", "--thin", "10", "--basis-count", "6"];
    ok(d, &[&["fit", "--model", "outcome"][..], &fit, &["--out", "o"]].concat());
    ok(d, &[&["fit", "--model", "mediator"][..], &fit, &["--out", "m"]].concat());
    let meta: serde_json::Value = read_json(&d.join("o/trace.json")).unwrap();
    assert_eq!(meta["n_draws"], 50);
    assert!(d.join("o/timing.json").exists());

    ok(d, &["mediate", "--outcome-trace", "o", "--mediator-trace", "m", "--mode", "pip:0.1", "--x", "1", "--xprime", "0", "--out", "r"]);
    let report: MediationReport = read_json(&d.join("r/report.json")).unwrap();
    let p = report.svme_mean.len() as f64;
    let nie = report.svme_mean.iter().sum::<f64>() / p;
    assert!((report.nie_mean - nie).abs() <= 1e-12 * nie.abs().max(1.0));
    assert!(std::fs::read_to_string(d.join("r/voxels.csv")).unwrap().lines().count() == 101);

    ok(d, &["mediate", "--outcome-trace", "o", "--mediator-trace", "m", "--mode", "fdr:0.1", "--truth", "data", "--out", "rt"]);
    assert_eq!(code(d, &["mediate", "--outcome-trace", "o", "--mediator-trace", "m", "--mode", "fdr:0.1", "--out", "x"]), 2);
    assert_eq!(code(d, &["fit", "--model", "outcome", "--data", "missing", "--out", "x"]), 2);
    assert_eq!(code(d, &["fit", "--model", "outcome", "--data", "data", "--burnin", "1.5", "--out", "x"]), 2);
}

#[test]
fn sensitivity_and_evaluate_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "--n", "24", "--grid", "10x10x4", "--seed", "2", "--out", "data"]);
    let full = read_dataset(&d.join("data")).unwrap().data;
    let rows = |m: &nalgebra::DMatrix<f64>| m.rows(0, 3).into_owned();
    let tiny = MediationDataset::new(
        full.y.rows(0, 3).into_owned(),
        full.x.rows(0, 3).into_owned(),
        rows(&full.c).columns(0, 1).into_owned(),
        rows(&full.m),
        full.grid.clone(),
    )
    .unwrap();
    write_dataset(&d.join("tiny"), &tiny, None, None).unwrap();
    ok(d, &["sensitivity", "--data", "data", "--nu-grid", "0.3", "--iters", "200", "--basis-count", "4", "--out", "s.csv"]);
    let csv = std::fs::read_to_string(d.join("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("nu,rho_scale,train_mse,test_mse"));
    ok(d, &["sensitivity", "--data", "data", "--rho-scales", "0.5,1,2", "--iters", "200", "--basis-count", "4", "--out", "k.csv"]);
    assert_eq!(std::fs::read_to_string(d.join("k.csv")).unwrap().lines().count(), 4);
    assert_eq!(code(d, &["sensitivity", "--data", "tiny", "--nu-grid", "0.3", "--out", "t.csv"]), 2);

    let eval = ["evaluate", "--n", "24", "--grid", "10x10x4", "--outcome-iters", "200", "--mediator-iters", "200", "--basis-count", "4"];
    ok(d, &[&eval[..], &["--replications", "2", "--out", "e"]].concat());
    let table = std::fs::read_to_string(d.join("e/metrics.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "replication,seed,fdr,tpr,acc,mse_activation");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mean(sd),,"));
    assert_eq!(code(d, &[&eval[..], &["--replications", "0", "--out", "e0"]].concat()), 2);
}
