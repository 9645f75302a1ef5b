use std::path::PathBuf;
use std::process::{Command, Output};

use gtot_cli::report::ResultReport;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

fn gtot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtot")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> ResultReport {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("report parses")
}

#[test]
fn triangular_mask_has_unique_plan() {
    let out = gtot(&[
        "mwd",
        "--cost",
        &fixture("triangular_cost.csv"),
        "--mask",
        "file",
        "--mask-file",
        &fixture("triangular_mask.csv"),
        "--epsilon",
        "0.001",
        "--oracle",
    ]);
    let r = report(&out);
    assert!((r.distance - 1.0).abs() <= 0.02, "{}", r.distance);
    assert_eq!(r.oracle_value, Some(1.0));
    assert!(r.oracle_gap.unwrap() <= 0.02);
}

#[test]
fn antidiagonal_cost_has_zero_optimum() {
    let r = report(&gtot(&["mwd", "--cost", &fixture("antidiagonal_cost.csv"), "--mask", "ones", "--epsilon", "0.001"]));
    assert!(r.distance <= 0.02);
    assert!(r.converged);
}

#[test]
fn malformed_cell_exits_one_with_position() {
    let out = gtot(&["mwd", "--cost", &fixture("bad_cell.csv")]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("column 2"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn infeasible_fixture_exits_two() {
    let out = gtot(&[
        "mwd",
        "--cost",
        &fixture("infeasible_cost.csv"),
        "--mask",
        "file",
        "--mask-file",
        &fixture("identity_mask.csv"),
        "--marginal-a",
        "1,0",
        "--marginal-b",
        "0,1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_embeddings_give_small_regularizer() {
    let e = fixture("embeddings.csv");
    let r = report(&gtot(&["gtot", "--graph", &fixture("path4.json"), "--source", &e, "--target", &e, "--epsilon", "0.01"]));
    assert!(r.mwd.unwrap() <= 0.05);
    assert!(r.config.normalize);
}

#[test]
fn combined_penalty_is_the_sum() {
    let r = report(&gtot(&[
        "gtot",
        "--graph",
        &fixture("path4.json"),
        "--source",
        &fixture("embeddings.csv"),
        "--target",
        &fixture("embeddings_shifted.csv"),
        "--lambda",
        "1",
        "--beta",
        "1",
    ]));
    let (mwd, mgwd) = (r.mwd.unwrap(), r.mgwd.unwrap());
    assert!((r.combined_penalty.unwrap() - (mwd + mgwd)).abs() <= 1e-12);
}

#[test]
fn out_of_range_graph_exits_one() {
    let e = fixture("embeddings.csv");
    let out = gtot(&["gtot", "--graph", &fixture("out_of_range.json"), "--source", &e, "--target", &e]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mismatched_rows_exit_one() {
    let out = gtot(&[
        "gtot",
        "--graph",
        &fixture("out_of_range.json").replace("out_of_range", "path4"),
        "--source",
        &fixture("triangular_cost.csv"),
        "--target",
        &fixture("triangular_cost.csv"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_echo_reproduces_the_report() {
    let first = report(&gtot(&[
        "mwd",
        "--source",
        &fixture("embeddings.csv"),
        "--target",
        &fixture("embeddings_shifted.csv"),
        "--cosine",
        "--mask",
        "graph",
        "--graph",
        &fixture("path4.json"),
        "--hops",
        "2",
        "--normalize",
        "--marginal-a",
        "0.1,0.2,0.3,0.4",
        "--emit-plan",
    ]));
    let c = &first.config;
    let eps = c.epsilon.to_string();
    let tau = c.tau.to_string();
    let iters = c.max_iter.to_string();
    let hops = c.hops.to_string();
    let join = |v: &Vec<f64>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let (ma, mb) = (join(c.marginal_a.as_ref().unwrap()), join(c.marginal_b.as_ref().unwrap()));
    let normalize = c.normalize.to_string();
    let replay = report(&gtot(&[
        "mwd",
        "--source",
        c.source.as_deref().unwrap(),
        "--target",
        c.target.as_deref().unwrap(),
        "--cosine",
        "--mask",
        &c.mask,
        "--graph",
        c.graph.as_deref().unwrap(),
        "--hops",
        &hops,
        "--normalize",
        &normalize,
        "--epsilon",
        &eps,
        "--tau",
        &tau,
        "--max-iter",
        &iters,
        "--marginal-a",
        &ma,
        "--marginal-b",
        &mb,
        "--emit-plan",
    ]));
    assert_eq!(first, replay);
    assert!(first.plan.is_some());

    let json = serde_json::to_string(&first).unwrap();
    let back: ResultReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, first);
}

#[test]
fn reports_are_deterministic() {
    let args = [
        "gtot",
        "--graph",
        &fixture("path4.json"),
        "--source",
        &fixture("embeddings.csv"),
        "--target",
        &fixture("embeddings_shifted.csv"),
        "--mgwd",
    ]
    .map(String::from);
    let a = gtot(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let b = gtot(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn demo_histories_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.csv");
    let p2 = dir.path().join("b.csv");
    for p in [&p1, &p2] {
        let out = gtot(&["demo", "--seed", "7", "--epochs", "10", "--out-history", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("final objective") && text.contains("weight distance"));
    }
    let (a, b) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn demo_without_regularizer_reduces_task_loss() {
    let out = gtot(&["demo", "--lambda", "0", "--epochs", "50"]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "task_loss").unwrap();
    let losses: Vec<f64> = rdr.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    assert_eq!(losses.len(), 51);
    assert!(losses.last().unwrap() < losses.first().unwrap());
}

#[test]
fn demo_gradcheck_passes() {
    let out = gtot(&["demo", "--gradcheck", "--epochs", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gradient check passed"));
}

#[test]
fn every_subcommand_has_help_and_version() {
    for sub in ["mwd", "gtot", "demo"] {
        assert!(gtot(&[sub, "--help"]).status.success());
        assert!(gtot(&[sub, "--version"]).status.success());
    }
    assert!(gtot(&["--version"]).status.success());
}
