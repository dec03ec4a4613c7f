use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn npwnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npwnet")).args(args).env("NPWNET_THREADS", "2").output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = npwnet(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn simulate_into(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--n", "80", "--seed", "4", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate_into(&a, &[]);
    simulate_into(&b, &[]);
    for f in ["edges.csv", "labels.csv", "truth.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }

    let edges = a.join("edges.csv");
    let fits = [tmp.path().join("fa"), tmp.path().join("fb")];
    for out in &fits {
        ok(&["fit", "--edges", p(&edges), "--k", "2", "--weight-mode", "normal", "--seed", "3", "--out", p(out)]);
    }
    for f in ["fit.json", "assignments.csv", "density_0_1.csv"] {
        assert_eq!(read(&fits[0].join(f)), read(&fits[1].join(f)), "{f}");
    }

    let benches = [tmp.path().join("ba"), tmp.path().join("bb")];
    for out in &benches {
        ok(&["bench", "--n", "40", "--replicates", "2", "--seed", "9", "--max-iter", "20", "--out", p(out)]);
    }
    assert_eq!(read(&benches[0].join("bench.csv")), read(&benches[1].join("bench.csv")));
}

#[test]
fn degenerate_simulations() {
    let tmp = TempDir::new().unwrap();
    simulate_into(tmp.path(), &["--pi", "1,0"]);
    let labels = read(&tmp.path().join("labels.csv"));
    assert!(labels.lines().skip(1).all(|l| l.ends_with(",0")));
    assert_eq!(labels.lines().count(), 81);

    simulate_into(tmp.path(), &["--theta", "-10,-10"]);
    assert_eq!(read(&tmp.path().join("edges.csv")), "i,j,w\n");
}

#[test]
fn malformed_rows_report_their_line() {
    let tmp = TempDir::new().unwrap();
    let edges = tmp.path().join("edges.csv");
    fs::write(&edges, "i,j,w\n0,1,0.5\n1,2,oops\n").unwrap();
    let out = npwnet(&["fit", "--edges", p(&edges), "--k", "2", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let missing = npwnet(&["fit", "--edges", p(&tmp.path().join("nope.csv")), "--k", "2"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(npwnet(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(npwnet(&["--help"]).status.code(), Some(0));
}

#[test]
fn selection_over_a_single_k() {
    let tmp = TempDir::new().unwrap();
    simulate_into(tmp.path(), &[]);
    let out = ok(&[
        "select",
        "--edges",
        p(&tmp.path().join("edges.csv")),
        "--k-range",
        "1",
        "--weight-mode",
        "normal",
        "--out",
        p(tmp.path()),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("best_k=1"));
    let table = read(&tmp.path().join("icl.csv"));
    assert_eq!(table.lines().next(), Some("K,icl,final_elbo,converged"));
    assert_eq!(table.lines().count(), 2);
}

#[test]
fn evaluation_with_and_without_truth() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let fit = tmp.path().join("fit");
    simulate_into(&sim, &[]);
    ok(&["fit", "--edges", p(&sim.join("edges.csv")), "--k", "2", "--weight-mode", "normal", "--out", p(&fit)]);

    // The fitted labels as ground truth must score a perfect Rand index.
    let truth = tmp.path().join("truth");
    fs::create_dir_all(&truth).unwrap();
    fs::copy(fit.join("assignments.csv"), truth.join("labels.csv")).unwrap();
    fs::copy(sim.join("truth.json"), truth.join("truth.json")).unwrap();
    let eval = tmp.path().join("eval");
    ok(&["eval", "--fit", p(&fit), "--truth", p(&truth), "--out", p(&eval)]);
    let metrics: serde_json::Value = serde_json::from_str(&read(&eval.join("metrics.json"))).unwrap();
    assert_eq!(metrics["log_ri"].as_f64(), Some(0.0));
    assert!(read(&eval.join("metrics.csv")).starts_with("metric,value\n"));

    let bare = tmp.path().join("bare");
    ok(&["eval", "--fit", p(&fit), "--out", p(&bare)]);
    let metrics: serde_json::Value = serde_json::from_str(&read(&bare.join("metrics.json"))).unwrap();
    assert!(metrics["log_ri"].is_null());
    assert!(metrics["descriptive"].is_object(), "{metrics}");
}

#[test]
fn bench_reports_every_mode() {
    let tmp = TempDir::new().unwrap();
    ok(&["bench", "--n", "40", "--replicates", "3", "--seed", "1", "--max-iter", "20", "--out", p(tmp.path())]);
    let table = read(&tmp.path().join("bench.csv"));
    let mut combos: Vec<(String, String)> = table
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    combos.dedup();
    assert_eq!(combos.len(), 9, "{combos:?}");
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(&config, r#"{"n": 30, "seed": 2, "weights": "none"}"#).unwrap();
    ok(&["simulate", "--config", p(&config), "--n", "25", "--out", p(tmp.path())]);
    assert_eq!(read(&tmp.path().join("labels.csv")).lines().count(), 26);
    let truth: serde_json::Value = serde_json::from_str(&read(&tmp.path().join("truth.json"))).unwrap();
    assert_eq!(truth["seed"].as_u64(), Some(2));
    assert!(read(&tmp.path().join("edges.csv")).lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn hitting_the_iteration_cap_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    simulate_into(tmp.path(), &[]);
    let out = npwnet(&[
        "fit",
        "--edges",
        p(&tmp.path().join("edges.csv")),
        "--k",
        "2",
        "--weight-mode",
        "normal",
        "--max-iter",
        "1",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(tmp.path().join("fit.json").exists());
}
