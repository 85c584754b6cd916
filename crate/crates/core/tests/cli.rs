use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fastdebias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastdebias")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn pipeline_from_generation_to_inference() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&fastdebias(&["gen", "--n", "120", "--p", "60", "--s", "4", "--seed", "3", "--out", d.to_str().unwrap()]));
    let meta: Value = serde_json::from_str(&fs::read_to_string(d.join("meta.json")).unwrap()).unwrap();
    let sigma = meta["sigma"].as_f64().unwrap().to_string();

    let stats: Value = serde_json::from_str(&ok(&fastdebias(&["coherence", "--matrix", &path(d, "A.fdbm")]))).unwrap();
    for key in ["rho", "L", "nu", "mu_threshold"] {
        assert!(stats[key].as_f64().unwrap() > 0.0, "{key}");
    }

    ok(&fastdebias(&[
        "lasso", "--matrix", &path(d, "A.fdbm"), "--y", &path(d, "y.csv"), "--sigma", &sigma, "--out", &path(d, "beta_hat.csv"),
    ]));
    ok(&fastdebias(&[
        "debias", "--matrix", &path(d, "A.fdbm"), "--y", &path(d, "y.csv"), "--beta-hat", &path(d, "beta_hat.csv"),
        "--sigma", &sigma, "--out", &path(d, "est.csv"),
    ]));
    let lines = fs::read_to_string(d.join("est.csv")).unwrap();
    assert_eq!(lines.lines().count(), 60);
    assert_eq!(lines.lines().next().unwrap().split(',').count(), 2);

    let inferred: Value = serde_json::from_str(&ok(&fastdebias(&[
        "infer", "--estimate", &path(d, "est.csv"), "--truth", &path(d, "beta.csv"),
    ])))
    .unwrap();
    assert_eq!(inferred["b_hat"].as_array().unwrap().len(), 60);
    assert_eq!(inferred["intervals"].as_array().unwrap().len(), 60);
    assert_eq!(inferred["score"]["sensitivity"].as_f64().unwrap(), 1.0);
}

#[test]
fn qp_weights_emits_matrix_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&fastdebias(&["gen", "--n", "20", "--p", "30", "--s", "2", "--out", d.to_str().unwrap()]));
    let cert: Value = serde_json::from_str(&ok(&fastdebias(&[
        "qp-weights", "--matrix", &path(d, "A.fdbm"), "--out", &path(d, "W.csv"),
    ])))
    .unwrap();
    assert!(cert["max_gap"].as_f64().unwrap() <= 1e-6);
    assert!(cert["max_margin"].as_f64().unwrap() <= 1e-9);
    assert!(cert["time_seconds"].as_f64().unwrap() >= 0.0);
    let w = fs::read_to_string(d.join("W.csv")).unwrap();
    assert_eq!(w.lines().count(), 20);
    assert_eq!(w.lines().next().unwrap().split(',').count(), 30);
}

#[test]
fn table1_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("t1.cfg");
    fs::write(&cfg, "p = 80\ns = 4\nn_grid = 60, 90\ntrials = 3\nmaster_seed = 11\n").unwrap();
    let run = |out: &str, threads: &str| {
        let out_dir = d.join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_fastdebias"))
            .args(["table1", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        ok(&status);
        fs::read(out_dir.join("results.csv")).unwrap()
    };
    let one = run("a", "1");
    let four = run("b", "4");
    assert_eq!(one, four);
    let text = String::from_utf8(one).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("schema,n,trials"));
    for f in ["timing.csv", "results.json", "plot.gp", "plotdata/sensitivity_e.tsv", "plotdata/rel_err.tsv"] {
        assert!(d.join("a").join(f).exists(), "{f}");
    }
    let json: Value = serde_json::from_str(&fs::read_to_string(d.join("a/results.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["trials"].as_array().unwrap().len(), 6);
}

#[test]
fn mu_sweep_writes_threshold_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("sweep.cfg");
    fs::write(&cfg, "p = 30\nn_grid = 24\nmu_rule = sweep:0.3,0.9,0.1\n").unwrap();
    let csv = ok(&fastdebias(&["mu-sweep", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]));
    assert_eq!(csv.lines().count(), 8);
    let thr = fs::read_to_string(d.join("plotdata/threshold.tsv")).unwrap();
    assert_eq!(thr.lines().count(), 2);
    assert!(d.join("plotdata/mu_sweep.tsv").exists());
}

#[test]
fn bounds_reports_events() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("b.cfg");
    fs::write(&cfg, "ensemble = rademacher\np = 20\nn_grid = 2000\ntrials = 10\n").unwrap();
    let csv = ok(&fastdebias(&["bounds", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]));
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.contains(",chain,1,1,0,true"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("bad.cfg");
    fs::write(&cfg, "trials = 0\n").unwrap();
    let out = fastdebias(&["table1", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(&cfg, "no equals sign here\n").unwrap();
    let out = fastdebias(&["table1", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // rank-one design: the weight problem has no solution for small mu
    fs::write(d.join("A.csv"), "1,1\n1,1\n").unwrap();
    let out = fastdebias(&["qp-weights", "--matrix", &path(d, "A.csv"), "--mu", "0.1", "--out", &path(d, "W.csv")]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let out = fastdebias(&["qp-weights", "--matrix", &path(d, "A.csv"), "--mu", "0.1", "--max-iters", "0", "--out", &path(d, "W.csv")]);
    assert_eq!(out.status.code(), Some(2));
}
