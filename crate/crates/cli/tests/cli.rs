//! End-to-end runs of the `twisted` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use twisted_cli::RunManifest;

const PI_3: &str = "1.0471975511965976";

fn twisted(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twisted")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = twisted(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let dir = tempfile::tempdir().unwrap();

    let bad_range = twisted(&["simulate", "--n", "100", "--kappa", "0.7", "--q", "1", "--t-end", "1"]);
    assert_eq!(bad_range.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_range.stderr).contains("kappa"));

    let missing = twisted(&["simulate", "--n", "100", "--q", "1", "--t-end", "1"]);
    assert_eq!(missing.status.code(), Some(2));

    let unseeded = twisted(&["graph", "--n", "100", "--kappa", "0.2", "--kind", "random_dense"]);
    assert_eq!(unseeded.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unseeded.stderr).contains("seed"));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"graph\": {\"n\": 50, \"p\": 1.0, \"kappa\": 0.2, \"kind\": \"deterministic_dense\"},\n  \"q\": 1,\n  \"t_end\": -3\n}\n").unwrap();
    let bad_file = twisted(&["simulate", "--config", s(&cfg)]);
    assert_eq!(bad_file.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_file.stderr).contains("bad.json:4: t_end"));

    // an exact 1-twisted run read back as q = 0 has uniformly spread phases: no fit exists
    let run = dir.path().join("run");
    ok(&[
        "simulate",
        "--n",
        "100",
        "--kappa",
        "0.2",
        "--q",
        "1",
        "--t-end",
        "3",
        "--perturbation",
        "0",
        "--stride",
        "1",
        "-o",
        s(&run),
    ]);
    let no_fit = twisted(&["estimate", "--input", s(&run.join("trajectory.csv")), "--q", "0"]);
    assert_eq!(no_fit.status.code(), Some(3));
}

#[test]
fn constants_print_the_tables() {
    let out = ok(&["constants", "--q", "1,2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("q,kappa_1q,chi_bar_prime,"));
    let row1: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row1[1] - 0.34046).abs() < 1e-5 && (row1[7] + 0.46397).abs() < 1e-5);
    assert!(text.contains("zeta0,2.13918"));
    let manifest: RunManifest = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(manifest.command, "constants");
}

#[test]
fn every_run_writes_one_manifest_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&[
        "simulate",
        "--n",
        "300",
        "--kappa",
        "0.25",
        "--q",
        "1",
        "--sigma",
        "0.4",
        "--omega",
        "auto",
        "--t-end",
        "20",
        "--seed",
        "9",
        "--snapshots",
        "5,10",
        "-o",
        s(&a),
    ]);
    let m = RunManifest::read(&a.join("manifest.json")).unwrap();
    assert_eq!(m.command, "simulate");
    assert_eq!(m.seed, Some(9));
    assert_eq!(m.outputs.len(), 4, "{:?}", m.outputs);
    assert_eq!(m.config["omega"], Value::from("auto"));

    ok(&["simulate", "--config", s(&a.join("manifest.json")), "-o", s(&b)]);
    for f in ["trajectory.csv", "stats.csv", "snapshot_0.bin", "snapshot_1.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let mb = RunManifest::read(&b.join("manifest.json")).unwrap();
    assert_eq!(mb.config, m.config);

    // random graphs reproduce given their seed
    let graph_args = ["--n", "400", "--kappa", "0.3", "--kind", "random_sparse", "--gamma", "0.3", "--graph-seed", "5"];
    for out in [&a, &c] {
        let mut args = vec!["graph", "--format", "both", "-o", s(out)];
        args.extend(graph_args);
        ok(&args);
    }
    assert_eq!(std::fs::read(a.join("graph.bin")).unwrap(), std::fs::read(c.join("graph.bin")).unwrap());
    assert_eq!(std::fs::read(a.join("graph.csv")).unwrap(), std::fs::read(c.join("graph.csv")).unwrap());
    let summary: Value = serde_json::from_slice(&std::fs::read(a.join("graph_summary.json")).unwrap()).unwrap();
    assert!(summary["z_score"].as_f64().unwrap().abs() < 3.0);
}

#[test]
fn command_line_flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"graph": {"n": 200, "p": 1.0, "kappa": 0.2, "kind": "deterministic_dense"}, "q": 1, "t_end": 4.0}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--kappa", "0.3", "--t-end", "2", "-o", s(&out)]);
    let m = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.config["graph"]["kappa"], Value::from(0.3));
    assert_eq!(m.config["t_end"], Value::from(2.0));
    assert_eq!(m.config["graph"]["n"], Value::from(200));
}

#[test]
fn sweep_across_the_q2_boundary_flips_the_escape_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    ok(&[
        "sweep",
        "--n",
        "1000",
        "--kappa",
        "0.16",
        "--q",
        "2",
        "--t-end",
        "1000",
        "--param",
        "kappa",
        "--values",
        "0.16,0.18",
        "--threads",
        "2",
        "-o",
        s(&out),
    ]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), "index,kappa,max_deviation_end,max_deviation,final_r,escaped,escape_time,status");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][5], rows[0][7]), ("false", "ok"));
    assert_eq!((rows[1][5], rows[1][7]), ("true", "ok"));
    assert!(out.join("runs/run_000.csv").exists() && out.join("runs/run_001.csv").exists());
    let m = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.outputs.len(), 3);
}

/// The κ = 0.166, q = 2, σ = π/3 steady oscillation at t = 2000. The
/// residual left after the first-mode reconstruction is the tail of the
/// mode-2 transient (decay rate ≈ 3.3e-3), whose size depends on the random
/// initial draw; the check is on the median over six draws.
#[test]
fn estimate_recovers_the_first_mode_of_the_oscillating_state() {
    let dir = tempfile::tempdir().unwrap();
    let nu1 = 0.13783 * (std::f64::consts::PI / 3.0).sin();
    let mut residuals = Vec::new();
    for seed in 0..6 {
        let run = dir.path().join(format!("run{seed}"));
        let seed = seed.to_string();
        ok(&[
            "simulate",
            "--n",
            "1000",
            "--kappa",
            "0.166",
            "--q",
            "2",
            "--sigma",
            PI_3,
            "--omega",
            "auto",
            "--t-end",
            "2000",
            "--stride",
            "1",
            "--sample-dt",
            "5",
            "--seed",
            &seed,
            "-o",
            s(&run),
        ]);
        let est = run.join("est");
        ok(&["estimate", "--input", s(&run.join("trajectory.csv")), "--t-from", "1500", "-o", s(&est)]);
        let report: Value = serde_json::from_slice(&std::fs::read(est.join("report.json")).unwrap()).unwrap();
        let f = |k: &str| report[k].as_f64().unwrap();
        assert_eq!(report["nodes_used"], Value::from(1000));
        assert!(f("r_min") > 0.0);
        assert!((f("psi_rate").abs() - nu1).abs() < 0.2 * nu1, "psi rate {}", f("psi_rate"));
        residuals.push(f("final_relative_residual"));
    }
    residuals.sort_by(f64::total_cmp);
    let median = 0.5 * (residuals[2] + residuals[3]);
    assert!(median < 0.01, "residuals {residuals:?}");
}
