use std::path::Path;
use std::process::{Command, Output};

use mnchange::harness::ExperimentConfig;
use mnchange::io::write_samples;
use mnchange::seed::rng_from_seed;
use mnchange::{samplers, SampleMatrix};

fn mnchange(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mnchange"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn two_samples(dir: &Path) -> (String, String) {
    let mut rng = rng_from_seed(21);
    let graph = samplers::build_lattice(3).unwrap();
    let inst = samplers::make_gaussian_change_with(&graph, 2, 2.0, -0.4, &mut rng).unwrap();
    let p: SampleMatrix = inst.p.sample(300, &mut rng).unwrap();
    let q: SampleMatrix = inst.q.sample(300, &mut rng).unwrap();
    let (pp, qp) = (dir.join("p.csv"), dir.join("q.csv"));
    write_samples(&pp, &p).unwrap();
    write_samples(&qp, &q).unwrap();
    (pp.display().to_string(), qp.display().to_string())
}

#[test]
fn help_exits_zero() {
    let out = mnchange(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["success-rate", "nq-coupling", "d-sweep", "non-gaussian", "roc", "real", "bootstrap", "diagnose"] {
        assert!(text.contains(sub), "help lists {sub}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(mnchange(&[]).status.code(), Some(2));
    assert_eq!(mnchange(&["roc"]).status.code(), Some(2));
    assert_eq!(mnchange(&["frobnicate", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn shipped_configs_pass_dry_run() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    for (file, sub) in [
        ("success_rate.json", "success-rate"),
        ("nq_coupling.json", "nq-coupling"),
        ("d_sweep.json", "d-sweep"),
        ("non_gaussian.json", "non-gaussian"),
        ("roc.json", "roc"),
        ("real.json", "real"),
        ("diagnose.json", "diagnose"),
    ] {
        let path = configs().join(file).display().to_string();
        let out = mnchange(&[sub, "--config", &path, "--out", &out_dir, "--dry-run"]);
        assert_eq!(out.status.code(), Some(0), "{file}: {}", String::from_utf8_lossy(&out.stderr));
        let cfg: ExperimentConfig = serde_json::from_slice(&out.stdout).unwrap();
        cfg.validate().unwrap();
    }
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none(), "dry run writes nothing");
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = configs().join("success_rate.json").display().to_string();
    let out = mnchange(&[
        "success-rate", "--config", &path, "--out", "unused", "--dry-run", "--seed", "99", "--trials", "3", "--m", "4,9",
        "--c", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let cfg: ExperimentConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((cfg.seed, cfg.trials, cfg.m_grid.clone(), cfg.c), (99, 3, vec![4, 9], 0.5));
    drop(dir);
}

#[test]
fn invalid_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let out_dir = dir.path().join("out").display().to_string();
    for text in [
        "{ not json",
        r#"{ "trials": 0 }"#,
        r#"{ "m_grid": [10] }"#,
        r#"{ "unknown_field": 1 }"#,
        r#"[1, 2]"#,
    ] {
        std::fs::write(&bad, text).unwrap();
        let out = mnchange(&["success-rate", "--config", &bad.display().to_string(), "--out", &out_dir]);
        assert_eq!(out.status.code(), Some(2), "{text}");
    }
    let out = mnchange(&["diagnose", "--config", "/nonexistent/cfg.json", "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(2));
    let out = mnchange(&["real", "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(2), "real without CSV paths");
}

#[test]
fn data_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out").display().to_string();
    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
    let ragged = ragged.display().to_string();
    let out = mnchange(&["real", "--p-csv", &ragged, "--q-csv", &ragged, "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    let out = mnchange(&["real", "--p-csv", "/nonexistent/p.csv", "--q-csv", "/nonexistent/q.csv", "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(3));

    let (p, _) = two_samples(dir.path());
    let narrow = dir.path().join("narrow.csv");
    std::fs::write(&narrow, "1,2\n3,4\n5,6\n").unwrap();
    let out = mnchange(&["real", "--p-csv", &p, "--q-csv", &narrow.display().to_string(), "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(3), "column mismatch");
}

#[test]
fn real_run_writes_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (p, q) = two_samples(dir.path());
    let out_dir = dir.path().join("run");
    let out = mnchange(&[
        "bootstrap",
        "--p-csv", &p,
        "--q-csv", &q,
        "--bootstrap-trials", "4",
        "--target-support", "12",
        "--threads", "1",
        "--out", &out_dir.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "bootstrap");
    for f in manifest["files"].as_array().unwrap() {
        assert!(out_dir.join(f.as_str().unwrap()).exists(), "{f}");
    }
    for f in ["edges.csv", "bootstrap.csv", "real.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn small_success_rate_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{ "m_grid": [4], "n_p_grid": { "absolute": [100, 200] }, "n_q": { "fixed": 200 }, "d": { "fixed": 1 }, "trials": 2 }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let out = mnchange(&[
        "success-rate",
        "--config", &cfg.display().to_string(),
        "--out", &out_dir.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("success_rate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let svg = std::fs::read_to_string(out_dir.join("success_rate.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}
