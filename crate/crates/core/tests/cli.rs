//! End-to-end checks of the command-line binary: flag handling, output
//! schemas, determinism across worker counts, and the exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expolaw"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn read_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn orbit_run_writes_header_schema_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let result = run(&[
        "orbit",
        "--steps",
        "32",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let lines = read_lines(&out.join("orbit.csv"));
    assert!(lines[0].starts_with("# config_hash="));
    assert!(lines[0].ends_with(" seed=7"));
    let hash = lines[0]
        .trim_start_matches("# config_hash=")
        .split_whitespace()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(hash.len(), 16, "hash is 16 hex chars: {hash}");
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(lines[1], "step,driving,phase");
    assert_eq!(lines.len(), 2 + 33, "initial state plus 32 steps");
    // floats carry full precision in scientific notation
    let phase = lines[2].split(',').nth(2).unwrap();
    assert!(phase.contains('e') && phase.parse::<f64>().is_ok());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "orbit");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"], serde_json::json!(hash));
}

#[test]
fn law_outputs_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let (out1, out2) = (dir.path().join("w1"), dir.path().join("w3"));
    for (out, workers) in [(&out1, "1"), (&out2, "3")] {
        let result = run(&[
            "hitting-law",
            "--samples",
            "1500",
            "--radius",
            "0.05",
            "--seed",
            "13",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
    }
    for name in ["samples.csv", "survival.csv"] {
        assert_eq!(
            fs::read(out1.join(name)).unwrap(),
            fs::read(out2.join(name)).unwrap(),
            "{name} differs between worker counts"
        );
    }
}

#[test]
fn config_file_drives_the_run_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.conf");
    fs::write(
        &config,
        "[system]\nfamily = doubling\n\n[experiment]\nsamples = 800\nradius = 0.06\nseed = 9\nburn_in = 10\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let result = run(&[
        "hitting-law",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "11",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let lines = read_lines(&out.join("samples.csv"));
    assert!(lines[0].ends_with(" seed=11"), "flag overrides file seed");
    assert_eq!(lines.len(), 2 + 800, "sample count comes from the file");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["summary"]["system"], "affine(m=2)");
}

#[test]
fn seeds_change_the_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (out1, out2) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&out1, "21"), (&out2, "22")] {
        let result = run(&[
            "hitting-law",
            "--samples",
            "500",
            "--radius",
            "0.05",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
    }
    assert_ne!(
        fs::read(out1.join("samples.csv")).unwrap(),
        fs::read(out2.join("samples.csv")).unwrap()
    );
}

#[test]
fn multi_radius_runs_get_indexed_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let result = run(&[
        "hitting-law",
        "--samples",
        "400",
        "--radius",
        "0.1",
        "--radius",
        "0.05",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    for name in ["samples_0.csv", "samples_1.csv", "survival_0.csv", "survival_1.csv"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    assert!(!out.join("samples.csv").exists());
}

#[test]
fn recurrence_rate_defaults_to_a_dyadic_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.conf");
    fs::write(&config, "[system]\nfamily = doubling\n").unwrap();
    let out = dir.path().join("run");
    let result = run(&[
        "recurrence-rate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let lines = read_lines(&out.join("rate.csv"));
    assert_eq!(lines[1], "r,tau,log2_r,log2_tau");
    assert_eq!(lines.len(), 2 + 8, "radii 2^-5 through 2^-12");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["summary"]["slope"].is_f64());
}

#[test]
fn stationary_dump_has_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let result = run(&[
        "stationary",
        "--samples",
        "3000",
        "--seed",
        "17",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let lines = read_lines(&out.join("stationary.csv"));
    assert_eq!(lines[1], "sample_id,x");
    assert_eq!(lines.len(), 2 + 3000);
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");

    // 2: invalid flag value
    let result = run(&["hitting-law", "--radius", "0.7", "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2), "{result:?}");
    assert!(String::from_utf8_lossy(&result.stderr).contains("radius"));

    // 1: unreadable config file
    let result = run(&["hitting-law", "--config", "/nonexistent/exp.conf"]);
    assert_eq!(result.status.code(), Some(1), "{result:?}");

    // 2: config file that does not parse
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "[system]\nfamily = quaternion\n").unwrap();
    let result = run(&["hitting-law", "--config", bad.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2), "{result:?}");

    // 3: statistical gate fails after outputs are written
    let gated = dir.path().join("gated.conf");
    fs::write(
        &gated,
        "[system]\nfamily = doubling\n[experiment]\nsamples = 50\nradius = 0.01\nks_tol = 0.001\nburn_in = 2\n",
    )
    .unwrap();
    let gate_out = dir.path().join("gated");
    let result = run(&[
        "hitting-law",
        "--config",
        gated.to_str().unwrap(),
        "--out",
        gate_out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3), "{result:?}");
    assert!(
        gate_out.join("samples.csv").exists() && gate_out.join("manifest.json").exists(),
        "failed runs still leave their outputs for inspection"
    );

    // 4: estimator cannot proceed (no stationary mass on the target)
    let starved = dir.path().join("starved.conf");
    fs::write(
        &starved,
        "[system]\nfamily = beta\nbeta_min = 2.0\nbeta_max = 3.0\n[experiment]\nsamples = 200\nradius = 0.000000001\nnu_samples = 2000\nburn_in = 20\n",
    )
    .unwrap();
    let result = run(&[
        "return-law",
        "--config",
        starved.to_str().unwrap(),
        "--out",
        dir.path().join("starved").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(4), "{result:?}");
}
