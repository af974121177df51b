//! End-to-end tests of the `ddpmw2` binary: every subcommand, the exit-code
//! contract, and agreement between CLI output and direct library calls.

use std::path::Path;
use std::process::{Command, Output};

use ddpmw2_core::harness::SCHEMA_VERSION;
use ddpmw2_core::metrics::{w2_exact_empirical, w2_sliced};
use ddpmw2_core::rng::{chain_rng, Lane};
use ddpmw2_core::sampler::SampleMatrix;
use ddpmw2_core::schedule::{build_schedule, ScheduleParams};
use ddpmw2_core::target::TargetSpec;
use ddpmw2_core::theory::{gaussian_backward_moments, thm_bound, BoundParams, TheoremKind};

/// The binary under test, with the environment pinned so ambient
/// DDPMW2_THREADS settings can't leak in.
fn ddpmw2() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ddpmw2"));
    cmd.env_remove("DDPMW2_THREADS");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn ddpmw2");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("spawn ddpmw2").status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const GAUSS_2D: &str = r#"{"kind":"gaussian","mean":[0.0,0.0],"var":[2.0,2.0]}"#;

#[test]
fn schedule_csv_matches_the_library_grid() {
    let out = run_ok(ddpmw2().args(["schedule", "--schedule", "1,1,2"]));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,t,h,query_time,h_max,compliant");

    let schedule = build_schedule(&ScheduleParams::with_default_delta(1.0, 1.0, 2)).unwrap();
    assert_eq!(lines.len(), 1 + schedule.times.len());
    for (k, &t) in schedule.times.iter().enumerate() {
        let fields: Vec<&str> = lines[1 + k].split(',').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[0], k.to_string());
        assert_eq!(fields[1], t.to_string(), "time at index {k}");
        let expected_h = schedule.steps.get(k).map(|h| h.to_string()).unwrap_or_default();
        assert_eq!(fields[2], expected_h, "step leaving index {k}");
        assert_eq!(fields[3], (schedule.t_final - t).to_string());
        assert_eq!(fields[4], schedule.h_max.to_string());
        assert_eq!(fields[5], "false");
    }
    // The shorthand with an explicit delta takes the explicit-mode path.
    let out = run_ok(ddpmw2().args(["schedule", "--schedule", "1,1,2,0.01"]));
    let text = String::from_utf8(out.stdout).unwrap();
    let last = text.lines().last().unwrap();
    let t_final: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    let explicit = build_schedule(&ScheduleParams { t1: 1.0, a: 1.0, k0: 2, delta: 0.01 }).unwrap();
    assert_eq!(t_final, explicit.t_final);
}

#[test]
fn run_is_deterministic_and_writes_the_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let matrix_path = dir.path().join("samples.bin");
    let args = |path: &Path| {
        vec![
            "run".to_string(),
            "--target".to_string(),
            GAUSS_2D.to_string(),
            "--schedule".to_string(),
            "2,1,8".to_string(),
            "--chains".to_string(),
            "128".to_string(),
            "--seed".to_string(),
            "42".to_string(),
            "--out".to_string(),
            path.display().to_string(),
        ]
    };
    let first = run_ok(ddpmw2().args(args(&matrix_path)));
    let second = run_ok(ddpmw2().args(args(&matrix_path)));
    assert_eq!(first.stdout, second.stdout, "same seed must reproduce the envelope bitwise");

    let envelope = stdout_json(&first);
    assert_eq!(envelope["n_chains"], 128);
    assert_eq!(envelope["d"], 2);
    assert_eq!(envelope["oracle"], "exact");
    assert!(envelope["trajectory"].is_null());
    assert_eq!(envelope["diagnostics"]["total_oracle_calls"], 128 * 17);

    // The binary matrix holds the final states the envelope summarizes.
    let matrix = SampleMatrix::read_from(&matrix_path).unwrap();
    assert_eq!((matrix.n, matrix.d), (128, 2));
    let mean = matrix.mean_vector();
    for j in 0..2 {
        assert_eq!(envelope["mean"][j].as_f64().unwrap(), mean[j]);
    }
}

#[test]
fn run_takes_a_single_cell_config_and_records_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("cell.json");
    std::fs::write(
        &config_path,
        format!(
            r#"{{
  "schema_version": {SCHEMA_VERSION},
  "target": {GAUSS_2D},
  "schedule": {{"mode": "theorem", "t1": 2.0, "a": 1.0, "k0": 4}},
  "oracle": "exact",
  "n_chains": 16,
  "n_reference": 16,
  "w2_method": "exact_assignment",
  "seed": 5,
  "record_trajectory": 2
}}"#
        ),
    )
    .unwrap();
    let out = run_ok(ddpmw2().args(["run", "--config", config_path.to_str().unwrap()]));
    let envelope = stdout_json(&out);
    // Stride 2 over grid indices 0..=9, endpoints always kept.
    let indices: Vec<u64> = envelope["trajectory"]["indices"]
        .as_array()
        .expect("trajectory recorded")
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(indices, vec![0, 2, 4, 6, 8, 9]);
    assert_eq!(envelope["trajectory"]["states"].as_array().unwrap().len(), indices.len());

    // A config with sweep axes is a sweep, not a run.
    let sweep_path = dir.path().join("sweep.json");
    let text = std::fs::read_to_string(&config_path).unwrap();
    std::fs::write(
        &sweep_path,
        text.replace("\"record_trajectory\": 2", "\"record_trajectory\": 2, \"sweep\": {\"k0\": [4, 8]}"),
    )
    .unwrap();
    let out = ddpmw2()
        .args(["run", "--config", sweep_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep"));
}

#[test]
fn w2_single_pair_is_the_euclidean_distance() {
    let dir = tempfile::tempdir().unwrap();
    let xs_path = dir.path().join("xs.bin");
    let ys_path = dir.path().join("ys.bin");
    SampleMatrix { n: 1, d: 2, data: vec![0.0, 0.0] }.write_to(&xs_path).unwrap();
    SampleMatrix { n: 1, d: 2, data: vec![3.0, 4.0] }.write_to(&ys_path).unwrap();
    let out = run_ok(ddpmw2().args([
        "w2",
        xs_path.to_str().unwrap(),
        ys_path.to_str().unwrap(),
        "--method",
        "exact-assignment",
    ]));
    let json = stdout_json(&out);
    assert_eq!(json["value"], 5.0);
    assert_eq!(json["method"], "exact_assignment");
    assert_eq!(json["n"], serde_json::json!([1, 1]));
}

#[test]
fn w2_methods_agree_with_direct_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let t1 = TargetSpec::Gaussian { mean: vec![0.0, 0.0], var: vec![1.0, 1.0] };
    let t2 = TargetSpec::Gaussian { mean: vec![0.5, 0.0], var: vec![2.0, 1.0] };
    let xs = SampleMatrix { n: 64, d: 2, data: t1.sample(64, 1).unwrap() };
    let ys = SampleMatrix { n: 64, d: 2, data: t2.sample(64, 2).unwrap() };
    let xs_path = dir.path().join("xs.bin");
    let ys_path = dir.path().join("ys.bin");
    xs.write_to(&xs_path).unwrap();
    ys.write_to(&ys_path).unwrap();

    let value = |method: &str, seed: &str| -> f64 {
        let out = run_ok(ddpmw2().args([
            "w2",
            xs_path.to_str().unwrap(),
            ys_path.to_str().unwrap(),
            "--method",
            method,
            "--slices",
            "64",
            "--seed",
            seed,
        ]));
        stdout_json(&out)["value"].as_f64().unwrap()
    };
    assert_eq!(value("exact-assignment", "0"), w2_exact_empirical(&xs, &ys).unwrap().value);
    let mut rng = chain_rng(9, 0, Lane::Slices);
    assert_eq!(value("sliced", "9"), w2_sliced(&xs, &ys, 64, &mut rng).unwrap().value);
    assert!(value("bures-gaussian-fit", "0") > 0.0);
}

#[test]
fn bound_and_gaussian_oracle_print_library_values() {
    let out = run_ok(ddpmw2().args([
        "bound", "--theorem", "one", "--m", "1", "--t1", "2", "--h-max", "0.1", "--dim", "4",
    ]));
    let json = stdout_json(&out);
    let expected = thm_bound(
        TheoremKind::Thm1,
        &BoundParams {
            m: Some(1.0),
            b: 0.0,
            big_m: 0.0,
            t1: 2.0,
            h_max: 0.1,
            eps_b: 0.0,
            eps_v: 0.0,
            d: 4,
        },
    )
    .unwrap();
    assert_eq!(json["total"].as_f64().unwrap(), expected.total);
    assert_eq!(json["theorem"], "thm1");
    assert_eq!(json["terms"]["bias"], 0.0);

    let out = run_ok(ddpmw2().args(["gaussian-oracle", "--sigma2", "1", "--t", "3.5"]));
    let json = stdout_json(&out);
    let expected = gaussian_backward_moments(1.0, 3.5).unwrap();
    assert_eq!(json["var_yt"].as_f64().unwrap(), expected.var_yt);
}

#[test]
fn certify_recovers_a_constructed_noise_level() {
    let out = run_ok(ddpmw2().args([
        "certify",
        "--target",
        r#"{"kind":"gaussian","mean":[0.0],"var":[1.0]}"#,
        "--oracle",
        "gauss:0.5",
        "--schedule",
        "1,1,4",
        "--reps",
        "4000",
        "--seed",
        "3",
    ]));
    let json = stdout_json(&out);
    let eps_v = json["eps_v_hat"].as_f64().unwrap();
    assert!((eps_v - 0.5).abs() < 0.05, "certified {eps_v} vs constructed 0.5");
    assert_eq!(json["exact_eps_b"], 0.0);
    assert_eq!(json["uniform"], true);
    assert_eq!(json["per_point"].as_array().unwrap().len(), 9);
}

/// A two-cell sweep config; `extra` splices extra fields into the JSON.
fn sweep_config(extra: &str) -> String {
    format!(
        r#"{{
  "schema_version": {SCHEMA_VERSION},
  "target": {{"kind": "gaussian", "mean": [0.0], "var": [1.0]}},
  "schedule": {{"mode": "theorem", "t1": 2.0, "a": 1.0, "k0": 8}},
  "oracle": "exact",
  "n_chains": 128,
  "n_reference": 128,
  "w2_method": "bures_gaussian_fit",
  "bootstrap_resamples": 50,
  "seed": 11{extra}
}}"#
    )
}

#[test]
fn sweep_writes_csv_and_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, sweep_config(",\n  \"sweep\": {\"k0\": [8, 16]}")).unwrap();
    let out_dir = dir.path().join("results");
    let out = run_ok(ddpmw2().args([
        "sweep",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2 cell(s) planned"));

    let csv = std::fs::read_to_string(out_dir.join("cells.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("cell,k0,t1,h_max,"));
    assert!(lines[1].starts_with("0,8,"));
    assert!(lines[2].starts_with("1,16,"));

    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("record.json")).unwrap())
            .unwrap();
    assert_eq!(record["cells"].as_array().unwrap().len(), 2);
    assert!(record["failure"].is_null());
    assert_eq!(record["schema_version"].as_u64().unwrap(), u64::from(SCHEMA_VERSION));

    // A seed override changes the derived cell seeds in the record.
    let out2_dir = dir.path().join("results2");
    run_ok(ddpmw2().args([
        "sweep",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out2_dir.to_str().unwrap(),
        "--seed",
        "12",
    ]));
    let record2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2_dir.join("record.json")).unwrap())
            .unwrap();
    assert_eq!(record2["config"]["seed"].as_u64().unwrap(), 12);
    assert_ne!(record["cells"][0]["seeds"]["run"], record2["cells"][0]["seeds"]["run"]);
}

#[test]
fn exit_codes_follow_the_contract() {
    // Missing input file: validation (2).
    assert_eq!(exit_code(ddpmw2().args(["w2", "/nonexistent/a.bin", "/nonexistent/b.bin"])), 2);

    // Malformed config (unknown field): validation (2).
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, sweep_config(",\n  \"not_a_field\": 1")).unwrap();
    assert_eq!(
        exit_code(ddpmw2().args(["sweep", "--config", bad.to_str().unwrap()])),
        2
    );

    // Oracle noise huge enough to overflow the state mid-run: numerical
    // abort (3), with the finished cells flushed before exit.
    let exploding = dir.path().join("exploding.json");
    std::fs::write(
        &exploding,
        sweep_config(",\n  \"sweep\": {\"noise_scale\": [0.0, 1e308], \"noise_family\": [\"gauss\"]}"),
    )
    .unwrap();
    let out_dir = dir.path().join("partial");
    let out = ddpmw2()
        .args([
            "sweep",
            "--config",
            exploding.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("record.json")).unwrap())
            .unwrap();
    assert_eq!(record["cells"].as_array().unwrap().len(), 1, "first cell flushed");
    assert_eq!(record["failure"]["cell"], 1);
    assert_eq!(record["failure"]["numerical"], true);

    // Zero threads: validation (2).
    assert_eq!(
        exit_code(ddpmw2().args(["schedule", "--schedule", "1,1,2", "--threads", "0"])),
        2
    );
}

#[test]
fn thread_count_comes_from_flag_or_environment() {
    run_ok(ddpmw2().args(["schedule", "--schedule", "1,1,2", "--threads", "1"]));
    run_ok(ddpmw2().args(["schedule", "--schedule", "1,1,2"]).env("DDPMW2_THREADS", "2"));
    let code = ddpmw2()
        .args(["schedule", "--schedule", "1,1,2"])
        .env("DDPMW2_THREADS", "many")
        .output()
        .unwrap()
        .status
        .code();
    assert_eq!(code, Some(2));
}
