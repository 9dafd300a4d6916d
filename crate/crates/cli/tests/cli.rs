//! End-to-end runs of the `mnchemo` binary: exit codes, artifacts, error messages.

use std::path::Path;
use std::process::{Command, Output};

use mnchemo_cli::config::DiffusionConfig;
use mnchemo_cli::{verify, RunConfig};

fn mnchemo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mnchemo")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &RunConfig) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn bounded_run_exits_zero_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = verify::bounded_config(128, 2.0);
    let config = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let o = mnchemo(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["classification"]["verdict"], "Bounded");
    assert_eq!(s["outcome"]["kind"], "completed");
    assert_eq!(s["schema_version"], 1);
    let ts = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert!(ts.starts_with("t,dt,mass_u,mass_v,mass_uw,sup_u,sup_v,sup_w,min_u,min_w,v_norm\n"));
    // 2.0 / 0.1 samples plus the initial one
    assert_eq!(ts.lines().count(), 1 + 21);
    assert!(out.join("final_state.csv").exists());
}

#[test]
fn blowup_run_exits_two_with_detection_time_and_riccati_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = verify::blowup_config(256, 1e-12);
    let config = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let o = mnchemo(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["classification"]["verdict"], "BlowupSuspected");
    assert!(s["classification"]["t_detect"].as_f64().unwrap() > 0.0);
    assert!(s["analysis"]["riccati_bound"].as_f64().unwrap().is_finite());
    assert!(out.join("odi.csv").exists());
    let ts = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert!(ts.lines().next().unwrap().ends_with(",z_rstar,y_rstar"));
}

#[test]
fn pure_power_without_m_bar_is_rejected_with_key() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.model.diffusion = DiffusionConfig::PurePower { m: -0.5, coeff: 1.0 };
    let path = tmp.path().join("run.toml");
    // to_toml would succeed, but loading must fail on validation
    std::fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
    let o = mnchemo(&["simulate", "--config", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("model.m_bar"), "{err}");
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.toml");
    std::fs::write(&path, "[model]\nchii = 3.0\n").unwrap();
    let o = mnchemo(&["simulate", "--config", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("chii"));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = mnchemo(&["verify", "nonsense"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonsense"));
}

#[test]
fn sweep_output_does_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = verify::bounded_config(64, 0.5);
    cfg.initial.perturbation = Some(mnchemo_cli::config::PerturbationConfig { amplitude: 0.1, seed: 7 });
    let config = write_config(tmp.path(), &cfg);
    let mut phase = Vec::new();
    for jobs in ["1", "3"] {
        let out = tmp.path().join(format!("out{jobs}"));
        let o = mnchemo(&[
            "sweep",
            "--config",
            &config,
            "--axis",
            "m=1.5:2.5:0.5",
            "--axis",
            "chi=2:4:2",
            "--replicates",
            "2",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        phase.push(std::fs::read_to_string(out.join("phase.csv")).unwrap());
    }
    assert_eq!(phase[0], phase[1]);
    // 3 × 2 cells × 2 replicates
    assert_eq!(phase[0].lines().count(), 1 + 12);
}

#[test]
fn csv_profile_is_read_relative_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("u0.csv"), "r,u\n0.0,3.0\n0.4,1.0\n1.0,0.5\n").unwrap();
    let mut cfg = verify::bounded_config(64, 0.2);
    cfg.initial.u_profile = mnchemo_cli::config::ProfileConfig::Csv { path: "u0.csv".into() };
    let config = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let o = mnchemo(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ts = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    let first: Vec<f64> = ts.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((first[2] - 1.0).abs() < 1e-12, "mass_u = {}", first[2]);
    // decreasing table, so the sup sits at the origin cell, above the uniform level 1/π
    assert!(first[5] > 1.0 / std::f64::consts::PI);

    std::fs::write(tmp.path().join("u0.csv"), "0.0,1.0\n0.5,oops\n").unwrap();
    let o = mnchemo(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}
