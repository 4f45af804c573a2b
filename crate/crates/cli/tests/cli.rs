use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn stiction(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stiction"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn envelope(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in ["command", "config", "results", "warnings"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    v
}

#[test]
fn pure_stick_circle_has_no_slip() {
    let dir = tempfile::tempdir().unwrap();
    let o = stiction(&["simulate", "--mode", "pws", "--x0", "0", "--y0", "0", "--theta0", "0", "--T", "12.566"], dir.path());
    let v = envelope(&o);
    assert_eq!(v["command"], "simulate");
    assert_eq!(v["results"]["branches"][0]["slip_onsets"], 0);
    assert_eq!(v["results"]["branches"][0]["event_count"], 0);
    let csv = std::fs::read_to_string(dir.path().join("trajectory_0.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,theta,region_label\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",SigmaS")));
    assert!(dir.path().join("simulate.json").exists());
}

#[test]
fn singular_start_forks_into_two_files() {
    let dir = tempfile::tempdir().unwrap();
    // γ = 1.5: the stick leaf γ²x = μ_s − 1 reaches I⁻ at θ = π/2.
    let x0 = format!("{}", 0.1 / 2.25);
    let o = stiction(&["simulate", "--gamma", "1.5", "--policy", "enumerate", "--x0", &x0, "--T", "6.0"], dir.path());
    let v = envelope(&o);
    assert_eq!(v["results"]["branches"].as_array().unwrap().len(), 2);
    for f in ["trajectory_0.csv", "trajectory_1.csv", "events_0.jsonl", "events_1.jsonl", "forks.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn regularized_simulation_writes_smooth_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = stiction(&["simulate", "--mode", "reg", "--eps", "1e-3", "--x0", "0.075", "--T", "2"], dir.path());
    let v = envelope(&o);
    assert!(v["results"]["samples"].as_u64().unwrap() > 10);
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 10);
}

#[test]
fn right_branch_csv() {
    let dir = tempfile::tempdir().unwrap();
    let v = envelope(&stiction(&["orbits", "--pws", "--gamma-range", "1.05:6"], dir.path()));
    assert_eq!(v["results"]["label"], "Pi0_right");
    assert_eq!(v["results"]["ends"][0], "PureSlip");
    let csv = std::fs::read_to_string(dir.path().join("branch.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "gamma,theta0,theta_star,x0,maxAbsY,reLambda,imLambda,stability,branchLabel");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    // 17 significant digits: d.dddddddddddddddde±x.
    let mantissa = row[1].trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.replace('.', "").len(), 17);
    let g: f64 = row[0].parse().unwrap();
    assert!(g > 1.0 && g < 6.0);
}

#[test]
fn sweep_merge_is_deterministic_across_worker_counts() {
    let mut merged = Vec::new();
    for w in ["1", "4"] {
        let dir = tempfile::tempdir().unwrap();
        let v = envelope(&stiction(&["orbits", "--pws", "--gamma-range", "1.5:8", "--sweep", "9", "--workers", w], dir.path()));
        assert!(v["results"]["orbits"].as_u64().unwrap() >= 9);
        merged.push(std::fs::read(dir.path().join("sweep.csv")).unwrap());
    }
    assert_eq!(merged[0], merged[1]);
}

#[test]
fn identical_config_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["analyze", "--closeness", "--x0", "0.075", "--T", "2"];
    envelope(&stiction(&args, a.path()));
    envelope(&stiction(&args, b.path()));
    let ra = std::fs::read_to_string(a.path().join("analyze.json")).unwrap();
    let rb = std::fs::read_to_string(b.path().join("analyze.json")).unwrap();
    let strip = |s: &str| s.lines().filter(|l| !l.contains("\"out\"")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&ra), strip(&rb));
}

#[test]
fn analysis_reports() {
    let dir = tempfile::tempdir().unwrap();
    let v = envelope(&stiction(&["analyze", "--folded-singularities", "--gamma-bound", "--transversality"], dir.path()));
    let r = &v["results"];
    assert_eq!(r["folded_singularities"]["points"].as_array().unwrap().len(), 4);
    assert!((r["gamma_bound"]["gamma_bound"].as_f64().unwrap() - 40.824829046386306).abs() < 1e-9);
    let t = r["transversality"].as_array().unwrap();
    assert_eq!(t.len(), 2);
    assert!(t.iter().all(|q| q["angle"].as_f64().unwrap().abs() > 1e-3));

    let v = envelope(&stiction(&["analyze", "--closeness", "--eps", "1e-4,3e-4,1e-3,3e-3", "--x0", "0.075", "--T", "2"], dir.path()));
    let slope = v["results"]["closeness"]["fit"]["slope"].as_f64().unwrap();
    assert!((0.55..=0.8).contains(&slope));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"gamma": 7.0, "mu_s": 1.2, "t": 3.0}"#).unwrap();
    let v = envelope(&stiction(&["--config", cfg.to_str().unwrap(), "simulate", "--gamma", "3.0"], dir.path()));
    assert_eq!(v["config"]["gamma"], 3.0);
    assert_eq!(v["config"]["mu_s"], 1.2);
    assert_eq!(v["config"]["t"], 3.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = stiction(&["simulate", "--mu-s", "0.3"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "ConfigError");

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"gama": 7.0}"#).unwrap();
    let o = stiction(&["--config", cfg.to_str().unwrap(), "simulate"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = stiction(&["analyze", "--folded-singularities", "--gamma", "200"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "NoSingularities");
}
