use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn repo_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(name)
}

fn omega(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omega"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run omega")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_paths(o: &Output) -> Vec<PathBuf> {
    String::from_utf8(o.stdout.clone()).unwrap().lines().map(PathBuf::from).collect()
}

fn price(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn classify_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_file("sec6.toml");
    let o = omega(&["classify", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let paths = stdout_paths(&o);
    assert_eq!(paths.len(), 1);
    let j = read_json(&paths[0]);
    assert_eq!(j["regime"]["martingale_class"], "SuperMartingale");
    assert!((j["regime"]["psi_1"].as_f64().unwrap() - 0.02).abs() < 1e-12);
    assert!((j["regime"]["u_bar"].as_f64().unwrap() - 0.282_670_6).abs() < 1e-6);
    assert_eq!(j["config"]["parsed"]["strike_K"], 10.0);
    assert_eq!(j["config"]["source"], std::fs::read_to_string(&cfg).unwrap());
}

#[test]
fn figure1_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_file("sec6.toml");
    let o = omega(&["figure1", "--config", cfg.to_str().unwrap(), "--grid", "200"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let paths = stdout_paths(&o);
    assert_eq!(paths.len(), 4);
    for p in &paths[..3] {
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("x,price,v,payoff,in_region\n"));
        assert_eq!(text.lines().count(), 201);
    }
    let s = read_json(&paths[3]);
    let panels = s["panels"].as_array().unwrap();
    assert_eq!(panels[0]["shape"], "Ray");
    assert!((price(&panels[0]["intervals_price"][0][0]) - 54.1636).abs() < 0.02);
    assert_eq!(panels[1]["shape"], "PointPlusRay");
    assert!((price(&panels[1]["intervals_price"][0][0]) - 13.3081).abs() < 0.02);
    assert!((price(&panels[1]["intervals_price"][1][0]) - 50.9883).abs() < 0.02);
    assert_eq!(panels[2]["shape"], "IntervalPlusRay");
    let iv = &panels[2]["intervals_price"];
    assert!((price(&iv[0][0]) - 13.3081).abs() < 0.02);
    assert!((price(&iv[0][1]) - 19.1801).abs() < 0.02);
    assert!((price(&iv[1][0]) - 47.626_53).abs() < 1e-3);
    assert_eq!(iv[1][1], Value::Null);
    assert!((price(&s["k_over"]["price"]) / 77.7536 - 1.0).abs() < 1e-3);
    assert!((s["y_tilde"]["log"].as_f64().unwrap() - 2.7870).abs() < 5e-4);
    let b = &panels[2]["thresholds"]["b_star"];
    assert!((b["log"].as_f64().unwrap().exp() - price(&b["price"])).abs() < 1e-9);
}

#[test]
fn deterministic_artifacts() {
    let cfg = repo_file("sec6.toml");
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let o = omega(&["figure1", "--config", cfg.to_str().unwrap(), "--grid", "50"], dir.path());
        assert!(o.status.success());
        stdout_paths(&o).iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn region_override_gives_single_ray() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_file("sec6.toml");
    let o = omega(
        &["region", "--config", cfg.to_str().unwrap(), "--overrides", "level_y=10"],
        dir.path(),
    );
    assert!(o.status.success());
    let j = read_json(&dir.path().join("region.json"));
    assert_eq!(j["shape"], "Ray");
    assert_eq!(j["intervals_price"].as_array().unwrap().len(), 1);
    assert!((price(&j["intervals_price"][0][0]) - 13.3081).abs() < 1e-3);
    assert!(dir.path().join("profile.csv").exists());
}

#[test]
fn json_mirror_matches_toml() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let toml = repo_file("sec6.toml");
    let json = repo_file("sec6.json");
    assert!(omega(&["value-table", "--config", toml.to_str().unwrap()], a.path()).status.success());
    assert!(omega(&["value-table", "--config", json.to_str().unwrap()], b.path()).status.success());
    let csv = |d: &Path| std::fs::read(d.join("value_table.csv")).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
    let mut ja = read_json(&a.path().join("region.json"));
    let mut jb = read_json(&b.path().join("region.json"));
    assert_eq!(ja["config"]["parsed"], jb["config"]["parsed"]);
    ja.as_object_mut().unwrap().remove("config");
    jb.as_object_mut().unwrap().remove("config");
    assert_eq!(ja, jb);
}

#[test]
fn sub_martingale_region_is_empty_with_infinite_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_file("sec6.toml");
    let o = omega(&["region", "--config", cfg.to_str().unwrap(), "--overrides", "r=0.01"], dir.path());
    assert!(o.status.success());
    let j = read_json(&dir.path().join("region.json"));
    assert_eq!(j["shape"], "Empty");
    assert_eq!(j["infinite_value"], true);
    let csv = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",inf,"));
}

#[test]
fn exit_codes_and_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_file("sec6.toml");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "gamma = 0.3\n").unwrap();
    let o = omega(&["classify", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "Config");
    assert!(o.stdout.is_empty());

    let o = omega(&["region", "--config", cfg.to_str().unwrap(), "--overrides", "nope=1"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = omega(&["thresholds", "--config", cfg.to_str().unwrap(), "--overrides", "r=0.01"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "RegimeError");
}

#[test]
fn verify_mc_flags_coarse_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_file("sec6.toml");
    let args = ["verify-mc", "--config", cfg.to_str().unwrap()];
    let o = omega(&[&args[..], &["--mc-paths", "100000", "--dt", "0.25"]].concat(), dir.path());
    assert_eq!(o.status.code(), Some(4));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "McZScore");

    let o = omega(&[&args[..], &["--mc-paths", "20000"]].concat(), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let j = read_json(&dir.path().join("verify_mc.json"));
    assert!(j["max_abs_z"].as_f64().unwrap() <= 4.0);
    let csv = std::fs::read_to_string(dir.path().join("verify_mc.csv")).unwrap();
    assert!(csv.starts_with("check,x,analytic,mc_mean,std_error,z_score,n\n"));
}
