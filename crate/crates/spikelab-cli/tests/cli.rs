use std::path::PathBuf;
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("spikelab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikelab")).args(args).output().expect("spawn")
}

fn write_config(dir: &std::path::Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn townes_reports_critical_mass() {
    let out = run(&["townes"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["a_star"].as_f64().unwrap() - 11.700896525792).abs() < 1e-6);
    assert!((v["w0"].as_f64().unwrap() - 2.20620086).abs() < 1e-6);
}

#[test]
fn supercritical_fraction_fails_validation_before_solving() {
    let d = scratch("supercritical");
    let cfg = write_config(&d, "[sweep]\nfractions = [0.9, 0.97, 0.99, 1.0]\n");
    let out_dir = d.join("out");
    let out = run(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "verify"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["stage"], "config");
    assert_eq!(err["kind"], "InvalidInput");
    assert!(!out_dir.join("report.csv").exists());
}

#[test]
fn unknown_key_reports_line() {
    let d = scratch("unknown");
    let cfg = write_config(&d, "[gp]\nnodes = 256\nsmoothing = 2\n");
    let out = run(&["--config", &cfg, "townes"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "Config");
    assert!(err["error"].as_str().unwrap().contains("line 3"), "{}", err["error"]);
}

#[test]
fn degenerate_trap_skips_profile_study() {
    let d = scratch("degenerate");
    let cfg = write_config(&d, "[potential]\ndelta = 1.0\nangular = \"cos2\"\n");
    let out_dir = d.join("out");
    let out = run(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "verify", "profile"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(report.contains("profile,skipped"));
    assert!(report.contains("Degenerate"));
    assert!(out_dir.join("manifest.txt").exists());
}

const SMALL: &str = "[gp]\nnodes = 256\nradius = 4.5\n[uniqueness]\nnodes = 256\nstarts = 3\n";

#[test]
fn uniqueness_study_passes_and_writes_files() {
    let d = scratch("unique");
    let cfg = write_config(&d, SMALL);
    let out_dir = d.join("out");
    let out = run(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "3", "verify", "uniqueness"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("PASS uniqueness/max_linf_distance"));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.contains("[uniqueness]"));
}

#[test]
fn failed_threshold_exits_one() {
    let d = scratch("threshold");
    let cfg = write_config(&d, &format!("{SMALL}[tolerances]\nunique = 1e-30\n"));
    let out_dir = d.join("out");
    let out = run(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "verify", "uniqueness"]);
    assert_eq!(out.status.code(), Some(1));
    let report = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(report.contains("uniqueness,max_linf_distance"));
    assert!(report.lines().any(|l| l.starts_with("uniqueness,max_linf_distance") && l.contains(",false,")));
}

#[test]
fn minimize_prints_record() {
    let d = scratch("minimize");
    let cfg = write_config(&d, "[gp]\nnodes = 256\n");
    let out = run(&["--config", &cfg, "minimize", "--fraction", "0.9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let e = v["energy"].as_f64().unwrap();
    assert!((e - 0.6737).abs() < 1e-2, "{e}");
    assert!(v["mu"].as_f64().unwrap() < 0.0);
}

#[test]
fn minimize_at_critical_mass_is_rejected() {
    let d = scratch("collapse");
    let out = run(&["--out", d.to_str().unwrap(), "minimize", "--a", "11.8"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "Collapse");
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("failure.json")).unwrap()).unwrap();
    assert_eq!(record["stage"], "minimize");
}

#[test]
fn show_config_roundtrips_defaults() {
    let out = run(&["show-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for section in ["[radial]", "[potential]", "[gp]", "[sweep]", "[tolerances]", "[output]"] {
        assert!(text.contains(section), "{section}");
    }
    let d = scratch("roundtrip");
    let cfg = write_config(&d, &text);
    assert!(run(&["--config", &cfg, "show-config"]).status.success());
}
