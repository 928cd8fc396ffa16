use spikelab::config::RunConfig;
use spikelab::verify::{run_scaling_study, run_verification, Pipeline, Study};

fn scratch(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("spikelab-it-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.gp.nodes = 256;
    cfg.gp.radius = 3.5;
    cfg.sweep.fractions = vec![0.8, 0.9, 0.95, 0.98];
    cfg
}

#[test]
fn cubic_trap_energy_exponent() {
    let mut cfg = RunConfig::default();
    cfg.potential.p = 3.0;
    let pipe = Pipeline::prepare(cfg).unwrap();
    let states = pipe.sweep().unwrap();
    let s = run_scaling_study(&pipe, &states).unwrap();
    assert!((s.fit.slope - 0.6).abs() < 0.02, "slope {}", s.fit.slope);
    assert!((s.prefactor / s.expected_prefactor - 1.0).abs() < 0.05);
}

#[test]
fn sweep_records_are_deterministic() {
    let pipe = Pipeline::prepare(small_config()).unwrap();
    let a: Vec<_> = pipe.sweep().unwrap().iter().map(|s| s.record()).collect();
    let b: Vec<_> = pipe.sweep().unwrap().iter().map(|s| s.record()).collect();
    assert_eq!(a, b);
    let mut cfg = small_config();
    cfg.sweep.workers = 2;
    let c: Vec<_> = Pipeline::prepare(cfg).unwrap().sweep().unwrap().iter().map(|s| s.record()).collect();
    assert_eq!(a, c);
}

#[test]
fn scaling_report_lists_every_sweep_point_once() {
    let pipe = Pipeline::prepare(small_config()).unwrap();
    let out = scratch("scaling");
    let report = run_verification(&pipe, Study::Scaling, 1, &out).unwrap();
    assert!(report.scaling.is_some() && report.profile.is_none());
    for f in ["manifest.txt", "sweep.jsonl", "report.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let jsonl = std::fs::read_to_string(out.join("sweep.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 4);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("scaling,energy@")).count(), 4);
    assert!(csv.lines().all(|l| l.split(',').count() >= 7), "{csv}");
    // the coarse-point weight is reported
    assert!(csv.contains("weight=1"));
}

#[test]
fn coarse_points_can_be_downweighted() {
    let mut cfg = small_config();
    cfg.sweep.coarse_weight = 0.5;
    let pipe = Pipeline::prepare(cfg).unwrap();
    let states = pipe.sweep().unwrap();
    let s = run_scaling_study(&pipe, &states).unwrap();
    let mut w = s.weights.clone();
    w.sort_by(f64::total_cmp);
    assert_eq!(w, vec![0.5, 0.5, 1.0, 1.0]);
}

#[test]
fn too_few_sweep_points_are_rejected() {
    let mut cfg = small_config();
    cfg.sweep.fractions = vec![0.9, 0.95, 0.98];
    let pipe = Pipeline::prepare(cfg).unwrap();
    let states = pipe.sweep().unwrap();
    assert!(matches!(run_scaling_study(&pipe, &states), Err(spikelab::Error::InsufficientPoints { .. })));
}

#[test]
fn config_file_roundtrip() {
    let dir = scratch("config");
    std::fs::create_dir_all(&dir).unwrap();
    let mut cfg = small_config();
    cfg.output.seed = 99;
    cfg.potential.angular = "cos".into();
    cfg.potential.delta = 0.05;
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_text()).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);
}
