use super::*;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

static DIR_COUNTER: AtomicU64 = AtomicU64::new(0);

fn scratch_dir(tag: &str) -> PathBuf {
    let n = DIR_COUNTER.fetch_add(1, Ordering::SeqCst);
    let dir = std::env::temp_dir().join(format!(
        "wirebend-test-{}-{tag}-{n}",
        std::process::id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn bundled_configs_load() {
    for name in ["plan_square_2d.toml", "plan_polygon_3d.toml"] {
        let cfg = ProjectConfig::load(&assets().join(name)).unwrap();
        assert!(cfg.machine.roller_gap() > cfg.file.wire_diameter);
        assert!(!cfg.grasps.is_empty());
        assert!(cfg.curve.points().len() >= 4);
        assert!(!cfg.env.bodies.is_empty(), "table halfspace expected");
        assert!(cfg.digest.starts_with("fnv1a:"));
    }
}

#[test]
fn approximate_straight_curve_warns_and_is_empty() {
    let curve = parse_curve("0 0 0\n0.1 0 0\n0.2 0 0\n0.3 0 0\n").unwrap();
    let machine = MachineFile::parse(&std::fs::read_to_string(assets().join("machine_small.toml")).unwrap()).unwrap();
    let approx = approximate(&curve, 0.001, &machine, 0.0016, 0.0, 0.0, Default::default()).unwrap();
    assert!(approx.set.is_empty());
    assert!(approx.warning.is_some());
}

#[test]
fn approximate_square_yields_three_bends_within_tolerance() {
    let cfg = ProjectConfig::load(&assets().join("plan_square_2d.toml")).unwrap();
    let approx = approximate(
        &cfg.curve,
        cfg.file.epsilon,
        &cfg.machine,
        cfg.file.wire_diameter,
        0.1,
        0.0,
        cfg.bend_options(),
    )
    .unwrap();
    assert_eq!(approx.set.len(), 3, "closed square has three interior corners");
    assert!(approx.max_deviation <= cfg.file.epsilon);
    assert!(approx.round_trip_error < 1e-6);
    for c in &approx.set.candidates {
        assert!((c.turn_angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
    }
}

#[test]
fn approximate_spatial_five_bend_curve() {
    // A five-corner spatial polyline in the style of the bundled examples.
    let curve = parse_curve(
        "0 0 0\n0.05 0 0\n0.05 0.04 0\n0.05 0.04 0.04\n0.01 0.04 0.04\n0.01 0.0 0.04\n0.01 0.0 0.08\n",
    )
    .unwrap();
    let machine = MachineFile::parse(
        &std::fs::read_to_string(assets().join("machine_small.toml")).unwrap(),
    )
    .unwrap();
    let approx =
        approximate(&curve, 0.0005, &machine, 0.0016, 0.1, 0.0, Default::default()).unwrap();
    assert_eq!(approx.set.len(), 5);
    assert!(approx.max_deviation <= 0.0005);
    assert!(approx.round_trip_error <= 0.0005, "round trip {}", approx.round_trip_error);
}

#[test]
fn bendset_doc_round_trip() {
    let cfg = ProjectConfig::load(&assets().join("plan_square_2d.toml")).unwrap();
    let approx = approximate(
        &cfg.curve,
        cfg.file.epsilon,
        &cfg.machine,
        cfg.file.wire_diameter,
        0.1,
        0.0,
        cfg.bend_options(),
    )
    .unwrap();
    let json = serde_json::to_string_pretty(&approx.doc).unwrap();
    let parsed = BendSetDoc::parse(&json).unwrap();
    assert_eq!(parsed, approx.doc);
    let set = parsed.to_bend_set().unwrap();
    assert_eq!(set, approx.set);
}

#[test]
fn cmd_approximate_writes_parseable_output() {
    let out = scratch_dir("approx");
    let result = cmd_approximate(
        &assets().join("curve_square_2d.xyz"),
        0.0005,
        &assets().join("machine_small.toml"),
        0.0016,
        0.1,
        &out.join("bendset.json"),
    )
    .unwrap();
    assert_eq!(result.candidates, 3);
    assert!(result.max_deviation <= 0.0005);
    let text = std::fs::read_to_string(&result.bendset_path).unwrap();
    BendSetDoc::parse(&text).unwrap();
}

/// Single-bend project used by the fast end-to-end tests.
fn one_bend_project(dir: &Path, budget: f64) -> PathBuf {
    std::fs::write(
        dir.join("curve.xyz"),
        "0 0 0\n0.02 0 0\n0.04 0 0\n0.06 0 0\n0.06 0.02 0\n0.06 0.04 0\n0.06 0.06 0\n",
    )
    .unwrap();
    for name in ["machine_small.toml", "robot_arm6.toml", "grasps_basic.toml"] {
        std::fs::copy(assets().join(name), dir.join(name)).unwrap();
    }
    let project = format!(
        r#"curve = "curve.xyz"
machine = "machine_small.toml"
robot = "robot_arm6.toml"
grasps = "grasps_basic.toml"
epsilon = 0.0005
wire_diameter = 0.0016
grasp_lead = 0.08
budget_secs = {budget}
clearance = 0.001
seed = 3
with_trajectories = true
staging_position = [-0.22, -0.15, 0.16]
"#
    );
    let path = dir.join("project.toml");
    std::fs::write(&path, project).unwrap();
    path
}

#[test]
fn plan_single_bend_end_to_end() {
    let dir = scratch_dir("plan1");
    let path = one_bend_project(&dir, 120.0);
    let cfg = ProjectConfig::load(&path).unwrap();
    let out = cmd_plan(&cfg, &dir.join("out")).unwrap();
    assert_eq!(out.status, PlanStatus::Solved);
    assert_eq!(out.snapshots.len(), 2, "one bend gives before/after snapshots");
    let plan_path = out.plan_path.clone().unwrap();
    let doc = PlanDoc::parse(&std::fs::read_to_string(&plan_path).unwrap()).unwrap();
    assert_eq!(doc.steps.len(), 1);
    assert!(doc.grasp_id.is_some());
    assert!(!doc.trajectories.is_empty());
    assert!(dir.join("out/trace.jsonl").exists());

    // Replay must pass, and plan docs round-trip through serde.
    cmd_replay(&plan_path, &cfg).unwrap();
    let re = serde_json::to_string_pretty(&doc).unwrap();
    assert_eq!(PlanDoc::parse(&re).unwrap(), doc);
}

#[test]
fn plan_outputs_are_byte_identical_under_fixed_seed() {
    let dir = scratch_dir("det");
    let path = one_bend_project(&dir, 120.0);
    let cfg = ProjectConfig::load(&path).unwrap();
    let out_a = cmd_plan(&cfg, &dir.join("a")).unwrap();
    let out_b = cmd_plan(&cfg, &dir.join("b")).unwrap();
    assert_eq!(out_a.status, PlanStatus::Solved);
    assert_eq!(out_b.status, PlanStatus::Solved);
    let a = std::fs::read(out_a.plan_path.unwrap()).unwrap();
    let b = std::fs::read(out_b.plan_path.unwrap()).unwrap();
    assert_eq!(a, b, "plan documents must be byte-identical");
    for (sa, sb) in out_a.snapshots.iter().zip(&out_b.snapshots) {
        assert_eq!(std::fs::read(sa).unwrap(), std::fs::read(sb).unwrap());
    }
}

#[test]
fn replay_detects_tampered_plan() {
    let dir = scratch_dir("tamper");
    let path = one_bend_project(&dir, 120.0);
    let cfg = ProjectConfig::load(&path).unwrap();
    let out = cmd_plan(&cfg, &dir.join("out")).unwrap();
    let plan_path = out.plan_path.unwrap();
    let mut doc = PlanDoc::parse(&std::fs::read_to_string(&plan_path).unwrap()).unwrap();
    doc.steps[0].achieved_angle += 0.01;
    let tampered = dir.join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    match cmd_replay(&tampered, &cfg) {
        Err(IoError::Divergence { step: 0, .. }) => {}
        other => panic!("expected divergence at step 0, got {other:?}"),
    }
}

#[test]
fn plan_reports_infeasible_for_out_of_range_turns() {
    let dir = scratch_dir("infeasible");
    // A 143 degree turn: beyond the work range for this wire in any order.
    std::fs::write(
        dir.join("curve.xyz"),
        "0 0 0\n0.03 0 0\n0.06 0 0\n0.036 0.018 0\n0.012 0.036 0\n",
    )
    .unwrap();
    for name in ["machine_small.toml", "robot_arm6.toml", "grasps_basic.toml"] {
        std::fs::copy(assets().join(name), dir.join(name)).unwrap();
    }
    std::fs::write(
        dir.join("project.toml"),
        r#"curve = "curve.xyz"
machine = "machine_small.toml"
robot = "robot_arm6.toml"
grasps = "grasps_basic.toml"
epsilon = 0.0005
wire_diameter = 0.0016
budget_secs = 60.0
seed = 3
staging_position = [-0.22, -0.15, 0.16]
"#,
    )
    .unwrap();
    let cfg = ProjectConfig::load(&dir.join("project.toml")).unwrap();
    let out = cmd_plan(&cfg, &dir.join("out")).unwrap();
    assert_eq!(out.status, PlanStatus::Infeasible);
    assert!(out.plan_path.is_none());
}

#[test]
fn export_mesh_regenerates_snapshots() {
    let dir = scratch_dir("mesh");
    let path = one_bend_project(&dir, 120.0);
    let cfg = ProjectConfig::load(&path).unwrap();
    let out = cmd_plan(&cfg, &dir.join("out")).unwrap();
    let regenerated =
        cmd_export_mesh(&out.plan_path.clone().unwrap(), &cfg, &dir.join("mesh")).unwrap();
    assert_eq!(regenerated.len(), out.snapshots.len());
    for (a, b) in regenerated.iter().zip(&out.snapshots) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}

#[test]
fn config_dir_env_resolves_missing_relative_paths() {
    let dir = scratch_dir("envvar");
    std::fs::write(dir.join("only_here.xyz"), "0 0 0\n1 0 0\n").unwrap();
    std::env::set_var(CONFIG_DIR_ENV, &dir);
    let resolved = resolve_path(Path::new("only_here.xyz"), Path::new("/nonexistent"));
    assert_eq!(resolved, dir.join("only_here.xyz"));
    std::env::remove_var(CONFIG_DIR_ENV);
}

#[test]
fn benchmark_tiny_run_is_deterministic() {
    let cfg = ProjectConfig::load(&assets().join("plan_square_2d.toml")).unwrap();
    let settings = benchmark::BenchmarkSettings {
        groups: 3..=3,
        per_group: 1,
        seed: 5,
        budget: std::time::Duration::from_secs(30),
        ..Default::default()
    };
    let run = || {
        benchmark::run_benchmark(&settings, &cfg.machine, &cfg.robot, &cfg.env, cfg.staging)
    };
    let a = run();
    let b = run();
    assert_eq!(a.report, b.report, "report section must be deterministic");
    assert_eq!(a.report.per_group.len(), 1);
    assert_eq!(a.report.per_group[0].instances, 1);
    // Emitted report documents parse back to equal values.
    let json = serde_json::to_string_pretty(&a.report).unwrap();
    let back: crate::io::formats::BenchmarkReportDoc = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a.report);
}
