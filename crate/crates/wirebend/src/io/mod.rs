//! Project configuration, command implementations behind the CLI, and the
//! randomized benchmark harness.

pub mod benchmark;
pub mod formats;
pub mod mesh;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bend::{
    compute_bending_set, reconstruct_pivots, BendSet, BendSetOptions, WireSpec,
};
use crate::geom::{rdp_simplify, DenseCurve, Iso3, PivotChain, Point3};
use crate::motion::{GraspMotionPlanner, GraspPose, MotionOptions, RobotModel};
use crate::planner::{
    evaluate_sequence, prune_search, BendSequence, EvalOptions, PlanResult, SearchOutcome,
    StepChoice, TraceRecord,
};
use crate::sim::{BendDirection, BendProgram, Environment, MachineModel};

use formats::{
    fnv1a_digest, iso_from_pos_rpy, parse_curve, BendSetDoc, BodySpec, FormatError, GraspFile,
    MachineFile, PlanDoc, PlanStatsDoc, PlanStepDoc, PoseDoc, RobotFile, TrajectoryDoc,
    PLAN_FORMAT,
};

/// Environment variable naming the fallback directory for config-relative
/// paths.
pub const CONFIG_DIR_ENV: &str = "WIREBEND_CONFIG_DIR";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("config: {0}")]
    Config(String),
    #[error("bend set: {0}")]
    Bend(#[from] crate::bend::BendError),
    #[error("geometry: {0}")]
    Geom(#[from] crate::geom::GeomError),
    #[error("plan divergence at step {step}: {what}")]
    Divergence { step: usize, what: String },
}

fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::Read { path: path.to_path_buf(), source: e })
}

fn write_file(path: &Path, content: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| IoError::Write { path: path.to_path_buf(), source: e })?;
        }
    }
    fs::write(path, content).map_err(|e| IoError::Write { path: path.to_path_buf(), source: e })
}

/// Resolves a config-referenced path: absolute as-is, otherwise relative to
/// the config file's directory, otherwise under `WIREBEND_CONFIG_DIR`.
pub fn resolve_path(reference: &Path, base_dir: &Path) -> PathBuf {
    if reference.is_absolute() {
        return reference.to_path_buf();
    }
    let local = base_dir.join(reference);
    if local.exists() {
        return local;
    }
    if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
        let alt = Path::new(&dir).join(reference);
        if alt.exists() {
            return alt;
        }
    }
    local
}

/// On-disk project configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectFile {
    pub curve: PathBuf,
    pub machine: PathBuf,
    pub robot: PathBuf,
    pub grasps: PathBuf,
    pub epsilon: f64,
    pub wire_diameter: f64,
    /// Stock length; 0 sizes the stock to the target plus the grasp lead.
    #[serde(default)]
    pub wire_length: f64,
    #[serde(default = "default_grasp_lead")]
    pub grasp_lead: f64,
    #[serde(default = "default_budget_secs")]
    pub budget_secs: f64,
    #[serde(default = "default_clearance")]
    pub clearance: f64,
    pub seed: u64,
    #[serde(default = "default_min_bend_angle_deg")]
    pub min_bend_angle_deg: f64,
    #[serde(default = "default_true")]
    pub with_trajectories: bool,
    pub staging_position: [f64; 3],
    #[serde(default)]
    pub staging_rpy: [f64; 3],
    #[serde(default)]
    pub environment: Vec<BodySpec>,
}

fn default_grasp_lead() -> f64 {
    0.08
}

fn default_budget_secs() -> f64 {
    120.0
}

fn default_clearance() -> f64 {
    1e-3
}

fn default_min_bend_angle_deg() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

/// Fully resolved project: parsed models plus the raw-input digest.
pub struct ProjectConfig {
    pub file: ProjectFile,
    pub machine: MachineModel,
    pub robot: RobotModel,
    pub grasps: Vec<GraspPose>,
    pub curve: DenseCurve,
    pub env: Environment,
    pub staging: Iso3,
    pub digest: String,
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = read_file(path)?;
        let file: ProjectFile = toml::from_str(&text)
            .map_err(|e| IoError::Format { path: path.to_path_buf(), source: e.into() })?;
        if !(file.epsilon > 0.0) {
            return Err(IoError::Config(format!("epsilon must be positive, got {}", file.epsilon)));
        }
        if !(file.wire_diameter > 0.0) {
            return Err(IoError::Config("wire_diameter must be positive".into()));
        }
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

        let machine_path = resolve_path(&file.machine, &base);
        let machine_text = read_file(&machine_path)?;
        let machine = MachineFile::parse(&machine_text)
            .map_err(|e| IoError::Format { path: machine_path.clone(), source: e })?;

        let robot_path = resolve_path(&file.robot, &base);
        let robot_text = read_file(&robot_path)?;
        let robot = RobotFile::parse(&robot_text)
            .map_err(|e| IoError::Format { path: robot_path.clone(), source: e })?;

        let grasps_path = resolve_path(&file.grasps, &base);
        let grasps_text = read_file(&grasps_path)?;
        let grasps = GraspFile::parse(&grasps_text, file.wire_diameter)
            .map_err(|e| IoError::Format { path: grasps_path.clone(), source: e })?;

        let curve_path = resolve_path(&file.curve, &base);
        let curve_text = read_file(&curve_path)?;
        let curve = parse_curve(&curve_text)
            .map_err(|e| IoError::Format { path: curve_path.clone(), source: e })?;

        let mut env = Environment::default();
        env.bodies.push(crate::collide::Body::HalfSpace {
            point: Point3::new(0.0, 0.0, machine.table_z),
            normal: crate::geom::UnitVec3::new_normalize(crate::geom::Vec3::z()),
        });
        for spec in &file.environment {
            env.bodies.push(
                spec.to_body()
                    .map_err(|e| IoError::Format { path: path.to_path_buf(), source: e })?,
            );
        }

        let staging = iso_from_pos_rpy(file.staging_position, file.staging_rpy);
        let digest = fnv1a_digest(&[
            text.as_bytes(),
            machine_text.as_bytes(),
            robot_text.as_bytes(),
            grasps_text.as_bytes(),
            curve_text.as_bytes(),
        ]);
        Ok(Self { file, machine, robot, grasps, curve, env, staging, digest })
    }

    pub fn bend_options(&self) -> BendSetOptions {
        BendSetOptions { min_bend_angle: self.file.min_bend_angle_deg.to_radians() }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions { clearance: self.file.clearance, ..EvalOptions::default() }
    }

    pub fn budget(&self) -> Duration {
        Duration::from_secs_f64(self.file.budget_secs)
    }
}

/// Result of the approximation stage shared by `approximate` and `plan`.
pub struct Approximation {
    pub set: BendSet,
    pub doc: BendSetDoc,
    /// Max distance from any input point to the simplified polyline.
    pub max_deviation: f64,
    /// Max per-coordinate error of the reconstruction round trip.
    pub round_trip_error: f64,
    pub warning: Option<String>,
}

/// Simplifies a curve and derives its bending set.
///
/// The stock gains `lead` meters of straight material ahead of the target's
/// first point (grasping and feed-guide room); unless `stock_length` is
/// positive the stock is sized to the developed length of the lead plus the
/// target shape.
pub fn approximate(
    curve: &DenseCurve,
    epsilon: f64,
    machine: &MachineModel,
    wire_diameter: f64,
    lead: f64,
    stock_length: f64,
    opts: BendSetOptions,
) -> Result<Approximation, IoError> {
    let kept = rdp_simplify(curve, epsilon)?;
    let max_deviation = max_polyline_deviation(curve.points(), &kept);

    let mut pivots = kept.clone();
    if lead > 0.0 {
        let dir = (pivots[1] - pivots[0]).normalize();
        pivots[0] -= dir * lead;
    }

    let r_c = machine.wrap_radius(wire_diameter);
    let (set, round_trip_error, warning) = if pivots.len() < 3 {
        let seg = crate::geom::UnitVec3::new_normalize(pivots[1] - pivots[0]);
        let set = BendSet {
            candidates: Vec::new(),
            center_radius: r_c,
            wire: WireSpec::new(wire_diameter, (pivots[1] - pivots[0]).norm())
                .map_err(IoError::Bend)?,
            seed_normal: crate::geom::any_orthogonal(&seg),
        };
        (set, 0.0, Some("curve is straight at this tolerance; nothing to bend".to_string()))
    } else {
        let chain = PivotChain::from_pivots(pivots.clone())?;
        // Size the stock to the developed length so the reconstruction lands
        // on the final pivot, then apply any user override.
        let mut poly = 0.0;
        for w in chain.pivots.windows(2) {
            poly += (w[1] - w[0]).norm();
        }
        let provisional = WireSpec::new(wire_diameter, poly).map_err(IoError::Bend)?;
        let set = compute_bending_set(&chain, r_c, provisional, opts)?;
        let mut savings = 0.0;
        for c in &set.candidates {
            savings += 2.0 * c.tangent_length(r_c) - c.arc_length(r_c);
        }
        let length = if stock_length > 0.0 { stock_length } else { poly - savings };
        let set = BendSet {
            wire: WireSpec::new(wire_diameter, length).map_err(IoError::Bend)?,
            ..set
        };
        let rebuilt = reconstruct_pivots(&set, (chain.pivots[0], chain.pivots[1]))?;
        let mut err = 0.0f64;
        // The final pivot only matches when the stock is target-sized.
        let compare = if stock_length > 0.0 { rebuilt.len() - 1 } else { rebuilt.len() };
        for (a, b) in rebuilt.iter().take(compare).zip(chain.pivots.iter()) {
            for k in 0..3 {
                err = err.max((a[k] - b[k]).abs());
            }
        }
        let warning = if set.candidates.is_empty() {
            Some("all turns below the minimum bend angle; nothing to bend".to_string())
        } else {
            None
        };
        (set, err, warning)
    };

    let seed_segment = (pivots[0], pivots[1]);
    let doc = BendSetDoc::new(
        &set,
        epsilon,
        curve.points().len(),
        kept.len(),
        max_deviation,
        seed_segment,
    );
    Ok(Approximation { set, doc, max_deviation, round_trip_error, warning })
}

fn max_polyline_deviation(original: &[Point3], simplified: &[Point3]) -> f64 {
    original
        .iter()
        .map(|p| {
            simplified
                .windows(2)
                .map(|w| crate::geom::point_segment_distance(p, &w[0], &w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

pub struct ApproximateOutput {
    pub bendset_path: PathBuf,
    pub candidates: usize,
    pub max_deviation: f64,
    pub round_trip_error: f64,
    pub warning: Option<String>,
}

/// `approximate` command: curve file in, bending-set document out.
pub fn cmd_approximate(
    curve_path: &Path,
    epsilon: f64,
    machine_path: &Path,
    wire_diameter: f64,
    lead: f64,
    out_path: &Path,
) -> Result<ApproximateOutput, IoError> {
    let curve_text = read_file(curve_path)?;
    let curve = parse_curve(&curve_text)
        .map_err(|e| IoError::Format { path: curve_path.to_path_buf(), source: e })?;
    let machine_text = read_file(machine_path)?;
    let machine = MachineFile::parse(&machine_text)
        .map_err(|e| IoError::Format { path: machine_path.to_path_buf(), source: e })?;
    let approx = approximate(
        &curve,
        epsilon,
        &machine,
        wire_diameter,
        lead,
        0.0,
        BendSetOptions::default(),
    )?;
    let json = serde_json::to_string_pretty(&approx.doc)
        .map_err(|e| IoError::Format { path: out_path.to_path_buf(), source: e.into() })?;
    write_file(out_path, &json)?;
    Ok(ApproximateOutput {
        bendset_path: out_path.to_path_buf(),
        candidates: approx.set.len(),
        max_deviation: approx.max_deviation,
        round_trip_error: approx.round_trip_error,
        warning: approx.warning,
    })
}

/// Exit status of the `plan` command, mapped to process exit codes by the
/// CLI: success 0, infeasible 2, timeout 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStatus {
    Solved,
    Infeasible,
    Timeout,
}

pub struct PlanOutput {
    pub status: PlanStatus,
    pub plan_path: Option<PathBuf>,
    pub trace_path: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub stats: crate::planner::SearchStats,
    pub wall_ms: u64,
}

fn direction_name(d: BendDirection) -> &'static str {
    match d {
        BendDirection::Cw => "cw",
        BendDirection::Ccw => "ccw",
    }
}

fn plan_doc_from_result(result: &PlanResult, bend_doc: &BendSetDoc, digest: &str) -> PlanDoc {
    PlanDoc {
        format: PLAN_FORMAT.to_string(),
        input_digest: digest.to_string(),
        bend_set: bend_doc.clone(),
        steps: result
            .sequence
            .steps()
            .zip(result.steps.iter())
            .map(|((idx, choice), ss)| PlanStepDoc {
                bend_index: idx,
                use_alpha: choice.use_alpha,
                direction: direction_name(choice.direction).to_string(),
                achieved_angle: ss.achieved,
                wire_pose: PoseDoc::from_iso(&ss.pre.pose),
            })
            .collect(),
        grasp_id: result.motion.grasp_id,
        trajectories: result
            .motion
            .trajectories
            .iter()
            .map(|t| TrajectoryDoc { waypoints: t.waypoints.clone() })
            .collect(),
        statistics: PlanStatsDoc {
            nodes_explored: result.stats.nodes_explored,
            prunes: result.stats.prunes,
            sequences_tried: result.stats.sequences_tried,
        },
    }
}

fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), IoError> {
    let mut out = String::new();
    for rec in trace {
        out.push_str(&serde_json::to_string(rec).expect("trace records serialize"));
        out.push('\n');
    }
    write_file(path, &out)
}

/// `plan` command: full pipeline from a project configuration.
pub fn cmd_plan(config: &ProjectConfig, out_dir: &Path) -> Result<PlanOutput, IoError> {
    let approx = approximate(
        &config.curve,
        config.file.epsilon,
        &config.machine,
        config.file.wire_diameter,
        config.file.grasp_lead + config.machine.die_gate_distance,
        config.file.wire_length,
        config.bend_options(),
    )?;
    let program = BendProgram::from_bend_set(&approx.set);
    let motion = GraspMotionPlanner::new(
        &config.robot,
        &config.grasps,
        {
            let mut b = config.machine.collision_bodies.clone();
            b.extend(config.env.bodies.iter().cloned());
            b
        },
        config.staging,
        MotionOptions {
            seed: config.file.seed,
            clearance: config.file.clearance,
            with_trajectories: config.file.with_trajectories,
            ..MotionOptions::default()
        },
    );
    let (outcome, _tree, trace) = prune_search(
        &program,
        &config.machine,
        &config.env,
        &motion,
        config.budget(),
        &config.eval_options(),
    );

    let trace_path = out_dir.join("trace.jsonl");
    write_trace(&trace_path, &trace)?;

    match outcome {
        SearchOutcome::Solved(result) => {
            let doc = plan_doc_from_result(&result, &approx.doc, &config.digest);
            let plan_path = out_dir.join("plan.json");
            let json = serde_json::to_string_pretty(&doc)
                .map_err(|e| IoError::Format { path: plan_path.clone(), source: e.into() })?;
            write_file(&plan_path, &json)?;

            let mut snapshots = Vec::new();
            for (k, ss) in result.steps.iter().enumerate() {
                let path = out_dir.join(format!("snapshot_{k:03}.stl"));
                write_file(&path, &mesh::wire_to_stl(&ss.pre, &format!("step_{k:03}")))?;
                snapshots.push(path);
            }
            if let Some(last) = result.steps.last() {
                let k = result.steps.len();
                let path = out_dir.join(format!("snapshot_{k:03}.stl"));
                write_file(&path, &mesh::wire_to_stl(&last.post, &format!("step_{k:03}")))?;
                snapshots.push(path);
            }
            let wall_ms = result.stats.wall_time_ms;
            Ok(PlanOutput {
                status: PlanStatus::Solved,
                plan_path: Some(plan_path),
                trace_path,
                snapshots,
                stats: result.stats,
                wall_ms,
            })
        }
        SearchOutcome::Infeasible(stats) => Ok(PlanOutput {
            status: PlanStatus::Infeasible,
            plan_path: None,
            trace_path,
            snapshots: Vec::new(),
            stats,
            wall_ms: stats.wall_time_ms,
        }),
        SearchOutcome::Timeout(stats) => Ok(PlanOutput {
            status: PlanStatus::Timeout,
            plan_path: None,
            trace_path,
            snapshots: Vec::new(),
            stats,
            wall_ms: stats.wall_time_ms,
        }),
    }
}

/// Replays a plan document against a fresh simulation.
///
/// Every recorded wire pose and achieved angle must reproduce within 1e-9;
/// trajectory waypoints are revalidated against joint limits and, when the
/// project is supplied, the collision scene.
pub fn cmd_replay(plan_path: &Path, config: &ProjectConfig) -> Result<(), IoError> {
    let text = read_file(plan_path)?;
    let doc = PlanDoc::parse(&text)
        .map_err(|e| IoError::Format { path: plan_path.to_path_buf(), source: e })?;
    let set = doc
        .bend_set
        .to_bend_set()
        .map_err(|e| IoError::Format { path: plan_path.to_path_buf(), source: e })?;
    let program = BendProgram::from_bend_set(&set);

    let (machine, env, eval) = (config.machine.clone(), config.env.clone(), config.eval_options());

    let sequence = BendSequence {
        order: doc.steps.iter().map(|s| s.bend_index).collect(),
        choices: doc
            .steps
            .iter()
            .map(|s| StepChoice {
                use_alpha: s.use_alpha,
                direction: if s.direction == "cw" {
                    BendDirection::Cw
                } else {
                    BendDirection::Ccw
                },
            })
            .collect(),
    };
    let states = evaluate_sequence(&sequence, &program, &machine, &env, &eval).map_err(|f| {
        IoError::Divergence { step: f.step, what: format!("step no longer simulates: {:?}", f.reason) }
    })?;

    for (t, (rec, ss)) in doc.steps.iter().zip(states.iter()).enumerate() {
        if (rec.achieved_angle - ss.achieved).abs() > 1e-9 {
            return Err(IoError::Divergence {
                step: t,
                what: format!(
                    "achieved angle {} vs recorded {}",
                    ss.achieved, rec.achieved_angle
                ),
            });
        }
        let rec_pose = rec.wire_pose.to_iso();
        let dt = (rec_pose.translation.vector - ss.pre.pose.translation.vector).norm();
        let dr = rec_pose.rotation.angle_to(&ss.pre.pose.rotation);
        if dt > 1e-9 || dr > 1e-9 {
            return Err(IoError::Divergence {
                step: t,
                what: format!("wire pose drifted by {dt} m / {dr} rad"),
            });
        }
    }

    let obstacles = {
        let mut b = config.machine.collision_bodies.clone();
        b.extend(config.env.bodies.iter().cloned());
        b
    };
    for (k, traj) in doc.trajectories.iter().enumerate() {
        for (w, q) in traj.waypoints.iter().enumerate() {
            if q.len() != config.robot.dof() || !config.robot.within_limits(q) {
                return Err(IoError::Divergence {
                    step: k,
                    what: format!("waypoint {w} violates joint limits"),
                });
            }
            for body in config.robot.collision_bodies(q) {
                for obs in &obstacles {
                    if crate::motion::body_distance(&body, obs) < 0.0 {
                        return Err(IoError::Divergence {
                            step: k,
                            what: format!("waypoint {w} collides"),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// `export-mesh` command: regenerate the per-step snapshots from a plan.
pub fn cmd_export_mesh(
    plan_path: &Path,
    config: &ProjectConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, IoError> {
    let text = read_file(plan_path)?;
    let doc = PlanDoc::parse(&text)
        .map_err(|e| IoError::Format { path: plan_path.to_path_buf(), source: e })?;
    let set = doc
        .bend_set
        .to_bend_set()
        .map_err(|e| IoError::Format { path: plan_path.to_path_buf(), source: e })?;
    let program = BendProgram::from_bend_set(&set);
    let sequence = BendSequence {
        order: doc.steps.iter().map(|s| s.bend_index).collect(),
        choices: doc
            .steps
            .iter()
            .map(|s| StepChoice {
                use_alpha: s.use_alpha,
                direction: if s.direction == "cw" {
                    BendDirection::Cw
                } else {
                    BendDirection::Ccw
                },
            })
            .collect(),
    };
    let states = evaluate_sequence(
        &sequence,
        &program,
        &config.machine,
        &config.env,
        &config.eval_options(),
    )
    .map_err(|f| IoError::Divergence {
        step: f.step,
        what: format!("plan no longer simulates: {:?}", f.reason),
    })?;
    let mut paths = Vec::new();
    for (k, ss) in states.iter().enumerate() {
        let path = out_dir.join(format!("snapshot_{k:03}.stl"));
        write_file(&path, &mesh::wire_to_stl(&ss.pre, &format!("step_{k:03}")))?;
        paths.push(path);
    }
    if let Some(last) = states.last() {
        let k = states.len();
        let path = out_dir.join(format!("snapshot_{k:03}.stl"));
        write_file(&path, &mesh::wire_to_stl(&last.post, &format!("step_{k:03}")))?;
        paths.push(path);
    }
    Ok(paths)
}

pub struct BenchmarkOutput {
    pub report_path: PathBuf,
    pub timings_path: PathBuf,
    pub table: String,
}

/// `benchmark` command: random instances per bend-count group.
pub fn cmd_benchmark(
    config: &ProjectConfig,
    settings: &benchmark::BenchmarkSettings,
    out_dir: &Path,
) -> Result<BenchmarkOutput, IoError> {
    let artifacts = benchmark::run_benchmark(
        settings,
        &config.machine,
        &config.robot,
        &config.env,
        config.staging,
    );
    let report_path = out_dir.join("benchmark_report.json");
    let json = serde_json::to_string_pretty(&artifacts.report)
        .map_err(|e| IoError::Format { path: report_path.clone(), source: e.into() })?;
    write_file(&report_path, &json)?;
    let timings_path = out_dir.join("benchmark_timings.json");
    let json = serde_json::to_string_pretty(&artifacts.timings)
        .map_err(|e| IoError::Format { path: timings_path.clone(), source: e.into() })?;
    write_file(&timings_path, &json)?;
    Ok(BenchmarkOutput { report_path, timings_path, table: artifacts.table })
}

#[cfg(test)]
mod tests;
