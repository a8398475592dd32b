//! Randomized sequence-planning benchmark: bend-count groups with drawn
//! bend, twist and lift angles, pruned search per instance, and a report in
//! a success-rate table layout plus separate timing distributions.

use std::time::Duration;

use nalgebra::Rotation3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::bend::{compute_bending_set, BendSetOptions, WireSpec};
use crate::geom::{PivotChain, Point3, UnitVec3, Vec3};
use crate::io::formats::{BenchmarkGroupDoc, BenchmarkReportDoc, BenchmarkTimingsDoc, GroupTimingsDoc, REPORT_FORMAT};
use crate::motion::{GraspMotionPlanner, GraspPose, MotionOptions, RobotModel};
use crate::planner::{prune_search, EvalOptions, SearchOutcome};
use crate::sim::{BendProgram, Environment, MachineModel};

#[derive(Debug, Clone)]
pub struct BenchmarkSettings {
    pub groups: std::ops::RangeInclusive<usize>,
    pub per_group: usize,
    pub seed: u64,
    pub budget: Duration,
    pub wire_diameter: f64,
    /// Extra lead length before the first bend reserved for grasping.
    pub grasp_lead: f64,
    pub with_trajectories: bool,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            groups: 3..=8,
            per_group: 10,
            seed: 1,
            budget: Duration::from_secs(120),
            wire_diameter: 0.0016,
            grasp_lead: 0.08,
            with_trajectories: false,
        }
    }
}

/// One random instance: a pivot chain drawn from the published parameter
/// ranges. Bend angles come from [-pi, pi] (turn magnitude clamped to the
/// plausible machine scale), twists from [-pi, pi], lifts from
/// [-pi/18, pi/18]; bend start points are spaced so tangent regions never
/// overlap and every flange keeps at least 5 mm of straight material.
pub fn random_instance(
    n_bends: usize,
    machine: &MachineModel,
    wire_diameter: f64,
    grasp_lead: f64,
    rng: &mut ChaCha8Rng,
) -> Option<BendProgram> {
    let r_c = machine.wrap_radius(wire_diameter);
    // Bend angles are drawn from the full published range and then bounded
    // to what the machine can wind for this wire, so instances are rejected
    // by geometry and ordering rather than by a blanket work-range check.
    let turn_cap = machine
        .max_feasible_angle(wire_diameter, crate::sim::BendDirection::Ccw)
        .map(|lim| (lim - 0.05).max(0.2))
        .unwrap_or(2.0);
    let mut turns = Vec::with_capacity(n_bends);
    let mut twists = Vec::with_capacity(n_bends);
    let mut lifts = Vec::with_capacity(n_bends);
    for _ in 0..n_bends {
        let theta_raw: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        turns.push(theta_raw.abs().clamp(0.15, turn_cap));
        twists.push(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        lifts.push(rng.gen_range(-std::f64::consts::PI / 18.0..std::f64::consts::PI / 18.0));
    }

    let tangent = |turn: f64| r_c * (turn / 2.0).tan();

    // Walk the chain: segment lengths keep consecutive tangent regions
    // separated by at least 5 mm, the first segment reserves the grasp lead
    // plus the feed-guide distance.
    let mut pivots = vec![Point3::origin()];
    let mut dir = Vec3::x();
    let mut normal = Vec3::z();
    let first_len = tangent(turns[0]) + machine.die_gate_distance + 0.005 + grasp_lead
        + rng.gen_range(0.0..0.02);
    pivots.push(Point3::origin() + dir * first_len);
    for j in 0..n_bends {
        // Bend axis: previous normal rolled by the twist, then tipped by the
        // lift, re-orthogonalized against the current direction.
        let rolled = Rotation3::from_axis_angle(&UnitVec3::new_normalize(dir), twists[j]) * normal;
        let lateral = rolled.cross(&dir);
        let tipped = Rotation3::from_axis_angle(&UnitVec3::new_normalize(lateral), lifts[j]) * rolled;
        let mut axis = tipped - dir * tipped.dot(&dir);
        if axis.norm() < 1e-9 {
            axis = rolled;
        }
        let axis = UnitVec3::new_normalize(axis);
        dir = Rotation3::from_axis_angle(&axis, turns[j]) * dir;
        normal = *axis.as_ref();

        let len = if j + 1 < n_bends {
            tangent(turns[j]) + tangent(turns[j + 1]) + 0.005 + rng.gen_range(0.0..0.04)
        } else {
            tangent(turns[j]) + machine.punch_contact_reach(wire_diameter) + 0.01
                + rng.gen_range(0.0..0.03)
        };
        let last = *pivots.last().unwrap();
        pivots.push(last + dir * len);
    }

    let chain = PivotChain::from_pivots(pivots).ok()?;
    let mut poly = 0.0;
    for w in chain.pivots.windows(2) {
        poly += (w[1] - w[0]).norm();
    }
    let wire = WireSpec::new(wire_diameter, poly).ok()?;
    let set = compute_bending_set(&chain, r_c, wire, BendSetOptions::default()).ok()?;
    if set.len() != n_bends {
        return None;
    }
    Some(BendProgram::from_bend_set(&set))
}

/// Evenly spread grasp annotations over the lead section of an instance.
pub fn lead_grasps(program: &BendProgram, grasp_lead: f64, jaw_width: f64) -> Vec<GraspPose> {
    let max_s = program
        .steps
        .iter()
        .map(|s| s.u)
        .fold(f64::INFINITY, f64::min)
        .min(grasp_lead)
        - 0.02;
    let n = 6usize;
    (0..n)
        .flat_map(|k| {
            let s = 0.01 + (max_s - 0.01).max(0.0) * k as f64 / (n - 1) as f64;
            [
                GraspPose { id: 2 * k as u32, arclength: s, roll: 0.0, standoff: 0.0, jaw_width },
                GraspPose {
                    id: 2 * k as u32 + 1,
                    arclength: s,
                    roll: std::f64::consts::PI,
                    standoff: 0.0,
                    jaw_width,
                },
            ]
        })
        .collect()
}

pub struct BenchmarkArtifacts {
    pub report: BenchmarkReportDoc,
    pub timings: BenchmarkTimingsDoc,
    pub table: String,
}

/// Runs the benchmark and aggregates the per-group statistics.
pub fn run_benchmark(
    settings: &BenchmarkSettings,
    machine: &MachineModel,
    robot: &RobotModel,
    env: &Environment,
    staging: crate::geom::Iso3,
) -> BenchmarkArtifacts {
    let mut groups = Vec::new();
    let mut timing_groups = Vec::new();
    for n in settings.groups.clone() {
        let mut solved = 0;
        let mut infeasible = 0;
        let mut timed_out = 0;
        let mut nodes = Vec::new();
        let mut success_ms = Vec::new();
        let mut failure_ms = Vec::new();
        for k in 0..settings.per_group {
            // Instance-local RNG so groups are independent of each other.
            let mut rng = ChaCha8Rng::seed_from_u64(
                settings.seed ^ ((n as u64) << 32) ^ (k as u64),
            );
            let program = loop {
                if let Some(p) = random_instance(
                    n,
                    machine,
                    settings.wire_diameter,
                    settings.grasp_lead,
                    &mut rng,
                ) {
                    break p;
                }
            };
            let grasps = lead_grasps(&program, settings.grasp_lead, 4.0 * settings.wire_diameter);
            let motion = GraspMotionPlanner::new(
                robot,
                &grasps,
                {
                    let mut b = machine.collision_bodies.clone();
                    b.extend(env.bodies.iter().cloned());
                    b
                },
                staging,
                MotionOptions {
                    seed: settings.seed,
                    with_trajectories: settings.with_trajectories,
                    ..MotionOptions::default()
                },
            );
            let (outcome, _, _) = prune_search(
                &program,
                machine,
                env,
                &motion,
                settings.budget,
                &EvalOptions::default(),
            );
            let stats = *outcome.stats();
            nodes.push(stats.nodes_explored);
            match outcome {
                SearchOutcome::Solved(_) => {
                    solved += 1;
                    success_ms.push(stats.wall_time_ms);
                }
                SearchOutcome::Infeasible(_) => {
                    infeasible += 1;
                    failure_ms.push(stats.wall_time_ms);
                }
                SearchOutcome::Timeout(_) => {
                    timed_out += 1;
                    failure_ms.push(stats.wall_time_ms);
                }
            }
        }
        groups.push(BenchmarkGroupDoc {
            bend_count: n,
            instances: settings.per_group,
            solved,
            infeasible,
            timed_out,
            success_rate: solved as f64 / settings.per_group.max(1) as f64,
            nodes_explored: nodes,
        });
        timing_groups.push(GroupTimingsDoc { bend_count: n, success_ms, failure_ms });
    }

    let report = BenchmarkReportDoc {
        format: REPORT_FORMAT.to_string(),
        seed: settings.seed,
        per_group: groups,
    };
    let timings = BenchmarkTimingsDoc {
        format: format!("{REPORT_FORMAT}-timings"),
        per_group: timing_groups,
    };
    let table = render_table(&report, &timings);
    BenchmarkArtifacts { report, timings, table }
}

fn mean(xs: &[u64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<u64>() as f64 / xs.len() as f64
    }
}

/// Success-rate table plus time-cost rows, one column per bend-count group.
pub fn render_table(report: &BenchmarkReportDoc, timings: &BenchmarkTimingsDoc) -> String {
    let mut out = String::new();
    out.push_str("bends        ");
    for g in &report.per_group {
        out.push_str(&format!("{:>10}", g.bend_count));
    }
    out.push('\n');
    out.push_str("success rate ");
    for g in &report.per_group {
        out.push_str(&format!("{:>10.2}", g.success_rate));
    }
    out.push('\n');
    out.push_str("mean ok ms   ");
    for t in &timings.per_group {
        out.push_str(&format!("{:>10.1}", mean(&t.success_ms)));
    }
    out.push('\n');
    out.push_str("mean fail ms ");
    for t in &timings.per_group {
        out.push_str(&format!("{:>10.1}", mean(&t.failure_ms)));
    }
    out.push('\n');
    out
}
