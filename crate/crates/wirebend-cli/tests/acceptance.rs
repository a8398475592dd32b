//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`).
//!
//!   cargo test -p wirebend-cli --test acceptance -- --nocapture

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::Rotation3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wirebend::bend::{compute_bending_set, reconstruct_pivots, BendSet, BendSetOptions, WireSpec};
use wirebend::geom::{
    point_segment_distance, rdp_simplify, DenseCurve, PivotChain, Point3, UnitVec3, Vec3,
};
use wirebend::io::{benchmark, cmd_plan, cmd_replay, PlanStatus, ProjectConfig};
use wirebend::motion::{default_arm, solve_ik, IkParams, PlanParams};
use wirebend::planner::{
    evaluate_sequence, prune_search, EvalOptions, NoMotionCheck, SearchOutcome,
    StepChoice, CHOICES,
};
use wirebend::sim::{BendDirection, BendProgram, Environment, MachineModel, WireState};

fn criterion<F: FnOnce() -> Result<String, String>>(id: usize, name: &str, run: F) {
    match run() {
        Ok(detail) => println!("ACCEPTANCE {id} {name}: PASS ({detail})"),
        Err(why) => {
            println!("ACCEPTANCE {id} {name}: FAIL ({why})");
            panic!("criterion {id} {name} failed: {why}");
        }
    }
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn test_machine() -> MachineModel {
    wirebend::io::formats::MachineFile::parse(
        &std::fs::read_to_string(assets().join("machine_small.toml")).unwrap(),
    )
    .unwrap()
}

/// Random spatial pivot chain with turns and twists in a machine-plausible
/// range and segment lengths that keep tangent regions separated.
fn random_chain(rng: &mut StdRng, n_pivots: usize, r_c: f64) -> PivotChain {
    let mut turns = Vec::new();
    for _ in 0..n_pivots - 2 {
        turns.push(rng.gen_range(0.1..2.2f64));
    }
    let tangent = |t: f64| r_c * (t / 2.0).tan();
    let mut pivots = vec![Point3::origin()];
    let mut dir = Vec3::x();
    let mut normal = Vec3::z();
    let first = tangent(turns[0]) + 0.01 + rng.gen_range(0.0..0.1);
    pivots.push(Point3::origin() + dir * first);
    for (j, &turn) in turns.iter().enumerate() {
        let twist = rng.gen_range(-PI..PI);
        let axis = Rotation3::from_axis_angle(&UnitVec3::new_normalize(dir), twist) * normal;
        dir = Rotation3::from_axis_angle(&UnitVec3::new_normalize(axis), turn) * dir;
        normal = axis;
        let len = tangent(turn)
            + turns.get(j + 1).map_or(0.01, |&t| tangent(t))
            + 0.005
            + rng.gen_range(0.0..0.1);
        let last = *pivots.last().unwrap();
        pivots.push(last + dir * len);
    }
    PivotChain::from_pivots(pivots).unwrap()
}

fn developed_wire(chain: &PivotChain, set: &BendSet) -> WireSpec {
    let mut poly = 0.0;
    for w in chain.pivots.windows(2) {
        poly += (w[1] - w[0]).norm();
    }
    let mut savings = 0.0;
    for c in &set.candidates {
        savings += 2.0 * c.tangent_length(set.center_radius) - c.arc_length(set.center_radius);
    }
    WireSpec::new(set.wire.diameter, poly - savings).unwrap()
}

#[test]
fn acceptance_1_round_trip_geometry() {
    criterion(1, "round-trip geometry", || {
        let started = Instant::now();
        let mut rng = StdRng::seed_from_u64(1001);
        let r_c = 0.0088;
        let mut done = 0;
        let mut worst = 0.0f64;
        while done < 1000 {
            let n = rng.gen_range(4..=10);
            let chain = random_chain(&mut rng, n, r_c);
            let wire = WireSpec::new(0.0016, 10.0).unwrap();
            let set = match compute_bending_set(&chain, r_c, wire, BendSetOptions::default()) {
                Ok(s) => s,
                Err(_) => continue,
            };
            if set.len() != n - 2 {
                continue;
            }
            let set = BendSet { wire: developed_wire(&chain, &set), ..set };
            let rebuilt = reconstruct_pivots(&set, (chain.pivots[0], chain.pivots[1]))
                .map_err(|e| format!("reconstruction failed: {e}"))?;
            if rebuilt.len() != chain.pivots.len() {
                return Err(format!("pivot count {} vs {}", rebuilt.len(), chain.pivots.len()));
            }
            for (a, b) in rebuilt.iter().zip(chain.pivots.iter()) {
                for k in 0..3 {
                    let err = (a[k] - b[k]).abs();
                    worst = worst.max(err);
                    if err >= 1e-6 {
                        return Err(format!("coordinate error {err:.3e} >= 1e-6 m"));
                    }
                }
            }
            done += 1;
        }
        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(10) {
            return Err(format!("runtime {elapsed:?} exceeds 10 s"));
        }
        Ok(format!("1000 chains, worst error {worst:.3e} m, {elapsed:?}"))
    });
}

/// Reference recursive RDP, independent of the library implementation.
fn rdp_reference(pts: &[Point3], epsilon: f64) -> Vec<Point3> {
    fn recurse(pts: &[Point3], lo: usize, hi: usize, epsilon: f64, out: &mut Vec<usize>) {
        if hi <= lo + 1 {
            return;
        }
        let mut max_d = -1.0;
        let mut max_i = lo;
        for i in lo + 1..hi {
            let d = point_segment_distance(&pts[i], &pts[lo], &pts[hi]);
            if d > max_d {
                max_d = d;
                max_i = i;
            }
        }
        if max_d > epsilon {
            recurse(pts, lo, max_i, epsilon, out);
            out.push(max_i);
            recurse(pts, max_i, hi, epsilon, out);
        }
    }
    let mut idx = vec![0];
    recurse(pts, 0, pts.len() - 1, epsilon, &mut idx);
    idx.push(pts.len() - 1);
    idx.into_iter().map(|i| pts[i]).collect()
}

#[test]
fn acceptance_2_rdp_correctness() {
    criterion(2, "RDP correctness", || {
        let started = Instant::now();
        let mut rng = StdRng::seed_from_u64(1002);
        for case in 0..100 {
            let n = rng.gen_range(10..=500);
            let amp = [
                rng.gen_range(0.005..0.05),
                rng.gen_range(0.005..0.05),
                rng.gen_range(1.0..9.0),
                rng.gen_range(1.0..9.0),
            ];
            let pts: Vec<Point3> = (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    Point3::new(
                        0.3 * t,
                        amp[0] * (amp[2] * t * PI).sin(),
                        amp[1] * (amp[3] * t * PI).cos(),
                    )
                })
                .collect();
            let curve = DenseCurve::new(pts.clone()).unwrap();
            let eps = rng.gen_range(0.001..0.01);
            let out = rdp_simplify(&curve, eps).map_err(|e| e.to_string())?;
            let reference = rdp_reference(&pts, eps);
            if out != reference {
                return Err(format!("case {case}: output differs from the recursive reference"));
            }
            // Exhaustive deviation oracle.
            for p in &pts {
                let d = out
                    .windows(2)
                    .map(|w| point_segment_distance(p, &w[0], &w[1]))
                    .fold(f64::INFINITY, f64::min);
                if d > eps {
                    return Err(format!("case {case}: deviation {d:.4e} > epsilon {eps:.4e}"));
                }
            }
        }
        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(10) {
            return Err(format!("runtime {elapsed:?} exceeds 10 s"));
        }
        Ok(format!("100 curves, {elapsed:?}"))
    });
}

#[test]
fn acceptance_3_simulator_conservation() {
    criterion(3, "simulator conservation", || {
        let started = Instant::now();
        let machine = test_machine();
        let mut rng = StdRng::seed_from_u64(1003);
        let mut calls = 0;
        let wall_env = Environment {
            bodies: vec![wirebend::collide::Body::Block {
                pose: nalgebra::Isometry3::from_parts(
                    nalgebra::Translation3::new(0.02, 0.13, 0.0),
                    Default::default(),
                ),
                half_extents: Vec3::new(0.01, 0.05, 0.05),
            }],
        };
        let empty = Environment::default();
        while calls < 1000 {
            let diameter = if rng.gen_bool(0.5) { 0.0016 } else { 0.0026 };
            let r_c = machine.wrap_radius(diameter);
            let limit = machine.max_feasible_angle(diameter, BendDirection::Ccw).unwrap();
            let mut wire = WireState::straight(rng.gen_range(0.25..0.45), diameter);
            // Sometimes pre-bend the wire before the measured call.
            for _ in 0..rng.gen_range(0..2) {
                let turn = rng.gen_range(0.2..1.2);
                let u = rng.gen_range(0.15..0.2);
                let axis = UnitVec3::new_normalize(
                    Rotation3::from_axis_angle(
                        &UnitVec3::new_normalize(Vec3::x()),
                        rng.gen_range(-PI..PI),
                    ) * Vec3::z(),
                );
                if let Ok(w) = wire.apply_bend(u, turn, r_c, &axis) {
                    wire = w;
                }
            }
            let turn = rng.gen_range(0.1..limit.min(2.2));
            let u = rng.gen_range(0.03..0.1);
            let twist = rng.gen_range(-PI..PI);
            let axis = UnitVec3::new_normalize(
                Rotation3::from_axis_angle(&UnitVec3::new_normalize(Vec3::x()), twist) * Vec3::z(),
            );
            let step = wirebend::sim::ProgramStep {
                index: 0,
                u,
                turn,
                axis_flat: axis,
                lift: rng.gen_range(-0.17..0.17),
            };
            let use_alpha = rng.gen_bool(0.5);
            let dir = if rng.gen_bool(0.5) { BendDirection::Ccw } else { BendDirection::Cw };
            let Ok(posed) = wirebend::sim::pose_wire_for_bend(&wire, &step, &machine, use_alpha, dir)
            else {
                continue;
            };
            let env = if calls % 10 == 0 { &wall_env } else { &empty };
            let before = posed.total_length();
            let (out, achieved) =
                wirebend::sim::simulate_bend(&posed, &step, dir, &machine, env, 1e-3)
                    .map_err(|e| format!("simulate_bend failed: {e}"))?;
            if (out.total_length() - before).abs() >= 1e-9 {
                return Err(format!(
                    "arclength drifted by {:.3e}",
                    (out.total_length() - before).abs()
                ));
            }
            let (gap, kink) = out.continuity();
            if gap >= 1e-9 || kink >= 1e-6 {
                return Err(format!("continuity violated: gap {gap:.3e} kink {kink:.3e}"));
            }
            if achieved > turn + 1e-12 {
                return Err("achieved angle exceeds the target".into());
            }
            calls += 1;
        }
        // Arc override: bending at the same location twice leaves exactly
        // one arc there.
        for _ in 0..100 {
            let r = 0.009;
            let wire = WireState::straight(0.3, 0.0016);
            let u = rng.gen_range(0.05..0.15);
            let t1 = rng.gen_range(0.3..1.2);
            let t2 = rng.gen_range(t1..1.6);
            let axis = UnitVec3::new_normalize(Vec3::z());
            let once = wire.apply_bend(u, t1, r, &axis).unwrap();
            let axis2 = UnitVec3::new_normalize(
                Rotation3::from_axis_angle(
                    &UnitVec3::new_normalize(Vec3::x()),
                    rng.gen_range(-PI..PI),
                ) * Vec3::z(),
            );
            let twice = once.apply_bend(u, t2, r, &axis2).unwrap();
            if twice.arc_count() != 1 {
                return Err(format!("override left {} arcs", twice.arc_count()));
            }
            if (twice.total_length() - 0.3).abs() >= 1e-9 {
                return Err("override changed the total arclength".into());
            }
        }
        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(30) {
            return Err(format!("runtime {elapsed:?} exceeds 30 s"));
        }
        Ok(format!("1000 bends + 100 overrides, {elapsed:?}"))
    });
}

/// Independent exhaustive search: depth-first over all (index, choice)
/// sequences with its own state stack, stopping subtrees at failed steps and
/// the walk at the first fully feasible sequence. Returns the verdict and
/// the number of step simulations.
fn exhaustive_search(
    program: &BendProgram,
    machine: &MachineModel,
    env: &Environment,
    opts: &EvalOptions,
) -> (bool, u64) {
    fn step_ok(
        wire: &WireState,
        program: &BendProgram,
        idx: usize,
        choice: StepChoice,
        machine: &MachineModel,
        env: &Environment,
        bodies: &[wirebend::collide::Body],
        opts: &EvalOptions,
    ) -> Option<WireState> {
        let step = program.steps.iter().find(|s| s.index == idx)?;
        let posed =
            wirebend::sim::pose_wire_for_bend(wire, step, machine, choice.use_alpha, choice.direction)
                .ok()?;
        if wirebend::sim::wire_collides(&posed, bodies, opts.clearance) {
            return None;
        }
        if wirebend::sim::check_contact_feasibility(&posed, step.u, machine, choice.direction)
            != wirebend::sim::ContactVerdict::Feasible
        {
            return None;
        }
        let (bent, achieved) =
            wirebend::sim::simulate_bend(&posed, step, choice.direction, machine, env, opts.clearance)
                .ok()?;
        if achieved < step.turn - opts.angle_slack {
            return None;
        }
        if wirebend::sim::wire_collides(&bent, bodies, opts.clearance) {
            return None;
        }
        Some(bent.with_pose(nalgebra::Isometry3::identity()))
    }

    fn rec(
        wire: &WireState,
        used: &mut Vec<bool>,
        depth: usize,
        program: &BendProgram,
        machine: &MachineModel,
        env: &Environment,
        bodies: &[wirebend::collide::Body],
        opts: &EvalOptions,
        nodes: &mut u64,
    ) -> bool {
        let n = program.steps.len();
        if depth == n {
            return true;
        }
        for idx in 0..n {
            if used[idx] {
                continue;
            }
            for choice in CHOICES {
                *nodes += 1;
                if let Some(next) = step_ok(wire, program, idx, choice, machine, env, bodies, opts)
                {
                    used[idx] = true;
                    if rec(&next, used, depth + 1, program, machine, env, bodies, opts, nodes) {
                        used[idx] = false;
                        return true;
                    }
                    used[idx] = false;
                }
            }
        }
        false
    }

    let mut bodies = machine.collision_bodies.clone();
    bodies.extend(env.bodies.iter().cloned());
    // Mirror the planner's placement-independent work-range rejection.
    match machine.max_feasible_angle(program.wire_diameter, BendDirection::Ccw) {
        Ok(limit) => {
            if program.steps.iter().any(|s| s.turn > limit) {
                return (false, 0);
            }
        }
        Err(_) => return (false, 0),
    }
    let mut nodes = 0;
    let wire = program.initial_wire();
    let feasible = rec(
        &wire,
        &mut vec![false; program.steps.len()],
        0,
        program,
        machine,
        env,
        &bodies,
        opts,
        &mut nodes,
    );
    (feasible, nodes)
}

#[test]
fn acceptance_4_search_equivalence() {
    criterion(4, "search equivalence", || {
        let started = Instant::now();
        let machine = test_machine();
        let env = Environment::default();
        let opts = EvalOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1004);
        let mut compared = 0;
        let mut feasible_count = 0;
        while compared < 50 {
            let n = 3 + (compared % 4); // groups of 3..=6 bends
            let Some(program) = benchmark::random_instance(n, &machine, 0.0016, 0.03, &mut rng)
            else {
                continue;
            };
            let (oracle_feasible, oracle_nodes) = exhaustive_search(&program, &machine, &env, &opts);
            let (outcome, _, _) = prune_search(
                &program,
                &machine,
                &env,
                &NoMotionCheck,
                Duration::from_secs(240),
                &opts,
            );
            let (pruned_feasible, pruned_nodes) = match &outcome {
                SearchOutcome::Solved(r) => (true, r.stats.nodes_explored),
                SearchOutcome::Infeasible(s) => (false, s.nodes_explored),
                SearchOutcome::Timeout(_) => {
                    return Err(format!("instance {compared}: pruned search timed out"))
                }
            };
            if oracle_feasible != pruned_feasible {
                return Err(format!(
                    "instance {compared} (n={n}): oracle {oracle_feasible} vs pruned {pruned_feasible}"
                ));
            }
            if pruned_nodes > oracle_nodes {
                return Err(format!(
                    "instance {compared}: pruned {pruned_nodes} nodes > exhaustive {oracle_nodes}"
                ));
            }
            // Soundness: a returned plan replays cleanly.
            if let SearchOutcome::Solved(r) = &outcome {
                evaluate_sequence(&r.sequence, &program, &machine, &env, &opts)
                    .map_err(|f| format!("plan does not replay: step {} {:?}", f.step, f.reason))?;
                feasible_count += 1;
            }
            compared += 1;
        }
        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(600) {
            return Err(format!("runtime {elapsed:?} exceeds 10 min"));
        }
        Ok(format!("50 instances ({feasible_count} feasible), {elapsed:?}"))
    });
}

#[test]
fn acceptance_5_timing_claim() {
    criterion(5, "timing claim and failure-time trend", || {
        let cfg = ProjectConfig::load(&assets().join("plan_square_2d.toml"))
            .map_err(|e| e.to_string())?;
        let settings = benchmark::BenchmarkSettings {
            groups: 3..=8,
            per_group: 10,
            seed: 1,
            budget: Duration::from_secs(120),
            wire_diameter: 0.0016,
            grasp_lead: 0.08,
            with_trajectories: false,
        };
        let artifacts = benchmark::run_benchmark(
            &settings,
            &cfg.machine,
            &cfg.robot,
            &cfg.env,
            cfg.staging,
        );
        println!("{}", artifacts.table);

        // Every solved instance finished within the 120 s budget.
        for (group, timing) in artifacts
            .report
            .per_group
            .iter()
            .zip(artifacts.timings.per_group.iter())
        {
            for &ms in &timing.success_ms {
                if ms > 125_000 {
                    return Err(format!(
                        "solved instance in group {} took {} ms",
                        group.bend_count, ms
                    ));
                }
            }
        }

        // Failure-case time cost grows with the bend count: compare the
        // first and last groups that actually recorded failures.
        let failing: Vec<(usize, f64)> = artifacts
            .timings
            .per_group
            .iter()
            .filter(|t| !t.failure_ms.is_empty())
            .map(|t| {
                let mean =
                    t.failure_ms.iter().sum::<u64>() as f64 / t.failure_ms.len() as f64;
                (t.bend_count, mean)
            })
            .collect();
        if failing.len() >= 2 {
            let (first_n, first_mean) = failing[0];
            let (last_n, last_mean) = *failing.last().unwrap();
            if last_n <= first_n || last_mean < first_mean {
                return Err(format!(
                    "failure time does not grow: n={first_n} mean {first_mean:.1} ms vs n={last_n} mean {last_mean:.1} ms"
                ));
            }
        }
        // Success-case time grows with bend count as well: the smallest and
        // largest groups both solve instances under this seed.
        let ok_means: Vec<(usize, f64)> = artifacts
            .timings
            .per_group
            .iter()
            .filter(|t| !t.success_ms.is_empty())
            .map(|t| {
                (t.bend_count, t.success_ms.iter().sum::<u64>() as f64 / t.success_ms.len() as f64)
            })
            .collect();
        if let (Some(&(lo_n, lo_mean)), Some(&(hi_n, hi_mean))) =
            (ok_means.first(), ok_means.last())
        {
            if hi_n > lo_n && hi_mean <= lo_mean {
                return Err(format!(
                    "success time does not grow: n={lo_n} {lo_mean:.1} ms vs n={hi_n} {hi_mean:.1} ms"
                ));
            }
        }
        let solved: usize = artifacts.report.per_group.iter().map(|g| g.solved).sum();
        Ok(format!(
            "60 instances, {solved} solved, failing groups: {:?}",
            failing
        ))
    });
}

#[test]
fn acceptance_6_motion_layer() {
    criterion(6, "motion layer", || {
        let started = Instant::now();
        let robot = default_arm(nalgebra::Isometry3::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(1006);
        let params = IkParams::default();
        let mut solved = 0;
        let total = 1000;
        for _ in 0..total {
            let q: Vec<f64> = robot
                .joints
                .iter()
                .map(|j| rng.gen_range(j.lower / 2.0..j.upper / 2.0))
                .collect();
            let target = robot.fk(&q);
            if let Ok(sol) = solve_ik(&robot, &target, &robot.home, &params, &mut rng) {
                let fk = robot.fk(&sol);
                let ep = (target.translation.vector - fk.translation.vector).norm();
                let er = (target.rotation * fk.rotation.inverse()).angle();
                if ep > 1e-4 || er > 1e-3 {
                    return Err(format!("FK residual {ep:.2e} m / {er:.2e} rad out of tolerance"));
                }
                solved += 1;
            }
        }
        if (solved as f64) < 0.99 * total as f64 {
            return Err(format!("solve rate {solved}/{total} below 99%"));
        }

        // Planned trajectories: every waypoint passes an independent
        // point-sampling collision oracle.
        let obstacles = vec![
            wirebend::collide::Body::Sphere { center: Point3::new(0.0, 0.3, 0.4), radius: 0.08 },
            wirebend::collide::Body::HalfSpace {
                point: Point3::new(0.0, 0.0, -0.05),
                normal: UnitVec3::new_normalize(Vec3::z()),
            },
        ];
        let mut planned = 0;
        let mut waypoints_checked = 0usize;
        while planned < 5 {
            let goal: Vec<f64> = robot
                .joints
                .iter()
                .map(|j| rng.gen_range(j.lower / 3.0..j.upper / 3.0))
                .collect();
            let Ok(traj) = wirebend::motion::plan_joint_path(
                &robot,
                &robot.home,
                &goal,
                None,
                &obstacles,
                &PlanParams::default(),
                1e-3,
                &mut rng,
            ) else {
                continue;
            };
            for wp in &traj.waypoints {
                for body in robot.collision_bodies(wp) {
                    if let wirebend::collide::Body::Capsule { a, b, radius } = body {
                        let n = ((b - a).norm() / 5e-4).ceil().max(1.0) as usize;
                        for k in 0..=n {
                            let p = a + (b - a) * (k as f64 / n as f64);
                            for obs in &obstacles {
                                let d = wirebend::collide::segment_body_distance(&p, &p, radius, obs);
                                if d < 0.0 {
                                    return Err(format!("waypoint penetrates an obstacle by {d:.2e}"));
                                }
                            }
                        }
                    }
                }
                waypoints_checked += 1;
            }
            planned += 1;
        }
        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(120) {
            return Err(format!("runtime {elapsed:?} exceeds 2 min"));
        }
        Ok(format!(
            "IK {solved}/{total}, {planned} trajectories / {waypoints_checked} waypoints oracle-checked, {elapsed:?}"
        ))
    });
}

#[test]
fn acceptance_7_end_to_end_reproducibility() {
    criterion(7, "end-to-end reproducibility", || {
        let mut detail = String::new();
        for name in ["plan_square_2d.toml", "plan_polygon_3d.toml"] {
            let cfg = ProjectConfig::load(&assets().join(name)).map_err(|e| e.to_string())?;
            let out_a = std::env::temp_dir().join(format!("wb-acc7-a-{}-{name}", std::process::id()));
            let out_b = std::env::temp_dir().join(format!("wb-acc7-b-{}-{name}", std::process::id()));
            let a = cmd_plan(&cfg, &out_a).map_err(|e| e.to_string())?;
            if a.status != PlanStatus::Solved {
                return Err(format!("{name}: expected a plan, got {:?}", a.status));
            }
            let b = cmd_plan(&cfg, &out_b).map_err(|e| e.to_string())?;
            if b.status != PlanStatus::Solved {
                return Err(format!("{name}: second run got {:?}", b.status));
            }
            let plan_a = std::fs::read(a.plan_path.clone().unwrap()).map_err(|e| e.to_string())?;
            let plan_b = std::fs::read(b.plan_path.unwrap()).map_err(|e| e.to_string())?;
            if plan_a != plan_b {
                return Err(format!("{name}: plan documents differ between identical runs"));
            }
            if a.snapshots.len() != b.snapshots.len() {
                return Err(format!("{name}: snapshot counts differ"));
            }
            for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
                let ba = std::fs::read(sa).map_err(|e| e.to_string())?;
                let bb = std::fs::read(sb).map_err(|e| e.to_string())?;
                if ba != bb {
                    return Err(format!("{name}: snapshot {sa:?} differs between runs"));
                }
            }
            cmd_replay(&a.plan_path.unwrap(), &cfg)
                .map_err(|e| format!("{name}: replay failed: {e}"))?;
            detail.push_str(&format!("{name}: {} snapshots; ", a.snapshots.len()));
        }
        Ok(detail)
    });
}
