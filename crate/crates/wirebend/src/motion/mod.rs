//! Grasp reasoning over pre-annotated wire grasps and joint-space motion
//! planning for carrying the wire between consecutive bending placements.

mod robot;

pub use robot::{
    default_arm, solve_ik, transform_body, IkParams, Joint, LinkCapsule, MotionError, RobotModel,
};

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use nalgebra::{Translation3, UnitQuaternion};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::collide::{chain_distance, segment_body_distance, Body};
use crate::geom::{Iso3, Point3, Vec3};
use crate::planner::{MotionOracle, MotionVerdict, StepStates};
use crate::sim::{WireState, CHORD_TOL};

/// A pre-annotated grasp on the wire: arclength position, roll about the
/// wire axis, approach standoff and jaw width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub id: u32,
    pub arclength: f64,
    pub roll: f64,
    pub standoff: f64,
    pub jaw_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraspVerdict {
    Available,
    Collided,
    IkInfeasible,
}

/// Joint-space trajectory; consecutive waypoints stay within the per-joint
/// step limit used during planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Vec<f64>>,
}

/// Outcome of grasp reasoning plus motion planning for one sequence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionPlan {
    pub grasp_id: Option<u32>,
    pub trajectories: Vec<Trajectory>,
}

/// Gripper tool frame for a grasp, in wire-local coordinates: x along the
/// wire tangent, z approaching the wire radially at the annotated roll.
pub fn grasp_tool_local(wire: &WireState, g: &GraspPose) -> Result<Iso3, crate::sim::SimError> {
    let p = wire.point_at(g.arclength)?;
    let mat = wire.material_rotation_at(g.arclength)?;
    let tangent = mat * Vec3::x();
    let n_y = mat * Vec3::y();
    let n_z = mat * Vec3::z();
    let approach = -(n_z * g.roll.cos() + n_y * g.roll.sin());
    let x = tangent;
    let z = approach;
    let y = z.cross(&x);
    let rot = nalgebra::Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[
        x, y, z,
    ]));
    let origin = p - approach * g.standoff;
    Ok(Iso3::from_parts(
        Translation3::from(origin.coords),
        UnitQuaternion::from_rotation_matrix(&rot),
    ))
}

#[derive(Debug, Clone)]
pub struct MotionOptions {
    pub ik: IkParams,
    pub plan: PlanParams,
    pub seed: u64,
    /// Minimum surface separation treated as collision-free.
    pub clearance: f64,
    /// Wire material around the grasp excluded from gripper-vs-wire checks.
    pub grasp_exclusion: f64,
    /// Plan transfer trajectories; grasp reasoning alone when false.
    pub with_trajectories: bool,
}

impl Default for MotionOptions {
    fn default() -> Self {
        Self {
            ik: IkParams::default(),
            plan: PlanParams::default(),
            seed: 0,
            clearance: 1e-3,
            grasp_exclusion: 0.03,
            with_trajectories: true,
        }
    }
}

/// Classification of one grasp against one posed wire state.
pub fn classify_grasp(
    g: &GraspPose,
    wire: &WireState,
    robot: &RobotModel,
    obstacles: &[Body],
    opts: &MotionOptions,
    rng: &mut ChaCha8Rng,
) -> GraspVerdict {
    let Ok(local) = grasp_tool_local(wire, g) else {
        return GraspVerdict::Collided;
    };
    let tool_world = wire.pose * local;
    let gripper = robot.gripper_bodies_at(&tool_world);

    // Gripper against static obstacles.
    for b in &gripper {
        for obs in obstacles {
            if body_distance(b, obs) < opts.clearance {
                return GraspVerdict::Collided;
            }
        }
    }
    // Gripper against the wire itself, excluding the grasped section. Chords
    // straddling the exclusion window are clipped, not dropped.
    let lo = g.arclength - opts.grasp_exclusion;
    let hi = g.arclength + opts.grasp_exclusion;
    for c in &wire.world_chords(CHORD_TOL) {
        let mut parts: Vec<(Point3, Point3)> = Vec::new();
        if c.s1 <= lo || c.s0 >= hi {
            parts.push((c.a, c.b));
        } else {
            let span = c.s1 - c.s0;
            if c.s0 < lo {
                let t = (lo - c.s0) / span;
                parts.push((c.a, c.a + (c.b - c.a) * t));
            }
            if c.s1 > hi {
                let t = (hi - c.s0) / span;
                parts.push((c.a + (c.b - c.a) * t, c.b));
            }
        }
        for (pa, pb) in parts {
            for b in &gripper {
                if segment_body_distance(&pa, &pb, wire.diameter / 2.0, b) < opts.clearance {
                    return GraspVerdict::Collided;
                }
            }
        }
    }

    match solve_ik(robot, &tool_world, &robot.home, &opts.ik, rng) {
        Ok(_) => GraspVerdict::Available,
        Err(_) => GraspVerdict::IkInfeasible,
    }
}

/// Conservative distance between two bodies, built on the segment queries.
pub fn body_distance(a: &Body, b: &Body) -> f64 {
    match a {
        Body::Sphere { center, radius } => {
            segment_body_distance(center, center, *radius, b)
        }
        Body::Capsule { a: ca, b: cb, radius } => segment_body_distance(ca, cb, *radius, b),
        Body::Block { pose, half_extents } => {
            // Approximate the block by its twelve edges; adequate for
            // gripper-sized bodies against the large static set.
            let h = half_extents;
            let corners: Vec<Point3> = (0..8)
                .map(|i| {
                    let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
                    let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
                    let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
                    pose * Point3::new(sx * h.x, sy * h.y, sz * h.z)
                })
                .collect();
            const EDGES: [(usize, usize); 12] = [
                (0, 1), (2, 3), (4, 5), (6, 7),
                (0, 2), (1, 3), (4, 6), (5, 7),
                (0, 4), (1, 5), (2, 6), (3, 7),
            ];
            EDGES
                .iter()
                .map(|&(i, j)| segment_body_distance(&corners[i], &corners[j], 0.0, b))
                .fold(f64::INFINITY, f64::min)
        }
        Body::HalfSpace { .. } => match b {
            Body::HalfSpace { .. } => f64::INFINITY,
            _ => body_distance(b, a),
        },
    }
}

/// Exact set intersection of per-pose available-grasp sets.
pub fn common_grasps(per_pose: &[BTreeSet<u32>]) -> BTreeSet<u32> {
    let mut iter = per_pose.iter();
    let Some(first) = iter.next() else {
        return BTreeSet::new();
    };
    iter.fold(first.clone(), |acc, s| acc.intersection(s).cloned().collect())
}

#[derive(Debug, Clone, Copy)]
pub struct PlanParams {
    /// Per-joint step limit between consecutive waypoints, radians.
    pub step: f64,
    pub max_iters: usize,
    pub timeout: Duration,
    /// Edge validation resolution, radians per joint.
    pub resolution: f64,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            step: 0.2,
            max_iters: 20_000,
            timeout: Duration::from_secs(8),
            resolution: 0.5f64.to_radians(),
        }
    }
}

fn max_joint_delta(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn lerp_config(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect()
}

fn edge_valid(a: &[f64], b: &[f64], resolution: f64, valid: &dyn Fn(&[f64]) -> bool) -> bool {
    let steps = (max_joint_delta(a, b) / resolution).ceil().max(1.0) as usize;
    (0..=steps).all(|k| valid(&lerp_config(a, b, k as f64 / steps as f64)))
}

/// Sampling-based joint-space planner (goal-biased RRT) with an optional
/// rigidly attached wire.
pub fn plan_joint_path(
    robot: &RobotModel,
    start: &[f64],
    goal: &[f64],
    attached: Option<(&WireState, &Iso3)>,
    obstacles: &[Body],
    params: &PlanParams,
    clearance: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, MotionError> {
    let valid = |q: &[f64]| -> bool {
        if !robot.within_limits(q) {
            return false;
        }
        let bodies = robot.collision_bodies(q);
        for b in &bodies {
            for obs in obstacles {
                if body_distance(b, obs) < clearance {
                    return false;
                }
            }
        }
        if let Some((wire, wire_in_tool)) = attached {
            let wire_pose = robot.fk(q) * wire_in_tool;
            let posed = wire.with_pose(wire_pose);
            let chords: Vec<(Point3, Point3)> = posed
                .world_chords(CHORD_TOL)
                .iter()
                .map(|c| (c.a, c.b))
                .collect();
            if chain_distance(&chords, wire.diameter / 2.0, obstacles) < clearance {
                return false;
            }
        }
        true
    };

    if !valid(start) {
        return Err(MotionError::StartInCollision);
    }
    if !valid(goal) {
        return Err(MotionError::GoalInCollision);
    }
    if max_joint_delta(start, goal) < 1e-12 {
        return Ok(Trajectory { waypoints: vec![start.to_vec()] });
    }
    if edge_valid(start, goal, params.resolution, &valid) {
        return Ok(densify(vec![start.to_vec(), goal.to_vec()], params.step));
    }

    // Bidirectional search (RRT-Connect): grow a tree from each endpoint,
    // alternately extending toward samples and connecting the trees.
    // Samples stay inside a box around the endpoints; transfers never need
    // to wander the whole (very wide) limit range.
    let sample_box: Vec<(f64, f64)> = robot
        .joints
        .iter()
        .enumerate()
        .map(|(i, j)| {
            let lo = (start[i].min(goal[i]) - 1.5).max(j.lower);
            let hi = (start[i].max(goal[i]) + 1.5).min(j.upper);
            (lo, hi)
        })
        .collect();

    struct Tree {
        nodes: Vec<Vec<f64>>,
        parents: Vec<usize>,
    }
    impl Tree {
        fn nearest(&self, q: &[f64]) -> usize {
            self.nodes
                .iter()
                .enumerate()
                .map(|(i, n)| (i, max_joint_delta(n, q)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        }
        fn path_from(&self, mut idx: usize) -> Vec<Vec<f64>> {
            let mut path = Vec::new();
            loop {
                path.push(self.nodes[idx].clone());
                if idx == 0 {
                    break;
                }
                idx = self.parents[idx];
            }
            path.reverse();
            path
        }
    }

    let mut tree_a = Tree { nodes: vec![start.to_vec()], parents: vec![0] };
    let mut tree_b = Tree { nodes: vec![goal.to_vec()], parents: vec![0] };
    let mut a_is_start = true;

    let deadline = Instant::now() + params.timeout;
    for it in 0..params.max_iters {
        if it % 32 == 0 && Instant::now() > deadline {
            return Err(MotionError::PlanningTimeout);
        }
        let sample: Vec<f64> =
            sample_box.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();

        // Extend tree A one step toward the sample.
        let near_a = tree_a.nearest(&sample);
        let d = max_joint_delta(&tree_a.nodes[near_a], &sample);
        if d < 1e-9 {
            continue;
        }
        let t = (params.step / d).min(1.0);
        let new_a = lerp_config(&tree_a.nodes[near_a], &sample, t);
        if !edge_valid(&tree_a.nodes[near_a], &new_a, params.resolution, &valid) {
            std::mem::swap(&mut tree_a, &mut tree_b);
            a_is_start = !a_is_start;
            continue;
        }
        tree_a.nodes.push(new_a.clone());
        tree_a.parents.push(near_a);

        // Greedily connect tree B toward the new node.
        let mut cur = tree_b.nearest(&new_a);
        loop {
            let dist = max_joint_delta(&tree_b.nodes[cur], &new_a);
            if dist <= params.step {
                if edge_valid(&tree_b.nodes[cur], &new_a, params.resolution, &valid) {
                    // Bridge found: splice the two half-paths.
                    let mut path_a = tree_a.path_from(tree_a.nodes.len() - 1);
                    let path_b = tree_b.path_from(cur);
                    if a_is_start {
                        path_a.extend(path_b.into_iter().rev());
                        return Ok(densify(path_a, params.step));
                    } else {
                        let mut full = path_b;
                        full.extend(path_a.into_iter().rev());
                        return Ok(densify(full, params.step));
                    }
                }
                break;
            }
            let step_cfg = lerp_config(&tree_b.nodes[cur], &new_a, params.step / dist);
            if !edge_valid(&tree_b.nodes[cur], &step_cfg, params.resolution, &valid) {
                break;
            }
            tree_b.nodes.push(step_cfg);
            tree_b.parents.push(cur);
            cur = tree_b.nodes.len() - 1;
        }

        std::mem::swap(&mut tree_a, &mut tree_b);
        a_is_start = !a_is_start;
    }
    Err(MotionError::PlanningTimeout)
}

fn densify(path: Vec<Vec<f64>>, step: f64) -> Trajectory {
    let mut waypoints = vec![path[0].clone()];
    for w in path.windows(2) {
        let n = (max_joint_delta(&w[0], &w[1]) / step).ceil().max(1.0) as usize;
        for k in 1..=n {
            waypoints.push(lerp_config(&w[0], &w[1], k as f64 / n as f64));
        }
    }
    Trajectory { waypoints }
}

/// Grasp reasoning plus transfer motion planning across one bending
/// sequence; implements the planner's motion oracle.
///
/// IK configurations and transfer trajectories are memoized: placements
/// repeat across the sequences the search tries, and both computations are
/// derived deterministically from their inputs, so a cache hit is exactly
/// the result a fresh computation would produce.
pub struct GraspMotionPlanner<'a> {
    pub robot: &'a RobotModel,
    pub grasps: &'a [GraspPose],
    /// Static obstacle set: machine bodies plus environment.
    pub obstacles: Vec<Body>,
    /// World pose of the wire before the first placement.
    pub staging: Iso3,
    pub opts: MotionOptions,
    ik_cache: RefCell<HashMap<u64, Option<Vec<f64>>>>,
    transfer_cache: RefCell<HashMap<u64, Option<Trajectory>>>,
}

fn fnv64(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn pose_words(iso: &Iso3) -> [u64; 7] {
    let q = iso.rotation.quaternion();
    [
        iso.translation.x.to_bits(),
        iso.translation.y.to_bits(),
        iso.translation.z.to_bits(),
        q.w.to_bits(),
        q.i.to_bits(),
        q.j.to_bits(),
        q.k.to_bits(),
    ]
}

fn wire_words(wire: &WireState) -> u64 {
    let mut words = vec![wire.diameter.to_bits()];
    for piece in wire.pieces() {
        words.push(piece.s0.to_bits());
        match &piece.prim {
            crate::sim::WirePrimitive::Segment { start, end } => {
                for v in [start.x, start.y, start.z, end.x, end.y, end.z] {
                    words.push(v.to_bits());
                }
            }
            crate::sim::WirePrimitive::Arc { center, axis, u_ref, radius, sweep } => {
                for v in [
                    center.x, center.y, center.z, axis.x, axis.y, axis.z, u_ref.x, u_ref.y,
                    u_ref.z, *radius, *sweep,
                ] {
                    words.push(v.to_bits());
                }
            }
        }
    }
    fnv64(words)
}

impl<'a> GraspMotionPlanner<'a> {
    pub fn new(
        robot: &'a RobotModel,
        grasps: &'a [GraspPose],
        obstacles: Vec<Body>,
        staging: Iso3,
        opts: MotionOptions,
    ) -> Self {
        Self {
            robot,
            grasps,
            obstacles,
            staging,
            opts,
            ik_cache: RefCell::new(HashMap::new()),
            transfer_cache: RefCell::new(HashMap::new()),
        }
    }
}

impl GraspMotionPlanner<'_> {
    fn grasp_usable_everywhere(&self, g: &GraspPose, steps: &[StepStates]) -> bool {
        let min_u = steps.iter().map(|s| s.u).fold(f64::INFINITY, f64::min);
        g.arclength + self.opts.grasp_exclusion / 2.0 < min_u
            && g.arclength > self.opts.grasp_exclusion / 2.0
    }

    /// Per-step grasp survival: a grasp survives step `t` when it is
    /// available at both the pre-bend and post-bend posed states.
    fn survivors_at(
        &self,
        step: &StepStates,
        candidates: &BTreeSet<u32>,
        rng: &mut ChaCha8Rng,
    ) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        for g in self.grasps.iter().filter(|g| candidates.contains(&g.id)) {
            let pre = classify_grasp(g, &step.pre, self.robot, &self.obstacles, &self.opts, rng);
            if pre != GraspVerdict::Available {
                continue;
            }
            let post =
                classify_grasp(g, &step.post, self.robot, &self.obstacles, &self.opts, rng);
            if post == GraspVerdict::Available {
                out.insert(g.id);
            }
        }
        out
    }

    /// IK solution that is also collision-free for the whole arm; restarts
    /// keep sampling until a scene-valid configuration appears.
    fn solve_ik_clear(
        &self,
        target: &Iso3,
        seed: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Option<Vec<f64>> {
        let single = IkParams { restarts: 0, ..self.opts.ik };
        let arm_clear = |q: &[f64]| -> bool {
            self.robot.collision_bodies(q).iter().all(|b| {
                self.obstacles
                    .iter()
                    .all(|obs| body_distance(b, obs) >= self.opts.clearance)
            })
        };
        let mut start = seed.to_vec();
        for _ in 0..=self.opts.ik.restarts {
            if let Ok(q) = solve_ik(self.robot, target, &start, &single, rng) {
                if arm_clear(&q) {
                    return Some(q);
                }
            }
            start = self
                .robot
                .joints
                .iter()
                .map(|j| rng.gen_range(j.lower..j.upper))
                .collect();
        }
        None
    }

    /// Memoized collision-free IK for a tool pose; the key also covers the
    /// carried wire shape since identical placements repeat across the
    /// sequences the search explores.
    fn config_for(&self, g: &GraspPose, world: &Iso3, shape: u64) -> Option<Vec<f64>> {
        let key = fnv64([g.id as u64, shape].into_iter().chain(pose_words(world)));
        if let Some(hit) = self.ik_cache.borrow().get(&key) {
            return hit.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed ^ key);
        let home = self.robot.home.clone();
        let q = self.solve_ik_clear(world, &home, &mut rng);
        self.ik_cache.borrow_mut().insert(key, q.clone());
        q
    }

    fn try_trajectories(&self, g: &GraspPose, steps: &[StepStates]) -> Result<Vec<Trajectory>, usize> {
        // Tool poses: at the staging pose with the initial shape, then at
        // every placement. The gripper stays fixed through each bend, so one
        // pose per step suffices.
        let mut tool_poses: Vec<(WireState, Iso3)> = Vec::new();
        let staged = steps[0].pre.with_pose(self.staging);
        tool_poses.push((staged.clone(), grasp_tool_local(&staged, g).map_err(|_| 0usize)? ));
        for s in steps {
            let local = grasp_tool_local(&s.pre, g).map_err(|_| 0usize)?;
            tool_poses.push((s.pre.clone(), local));
        }

        let mut configs: Vec<Vec<f64>> = Vec::new();
        for (k, (wire, local)) in tool_poses.iter().enumerate() {
            let world = wire.pose * local;
            match self.config_for(g, &world, wire_words(wire)) {
                Some(q) => configs.push(q),
                None => return Err(k.saturating_sub(1)),
            }
        }

        let mut trajectories = Vec::new();
        for t in 0..configs.len() - 1 {
            // Shape carried during transfer t -> t+1: the wire as it arrives
            // at placement t+1 (bends beyond that step not yet applied).
            let (wire, local) = &tool_poses[t + 1];
            let wire_in_tool = local.inverse();
            let key = fnv64(
                [wire_words(wire)]
                    .into_iter()
                    .chain(configs[t].iter().map(|v| v.to_bits()))
                    .chain(configs[t + 1].iter().map(|v| v.to_bits())),
            );
            if let Some(hit) = self.transfer_cache.borrow().get(&key) {
                match hit {
                    Some(traj) => {
                        trajectories.push(traj.clone());
                        continue;
                    }
                    None => return Err(t),
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed ^ key);
            let result = plan_joint_path(
                self.robot,
                &configs[t],
                &configs[t + 1],
                Some((wire, &wire_in_tool)),
                &self.obstacles,
                &self.opts.plan,
                self.opts.clearance,
                &mut rng,
            )
            .ok();
            self.transfer_cache.borrow_mut().insert(key, result.clone());
            match result {
                Some(traj) => trajectories.push(traj),
                None => return Err(t),
            }
        }
        Ok(trajectories)
    }
}

impl MotionOracle for GraspMotionPlanner<'_> {
    fn check(&self, steps: &[StepStates]) -> MotionVerdict {
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        let mut surviving: BTreeSet<u32> = self
            .grasps
            .iter()
            .filter(|g| self.grasp_usable_everywhere(g, steps))
            .map(|g| g.id)
            .collect();
        if surviving.is_empty() {
            return MotionVerdict::NoGraspAtStep(0);
        }
        for (t, step) in steps.iter().enumerate() {
            surviving = self.survivors_at(step, &surviving, &mut rng);
            if surviving.is_empty() {
                return MotionVerdict::NoGraspAtStep(t);
            }
        }
        if !self.opts.with_trajectories {
            return MotionVerdict::Success(MotionPlan {
                grasp_id: surviving.iter().next().copied(),
                trajectories: Vec::new(),
            });
        }

        let mut worst_fail = 0usize;
        for id in &surviving {
            let g = self.grasps.iter().find(|g| g.id == *id).unwrap();
            match self.try_trajectories(g, steps) {
                Ok(trajectories) => {
                    return MotionVerdict::Success(MotionPlan {
                        grasp_id: Some(*id),
                        trajectories,
                    });
                }
                Err(fail_at) => worst_fail = worst_fail.max(fail_at.min(steps.len() - 1)),
            }
        }
        MotionVerdict::MotionFail(worst_fail)
    }
}
