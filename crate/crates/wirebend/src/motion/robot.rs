//! Serial-chain robot model: forward kinematics, geometric Jacobian, and
//! damped-least-squares inverse kinematics with random restarts.

use nalgebra::{DMatrix, DVector, Translation3, UnitQuaternion};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collide::Body;
use crate::geom::{Iso3, Point3, UnitVec3, Vec3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MotionError {
    #[error("no IK solution within tolerance after {0} restarts")]
    NoSolution(usize),
    #[error("joint path planning timed out")]
    PlanningTimeout,
    #[error("start configuration is in collision")]
    StartInCollision,
    #[error("goal configuration is in collision")]
    GoalInCollision,
    #[error("robot model invalid: {0}")]
    BadModel(String),
}

/// One revolute joint: a fixed parent offset followed by rotation about
/// `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub offset: Iso3,
    pub axis: UnitVec3,
    pub lower: f64,
    pub upper: f64,
}

/// Collision capsule rigidly attached to the frame after `joint` rotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCapsule {
    pub joint: usize,
    pub a: Point3,
    pub b: Point3,
    pub radius: f64,
}

/// Revolute serial arm with link capsules and a gripper body set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub base: Iso3,
    pub joints: Vec<Joint>,
    pub tool: Iso3,
    pub links: Vec<LinkCapsule>,
    /// Gripper collision bodies, in tool-frame coordinates.
    pub gripper: Vec<Body>,
    pub home: Vec<f64>,
}

impl RobotModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        if self.joints.len() < 6 {
            return Err(MotionError::BadModel(format!(
                "need at least 6 joints for spatial tasks, got {}",
                self.joints.len()
            )));
        }
        if self.home.len() != self.joints.len() {
            return Err(MotionError::BadModel("home configuration length mismatch".into()));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if j.lower >= j.upper {
                return Err(MotionError::BadModel(format!("joint {i} limits inverted")));
            }
        }
        for l in &self.links {
            if l.joint >= self.joints.len() {
                return Err(MotionError::BadModel("link capsule attached past the chain".into()));
            }
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.joints)
            .all(|(&v, j)| v >= j.lower - 1e-12 && v <= j.upper + 1e-12)
    }

    pub fn clamp_to_limits(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    /// World frame after each joint's rotation.
    pub fn joint_frames(&self, q: &[f64]) -> Vec<Iso3> {
        let mut frames = Vec::with_capacity(self.joints.len());
        let mut cur = self.base;
        for (joint, &angle) in self.joints.iter().zip(q) {
            cur = cur
                * joint.offset
                * Iso3::from_parts(
                    Translation3::identity(),
                    UnitQuaternion::from_axis_angle(&joint.axis, angle),
                );
            frames.push(cur);
        }
        frames
    }

    /// World tool frame.
    pub fn fk(&self, q: &[f64]) -> Iso3 {
        *self.joint_frames(q).last().expect("robot has joints") * self.tool
    }

    /// Geometric Jacobian (linear over angular) of the tool frame.
    pub fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        let frames = self.joint_frames(q);
        let tool = *frames.last().unwrap() * self.tool;
        let p_tool = tool.translation.vector;
        let mut jac = DMatrix::zeros(6, self.joints.len());
        for (i, (joint, frame)) in self.joints.iter().zip(&frames).enumerate() {
            // The joint's world axis passes through the frame origin; the
            // frame already includes this joint's own rotation, which leaves
            // its axis direction unchanged.
            let z = frame.rotation * joint.axis.as_ref();
            let p = frame.translation.vector;
            let lin = z.cross(&(p_tool - p));
            for k in 0..3 {
                jac[(k, i)] = lin[k];
                jac[(k + 3, i)] = z[k];
            }
        }
        jac
    }

    /// Link capsules posed at configuration `q`, gripper included.
    pub fn collision_bodies(&self, q: &[f64]) -> Vec<Body> {
        let frames = self.joint_frames(q);
        let tool = *frames.last().unwrap() * self.tool;
        let mut out: Vec<Body> = self
            .links
            .iter()
            .map(|l| Body::Capsule {
                a: frames[l.joint] * l.a,
                b: frames[l.joint] * l.b,
                radius: l.radius,
            })
            .collect();
        out.extend(self.gripper_bodies_at(&tool));
        out
    }

    /// Gripper bodies posed at an arbitrary world tool frame.
    pub fn gripper_bodies_at(&self, tool_world: &Iso3) -> Vec<Body> {
        self.gripper
            .iter()
            .map(|b| transform_body(b, tool_world))
            .collect()
    }
}

pub fn transform_body(body: &Body, t: &Iso3) -> Body {
    match body {
        Body::Sphere { center, radius } => Body::Sphere { center: t * center, radius: *radius },
        Body::Capsule { a, b, radius } => {
            Body::Capsule { a: t * a, b: t * b, radius: *radius }
        }
        Body::Block { pose, half_extents } => {
            Body::Block { pose: t * pose, half_extents: *half_extents }
        }
        Body::HalfSpace { point, normal } => Body::HalfSpace {
            point: t * point,
            normal: UnitVec3::new_normalize(t.rotation * normal.as_ref()),
        },
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IkParams {
    pub max_iters: usize,
    pub damping: f64,
    pub pos_tol: f64,
    pub rot_tol: f64,
    pub restarts: usize,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            max_iters: 400,
            damping: 0.02,
            pos_tol: 1e-4,
            rot_tol: 1e-3,
            restarts: 20,
        }
    }
}

fn pose_error(target: &Iso3, actual: &Iso3) -> (Vec3, Vec3) {
    let e_pos = target.translation.vector - actual.translation.vector;
    let e_rot = (target.rotation * actual.rotation.inverse()).scaled_axis();
    (e_pos, e_rot)
}

fn dls_descend(
    robot: &RobotModel,
    target: &Iso3,
    start: &[f64],
    params: &IkParams,
) -> Option<Vec<f64>> {
    let n = robot.dof();
    let mut q = start.to_vec();
    for _ in 0..params.max_iters {
        let fk = robot.fk(&q);
        let (e_pos, e_rot) = pose_error(target, &fk);
        if e_pos.norm() < 0.5 * params.pos_tol && e_rot.norm() < 0.5 * params.rot_tol {
            return Some(q);
        }
        let jac = robot.jacobian(&q);
        let mut err = DVector::zeros(6);
        for k in 0..3 {
            err[k] = e_pos[k];
            err[k + 3] = e_rot[k];
        }
        // dq = J^T (J J^T + lambda^2 I)^-1 e, with damping scaled to the
        // residual so convergence tightens near the target.
        let lambda = (params.damping * err.norm().min(1.0)).max(1e-4);
        let jjt = &jac * jac.transpose() + DMatrix::identity(6, 6) * (lambda * lambda);
        let Some(sol) = jjt.lu().solve(&err) else {
            return None;
        };
        let mut dq = jac.transpose() * sol;
        let step = dq.norm();
        if step > 1.0 {
            dq *= 1.0 / step;
        }
        for i in 0..n {
            q[i] += dq[i];
        }
        robot.clamp_to_limits(&mut q);
    }
    None
}

/// Damped-least-squares IK with seeded random restarts.
///
/// The returned configuration satisfies the forward-kinematics residual
/// tolerances and the joint limits. Deterministic for a fixed RNG state.
pub fn solve_ik(
    robot: &RobotModel,
    target: &Iso3,
    seed: &[f64],
    params: &IkParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, MotionError> {
    let mut start = seed.to_vec();
    robot.clamp_to_limits(&mut start);
    if let Some(q) = dls_descend(robot, target, &start, params) {
        return Ok(q);
    }
    for _ in 0..params.restarts {
        let q0: Vec<f64> = robot
            .joints
            .iter()
            .map(|j| rng.gen_range(j.lower..j.upper))
            .collect();
        if let Some(q) = dls_descend(robot, target, &q0, params) {
            return Ok(q);
        }
    }
    Err(MotionError::NoSolution(params.restarts))
}

/// A compact 6R arm used as the default model and in tests. Dimensions are
/// plausible for a small collaborative arm, not taken from any datasheet.
pub fn default_arm(base: Iso3) -> RobotModel {
    let t = |x: f64, y: f64, z: f64| Iso3::from_parts(Translation3::new(x, y, z), UnitQuaternion::identity());
    let zax = UnitVec3::new_normalize(Vec3::z());
    let yax = UnitVec3::new_normalize(Vec3::y());
    let lim = 2.0 * std::f64::consts::PI * 0.99;
    let joint = |offset: Iso3, axis: UnitVec3| Joint { offset, axis, lower: -lim, upper: lim };
    RobotModel {
        base,
        joints: vec![
            joint(t(0.0, 0.0, 0.10), zax),
            joint(t(0.0, 0.0, 0.05), yax),
            joint(t(0.0, 0.0, 0.25), yax),
            joint(t(0.0, 0.0, 0.22), yax),
            joint(t(0.0, 0.0, 0.06), zax),
            joint(t(0.0, 0.0, 0.06), yax),
        ],
        tool: t(0.0, 0.0, 0.10),
        links: vec![
            LinkCapsule { joint: 0, a: Point3::new(0.0, 0.0, -0.045), b: Point3::origin(), radius: 0.045 },
            LinkCapsule { joint: 1, a: Point3::origin(), b: Point3::new(0.0, 0.0, 0.25), radius: 0.040 },
            LinkCapsule { joint: 2, a: Point3::origin(), b: Point3::new(0.0, 0.0, 0.22), radius: 0.035 },
            LinkCapsule { joint: 3, a: Point3::origin(), b: Point3::new(0.0, 0.0, 0.06), radius: 0.030 },
            LinkCapsule { joint: 4, a: Point3::origin(), b: Point3::new(0.0, 0.0, 0.06), radius: 0.030 },
        ],
        gripper: vec![
            // Palm block plus two finger capsules of a parallel gripper.
            Body::Block {
                pose: Iso3::from_parts(Translation3::new(0.0, 0.0, -0.06), UnitQuaternion::identity()),
                half_extents: Vec3::new(0.035, 0.02, 0.03),
            },
            Body::Capsule {
                a: Point3::new(0.018, 0.0, -0.03),
                b: Point3::new(0.018, 0.0, -0.004),
                radius: 0.006,
            },
            Body::Capsule {
                a: Point3::new(-0.018, 0.0, -0.03),
                b: Point3::new(-0.018, 0.0, -0.004),
                radius: 0.006,
            },
        ],
        home: vec![0.0, -0.6, 1.2, -0.6, 0.0, 0.0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn robot() -> RobotModel {
        default_arm(Iso3::identity())
    }

    #[test]
    fn fk_home_is_reachable_height() {
        let r = robot();
        let tool = r.fk(&r.home);
        assert!(tool.translation.vector.norm() > 0.1);
        assert!(tool.translation.vector.norm() < 0.9);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let r = robot();
        let q = vec![0.3, -0.5, 0.9, -0.2, 0.7, 0.4];
        let jac = r.jacobian(&q);
        let h = 1e-7;
        for i in 0..r.dof() {
            let mut qp = q.clone();
            qp[i] += h;
            let f0 = r.fk(&q);
            let f1 = r.fk(&qp);
            let dlin = (f1.translation.vector - f0.translation.vector) / h;
            let drot = (f1.rotation * f0.rotation.inverse()).scaled_axis() / h;
            for k in 0..3 {
                assert!((jac[(k, i)] - dlin[k]).abs() < 1e-5, "lin joint {i} row {k}");
                assert!((jac[(k + 3, i)] - drot[k]).abs() < 1e-5, "ang joint {i} row {k}");
            }
        }
    }

    #[test]
    fn ik_fixed_point() {
        let r = robot();
        let seed = vec![0.2, -0.7, 1.1, -0.4, 0.5, 0.3];
        let target = r.fk(&seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = solve_ik(&r, &target, &seed, &IkParams::default(), &mut rng).unwrap();
        let fk = r.fk(&q);
        let (ep, er) = pose_error(&target, &fk);
        assert!(ep.norm() <= 1e-4 && er.norm() <= 1e-3);
    }

    #[test]
    fn ik_out_of_reach_fails() {
        let r = robot();
        let target = Iso3::from_parts(
            Translation3::new(5.0, 0.0, 0.0),
            UnitQuaternion::identity(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = IkParams { restarts: 5, max_iters: 60, ..IkParams::default() };
        assert!(matches!(
            solve_ik(&r, &target, &r.home, &params, &mut rng),
            Err(MotionError::NoSolution(_))
        ));
    }

    #[test]
    fn ik_solve_rate_on_fk_sampled_targets() {
        let r = robot();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut solved = 0;
        let total = 200;
        for _ in 0..total {
            let q: Vec<f64> = r
                .joints
                .iter()
                .map(|j| rng.gen_range(j.lower / 2.0..j.upper / 2.0))
                .collect();
            let target = r.fk(&q);
            if let Ok(sol) = solve_ik(&r, &target, &r.home, &IkParams::default(), &mut rng) {
                let (ep, er) = pose_error(&target, &r.fk(&sol));
                assert!(ep.norm() <= 1e-4 && er.norm() <= 1e-3);
                solved += 1;
            }
        }
        assert!(
            solved as f64 >= 0.99 * total as f64,
            "solve rate {solved}/{total} below 99%"
        );
    }
}
