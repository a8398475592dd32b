//! On-disk schemas: machine/robot/grasp/project configuration (TOML), curve
//! point lists (plain text), and the bending-set / plan / report documents
//! (JSON). Every emitted file parses back to an equal in-memory value.

use nalgebra::{Rotation3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::bend::{BendCandidate, BendSet, WireSpec, YSide};
use crate::collide::Body;
use crate::geom::{DenseCurve, Iso3, Point3, UnitVec3, Vec3};
use crate::motion::{GraspPose, Joint, LinkCapsule, RobotModel};
use crate::sim::MachineModel;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Curve { line: usize, message: String },
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },
}

/// Plain-text curve: one `x y z` (or `x,y,z`) record per line, meters.
/// `#` starts a comment; blank lines are skipped.
pub fn parse_curve(text: &str) -> Result<DenseCurve, FormatError> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 3 {
            return Err(FormatError::Curve {
                line: i + 1,
                message: format!("expected 3 coordinates, found {}", fields.len()),
            });
        }
        let mut coords = [0.0f64; 3];
        for (k, f) in fields.iter().enumerate() {
            coords[k] = f.parse::<f64>().map_err(|e| FormatError::Curve {
                line: i + 1,
                message: format!("bad number {f:?}: {e}"),
            })?;
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    DenseCurve::new(points).map_err(|e| FormatError::Invalid {
        what: "curve",
        message: e.to_string(),
    })
}

pub fn write_curve(curve: &DenseCurve) -> String {
    let mut out = String::new();
    for p in curve.points() {
        out.push_str(&format!("{:.9} {:.9} {:.9}\n", p.x, p.y, p.z));
    }
    out
}

/// Collision body description shared by the machine, robot and environment
/// schemas. Blocks take a center plus roll-pitch-yaw, everything in meters
/// and radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BodySpec {
    Sphere { center: [f64; 3], radius: f64 },
    Capsule { a: [f64; 3], b: [f64; 3], radius: f64 },
    Block { center: [f64; 3], half_extents: [f64; 3], #[serde(default)] rpy: [f64; 3] },
    HalfSpace { point: [f64; 3], normal: [f64; 3] },
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn p3(a: [f64; 3]) -> Point3 {
    Point3::new(a[0], a[1], a[2])
}

impl BodySpec {
    pub fn to_body(&self) -> Result<Body, FormatError> {
        Ok(match self {
            BodySpec::Sphere { center, radius } => {
                Body::Sphere { center: p3(*center), radius: *radius }
            }
            BodySpec::Capsule { a, b, radius } => {
                Body::Capsule { a: p3(*a), b: p3(*b), radius: *radius }
            }
            BodySpec::Block { center, half_extents, rpy } => Body::Block {
                pose: Iso3::from_parts(
                    Translation3::new(center[0], center[1], center[2]),
                    UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
                ),
                half_extents: v3(*half_extents),
            },
            BodySpec::HalfSpace { point, normal } => {
                let n = v3(*normal);
                if n.norm() < 1e-9 {
                    return Err(FormatError::Invalid {
                        what: "half space",
                        message: "zero normal".into(),
                    });
                }
                Body::HalfSpace { point: p3(*point), normal: UnitVec3::new_normalize(n) }
            }
        })
    }
}

/// Machine description file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineFile {
    pub center_roller_radius: f64,
    pub punch_roller_radius: f64,
    pub punch_orbit_radius: f64,
    pub punch_travel_limit: f64,
    pub die_obstruction_angle: f64,
    pub die_obstruction_distance: f64,
    pub die_obstruction_radius: f64,
    pub die_gate_distance: f64,
    pub die_gate_halfgap: f64,
    pub die_roller_radius: f64,
    pub roller_half_height: f64,
    pub contact_tol: f64,
    pub table_z: f64,
    #[serde(default)]
    pub collision_bodies: Vec<BodySpec>,
}

impl MachineFile {
    pub fn parse(text: &str) -> Result<MachineModel, FormatError> {
        let file: MachineFile = toml::from_str(text)?;
        file.to_model()
    }

    pub fn to_model(&self) -> Result<MachineModel, FormatError> {
        for (what, v) in [
            ("center_roller_radius", self.center_roller_radius),
            ("punch_roller_radius", self.punch_roller_radius),
            ("punch_orbit_radius", self.punch_orbit_radius),
            ("die_obstruction_distance", self.die_obstruction_distance),
            ("die_gate_distance", self.die_gate_distance),
            ("die_roller_radius", self.die_roller_radius),
            ("roller_half_height", self.roller_half_height),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FormatError::Invalid {
                    what: "machine",
                    message: format!("{what} must be positive, got {v}"),
                });
            }
        }
        if self.punch_orbit_radius <= self.punch_roller_radius + self.center_roller_radius {
            return Err(FormatError::Invalid {
                what: "machine",
                message: "punch orbit leaves no roller gap".into(),
            });
        }
        let bodies = self
            .collision_bodies
            .iter()
            .map(|b| b.to_body())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MachineModel {
            center_roller_radius: self.center_roller_radius,
            punch_roller_radius: self.punch_roller_radius,
            punch_orbit_radius: self.punch_orbit_radius,
            punch_travel_limit: self.punch_travel_limit,
            die_obstruction_angle: self.die_obstruction_angle,
            die_obstruction_distance: self.die_obstruction_distance,
            die_obstruction_radius: self.die_obstruction_radius,
            die_gate_distance: self.die_gate_distance,
            die_gate_halfgap: self.die_gate_halfgap,
            die_roller_radius: self.die_roller_radius,
            roller_half_height: self.roller_half_height,
            contact_tol: self.contact_tol,
            table_z: self.table_z,
            collision_bodies: bodies,
        })
    }

    pub fn from_model(m: &MachineModel) -> Self {
        // Collision bodies round-trip through specs only for the shapes the
        // schema covers; the bundled files are authored as specs anyway.
        Self {
            center_roller_radius: m.center_roller_radius,
            punch_roller_radius: m.punch_roller_radius,
            punch_orbit_radius: m.punch_orbit_radius,
            punch_travel_limit: m.punch_travel_limit,
            die_obstruction_angle: m.die_obstruction_angle,
            die_obstruction_distance: m.die_obstruction_distance,
            die_obstruction_radius: m.die_obstruction_radius,
            die_gate_distance: m.die_gate_distance,
            die_gate_halfgap: m.die_gate_halfgap,
            die_roller_radius: m.die_roller_radius,
            roller_half_height: m.roller_half_height,
            contact_tol: m.contact_tol,
            table_z: m.table_z,
            collision_bodies: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub offset: [f64; 3],
    pub axis: [f64; 3],
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub joint: usize,
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
}

/// Robot description file: joint chain, link capsules, gripper bodies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotFile {
    pub base_position: [f64; 3],
    #[serde(default)]
    pub base_rpy: [f64; 3],
    pub tool_offset: [f64; 3],
    pub home: Vec<f64>,
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub gripper: Vec<BodySpec>,
}

impl RobotFile {
    pub fn parse(text: &str) -> Result<RobotModel, FormatError> {
        let file: RobotFile = toml::from_str(text)?;
        file.to_model()
    }

    pub fn to_model(&self) -> Result<RobotModel, FormatError> {
        let joints = self
            .joints
            .iter()
            .map(|j| {
                let axis = v3(j.axis);
                if axis.norm() < 1e-9 {
                    return Err(FormatError::Invalid {
                        what: "robot joint",
                        message: "zero axis".into(),
                    });
                }
                Ok(Joint {
                    offset: Iso3::from_parts(
                        Translation3::new(j.offset[0], j.offset[1], j.offset[2]),
                        UnitQuaternion::identity(),
                    ),
                    axis: UnitVec3::new_normalize(axis),
                    lower: j.lower,
                    upper: j.upper,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let links = self
            .links
            .iter()
            .map(|l| LinkCapsule { joint: l.joint, a: p3(l.a), b: p3(l.b), radius: l.radius })
            .collect();
        let gripper = self
            .gripper
            .iter()
            .map(|g| g.to_body())
            .collect::<Result<Vec<_>, _>>()?;
        let robot = RobotModel {
            base: Iso3::from_parts(
                Translation3::new(self.base_position[0], self.base_position[1], self.base_position[2]),
                UnitQuaternion::from_euler_angles(self.base_rpy[0], self.base_rpy[1], self.base_rpy[2]),
            ),
            joints,
            tool: Iso3::from_parts(
                Translation3::new(self.tool_offset[0], self.tool_offset[1], self.tool_offset[2]),
                UnitQuaternion::identity(),
            ),
            links,
            gripper,
            home: self.home.clone(),
        };
        robot.validate().map_err(|e| FormatError::Invalid {
            what: "robot",
            message: e.to_string(),
        })?;
        Ok(robot)
    }
}

/// Grasp annotation file: wire-frame grasps ordered by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspFile {
    pub grasps: Vec<GraspPose>,
}

impl GraspFile {
    pub fn parse(text: &str, wire_diameter: f64) -> Result<Vec<GraspPose>, FormatError> {
        let file: GraspFile = toml::from_str(text)?;
        let mut seen = std::collections::BTreeSet::new();
        for g in &file.grasps {
            if !seen.insert(g.id) {
                return Err(FormatError::Invalid {
                    what: "grasps",
                    message: format!("duplicate grasp id {}", g.id),
                });
            }
            if g.jaw_width < wire_diameter {
                return Err(FormatError::Invalid {
                    what: "grasps",
                    message: format!(
                        "grasp {} jaw width {} below wire diameter {}",
                        g.id, g.jaw_width, wire_diameter
                    ),
                });
            }
        }
        let mut grasps = file.grasps;
        grasps.sort_by_key(|g| g.id);
        Ok(grasps)
    }
}

/// Serialized bend candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDoc {
    pub index: usize,
    pub q: [f64; 3],
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub y_side: i8,
}

impl CandidateDoc {
    fn from_candidate(c: &BendCandidate) -> Self {
        Self {
            index: c.index,
            q: [c.q.x, c.q.y, c.q.z],
            theta: c.theta,
            alpha: c.alpha,
            beta: c.beta,
            y_side: match c.y_side {
                YSide::Pos => 1,
                YSide::Neg => -1,
            },
        }
    }

    fn to_candidate(&self) -> BendCandidate {
        BendCandidate {
            index: self.index,
            q: p3(self.q),
            theta: self.theta,
            alpha: self.alpha,
            beta: self.beta,
            y_side: if self.y_side >= 0 { YSide::Pos } else { YSide::Neg },
        }
    }
}

/// Bending-set document with provenance: the approximation tolerance, point
/// counts and deviation, plus the seed segment needed for reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendSetDoc {
    pub format: String,
    pub epsilon: f64,
    pub source_point_count: usize,
    pub kept_point_count: usize,
    pub max_deviation: f64,
    pub center_radius: f64,
    pub wire_diameter: f64,
    pub wire_length: f64,
    pub seed_segment: [[f64; 3]; 2],
    pub seed_normal: [f64; 3],
    pub candidates: Vec<CandidateDoc>,
}

pub const BENDSET_FORMAT: &str = "wirebend-bendset/1";
pub const PLAN_FORMAT: &str = "wirebend-plan/1";
pub const REPORT_FORMAT: &str = "wirebend-report/1";

impl BendSetDoc {
    pub fn new(
        set: &BendSet,
        epsilon: f64,
        source_points: usize,
        kept_points: usize,
        max_deviation: f64,
        seed_segment: (Point3, Point3),
    ) -> Self {
        Self {
            format: BENDSET_FORMAT.to_string(),
            epsilon,
            source_point_count: source_points,
            kept_point_count: kept_points,
            max_deviation,
            center_radius: set.center_radius,
            wire_diameter: set.wire.diameter,
            wire_length: set.wire.total_length,
            seed_segment: [
                [seed_segment.0.x, seed_segment.0.y, seed_segment.0.z],
                [seed_segment.1.x, seed_segment.1.y, seed_segment.1.z],
            ],
            seed_normal: [set.seed_normal.x, set.seed_normal.y, set.seed_normal.z],
            candidates: set.candidates.iter().map(CandidateDoc::from_candidate).collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let doc: BendSetDoc = serde_json::from_str(text)?;
        if doc.format != BENDSET_FORMAT {
            return Err(FormatError::Invalid {
                what: "bend set",
                message: format!("unsupported format {:?}", doc.format),
            });
        }
        if !(doc.center_radius > 0.0) || !(doc.wire_diameter > 0.0) || !(doc.wire_length > 0.0) {
            return Err(FormatError::Invalid {
                what: "bend set",
                message: "non-positive geometry constants".into(),
            });
        }
        Ok(doc)
    }

    pub fn to_bend_set(&self) -> Result<BendSet, FormatError> {
        let n = v3(self.seed_normal);
        if n.norm() < 1e-9 {
            return Err(FormatError::Invalid {
                what: "bend set",
                message: "zero seed normal".into(),
            });
        }
        let wire =
            WireSpec::new(self.wire_diameter, self.wire_length).map_err(|e| FormatError::Invalid {
                what: "bend set",
                message: e.to_string(),
            })?;
        for c in &self.candidates {
            if !(c.theta > 0.0 && c.theta <= std::f64::consts::PI + 1e-9) {
                return Err(FormatError::Invalid {
                    what: "bend set",
                    message: format!("candidate {} theta {} outside (0, pi]", c.index, c.theta),
                });
            }
        }
        Ok(BendSet {
            candidates: self.candidates.iter().map(|c| c.to_candidate()).collect(),
            center_radius: self.center_radius,
            wire,
            seed_normal: UnitVec3::new_normalize(n),
        })
    }

    pub fn seed_points(&self) -> (Point3, Point3) {
        (p3(self.seed_segment[0]), p3(self.seed_segment[1]))
    }
}

/// World pose as translation plus unit quaternion (w, x, y, z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDoc {
    pub translation: [f64; 3],
    pub quaternion: [f64; 4],
}

impl PoseDoc {
    pub fn from_iso(iso: &Iso3) -> Self {
        let q = iso.rotation.quaternion();
        Self {
            translation: [iso.translation.x, iso.translation.y, iso.translation.z],
            quaternion: [q.w, q.i, q.j, q.k],
        }
    }

    pub fn to_iso(&self) -> Iso3 {
        Iso3::from_parts(
            Translation3::new(self.translation[0], self.translation[1], self.translation[2]),
            UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                self.quaternion[0],
                self.quaternion[1],
                self.quaternion[2],
                self.quaternion[3],
            )),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDoc {
    pub use_alpha: bool,
    pub direction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStepDoc {
    pub bend_index: usize,
    pub use_alpha: bool,
    pub direction: String,
    pub achieved_angle: f64,
    pub wire_pose: PoseDoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanStatsDoc {
    pub nodes_explored: u64,
    pub prunes: u64,
    pub sequences_tried: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDoc {
    pub waypoints: Vec<Vec<f64>>,
}

/// The plan document: replayable record of a solved bending task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub format: String,
    pub input_digest: String,
    pub bend_set: BendSetDoc,
    pub steps: Vec<PlanStepDoc>,
    pub grasp_id: Option<u32>,
    pub trajectories: Vec<TrajectoryDoc>,
    pub statistics: PlanStatsDoc,
}

impl PlanDoc {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let doc: PlanDoc = serde_json::from_str(text)?;
        if doc.format != PLAN_FORMAT {
            return Err(FormatError::Invalid {
                what: "plan",
                message: format!("unsupported format {:?}", doc.format),
            });
        }
        let n = doc.bend_set.candidates.len();
        if doc.steps.len() != n {
            return Err(FormatError::Invalid {
                what: "plan",
                message: format!("{} steps for {} candidates", doc.steps.len(), n),
            });
        }
        let mut seen = vec![false; n];
        for s in &doc.steps {
            if s.bend_index >= n || seen[s.bend_index] {
                return Err(FormatError::Invalid {
                    what: "plan",
                    message: "step order is not a permutation".into(),
                });
            }
            seen[s.bend_index] = true;
            if s.direction != "cw" && s.direction != "ccw" {
                return Err(FormatError::Invalid {
                    what: "plan",
                    message: format!("bad direction {:?}", s.direction),
                });
            }
        }
        Ok(doc)
    }
}

/// Aggregated benchmark results: deterministic verdict/node-count section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReportDoc {
    pub format: String,
    pub seed: u64,
    pub per_group: Vec<BenchmarkGroupDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkGroupDoc {
    pub bend_count: usize,
    pub instances: usize,
    pub solved: usize,
    pub infeasible: usize,
    pub timed_out: usize,
    pub success_rate: f64,
    pub nodes_explored: Vec<u64>,
}

/// Measured wall-clock section, kept separate so the deterministic report
/// can be compared byte for byte across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTimingsDoc {
    pub format: String,
    pub per_group: Vec<GroupTimingsDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTimingsDoc {
    pub bend_count: usize,
    pub success_ms: Vec<u64>,
    pub failure_ms: Vec<u64>,
}

/// FNV-1a 64-bit digest used to tie plans to their inputs.
pub fn fnv1a_digest(chunks: &[&[u8]]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for chunk in chunks {
        for &b in *chunk {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash ^= 0xff;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("fnv1a:{hash:016x}")
}

/// Rotation helper for staging poses given as roll-pitch-yaw.
pub fn iso_from_pos_rpy(pos: [f64; 3], rpy: [f64; 3]) -> Iso3 {
    Iso3::from_parts(
        Translation3::new(pos[0], pos[1], pos[2]),
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_euler_angles(
            rpy[0], rpy[1], rpy[2],
        )),
    )
}
