//! Kinematic simulator of the bending machine: wire placement, roller
//! contact feasibility, bend application with arc winding and arc override,
//! and collision checking against machine and environment.
//!
//! The wire lives in its own local frame as a contiguous chain of straight
//! segments and circular arcs, each carrying the material orientation at its
//! start. `pose` maps wire-local to machine/world coordinates. Bending keeps
//! the held (upstream) portion fixed and rotates everything downstream of
//! the bend start.

mod machine;

pub use machine::{BendDirection, MachineError, MachineModel};

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use crate::bend::BendSet;
use crate::collide::{chain_distance, Body};
use crate::geom::{Iso3, Point3, UnitVec3, Vec3};

/// Chord tolerance for arc discretization in narrow-phase checks, meters.
pub const CHORD_TOL: f64 = 1e-4;
/// Default clearance for collision verdicts, meters.
pub const DEFAULT_CLEARANCE: f64 = 1e-3;
/// Bisection tolerance for the bending stop angle, radians.
pub const STOP_ANGLE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("bend at arclength {0} with arc {1} m runs past the wire end")]
    BendBeyondWire(f64, f64),
    #[error("arclength {0} outside the wire")]
    OutOfRange(f64),
    #[error("pose places the wire below the table plane (lowest point {0} m)")]
    UnreachablePose(f64),
    #[error("target turn {target} exceeds the feasible work range {limit}")]
    TargetExceedsWorkRange { target: f64, limit: f64 },
}

/// One wire centerline primitive in wire-local coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WirePrimitive {
    Segment {
        start: Point3,
        end: Point3,
    },
    Arc {
        center: Point3,
        axis: UnitVec3,
        /// Unit vector from the center to the arc start point.
        u_ref: UnitVec3,
        radius: f64,
        /// Swept angle about `axis`, in (0, 2*pi).
        sweep: f64,
    },
}

impl WirePrimitive {
    pub fn length(&self) -> f64 {
        match self {
            WirePrimitive::Segment { start, end } => (end - start).norm(),
            WirePrimitive::Arc { radius, sweep, .. } => radius * sweep,
        }
    }

    fn point_at(&self, local_s: f64) -> Point3 {
        match self {
            WirePrimitive::Segment { start, end } => {
                let dir = (end - start).normalize();
                start + dir * local_s
            }
            WirePrimitive::Arc { center, axis, u_ref, radius, .. } => {
                let phi = local_s / radius;
                let v = axis.cross(u_ref);
                center + (u_ref.as_ref() * phi.cos() + v * phi.sin()) * *radius
            }
        }
    }

    fn tangent_at(&self, local_s: f64) -> Vec3 {
        match self {
            WirePrimitive::Segment { start, end } => (end - start).normalize(),
            WirePrimitive::Arc { axis, u_ref, radius, .. } => {
                let phi = local_s / radius;
                let v = axis.cross(u_ref);
                u_ref.as_ref() * (-phi.sin()) + v * phi.cos()
            }
        }
    }
}

/// A primitive plus its arclength offset and material orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub prim: WirePrimitive,
    /// Arclength of the piece start, in flat-pattern coordinates.
    pub s0: f64,
    /// Material orientation at the piece start: maps flat-frame axes
    /// (tangent = x) to wire-local directions.
    pub mat0: Rotation3<f64>,
}

impl Piece {
    fn mat_at(&self, local_s: f64) -> Rotation3<f64> {
        match &self.prim {
            WirePrimitive::Segment { .. } => self.mat0,
            WirePrimitive::Arc { axis, radius, .. } => {
                Rotation3::from_axis_angle(axis, local_s / radius) * self.mat0
            }
        }
    }
}

/// A straight chord of the discretized centerline with its arclength span.
#[derive(Debug, Clone, Copy)]
pub struct Chord {
    pub a: Point3,
    pub b: Point3,
    pub s0: f64,
    pub s1: f64,
}

/// Piecewise segment/arc wire centerline with diameter and world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct WireState {
    pieces: Vec<Piece>,
    pub diameter: f64,
    pub pose: Iso3,
}

impl WireState {
    /// A straight wire along +x from the origin, identity pose.
    pub fn straight(length: f64, diameter: f64) -> Self {
        Self {
            pieces: vec![Piece {
                prim: WirePrimitive::Segment {
                    start: Point3::origin(),
                    end: Point3::new(length, 0.0, 0.0),
                },
                s0: 0.0,
                mat0: Rotation3::identity(),
            }],
            diameter,
            pose: Iso3::identity(),
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// The same wire shape under a different world pose.
    pub fn with_pose(&self, pose: Iso3) -> WireState {
        WireState { pieces: self.pieces.clone(), diameter: self.diameter, pose }
    }

    pub fn primitives(&self) -> impl Iterator<Item = &WirePrimitive> {
        self.pieces.iter().map(|p| &p.prim)
    }

    pub fn total_length(&self) -> f64 {
        let last = self.pieces.last().expect("wire has at least one piece");
        last.s0 + last.prim.length()
    }

    fn locate(&self, s: f64) -> Result<(usize, f64), SimError> {
        let total = self.total_length();
        if !(0.0..=total + 1e-9).contains(&s) {
            return Err(SimError::OutOfRange(s));
        }
        let s = s.min(total);
        for (i, piece) in self.pieces.iter().enumerate().rev() {
            if s >= piece.s0 - 1e-12 {
                return Ok((i, (s - piece.s0).max(0.0)));
            }
        }
        Ok((0, 0.0))
    }

    pub fn point_at(&self, s: f64) -> Result<Point3, SimError> {
        let (i, ls) = self.locate(s)?;
        Ok(self.pieces[i].prim.point_at(ls))
    }

    pub fn tangent_at(&self, s: f64) -> Result<Vec3, SimError> {
        let (i, ls) = self.locate(s)?;
        Ok(self.pieces[i].prim.tangent_at(ls))
    }

    pub fn material_rotation_at(&self, s: f64) -> Result<Rotation3<f64>, SimError> {
        let (i, ls) = self.locate(s)?;
        Ok(self.pieces[i].mat_at(ls))
    }

    /// Splits the piece containing `s` so a piece boundary falls exactly at
    /// `s`. No-op when `s` already sits on a boundary.
    fn split_at(&mut self, s: f64) -> Result<(), SimError> {
        let (i, ls) = self.locate(s)?;
        let piece = self.pieces[i].clone();
        let len = piece.prim.length();
        if ls <= 1e-12 || ls >= len - 1e-12 {
            return Ok(());
        }
        let (first, second) = match &piece.prim {
            WirePrimitive::Segment { start, end } => {
                let mid = piece.prim.point_at(ls);
                (
                    WirePrimitive::Segment { start: *start, end: mid },
                    WirePrimitive::Segment { start: mid, end: *end },
                )
            }
            WirePrimitive::Arc { center, axis, u_ref, radius, sweep } => {
                let phi = ls / radius;
                let rot = Rotation3::from_axis_angle(axis, phi);
                (
                    WirePrimitive::Arc {
                        center: *center,
                        axis: *axis,
                        u_ref: *u_ref,
                        radius: *radius,
                        sweep: phi,
                    },
                    WirePrimitive::Arc {
                        center: *center,
                        axis: *axis,
                        u_ref: UnitVec3::new_normalize(rot * u_ref.as_ref()),
                        radius: *radius,
                        sweep: sweep - phi,
                    },
                )
            }
        };
        let mat_split = piece.mat_at(ls);
        self.pieces[i] = Piece { prim: first, s0: piece.s0, mat0: piece.mat0 };
        self.pieces.insert(
            i + 1,
            Piece { prim: second, s0: piece.s0 + ls, mat0: mat_split },
        );
        Ok(())
    }

    /// Applies a bend: material `[u, u + r*turn]` is re-formed into a single
    /// arc of radius `r` about the material axis `axis_flat`, and everything
    /// downstream is carried rigidly. Overlapped sections of earlier arcs
    /// are overridden by the new arc. Total arclength is preserved exactly.
    pub fn apply_bend(
        &self,
        u: f64,
        turn: f64,
        r: f64,
        axis_flat: &UnitVec3,
    ) -> Result<WireState, SimError> {
        let arc_len = r * turn;
        let total = self.total_length();
        if u < -1e-12 || u + arc_len > total + 1e-9 {
            return Err(SimError::BendBeyondWire(u, arc_len));
        }
        if turn <= 0.0 {
            return Ok(self.clone());
        }

        let mut work = self.clone();
        work.split_at(u)?;
        work.split_at(u + arc_len)?;

        let p_start = work.point_at(u)?;
        let tangent = work.tangent_at(u)?;
        let mat_u = work.material_rotation_at(u)?;
        let axis_local = UnitVec3::new_normalize(mat_u * axis_flat.as_ref());
        debug_assert!(
            axis_local.dot(&tangent).abs() < 1e-6,
            "bend axis must stay orthogonal to the tangent"
        );

        // New arc tangent-continuous with the upstream material.
        let center = p_start + axis_local.cross(&tangent) * r;
        let u_ref = UnitVec3::new_normalize(p_start - center);
        let arc = WirePrimitive::Arc {
            center,
            axis: axis_local,
            u_ref,
            radius: r,
            sweep: turn,
        };
        let arc_rot = Rotation3::from_axis_angle(&axis_local, turn);

        // Old and new anchors at the downstream attach point.
        let s_end = u + arc_len;
        let old_anchor = work.point_at(s_end)?;
        let old_mat = work.material_rotation_at(s_end)?;
        let new_anchor = arc.point_at(arc_len);
        let new_mat = arc_rot * mat_u;
        let g_rot = new_mat * old_mat.inverse();
        let map_point = |p: &Point3| new_anchor + g_rot * (p - old_anchor);
        let map_dir = |v: &UnitVec3| UnitVec3::new_normalize(g_rot * v.as_ref());

        let mut pieces = Vec::with_capacity(work.pieces.len() + 1);
        for piece in &work.pieces {
            let p_end = piece.s0 + piece.prim.length();
            if p_end <= u + 1e-12 {
                pieces.push(piece.clone());
            } else if piece.s0 >= s_end - 1e-12 {
                let prim = match &piece.prim {
                    WirePrimitive::Segment { start, end } => WirePrimitive::Segment {
                        start: map_point(start),
                        end: map_point(end),
                    },
                    WirePrimitive::Arc { center, axis, u_ref, radius, sweep } => {
                        WirePrimitive::Arc {
                            center: map_point(center),
                            axis: map_dir(axis),
                            u_ref: map_dir(u_ref),
                            radius: *radius,
                            sweep: *sweep,
                        }
                    }
                };
                pieces.push(Piece {
                    prim,
                    s0: piece.s0,
                    mat0: g_rot * piece.mat0,
                });
            }
            // Pieces inside [u, s_end) are overridden by the new arc.
        }
        let insert_at = pieces
            .iter()
            .position(|p| p.s0 >= u - 1e-12)
            .unwrap_or(pieces.len());
        pieces.insert(insert_at, Piece { prim: arc, s0: u, mat0: mat_u });

        Ok(WireState { pieces, diameter: self.diameter, pose: self.pose })
    }

    /// Discretized centerline in wire-local coordinates with arclength tags.
    pub fn chords(&self, chord_tol: f64) -> Vec<Chord> {
        let mut out = Vec::new();
        for piece in &self.pieces {
            match &piece.prim {
                WirePrimitive::Segment { start, end } => out.push(Chord {
                    a: *start,
                    b: *end,
                    s0: piece.s0,
                    s1: piece.s0 + piece.prim.length(),
                }),
                WirePrimitive::Arc { radius, sweep, .. } => {
                    // Max chord error r(1 - cos(h)) <= tol.
                    let h = (1.0 - (chord_tol / radius).min(1.0)).acos().max(1e-3);
                    let steps = ((sweep / (2.0 * h)).ceil() as usize).max(1);
                    let ds = piece.prim.length() / steps as f64;
                    for k in 0..steps {
                        let sa = k as f64 * ds;
                        let sb = (k + 1) as f64 * ds;
                        out.push(Chord {
                            a: piece.prim.point_at(sa),
                            b: piece.prim.point_at(sb),
                            s0: piece.s0 + sa,
                            s1: piece.s0 + sb,
                        });
                    }
                }
            }
        }
        out
    }

    /// Chords mapped through the wire pose into world coordinates.
    pub fn world_chords(&self, chord_tol: f64) -> Vec<Chord> {
        self.chords(chord_tol)
            .into_iter()
            .map(|c| Chord {
                a: self.pose * c.a,
                b: self.pose * c.b,
                s0: c.s0,
                s1: c.s1,
            })
            .collect()
    }

    /// Largest positional gap and tangent kink across piece boundaries.
    pub fn continuity(&self) -> (f64, f64) {
        let mut max_gap = 0.0f64;
        let mut max_kink = 0.0f64;
        for w in self.pieces.windows(2) {
            let len = w[0].prim.length();
            let gap = (w[1].prim.point_at(0.0) - w[0].prim.point_at(len)).norm();
            let t0 = w[0].prim.tangent_at(len);
            let t1 = w[1].prim.tangent_at(0.0);
            let kink = t0.dot(&t1).clamp(-1.0, 1.0).acos();
            max_gap = max_gap.max(gap);
            max_kink = max_kink.max(kink);
        }
        (max_gap, max_kink)
    }

    pub fn arc_count(&self) -> usize {
        self.pieces
            .iter()
            .filter(|p| matches!(p.prim, WirePrimitive::Arc { .. }))
            .count()
    }
}

/// Static obstacles around the machine (table, robot base, fixtures).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub bodies: Vec<Body>,
}

/// One bend of a compiled machine program, in flat-pattern material terms.
#[derive(Debug, Clone, Copy)]
pub struct ProgramStep {
    pub index: usize,
    /// Flat arclength of the bend start point.
    pub u: f64,
    /// Deflection from straight.
    pub turn: f64,
    /// Bend plane normal in flat material coordinates.
    pub axis_flat: UnitVec3,
    /// Lift placement pitch: the bend's lift angle wrapped into
    /// (-pi/2, pi/2] modulo the wire's central symmetry.
    pub lift: f64,
}

/// A bend set compiled against a machine: per-bend flat positions, turns and
/// material axes, ready for out-of-order execution.
#[derive(Debug, Clone)]
pub struct BendProgram {
    pub steps: Vec<ProgramStep>,
    pub winding_radius: f64,
    pub wire_diameter: f64,
    pub wire_length: f64,
}

impl BendProgram {
    pub fn from_bend_set(set: &BendSet) -> Self {
        let twists = set.accumulated_twists();
        let positions = set.flat_positions();
        let steps = set
            .candidates
            .iter()
            .zip(twists.iter().zip(positions.iter()))
            .map(|(c, (&twist, &u))| {
                let axis_flat = UnitVec3::new_normalize(
                    Rotation3::from_axis_angle(&UnitVec3::new_normalize(Vec3::x()), twist)
                        * Vec3::z(),
                );
                let mut lift = c.beta;
                while lift > std::f64::consts::FRAC_PI_2 {
                    lift -= std::f64::consts::PI;
                }
                while lift <= -std::f64::consts::FRAC_PI_2 {
                    lift += std::f64::consts::PI;
                }
                ProgramStep { index: c.index, u, turn: c.turn_angle(), axis_flat, lift }
            })
            .collect();
        Self {
            steps,
            winding_radius: set.center_radius,
            wire_diameter: set.wire.diameter,
            wire_length: set.wire.total_length,
        }
    }

    pub fn initial_wire(&self) -> WireState {
        WireState::straight(self.wire_length, self.wire_diameter)
    }
}

/// Rigid placement of the wire for one bend.
///
/// The bend start lands on the machine bend point, the incoming tangent on
/// the feed axis, and the material bend axis on the vertical, signed by the
/// bend direction. The lift placement additionally pitches the whole wire
/// about the machine's lateral axis by the bend's lift angle.
pub fn pose_wire_for_bend(
    wire: &WireState,
    step: &ProgramStep,
    machine: &MachineModel,
    use_alpha: bool,
    direction: BendDirection,
) -> Result<WireState, SimError> {
    let p = wire.point_at(step.u)?;
    let tangent = wire.tangent_at(step.u)?;
    let mat = wire.material_rotation_at(step.u)?;
    let axis_local = (mat * step.axis_flat.as_ref()).normalize();

    let pitch = if use_alpha { 0.0 } else { step.lift };
    let pitch_rot = Rotation3::from_axis_angle(&UnitVec3::new_normalize(Vec3::y()), pitch);
    let sz = direction.sign();
    let target_x = pitch_rot * Vec3::x();
    let target_z = pitch_rot * (Vec3::z() * sz);
    let target_y = target_z.cross(&target_x);

    // Source triad (tangent, axis x tangent, axis) -> target triad.
    let src = nalgebra::Matrix3::from_columns(&[
        tangent,
        axis_local.cross(&tangent),
        axis_local,
    ]);
    let dst = nalgebra::Matrix3::from_columns(&[target_x, target_y, target_z]);
    let rot = Rotation3::from_matrix_unchecked(dst * src.transpose());
    let translation = Point3::origin() - rot * p;
    let pose = Iso3::from_parts(
        nalgebra::Translation3::from(translation),
        nalgebra::UnitQuaternion::from_rotation_matrix(&rot),
    );

    let posed = WireState { pose, ..wire.clone() };

    // The wire must stay above the table plane.
    let min_z = posed
        .world_chords(CHORD_TOL)
        .iter()
        .flat_map(|c| [c.a.z, c.b.z])
        .fold(f64::INFINITY, f64::min)
        - wire.diameter / 2.0;
    if min_z < machine.table_z {
        return Err(SimError::UnreachablePose(min_z));
    }
    Ok(posed)
}

/// Contact feasibility of a posed wire: the punch must be able to reach the
/// downstream material and both feed guides must touch the upstream side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactVerdict {
    Feasible,
    NoPunchContact,
    NoDieContact,
}

pub fn check_contact_feasibility(
    wire: &WireState,
    bend_start_arclength: f64,
    machine: &MachineModel,
    direction: BendDirection,
) -> ContactVerdict {
    let w = wire.diameter;
    let chords = wire.world_chords(CHORD_TOL.min(machine.contact_tol / 2.0));
    let upstream: Vec<_> = chords
        .iter()
        .filter(|c| c.s0 < bend_start_arclength)
        .collect();
    let downstream: Vec<_> = chords
        .iter()
        .filter(|c| c.s1 > bend_start_arclength)
        .collect();

    // (a) Punch contact: downstream material inside the swept band.
    let (band_lo, band_hi) = machine.punch_band(w);
    let center = machine.wrap_center(w, direction);
    let sector_hi = machine.die_obstruction_angle;
    let mut punch_hit = false;
    'outer: for c in &downstream {
        let n = ((c.b - c.a).norm() / 1e-3).ceil().max(1.0) as usize;
        for k in 0..=n {
            let p = c.a + (c.b - c.a) * (k as f64 / n as f64);
            if p.z.abs() > machine.roller_half_height {
                continue;
            }
            let radial = ((p.x - center.x).powi(2) + (p.y - center.y).powi(2)).sqrt();
            if radial < band_lo || radial > band_hi {
                continue;
            }
            let ang = machine.wrap_angle_of(&p, w, direction);
            if (-0.05..=sector_hi).contains(&ang) {
                punch_hit = true;
                break 'outer;
            }
        }
    }
    if !punch_hit {
        return ContactVerdict::NoPunchContact;
    }

    // (b) Die contact: the upstream side must touch both feed guides.
    let up_segments: Vec<(Point3, Point3)> = upstream.iter().map(|c| (c.a, c.b)).collect();
    for die in machine.die_rollers() {
        let d = chain_distance(&up_segments, w / 2.0, std::slice::from_ref(&die));
        if d > machine.contact_tol {
            return ContactVerdict::NoDieContact;
        }
    }
    ContactVerdict::Feasible
}

/// True when the posed wire tube comes within `clearance` of any body.
pub fn wire_collides(wire: &WireState, bodies: &[Body], clearance: f64) -> bool {
    wire_clearance_distance(wire, bodies, None) < clearance
}

/// Minimum surface separation between the wire tube and the bodies,
/// optionally restricted to material at arclength >= `from_s`.
pub fn wire_clearance_distance(wire: &WireState, bodies: &[Body], from_s: Option<f64>) -> f64 {
    let chords = wire.world_chords(CHORD_TOL);
    let segs: Vec<(Point3, Point3)> = chords
        .iter()
        .filter(|c| from_s.map_or(true, |s| c.s1 > s))
        .map(|c| (c.a, c.b))
        .collect();
    chain_distance(&segs, wire.diameter / 2.0, bodies)
}

/// Result of driving one bend: the new wire state and the achieved turn.
pub fn simulate_bend(
    wire: &WireState,
    step: &ProgramStep,
    direction: BendDirection,
    machine: &MachineModel,
    env: &Environment,
    clearance: f64,
) -> Result<(WireState, f64), SimError> {
    let limit = machine.max_feasible_angle(wire.diameter, direction)?;
    if step.turn > limit {
        return Err(SimError::TargetExceedsWorkRange { target: step.turn, limit });
    }

    let mut bodies = machine.collision_bodies.clone();
    bodies.extend(env.bodies.iter().cloned());

    let r = machine.wrap_radius(wire.diameter);
    let bent_at = |chi: f64| -> Result<WireState, SimError> {
        if chi <= 0.0 {
            Ok(wire.clone())
        } else {
            wire.apply_bend(step.u, chi, r, &step.axis_flat)
        }
    };
    let moving_clearance = |state: &WireState| -> f64 {
        wire_clearance_distance(state, &bodies, Some(step.u))
    };

    // Conservative advancement: downstream points move at most rho per
    // radian, so any interval shorter than separation/rho is contact-free.
    let rho_bound = {
        let anchor = wire.pose * wire.point_at(step.u)?;
        wire.world_chords(CHORD_TOL)
            .iter()
            .filter(|c| c.s1 > step.u)
            .flat_map(|c| [c.a, c.b])
            .map(|p| (p - anchor).norm())
            .fold(r, f64::max)
    };

    let mut chi = 0.0_f64;
    let mut last_free: Option<f64> = None;
    let mut guard = 0usize;
    loop {
        let state = bent_at(chi)?;
        let sep = moving_clearance(&state) - clearance;
        if sep <= 0.0 {
            let Some(mut lo) = last_free else {
                // In contact before bending even started.
                return Ok((wire.clone(), 0.0));
            };
            let mut hi = chi;
            while hi - lo > STOP_ANGLE_TOL {
                let mid = 0.5 * (lo + hi);
                if moving_clearance(&bent_at(mid)?) - clearance <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok((bent_at(lo)?, lo));
        }
        if chi >= step.turn {
            return Ok((state, step.turn));
        }
        last_free = Some(chi);
        let advance = (sep / rho_bound).clamp(STOP_ANGLE_TOL, 0.15);
        chi = (chi + advance).min(step.turn);
        guard += 1;
        if guard > 100_000 {
            return Ok((bent_at(chi)?, chi));
        }
    }
}

/// Free-function wrapper over the machine's work-range computation.
pub fn max_feasible_angle(
    wire_diameter: f64,
    machine: &MachineModel,
    direction: BendDirection,
) -> Result<f64, MachineError> {
    machine.max_feasible_angle(wire_diameter, direction)
}
