//! Converts a simplified pivot chain into an ordered set of bend parameters
//! and provides the inverse reconstruction used as a correctness oracle.
//!
//! Each bend is described in the local frame of its predecessor: `theta` is
//! the interior angle between the reversed incoming segment and the
//! xy-projected outgoing segment, `alpha` the signed twist of the new bend
//! plane about the incoming axis, `beta` the signed angle of the xz-projected
//! outgoing segment from the incoming axis. `q` is the bend start point,
//! stored in predecessor-frame coordinates so it always sits on the +x axis.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geom::{
    build_frame, project_onto_plane, BendFrame, GeomError, PivotChain, Point3, UnitVec3, Vec3,
};

/// Turn angles below this threshold emit no bend candidate (default 0.5 deg).
pub const DEFAULT_MIN_BEND_ANGLE: f64 = 0.5 * PI / 180.0;

/// Clamp slack for arccos arguments before reporting a degenerate angle.
const ACOS_CLAMP_TOL: f64 = 1e-9;

/// Branch agreement threshold for the two reconstruction routes, radians.
const BRANCH_AGREEMENT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BendError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("bend {0}: arccos argument {1} outside [-1, 1]")]
    DegenerateAngle(usize, f64),
    #[error("bend {0}: tangent region overlaps the preceding arc")]
    TangentOverlap(usize),
    #[error("bend {0}: alpha and beta reconstruction branches diverge by {1:.3e} rad")]
    InconsistentAngles(usize, f64),
    #[error("center roller radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("wire spec invalid: diameter {diameter}, total length {total_length}")]
    BadWire { diameter: f64, total_length: f64 },
}

/// Raw wire stock: diameter and total straight length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireSpec {
    pub diameter: f64,
    pub total_length: f64,
}

impl WireSpec {
    pub fn new(diameter: f64, total_length: f64) -> Result<Self, BendError> {
        if diameter > 0.0 && total_length > 0.0 {
            Ok(Self { diameter, total_length })
        } else {
            Err(BendError::BadWire { diameter, total_length })
        }
    }
}

/// Which side of the frame xz-plane the outgoing direction leaves on.
///
/// Resolves the reflection ambiguity of the beta parameterization; together
/// with the signed angles this pins the outgoing direction exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum YSide {
    Pos,
    Neg,
}

impl YSide {
    pub fn sign(self) -> f64 {
        match self {
            YSide::Pos => 1.0,
            YSide::Neg => -1.0,
        }
    }
}

/// One prospective bend, expressed in the frame of its predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BendCandidate {
    pub index: usize,
    /// Bend start point in predecessor-frame coordinates (on the +x axis).
    pub q: Point3,
    /// Interior angle, (0, pi]. The turn away from straight is `pi - theta`.
    pub theta: f64,
    /// Signed twist of the bend plane about the incoming axis, [-pi, pi].
    pub alpha: f64,
    /// Signed lift of the xz-projected outgoing direction, [-pi, pi].
    pub beta: f64,
    /// Orientation flag disambiguating the beta branch.
    pub y_side: YSide,
}

impl BendCandidate {
    /// True material deflection from straight: the angle between the
    /// incoming and outgoing directions, which is the arc sweep the machine
    /// must wind. Equals `pi - theta` exactly when the bend stays in the
    /// reference plane; for twisted bends the projected `theta` understates
    /// the in-plane component and the true angle is recovered from the
    /// outgoing direction.
    pub fn turn_angle(&self) -> f64 {
        self.out_direction_alpha().x.clamp(-1.0, 1.0).acos()
    }

    /// Straight distance from the pivot to the arc start, `r_c tan(turn/2)`.
    pub fn tangent_length(&self, r_c: f64) -> f64 {
        r_c * (self.turn_angle() / 2.0).tan()
    }

    /// Material consumed by the wound arc, `r_c * turn`.
    pub fn arc_length(&self, r_c: f64) -> f64 {
        r_c * self.turn_angle()
    }

    /// Straight run from the predecessor pivot to the bend start point.
    pub fn feed(&self) -> f64 {
        self.q.x
    }

    /// Outgoing unit direction in predecessor-frame coordinates, from the
    /// (theta, alpha) parameterization.
    pub fn out_direction_alpha(&self) -> Vec3 {
        let (st, ct) = (self.theta.sin(), self.theta.cos());
        let (sa, ca) = (self.alpha.sin(), self.alpha.cos());
        // Magnitude of the yz-projection; see module tests for the algebra.
        let m = st / (ca * ca * ct * ct + st * st).sqrt();
        let rho = (1.0 - m * m).max(0.0).sqrt();
        let a = -ct.signum() * rho;
        Vec3::new(a, m * ca, m * sa)
    }

    /// Outgoing unit direction from the (theta, beta, y_side)
    /// parameterization, or `None` when the branch is degenerate.
    pub fn out_direction_beta(&self) -> Option<Vec3> {
        let st = self.theta.sin();
        let ct = self.theta.cos();
        let (sb, cb) = (self.beta.sin(), self.beta.cos());
        if ct.abs() < 1e-4 && cb.abs() < 1e-4 {
            // Outgoing direction near the frame y-axis: the xz-projection
            // vanishes and beta carries no magnitude information.
            return None;
        }
        let m = ct.abs() / (cb * cb * st * st + ct * ct).sqrt();
        let b2 = (1.0 - m * m).max(0.0);
        if b2 < 1e-8 {
            // Outgoing direction in the frame xz-plane: the y-side split is
            // ill-conditioned.
            return None;
        }
        Some(Vec3::new(m * cb, self.y_side.sign() * b2.sqrt(), m * sb))
    }
}

/// Ordered bend candidates plus the shared machine and stock constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendSet {
    pub candidates: Vec<BendCandidate>,
    /// Effective centerline winding radius.
    pub center_radius: f64,
    pub wire: WireSpec,
    /// World-space normal of the first bend plane. The candidate angles are
    /// all relative, so reconstruction needs this one gauge vector.
    pub seed_normal: UnitVec3,
}

impl BendSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Accumulated twist of each bend plane relative to the first, about the
    /// wire axis in flat (unbent) coordinates.
    pub fn accumulated_twists(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.candidates.len());
        let mut acc = 0.0;
        for (j, c) in self.candidates.iter().enumerate() {
            if j > 0 {
                acc += c.alpha;
            }
            out.push(acc);
        }
        out
    }

    /// Flat-pattern (straight stock) arclength of each bend start point.
    pub fn flat_positions(&self) -> Vec<f64> {
        let r = self.center_radius;
        let mut out = Vec::with_capacity(self.candidates.len());
        let mut u = 0.0;
        for (j, c) in self.candidates.iter().enumerate() {
            if j == 0 {
                u = c.feed();
            } else {
                let prev = &self.candidates[j - 1];
                u += prev.arc_length(r) + (c.feed() - prev.tangent_length(r));
            }
            out.push(u);
        }
        out
    }

    /// Developed (straight stock) length consumed by the bent portion of the
    /// shape, from the wire start through the last arc and final tangent.
    pub fn developed_length_through_last_bend(&self) -> f64 {
        match (self.flat_positions().last(), self.candidates.last()) {
            (Some(u), Some(c)) => u + c.arc_length(self.center_radius),
            _ => 0.0,
        }
    }
}

fn clamped_acos(index: usize, x: f64) -> Result<f64, BendError> {
    if x.abs() > 1.0 + ACOS_CLAMP_TOL {
        return Err(BendError::DegenerateAngle(index, x));
    }
    Ok(x.clamp(-1.0, 1.0).acos())
}

/// Derives the bend parameters of one pivot given its frame and the outgoing
/// segment, without any positional bookkeeping.
fn candidate_angles(
    index: usize,
    frame: &BendFrame,
    outgoing: &Vec3,
) -> Result<(f64, f64, f64, YSide), BendError> {
    let d = frame.to_local(&outgoing.normalize());
    let proj_xy = project_onto_plane(outgoing, &frame.z_axis);
    let theta = if proj_xy.norm() < 1e-9 * outgoing.norm() {
        // Outgoing parallel to the reference normal: the projected angle
        // degenerates. The direction is then orthogonal to the incoming
        // axis, so the turn is exactly a quarter circle and the twist
        // carries the full orientation.
        PI / 2.0
    } else {
        clamped_acos(index, -frame.to_local(&proj_xy).normalize().x)?
    };
    let alpha = d.z.atan2(d.y);
    let beta = d.z.atan2(d.x);
    let y_side = if d.y >= 0.0 { YSide::Pos } else { YSide::Neg };
    Ok((theta, alpha, beta, y_side))
}

/// Options for [`compute_bending_set`].
#[derive(Debug, Clone, Copy)]
pub struct BendSetOptions {
    pub min_bend_angle: f64,
}

impl Default for BendSetOptions {
    fn default() -> Self {
        Self { min_bend_angle: DEFAULT_MIN_BEND_ANGLE }
    }
}

/// Converts a pivot chain into a bending set.
///
/// Interior pivots whose turn is below `min_bend_angle` are dropped first
/// (below machine resolution), then one candidate is emitted per remaining
/// interior pivot. The first candidate is measured against its own bend
/// plane, later ones against the plane of their predecessor.
pub fn compute_bending_set(
    chain: &PivotChain,
    r_c: f64,
    wire: WireSpec,
    opts: BendSetOptions,
) -> Result<BendSet, BendError> {
    if !(r_c > 0.0) {
        return Err(BendError::BadRadius(r_c));
    }
    if chain.pivots.len() < 3 {
        return Err(BendError::Geom(GeomError::TooFewPoints(chain.pivots.len())));
    }

    // Pre-pass: drop near-straight interior pivots, then rebuild normals.
    let mut pivots = vec![chain.pivots[0]];
    for i in 1..chain.pivots.len() - 1 {
        let a = (chain.pivots[i] - chain.pivots[i - 1]).normalize();
        let b = (chain.pivots[i + 1] - chain.pivots[i]).normalize();
        let turn = a.dot(&b).clamp(-1.0, 1.0).acos();
        if turn >= opts.min_bend_angle {
            pivots.push(chain.pivots[i]);
        }
    }
    pivots.push(*chain.pivots.last().unwrap());

    if pivots.len() < 3 {
        // Everything straight: empty bending set with a deterministic gauge.
        let seg = UnitVec3::new_normalize(pivots[1] - pivots[0]);
        return Ok(BendSet {
            candidates: Vec::new(),
            center_radius: r_c,
            wire,
            seed_normal: crate::geom::any_orthogonal(&seg),
        });
    }

    let normals = crate::geom::compute_bend_normals(&pivots)?;
    let n = pivots.len() - 2;
    let mut candidates = Vec::with_capacity(n);

    for j in 0..n {
        let i = j + 1; // pivot index
        let z_ref = if j == 0 { normals[0] } else { normals[j - 1] };
        let frame = build_frame(&pivots[i - 1], &pivots[i], &z_ref)?;
        let outgoing = pivots[i + 1] - pivots[i];
        let (theta, alpha, beta, y_side) = candidate_angles(j, &frame, &outgoing)?;

        let mut candidate = BendCandidate {
            index: j,
            q: Point3::origin(),
            theta,
            alpha,
            beta,
            y_side,
        };
        let tangent = candidate.tangent_length(r_c);
        let feed = (pivots[i] - pivots[i - 1]).norm() - tangent;
        candidate.q = Point3::new(feed, 0.0, 0.0);

        // The tangent region must not eat past the wire start or into the
        // preceding bend's arc.
        if j == 0 {
            if feed < 0.0 {
                return Err(BendError::TangentOverlap(j));
            }
        } else {
            let prev: &BendCandidate = &candidates[j - 1];
            if feed - prev.tangent_length(r_c) < 0.0 {
                return Err(BendError::TangentOverlap(j));
            }
        }
        candidates.push(candidate);
    }

    // Tail check: the last tangent must fit inside the final segment.
    let last = candidates.last().unwrap();
    let last_seg = (pivots[pivots.len() - 1] - pivots[pivots.len() - 2]).norm();
    if last.tangent_length(r_c) > last_seg {
        return Err(BendError::TangentOverlap(last.index));
    }

    Ok(BendSet {
        candidates,
        center_radius: r_c,
        wire,
        seed_normal: normals[0],
    })
}

/// Inverse of [`compute_bending_set`]: walks the frame chain and rebuilds the
/// pivot polyline from the relative bend parameters.
///
/// `first_segment` seeds position and direction; the stored `seed_normal`
/// fixes the roll of the first bend plane. Both angle branches are evaluated
/// on every non-degenerate bend and must agree. The final pivot distance is
/// recovered from the wire's total length via the developed-length budget.
pub fn reconstruct_pivots(
    bends: &BendSet,
    first_segment: (Point3, Point3),
) -> Result<Vec<Point3>, BendError> {
    let (p0, p1) = first_segment;
    let mut pivots = vec![p0, p1];
    let n = bends.candidates.len();
    if n == 0 {
        return Ok(pivots);
    }
    let r = bends.center_radius;

    // Developed-length budget determines the final segment length.
    let mut straight_consumed = (p1 - p0).norm();
    for (j, c) in bends.candidates.iter().enumerate() {
        if j > 0 {
            straight_consumed += c.feed() + c.tangent_length(r);
        }
    }
    let mut corner_savings = 0.0;
    for c in &bends.candidates {
        corner_savings += 2.0 * c.tangent_length(r) - c.arc_length(r);
    }

    for (j, c) in bends.candidates.iter().enumerate() {
        let z_ref = if j == 0 {
            bends.seed_normal
        } else {
            // Recompute the predecessor pivot's normal from the rebuilt
            // points, mirroring the forward pass.
            let i = pivots.len() - 1;
            let a = pivots[i - 1] - pivots[i - 2];
            let b = pivots[i] - pivots[i - 1];
            let cross = a.cross(&b);
            if cross.norm() < crate::geom::COLLINEAR_REL_TOL * a.norm() * b.norm() {
                // Degenerate pivots cannot occur for candidates above the
                // minimum bend angle; keep the previous gauge if they do.
                bends.seed_normal
            } else {
                UnitVec3::new_normalize(cross)
            }
        };
        let i = pivots.len() - 1;
        let frame = build_frame(&pivots[i - 1], &pivots[i], &z_ref)?;

        let d_alpha = c.out_direction_alpha();
        if let Some(d_beta) = c.out_direction_beta() {
            let gap = d_alpha.dot(&d_beta).clamp(-1.0, 1.0).acos();
            if gap > BRANCH_AGREEMENT_TOL {
                return Err(BendError::InconsistentAngles(j, gap));
            }
        }
        let dir_world = frame.to_world(&d_alpha);

        let seg_len = if j + 1 < n {
            let next = &bends.candidates[j + 1];
            next.feed() + next.tangent_length(r)
        } else {
            bends.wire.total_length - (straight_consumed - corner_savings)
        };
        let last = pivots[pivots.len() - 1];
        pivots.push(last + dir_world * seg_len);
    }
    Ok(pivots)
}

/// Straight material available before and after every bend's arc.
///
/// `before` runs from the end of the previous arc (or the wire start) to the
/// arc start; `after` runs from the arc end to the next arc start (or the
/// wire end). Negative values signal over-consumption and are returned as-is.
pub fn flange_lengths(bends: &BendSet, wire: &WireSpec) -> Vec<(f64, f64)> {
    let r = bends.center_radius;
    let us = bends.flat_positions();
    let n = bends.candidates.len();
    (0..n)
        .map(|j| {
            let before = if j == 0 {
                us[0]
            } else {
                us[j] - (us[j - 1] + bends.candidates[j - 1].arc_length(r))
            };
            let after = if j + 1 < n {
                us[j + 1] - (us[j] + bends.candidates[j].arc_length(r))
            } else {
                wire.total_length - (us[j] + bends.candidates[j].arc_length(r))
            };
            (before, after)
        })
        .collect()
}
