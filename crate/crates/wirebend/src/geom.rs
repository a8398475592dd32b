//! 3D geometry primitives: dense input curves, polyline simplification,
//! bend-plane normals, local bend frames and plane projections.
//!
//! All lengths are meters, all angles radians, everywhere in this crate.

use nalgebra as na;

pub type Point3 = na::Point3<f64>;
pub type Vec3 = na::Vector3<f64>;
pub type UnitVec3 = na::Unit<na::Vector3<f64>>;
pub type Iso3 = na::Isometry3<f64>;

/// Minimum separation between consecutive curve points, meters.
pub const MIN_POINT_SEPARATION: f64 = 1e-9;
/// Tolerance for normal-vs-segment orthogonality checks.
pub const ORTHO_TOL: f64 = 1e-6;
/// Relative cross-product norm below which a pivot counts as collinear.
pub const COLLINEAR_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("curve needs at least 2 points, got {0}")]
    EmptyCurve(usize),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("points {0} and {1} are closer than the minimum separation")]
    DuplicatePoint(usize, usize),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("need at least 3 pivots for bend normals, got {0}")]
    TooFewPoints(usize),
    #[error("segment endpoints coincide")]
    DegenerateSegment,
    #[error("normal not orthogonal to segment (|dot| = {0:.3e})")]
    NonOrthogonalNormal(f64),
}

/// A dense, arclength-ordered sample of a desired space curve.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCurve {
    points: Vec<Point3>,
}

impl DenseCurve {
    pub fn new(points: Vec<Point3>) -> Result<Self, GeomError> {
        if points.len() < 2 {
            return Err(GeomError::EmptyCurve(points.len()));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(GeomError::NonFinite(i));
            }
        }
        for i in 1..points.len() {
            if (points[i] - points[i - 1]).norm() <= MIN_POINT_SEPARATION {
                return Err(GeomError::DuplicatePoint(i - 1, i));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor guarantees >= 2 points
    }
}

/// Simplified polyline pivots plus one bend-plane normal per interior pivot.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotChain {
    pub pivots: Vec<Point3>,
    pub normals: Vec<UnitVec3>,
}

impl PivotChain {
    /// Builds the chain from pivots, deriving normals from adjacent segments.
    pub fn from_pivots(pivots: Vec<Point3>) -> Result<Self, GeomError> {
        let normals = compute_bend_normals(&pivots)?;
        Ok(Self { pivots, normals })
    }
}

/// Right-handed orthonormal frame anchored at a bend pivot.
///
/// `x_axis` points along the incoming segment, `z_axis` is the reference
/// bend-plane normal and `y_axis` completes the triad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendFrame {
    pub origin: Point3,
    pub x_axis: UnitVec3,
    pub y_axis: UnitVec3,
    pub z_axis: UnitVec3,
}

impl BendFrame {
    /// Expresses a world vector in frame coordinates.
    pub fn to_local(&self, v: &Vec3) -> Vec3 {
        Vec3::new(v.dot(&self.x_axis), v.dot(&self.y_axis), v.dot(&self.z_axis))
    }

    /// Maps frame coordinates back to a world vector.
    pub fn to_world(&self, v: &Vec3) -> Vec3 {
        self.x_axis.as_ref() * v.x + self.y_axis.as_ref() * v.y + self.z_axis.as_ref() * v.z
    }

    /// World position of a point given in frame coordinates.
    pub fn point_to_world(&self, p: &Point3) -> Point3 {
        self.origin + self.to_world(&p.coords)
    }
}

/// Perpendicular distance from `p` to the segment `a`..`b`.
pub fn point_segment_distance(p: &Point3, a: &Point3, b: &Point3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= MIN_POINT_SEPARATION * MIN_POINT_SEPARATION {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Ramer-Douglas-Peucker simplification of a dense curve.
///
/// Returns a subsequence of the input that always contains both endpoints.
/// Every dropped point lies within `epsilon` of the retained polyline.
/// Implemented with an explicit stack so deep curves cannot overflow.
pub fn rdp_simplify(curve: &DenseCurve, epsilon: f64) -> Result<Vec<Point3>, GeomError> {
    if !(epsilon > 0.0) {
        return Err(GeomError::BadEpsilon(epsilon));
    }
    let pts = curve.points();
    let mut keep = vec![false; pts.len()];
    keep[0] = true;
    keep[pts.len() - 1] = true;

    let mut stack = vec![(0usize, pts.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
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
            keep[max_i] = true;
            stack.push((lo, max_i));
            stack.push((max_i, hi));
        }
    }

    Ok(pts
        .iter()
        .zip(keep.iter())
        .filter_map(|(p, k)| k.then_some(*p))
        .collect())
}

fn is_unit(v: &Vec3) -> bool {
    (v.norm() - 1.0).abs() < 1e-9
}

/// Deterministic unit vector orthogonal to `dir`: the lowest-index canonical
/// basis vector is rejected against `dir` and normalized.
pub fn any_orthogonal(dir: &UnitVec3) -> UnitVec3 {
    for basis in [Vec3::x(), Vec3::y(), Vec3::z()] {
        let rej = basis - dir.as_ref() * basis.dot(dir);
        if rej.norm() > 1e-6 {
            return UnitVec3::new_normalize(rej);
        }
    }
    unreachable!("a unit vector cannot be parallel to all three basis vectors")
}

/// Bend-plane normal at every interior pivot.
///
/// The normal at pivot `i` is the normalized cross product of the adjacent
/// segments. Collinear pivots inherit the nearest valid normal: leading
/// degenerates are back-filled in a pre-pass, later ones carry the previous
/// valid normal forward. A fully collinear chain falls back to a
/// deterministic vector orthogonal to the first segment.
pub fn compute_bend_normals(pivots: &[Point3]) -> Result<Vec<UnitVec3>, GeomError> {
    if pivots.len() < 3 {
        return Err(GeomError::TooFewPoints(pivots.len()));
    }
    let n = pivots.len() - 2;
    let mut raw: Vec<Option<UnitVec3>> = Vec::with_capacity(n);
    for i in 1..pivots.len() - 1 {
        let a = pivots[i] - pivots[i - 1];
        let b = pivots[i + 1] - pivots[i];
        let cross = a.cross(&b);
        if cross.norm() < COLLINEAR_REL_TOL * a.norm() * b.norm() {
            raw.push(None);
        } else {
            raw.push(Some(UnitVec3::new_normalize(cross)));
        }
    }

    let first_valid = raw.iter().position(|r| r.is_some());
    let mut normals = Vec::with_capacity(n);
    match first_valid {
        None => {
            let seg = UnitVec3::new_normalize(pivots[1] - pivots[0]);
            let fallback = any_orthogonal(&seg);
            normals.resize(n, fallback);
        }
        Some(fv) => {
            let mut last = raw[fv].unwrap();
            for item in raw.iter().take(fv) {
                debug_assert!(item.is_none());
                normals.push(last);
            }
            for item in raw.iter().skip(fv) {
                if let Some(nv) = item {
                    last = *nv;
                }
                normals.push(last);
            }
        }
    }
    Ok(normals)
}

/// Frame for the bend at `p_cur`: x along `p_prev -> p_cur`, z = `n_prev`.
pub fn build_frame(p_prev: &Point3, p_cur: &Point3, n_prev: &UnitVec3) -> Result<BendFrame, GeomError> {
    let seg = p_cur - p_prev;
    if seg.norm() <= MIN_POINT_SEPARATION {
        return Err(GeomError::DegenerateSegment);
    }
    debug_assert!(is_unit(n_prev));
    let x_axis = UnitVec3::new_normalize(seg);
    let dot = x_axis.dot(n_prev);
    if dot.abs() > ORTHO_TOL {
        return Err(GeomError::NonOrthogonalNormal(dot.abs()));
    }
    let z_axis = *n_prev;
    let y_axis = UnitVec3::new_normalize(z_axis.cross(&x_axis));
    Ok(BendFrame {
        origin: *p_cur,
        x_axis,
        y_axis,
        z_axis,
    })
}

/// Orthogonal projection of `v` onto the plane with unit normal `plane_normal`.
pub fn project_onto_plane(v: &Vec3, plane_normal: &UnitVec3) -> Vec3 {
    v - plane_normal.as_ref() * v.dot(plane_normal)
}
