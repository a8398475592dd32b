//! Swept-sphere collision primitives shared by the simulator and the motion
//! layer: distance queries between line segments and convex bodies.
//!
//! The wire is modeled as a chain of capsules (segments plus the wire
//! radius); machine and environment bodies are spheres, capsules, oriented
//! blocks and half-spaces. All queries return the separation between
//! surfaces, zero or negative when touching or intersecting.

use serde::{Deserialize, Serialize};

use crate::geom::{Iso3, Point3, UnitVec3, Vec3};

/// A static convex collision body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Body {
    Sphere {
        center: Point3,
        radius: f64,
    },
    Capsule {
        a: Point3,
        b: Point3,
        radius: f64,
    },
    /// Oriented box: `pose` maps box-local coordinates to world.
    Block {
        pose: Iso3,
        half_extents: Vec3,
    },
    /// Solid half-space: everything on the opposite side of `normal`.
    HalfSpace {
        point: Point3,
        normal: UnitVec3,
    },
}

/// Closest distance between two segments (Ericson-style clamped solve).
pub fn segment_segment_distance(p1: &Point3, q1: &Point3, p2: &Point3, q2: &Point3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);

    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return (p1 - p2).norm();
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s_ = if denom > f64::EPSILON {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t_ = (b * s_ + f) / e;
            if t_ < 0.0 {
                t_ = 0.0;
                s_ = (-c / a).clamp(0.0, 1.0);
            } else if t_ > 1.0 {
                t_ = 1.0;
                s_ = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s_;
            t = t_;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

fn point_segment_distance(p: &Point3, a: &Point3, b: &Point3) -> f64 {
    crate::geom::point_segment_distance(p, a, b)
}

/// Distance from a point to an axis-aligned box centered at the origin.
fn point_aabb_distance(p: &Point3, half: &Vec3) -> f64 {
    let dx = (p.x.abs() - half.x).max(0.0);
    let dy = (p.y.abs() - half.y).max(0.0);
    let dz = (p.z.abs() - half.z).max(0.0);
    let outside = (dx * dx + dy * dy + dz * dz).sqrt();
    if outside > 0.0 {
        outside
    } else {
        // Inside: negative penetration depth to the nearest face.
        let fx = half.x - p.x.abs();
        let fy = half.y - p.y.abs();
        let fz = half.z - p.z.abs();
        -fx.min(fy).min(fz)
    }
}

/// Distance from a segment to an oriented block. Distance to a convex set is
/// convex along the segment, so a ternary search on the clamped distance
/// converges globally; penetration depth is then refined by sampling.
fn segment_block_distance(a: &Point3, b: &Point3, pose: &Iso3, half: &Vec3) -> f64 {
    let inv = pose.inverse();
    let la = inv * a;
    let lb = inv * b;
    let eval = |t: f64| point_aabb_distance(&(la + (lb - la) * t), half);
    let clamped = |t: f64| eval(t).max(0.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..48 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if clamped(m1) <= clamped(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let best = clamped(0.5 * (lo + hi)).min(clamped(0.0)).min(clamped(1.0));
    if best > 0.0 {
        return best;
    }
    // Intersecting: report the deepest sampled penetration.
    (0..=64)
        .map(|k| eval(k as f64 / 64.0))
        .fold(f64::INFINITY, f64::min)
}

/// Separation between the surface of `body` and the segment `a..b` swept by
/// a sphere of radius `swept_radius`. Negative means overlap.
pub fn segment_body_distance(a: &Point3, b: &Point3, swept_radius: f64, body: &Body) -> f64 {
    match body {
        Body::Sphere { center, radius } => {
            point_segment_distance(center, a, b) - radius - swept_radius
        }
        Body::Capsule { a: ca, b: cb, radius } => {
            segment_segment_distance(a, b, ca, cb) - radius - swept_radius
        }
        Body::Block { pose, half_extents } => {
            segment_block_distance(a, b, pose, half_extents) - swept_radius
        }
        Body::HalfSpace { point, normal } => {
            let da = (a - point).dot(normal);
            let db = (b - point).dot(normal);
            da.min(db) - swept_radius
        }
    }
}

/// Minimum separation between a capsule chain and a set of bodies.
pub fn chain_distance(chords: &[(Point3, Point3)], swept_radius: f64, bodies: &[Body]) -> f64 {
    let mut best = f64::INFINITY;
    for (a, b) in chords {
        for body in bodies {
            let d = segment_body_distance(a, b, swept_radius, body);
            if d < best {
                best = d;
            }
        }
    }
    best
}
