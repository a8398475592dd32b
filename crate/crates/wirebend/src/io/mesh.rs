//! Wire snapshots as ASCII STL triangle meshes: a circular tube swept along
//! the posed centerline, ring orientation carried by the material frames so
//! arcs do not introduce artificial twist.

use crate::geom::{Point3, Vec3};
use crate::sim::{WireState, CHORD_TOL};

const RING_SIDES: usize = 12;

fn ring_points(wire: &WireState, s: f64) -> Vec<Point3> {
    let p = wire.pose * wire.point_at(s).expect("arclength in range");
    let mat = wire.material_rotation_at(s).expect("arclength in range");
    let r = wire.diameter / 2.0;
    let y = wire.pose.rotation * (mat * Vec3::y());
    let z = wire.pose.rotation * (mat * Vec3::z());
    (0..RING_SIDES)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / RING_SIDES as f64;
            p + (y * phi.cos() + z * phi.sin()) * r
        })
        .collect()
}

fn emit_triangle(out: &mut String, a: &Point3, b: &Point3, c: &Point3) {
    let n = (b - a).cross(&(c - a));
    let n = if n.norm() > 1e-18 { n.normalize() } else { Vec3::z() };
    out.push_str(&format!(
        "  facet normal {:.9e} {:.9e} {:.9e}\n    outer loop\n",
        n.x, n.y, n.z
    ));
    for p in [a, b, c] {
        out.push_str(&format!("      vertex {:.9e} {:.9e} {:.9e}\n", p.x, p.y, p.z));
    }
    out.push_str("    endloop\n  endfacet\n");
}

/// Full tube mesh of the posed wire as an ASCII STL document.
pub fn wire_to_stl(wire: &WireState, name: &str) -> String {
    let total = wire.total_length();
    // Ring stations: chord subdivision plus both ends.
    let mut stations: Vec<f64> = vec![0.0];
    for c in wire.chords(CHORD_TOL) {
        stations.push(c.s1);
    }
    stations.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if (stations.last().copied().unwrap_or(0.0) - total).abs() > 1e-12 {
        stations.push(total);
    }

    let rings: Vec<Vec<Point3>> = stations.iter().map(|&s| ring_points(wire, s)).collect();
    let mut out = String::new();
    out.push_str(&format!("solid {name}\n"));
    for w in rings.windows(2) {
        let (ra, rb) = (&w[0], &w[1]);
        for k in 0..RING_SIDES {
            let k1 = (k + 1) % RING_SIDES;
            emit_triangle(&mut out, &ra[k], &rb[k], &rb[k1]);
            emit_triangle(&mut out, &ra[k], &rb[k1], &ra[k1]);
        }
    }
    // End caps as fans around the centerline points.
    let start = wire.pose * wire.point_at(0.0).expect("start");
    let end = wire.pose * wire.point_at(total).expect("end");
    let first = rings.first().unwrap();
    let last = rings.last().unwrap();
    for k in 0..RING_SIDES {
        let k1 = (k + 1) % RING_SIDES;
        emit_triangle(&mut out, &start, &first[k1], &first[k]);
        emit_triangle(&mut out, &end, &last[k], &last[k1]);
    }
    out.push_str(&format!("endsolid {name}\n"));
    out
}
