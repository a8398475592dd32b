//! Geometric model of the bending machine.
//!
//! Machine frame convention: the bend point sits at the origin, the wire
//! feeds along +x, and bends form in the z = 0 plane. Counterclockwise bends
//! wind around a wrap axis at (0, +r_c), clockwise bends around (0, -r_c),
//! where r_c is the effective centerline winding radius (physical groove
//! radius plus half the wire diameter).

use serde::{Deserialize, Serialize};

use crate::collide::Body;
use crate::geom::{Point3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BendDirection {
    Cw,
    Ccw,
}

impl BendDirection {
    /// Sign of the wrap-axis z component: +1 for CCW, -1 for CW.
    pub fn sign(self) -> f64 {
        match self {
            BendDirection::Ccw => 1.0,
            BendDirection::Cw => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MachineError {
    #[error("wire diameter {0} exceeds the roller gap {1}")]
    DiameterTooLarge(f64, f64),
    #[error("machine geometry invalid: {0}")]
    BadGeometry(String),
}

/// Static geometry of the bending machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineModel {
    /// Physical groove radius of the center roller.
    pub center_roller_radius: f64,
    pub punch_roller_radius: f64,
    /// Distance of the punch roller center from the active wrap axis.
    pub punch_orbit_radius: f64,
    /// Hard cap on punch rotation per direction (symmetric about zero).
    pub punch_travel_limit: f64,
    /// Angular position of the die-side obstruction about the wrap axis.
    pub die_obstruction_angle: f64,
    /// Distance of that obstruction's center from the wrap axis.
    pub die_obstruction_distance: f64,
    pub die_obstruction_radius: f64,
    /// Feed-guide (die roller) pair: x-offset upstream of the bend point.
    pub die_gate_distance: f64,
    /// Half of the guide gap between the two die rollers.
    pub die_gate_halfgap: f64,
    pub die_roller_radius: f64,
    /// Vertical half-height of the roller stack.
    pub roller_half_height: f64,
    /// Proximity threshold that counts as roller contact.
    pub contact_tol: f64,
    /// Table plane height in machine frame (negative: below the bend plane).
    pub table_z: f64,
    /// Static bodies the wire must keep clear of (housing, roller cores...).
    pub collision_bodies: Vec<Body>,
}

impl MachineModel {
    /// Effective centerline winding radius for a given wire.
    pub fn wrap_radius(&self, wire_diameter: f64) -> f64 {
        self.center_roller_radius + wire_diameter / 2.0
    }

    /// Clearance between punch and center roller available to the wire.
    pub fn roller_gap(&self) -> f64 {
        self.punch_orbit_radius - self.punch_roller_radius - self.center_roller_radius
    }

    /// Wrap axis position in the bend plane for the given direction.
    pub fn wrap_center(&self, wire_diameter: f64, direction: BendDirection) -> Point3 {
        Point3::new(0.0, direction.sign() * self.wrap_radius(wire_diameter), 0.0)
    }

    /// Largest achievable turn angle for a wire of the given diameter.
    ///
    /// The limit is where the punch, with the wire sandwiched against it,
    /// reaches the die-side obstruction; a zero-thickness wire gets the
    /// full tangency range. Monotonically non-increasing in the diameter.
    pub fn max_feasible_angle(
        &self,
        wire_diameter: f64,
        _direction: BendDirection,
    ) -> Result<f64, MachineError> {
        if wire_diameter < 0.0 {
            return Err(MachineError::BadGeometry(format!(
                "negative wire diameter {wire_diameter}"
            )));
        }
        let gap = self.roller_gap();
        if wire_diameter > gap {
            return Err(MachineError::DiameterTooLarge(wire_diameter, gap));
        }
        let ro = self.punch_orbit_radius;
        let dd = self.die_obstruction_distance;
        let reach = self.punch_roller_radius + self.die_obstruction_radius + wire_diameter;
        let cosarg = (ro * ro + dd * dd - reach * reach) / (2.0 * ro * dd);
        let geometric = if cosarg >= 1.0 {
            f64::INFINITY // punch never reaches the obstruction
        } else if cosarg <= -1.0 {
            0.0
        } else {
            self.die_obstruction_angle - cosarg.acos()
        };
        Ok(geometric.min(self.punch_travel_limit).max(0.0))
    }

    /// How far past the bend point the downstream flange must extend for the
    /// punch to make first contact.
    pub fn punch_contact_reach(&self, wire_diameter: f64) -> f64 {
        let rc = self.wrap_radius(wire_diameter);
        let target = rc + self.punch_roller_radius + wire_diameter / 2.0;
        let cosarg = (target / self.punch_orbit_radius).clamp(-1.0, 1.0);
        self.punch_orbit_radius * cosarg.acos().sin()
    }

    /// The two feed-guide rollers as collision capsules (contact tools, not
    /// part of the clearance body set).
    pub fn die_rollers(&self) -> [Body; 2] {
        let y = self.die_gate_halfgap + self.die_roller_radius;
        let x = -self.die_gate_distance;
        let h = self.roller_half_height;
        [
            Body::Capsule {
                a: Point3::new(x, y, -h),
                b: Point3::new(x, y, h),
                radius: self.die_roller_radius,
            },
            Body::Capsule {
                a: Point3::new(x, -y, -h),
                b: Point3::new(x, -y, h),
                radius: self.die_roller_radius,
            },
        ]
    }

    /// Radial band (about the wrap axis) swept by the punch surface.
    pub fn punch_band(&self, wire_diameter: f64) -> (f64, f64) {
        let lo = self.punch_orbit_radius - self.punch_roller_radius - wire_diameter / 2.0;
        let hi = self.punch_orbit_radius + self.punch_roller_radius + wire_diameter / 2.0;
        (lo - self.contact_tol, hi + self.contact_tol)
    }

    /// Angular position of a bend-plane point about the wrap center, measured
    /// from the bend point in the wrap direction.
    pub fn wrap_angle_of(&self, p: &Point3, wire_diameter: f64, direction: BendDirection) -> f64 {
        let c = self.wrap_center(wire_diameter, direction);
        let v = Vec3::new(p.x - c.x, p.y - c.y, 0.0);
        let r0 = Vec3::new(0.0 - c.x, 0.0 - c.y, 0.0);
        let cross_z = r0.x * v.y - r0.y * v.x;
        let dot = r0.x * v.x + r0.y * v.y;
        (cross_z * direction.sign()).atan2(dot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_machine() -> MachineModel {
        MachineModel {
            center_roller_radius: 0.008,
            punch_roller_radius: 0.008,
            punch_orbit_radius: 0.020,
            punch_travel_limit: 2.9,
            die_obstruction_angle: 2.8,
            die_obstruction_distance: 0.030,
            die_obstruction_radius: 0.006,
            die_gate_distance: 0.020,
            die_gate_halfgap: 0.002,
            die_roller_radius: 0.006,
            roller_half_height: 0.012,
            contact_tol: 0.002,
            table_z: -0.030,
            collision_bodies: Vec::new(),
        }
    }

    #[test]
    fn zero_diameter_limit_matches_tangency_oracle() {
        let m = small_machine();
        let limit = m.max_feasible_angle(0.0, BendDirection::Ccw).unwrap();
        // Independent tangency computation from the raw configuration.
        let reach = m.punch_roller_radius + m.die_obstruction_radius;
        let cosarg = (m.punch_orbit_radius.powi(2) + m.die_obstruction_distance.powi(2)
            - reach * reach)
            / (2.0 * m.punch_orbit_radius * m.die_obstruction_distance);
        let expected = (m.die_obstruction_angle - cosarg.acos()).min(m.punch_travel_limit);
        assert!((limit - expected).abs() < 1e-12);
        assert!(limit > 0.0);
    }

    #[test]
    fn limit_monotone_in_diameter() {
        let m = small_machine();
        let mut prev = f64::INFINITY;
        for i in 0..40 {
            let d = i as f64 * 1e-4;
            let lim = m.max_feasible_angle(d, BendDirection::Cw).unwrap();
            assert!(lim <= prev + 1e-12, "limit must not increase with diameter");
            prev = lim;
        }
        // The two diameters used by the bundled configs stay ordered.
        let a = m.max_feasible_angle(0.0016, BendDirection::Ccw).unwrap();
        let b = m.max_feasible_angle(0.0026, BendDirection::Ccw).unwrap();
        assert!(a >= b);
    }

    #[test]
    fn oversized_wire_rejected() {
        let m = small_machine();
        let gap = m.roller_gap();
        assert!(matches!(
            m.max_feasible_angle(gap + 1e-6, BendDirection::Ccw),
            Err(MachineError::DiameterTooLarge(..))
        ));
        assert!(m.max_feasible_angle(gap, BendDirection::Ccw).is_ok());
    }

    #[test]
    fn punch_reach_is_short_and_positive() {
        let m = small_machine();
        let reach = m.punch_contact_reach(0.0016);
        assert!(reach > 0.0 && reach < 0.02, "reach = {reach}");
    }

    #[test]
    fn wrap_angle_signs() {
        let m = small_machine();
        // A downstream point just past the bend point sits at a small
        // positive wrap angle for either direction.
        let p = Point3::new(0.005, 0.0, 0.0);
        assert!(m.wrap_angle_of(&p, 0.0016, BendDirection::Ccw) > 0.0);
        assert!(m.wrap_angle_of(&p, 0.0016, BendDirection::Cw) > 0.0);
        // An upstream point sits at a negative wrap angle.
        let p = Point3::new(-0.005, 0.0, 0.0);
        assert!(m.wrap_angle_of(&p, 0.0016, BendDirection::Ccw) < 0.0);
    }
}
