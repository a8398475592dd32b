//! Planning library for curving stiff metal wire with an external bending
//! machine: curve simplification, bend parameter extraction, kinematic
//! bending simulation, pruned bending-sequence search, and grasp/motion
//! feasibility reasoning, plus plan and geometry export.

pub mod bend;
pub mod collide;
pub mod geom;
pub mod io;
pub mod motion;
pub mod planner;
pub mod sim;
