//! Vector fields, trajectories, variational flow and level-set events.

pub mod events;
pub mod integrate;
pub mod system;
pub mod variational;

pub use events::{impact_time, impact_time_rhs, Impact};
pub use integrate::{flow, flow_fixed, flow_rhs, integrate, integrate_rhs, run, Step, Tolerances, Trajectory};
pub use system::{wrap_angle, wrap_pi, SlowFastField, SystemSpec, Topology};
pub use variational::{flow_with_tangent, flow_with_tangent_fixed, flow_with_variational, integrate_with_tangent, Jet, VariationalRhs};
