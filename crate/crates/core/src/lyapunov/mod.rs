//! Radially monotone Lyapunov function on the stable bundle, radial retractions,
//! parallel transport and the global disk-bundle isomorphism.

pub mod bundle;
pub mod function;
pub mod retract;
pub mod rho0;
pub mod transport;

pub use bundle::{nonlinear_transport, BundleImage, BundleIsomorphism, Reparametrizers};
pub use function::{build_lyapunov, smooth_step, LyapunovConstants, LyapunovFunction, LyapunovOptions};
pub use retract::{radial_retract, Retraction, RETRACTION_CAP, RETRACTION_TOL};
pub use rho0::LocalTrivialization;
pub use transport::{TransportOperator, Transported};
