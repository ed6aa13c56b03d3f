//! Numerics for normally attracting invariant manifolds of slow-fast systems.
//!
//! The crate computes slow manifolds as graphs, their stable bundles and fiber
//! projections, a radially monotone Lyapunov function with the associated
//! disk-bundle isomorphism, global linearizing conjugacies and linear normal forms.

pub mod builtins;
pub mod error;
pub mod flow;
pub mod foliation;
pub mod gsp;
pub mod linearization;
pub mod lyapunov;
pub mod manifold;
pub mod numerics;
pub mod pendulum;

pub use error::{Error, Result};
