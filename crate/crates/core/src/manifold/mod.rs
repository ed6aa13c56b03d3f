//! Critical and slow manifolds as graphs, their stable bundles and spectral reports.

pub mod frames;
pub mod graph;
pub mod grid;
pub mod interp;
pub mod spectral;

pub use frames::{stable_bundle, stable_bundle_with, FrameOptions, StableFrameField, Transfer};
pub use graph::{critical_manifold, critical_manifold_from, slow_manifold_graph, slow_manifold_graph_with, GraphManifold, SweepOptions};
pub use grid::{Axis, Grid};
pub use interp::TensorInterp;
pub use spectral::{nonresonant, spectral_report, spectral_report_with, FittedRates, SpectralGapReport, SpectralOptions};
