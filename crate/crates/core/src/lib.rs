//! Post-Lie algebra machinery for affine connections with parallel torsion
//! and curvature.
//!
//! * [`trees`], [`forest_algebra`]: the free post-Lie algebra on colored
//!   planar trees, its enveloping algebra of ordered forests, the
//!   Grossman–Larson product and Lie–Butcher series, all in exact rationals.
//! * [`geometry`]: flat space, the round sphere and a flat rotation-group
//!   connection, with covariant derivatives evaluated by nested forward-mode
//!   differentiation.
//! * [`frame_holonomy`]: scalarization, frame transport, holonomy rank and
//!   the post-Lie structure on vector fields plus holonomy endomorphisms.
//! * [`integrators`]: covariant towers, elementary differentials, the
//!   exact-flow oracle and frozen-field geodesic steppers.
//! * [`verify`]: seeded suites behind the acceptance checks and the CLI.

pub mod forest_algebra;
pub mod frame_holonomy;
pub mod geometry;
pub mod integrators;
pub mod trees;
pub mod verify;
