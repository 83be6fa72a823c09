//! Morse homology of explicit Morse–Smale functions on model manifolds,
//! computed by counting negative-gradient flow lines mod 2, and its lift to
//! Lagrangian Floer homology of the zero section of a cotangent bundle over
//! the Novikov field.
//!
//! Pipeline: [`expr`] parses a field, [`critpoint`] finds and classifies
//! its critical points, [`flow`] counts connecting trajectories,
//! [`gf2chain`] builds the Morse complex and its homology, and [`floer`]
//! reweights the same counts by action to get the Floer complex over
//! [`novikov::Novikov`] coefficients. [`maslov`] computes the winding
//! index of loops of Lagrangian subspaces.

pub mod critpoint;
pub mod expr;
pub mod floer;
pub mod flow;
pub mod geometry;
pub mod gf2chain;
pub mod landscape;
pub mod maslov;
pub mod novikov;
pub mod ode;

pub use critpoint::{classify, find_critical_points, verify_morse, CriticalPoint};
pub use expr::{parse, Expr, ScalarField};
pub use geometry::ManifoldModel;
pub use landscape::Landscape;
pub use flow::{ConnectionCount, FlowSystem, SinkLabel, Trajectory};
pub use gf2chain::{build_complex, homology_ranks, ChainComplexGF2, HomologyRanks};
pub use novikov::Novikov;
