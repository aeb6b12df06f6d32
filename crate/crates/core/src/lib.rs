//! Stress-constrained mass minimization of 2D lattice structures built from
//! repeated unit-cell components.
//!
//! The library decomposes a lattice into components coupled through ports
//! (shared edge segments), condenses each component onto its port traces, and
//! solves the resulting interface system. Port traces can use either the full
//! trace space (exact static condensation) or a trained reduced basis, which
//! turns the interface solve into a cheap reduced-order model. Stress
//! constraints are aggregated per region with a Kreisselmeier-Steinhauser
//! functional evaluated directly from precomputed stress operators, and their
//! design gradients come from an adjoint solve that reuses the interface
//! factorization. A log-barrier interior-point routine drives the mass
//! minimization, and postprocessing extracts a manufacturable binary design
//! that is validated against a full-order finite element solve.

pub mod error;
pub mod fem;
pub mod ground;
pub mod library;
pub mod linalg;
pub mod mesh;
pub mod offline;
pub mod optimizer;
pub mod oracle;
pub mod port_basis;
pub mod postprocess;
pub mod quadrature;
pub mod sensitivity;
pub mod solver;
pub mod storage;
pub mod stress;
pub mod training;
pub mod vtk;

pub use error::{Error, Result};
