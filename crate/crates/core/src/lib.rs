//! Iso-level tool-path planning on triangulated free-form surfaces.
//!
//! A scalar field is optimized over the mesh so that its level sets form
//! a tool path with near-constant scallop height and low curvature; the
//! level sets are then scheduled, traced, simplified and exported.

// `!(x > t)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod diffops;
pub mod energy;
pub mod error;
pub mod linalg;
pub mod exec;
pub mod isocurve;
pub mod mesh;
pub mod optimizer;
pub mod path;
pub mod synth;

pub use error::{Error, Result};
pub use exec::ExecPolicy;
pub use mesh::{MeshLocation, TriMesh, Vec3};
