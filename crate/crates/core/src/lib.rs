//! Gaussian splat clouds to semantically partitioned collision meshes.
//!
//! The library is generic over the scalar type (`f32` or `f64`) through
//! [`Real`]; the aliases at the crate root fix it to `f64`.

// NaN must fail these checks, so negated comparisons are deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod clean;
pub mod dbscan;
pub mod error;
pub mod linalg;
pub mod mask;
pub mod mesh;
pub mod metrics;
pub mod ply;
pub mod projection;
pub mod scalar;
pub mod semantics;
pub mod spatial;
pub mod splat;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{Mat3, Quat, Vec3};
pub use mask::{Mask, MaskSet};
pub use scalar::Real;
pub use semantics::{LabelEntry, LabelField};
pub use splat::{GaussianSplat, SplatCloud};

pub type Splat = splat::GaussianSplat<f64>;
pub type Cloud = splat::SplatCloud<f64>;
pub type Camera = projection::CameraView<f64>;
pub type Depth = projection::DepthMap<f64>;
pub type Mesh = mesh::TriMesh<f64>;
pub type Point = linalg::Vec3<f64>;
pub type VoteSettings = semantics::VoteConfig<f64>;
pub type CleanSettings = clean::CleanConfig<f64>;

pub type SplatF32 = splat::GaussianSplat<f32>;
pub type CloudF32 = splat::SplatCloud<f32>;
pub type CameraF32 = projection::CameraView<f32>;
pub type MeshF32 = mesh::TriMesh<f32>;
