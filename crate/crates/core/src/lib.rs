//! Synthetic aerial-imagery generation.
//!
//! A procedural [`world`] is viewed through a UAV [`camera`], rasterized by
//! the CPU [`render`]er into color, depth and instance buffers, and turned
//! into pixel-exact boxes by [`annotate`]. [`scenario`] schedules traversal,
//! spawning and capture; [`dataset`] writes frames to disk; [`server`]
//! exposes the whole loop over TCP. [`align`] and [`eval`] cover metadata
//! alignment and mAP@0.5 scoring.
//!
//! Geometry, camera and metric code is generic over [`Real`] (`f32`/`f64`);
//! the simulation itself runs in `f64`. Concrete aliases live at the crate root.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod annotate;
pub mod camera;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod generate;
pub mod geometry;
pub mod mesh;
pub mod oracle;
pub mod protocol;
pub mod raster;
pub mod render;
pub mod scalar;
pub mod scenario;
pub mod server;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3d = geometry::Vec3<f64>;
pub type Vec3f = geometry::Vec3<f32>;
pub type CameraPosed = camera::CameraPose<f64>;
pub type CameraPosef = camera::CameraPose<f32>;
pub type Intrinsicsd = camera::Intrinsics<f64>;
pub type Intrinsicsf = camera::Intrinsics<f32>;
pub type BBoxd = eval::BBox<f64>;
pub type BBoxf = eval::BBox<f32>;
pub type Detectiond = eval::Detection<f64>;
pub type GroundTruthd = eval::GroundTruth<f64>;
