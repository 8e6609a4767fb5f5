//! Augmented-vision toolkit for tagged environments.
//!
//! The crate is split along the processing chain:
//!
//! * [`geometry`] – rigid transforms, pinhole camera model, point clouds and images.
//! * [`features`] – upright SURF-style keypoints, descriptors, matching and
//!   template-database object identification.
//! * [`registration`] – feature-initialized ICP, FPFH / SAC-IA baseline and the
//!   point-to-point residual metric.
//! * [`rfid`] – simulated tag population, channel model, the binary reader
//!   protocol and the water-level / temperature sensor decoders.
//! * [`fusion`] – the registry that merges vision poses and tag readings into
//!   world-frame annotations.
//! * [`harness`] – synthetic objects and scenes, benchmark and working-range sweep.

pub mod features;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod registration;
pub mod rfid;

pub use geometry::{CameraIntrinsics, DepthImage, GrayImage, PointCloud, RigidTransform};
