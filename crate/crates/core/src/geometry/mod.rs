//! Rigid transforms, pinhole camera geometry and scene containers.
//!
//! Camera frame convention: right-handed, +x right, +y down, +z forward.

mod camera;
mod cloud;
mod image;
pub mod io;
mod transform;

pub use camera::CameraIntrinsics;
pub use cloud::{centroid, PointCloud};
pub use image::{DepthImage, GrayImage};
pub(crate) use image::luma;
pub use transform::RigidTransform;

use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Mat4 = nalgebra::Matrix4<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal with det +1 (max |R^T R - I| = {deviation:e}, det = {det})")]
    NotARotation { deviation: f64, det: f64 },
    #[error("bottom row of homogeneous matrix must be (0, 0, 0, 1)")]
    NotHomogeneous,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("color list has {colors} entries for {points} points")]
    ColorLengthMismatch { points: usize, colors: usize },
    #[error("image buffer has {got} values, expected {expected}")]
    ImageSize { expected: usize, got: usize },
    #[error("pixel value {0} out of range")]
    PixelRange(f64),
}
