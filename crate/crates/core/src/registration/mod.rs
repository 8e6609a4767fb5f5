//! Pose estimation: rigid solves, nearest-neighbour search, ICP, FPFH/SAC-IA
//! and the closest-point residual metric.

mod fpfh;
mod icp;
mod init;
mod kabsch;
mod kdtree;
mod pose;
mod residual;
mod sacia;

pub use fpfh::{estimate_normals, fpfh, fpfh_with_viewpoint, pair_features, FpfhDescriptor, FpfhParams, FPFH_BINS, FPFH_DIM};
pub use icp::{icp, icp_with_index, IcpParams, IcpResult};
pub use init::init_pose;
pub use kabsch::{kabsch_solve, kabsch_solve_slices};
pub use kdtree::{KdTree, Neighbor};
pub use pose::{estimate_pose, ObjectPose, PoseEstimate, PoseMethod, PoseOutcome, PoseParams, SceneInput, StageTimings};
pub use residual::residual_error;
pub use sacia::{sacia_align, sacia_align_features, truncated_fitness, FeatureCloud, SacIaParams};

use thiserror::Error;

use crate::features::FeatureError;
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("every correspondence was rejected")]
    AllCorrespondencesRejected,
    #[error("no matched keypoint has a valid depth")]
    NoValidDepth,
    #[error("point {index} has {found} neighbours within the normal radius, need 3")]
    InsufficientNeighbors { index: usize, found: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}
