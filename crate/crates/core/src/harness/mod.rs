//! Synthetic scenes, the built-in object database, benchmarks and working-range sweeps.

mod bench;
mod db;
mod objects;
mod render;
mod scene;
mod sweep;

pub use bench::{
    rotation_error_deg, run_benchmark, run_benchmark_with, BenchOptions, BenchReport, MethodSummary, SceneRow, BENCH_SCHEMA_VERSION,
    MAX_SCENE_YAW_DEG,
};
pub use db::{build_builtin_database, build_object, DbBuildParams};
pub use objects::BuiltinObject;
pub use render::{depth_to_cloud, render_cloud, BACKGROUND_GRAY};
pub use scene::{generate_scene, view_pose, SyntheticScene, MIN_OBJECT_DEPTH, MIN_VISIBLE_POINTS};
pub use sweep::{rfid_score, safe_ranges, working_range_sweep, SweepReport, SweepRow, VisionFixture, SAFE_SCORE, SWEEP_CSV_HEADER};

use thiserror::Error;

use crate::features::FeatureError;
use crate::registration::RegistrationError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("object is behind or too close to the camera (min z = {min_z:.3} m)")]
    ObjectBehindCamera { min_z: f64 },
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("object '{object_id}' covers only {points} depth pixels")]
    TooFewVisiblePoints { object_id: String, points: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}
