use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::render::{depth_to_cloud, render_cloud};
use super::HarnessError;
use crate::features::TemplateObject;
use crate::geometry::{CameraIntrinsics, DepthImage, GrayImage, PointCloud, RigidTransform, Vec3};

/// Smallest depth any object point may have.
pub const MIN_OBJECT_DEPTH: f64 = 0.1;
/// Fewest depth pixels an object must cover.
pub const MIN_VISIBLE_POINTS: usize = 100;

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub gray: GrayImage,
    pub depth: DepthImage,
    /// Back-projected valid depth pixels, camera frame.
    pub cloud: PointCloud,
    /// Canonical object frame → camera frame, per object id.
    pub ground_truth: BTreeMap<String, RigidTransform>,
    pub intrinsics: CameraIntrinsics,
    pub seed: u64,
}

/// Object pose `distance` meters in front of the camera, rotated by `yaw` about its own axis.
pub fn view_pose(distance: f64, yaw: f64) -> RigidTransform {
    RigidTransform::from_translation(Vec3::new(0.0, 0.0, distance)).compose(&RigidTransform::from_axis_angle(Vec3::y(), yaw))
}

/// The object's full model, or its densest viewpoint cloud mapped back to the object frame.
pub(crate) fn render_model(obj: &TemplateObject) -> PointCloud {
    if let Some(m) = &obj.model_cloud {
        return m.clone();
    }
    let (k, cloud) = obj.viewpoint_clouds.iter().enumerate().max_by_key(|(i, c)| (c.len(), usize::MAX - i)).expect("validated object");
    obj.viewpoint_frames[k].inverse().apply_cloud(cloud)
}

/// Renders `object_id` at `pose` and records the ground truth.
pub fn generate_scene(
    db: &[TemplateObject],
    object_id: &str,
    pose: &RigidTransform,
    noise_sigma: f64,
    seed: u64,
    k: &CameraIntrinsics,
) -> Result<SyntheticScene, HarnessError> {
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(HarnessError::InvalidParameter(format!("noise_sigma must be non-negative, got {noise_sigma}")));
    }
    let obj = db.iter().find(|o| o.object_id == object_id).ok_or_else(|| HarnessError::UnknownObject(object_id.to_string()))?;
    let model = render_model(obj);
    let min_z = model.points().iter().map(|p| pose.apply(p).z).fold(f64::INFINITY, f64::min);
    if min_z <= MIN_OBJECT_DEPTH {
        return Err(HarnessError::ObjectBehindCamera { min_z });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (gray, depth) = render_cloud(&model, pose, k, noise_sigma, &mut rng);
    let visible = depth.valid_count();
    if visible < MIN_VISIBLE_POINTS {
        return Err(HarnessError::TooFewVisiblePoints { object_id: object_id.to_string(), points: visible });
    }
    let cloud = depth_to_cloud(&depth, k);
    let mut ground_truth = BTreeMap::new();
    ground_truth.insert(object_id.to_string(), *pose);
    Ok(SyntheticScene { gray, depth, cloud, ground_truth, intrinsics: *k, seed })
}
