use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{depth_to_cloud, render_cloud};
use super::scene::view_pose;
use super::{BuiltinObject, HarnessError};
use crate::features::{FeatureParams, TemplateImage, TemplateObject, VIEW_CAMERA_DISTANCE};
use crate::geometry::{CameraIntrinsics, RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbBuildParams {
    /// Yaws of the template images, degrees.
    pub template_yaws_deg: Vec<f64>,
    /// Yaws of the viewpoint clouds, degrees.
    pub viewpoint_yaws_deg: Vec<f64>,
    /// Sample spacing of the rendered model surface (m).
    pub model_step: f64,
    /// Voxel size the viewpoint clouds are reduced to (m).
    pub viewpoint_voxel: f64,
    pub features: FeatureParams,
}

impl Default for DbBuildParams {
    fn default() -> Self {
        Self {
            template_yaws_deg: (-3..=3).map(|i| i as f64 * 15.0).collect(),
            viewpoint_yaws_deg: (-9..=9).map(|i| i as f64 * 5.0).collect(),
            model_step: 0.001,
            viewpoint_voxel: 0.0025,
            features: FeatureParams::default(),
        }
    }
}

/// Templates and viewpoint clouds of one object, captured at [`VIEW_CAMERA_DISTANCE`].
pub fn build_object(obj: BuiltinObject, params: &DbBuildParams, k: &CameraIntrinsics) -> Result<TemplateObject, HarnessError> {
    let model = obj.model_cloud(params.model_step);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let template_images = params
        .template_yaws_deg
        .iter()
        .map(|yaw| {
            let (gray, _) = render_cloud(&model, &view_pose(VIEW_CAMERA_DISTANCE, yaw.to_radians()), k, 0.0, &mut rng);
            TemplateImage::from_image(gray, &params.features)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let to_view = RigidTransform::from_translation(Vec3::new(0.0, 0.0, -VIEW_CAMERA_DISTANCE));
    let mut viewpoint_clouds = Vec::new();
    let mut viewpoint_frames = Vec::new();
    for yaw in &params.viewpoint_yaws_deg {
        let pose = view_pose(VIEW_CAMERA_DISTANCE, yaw.to_radians());
        let (_, depth) = render_cloud(&model, &pose, k, 0.0, &mut rng);
        let cloud = to_view.apply_cloud(&depth_to_cloud(&depth, k)).voxel_downsample(params.viewpoint_voxel);
        viewpoint_clouds.push(cloud);
        viewpoint_frames.push(to_view.compose(&pose));
    }
    let object = TemplateObject {
        object_id: obj.id().to_string(),
        template_images,
        viewpoint_clouds,
        viewpoint_frames,
        epc_bindings: obj.epc_bindings(),
        model_cloud: Some(model),
        model_ref: format!("{}/model.ply", obj.id()),
    };
    object.validate()?;
    Ok(object)
}

/// Database of the three built-in objects.
pub fn build_builtin_database(params: &DbBuildParams, k: &CameraIntrinsics) -> Result<Vec<TemplateObject>, HarnessError> {
    BuiltinObject::ALL.iter().map(|o| build_object(*o, params, k)).collect()
}
