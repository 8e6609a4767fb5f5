use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::icp::icp_with_index;
use super::sacia::{sacia_align_features, FeatureCloud};
use super::{init_pose, FpfhParams, IcpParams, KdTree, RegistrationError, SacIaParams};
use crate::features::{identify, FeatureParams, TemplateObject, VIEW_CAMERA_DISTANCE};
use crate::geometry::{CameraIntrinsics, DepthImage, GrayImage, PointCloud, RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoseMethod {
    /// Feature identification, centroid initialization, ICP.
    #[serde(rename = "lf-icp")]
    LfIcp,
    /// Feature identification, SAC-IA over the winner's viewpoints, ICP.
    #[serde(rename = "lf-fpfh")]
    LfFpfh,
    /// SAC-IA over every viewpoint of every object, ICP.
    #[serde(rename = "fpfh")]
    FpfhOnly,
}

impl PoseMethod {
    pub const ALL: [PoseMethod; 3] = [PoseMethod::LfIcp, PoseMethod::LfFpfh, PoseMethod::FpfhOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            PoseMethod::LfIcp => "lf-icp",
            PoseMethod::LfFpfh => "lf-fpfh",
            PoseMethod::FpfhOnly => "fpfh",
        }
    }
}

impl fmt::Display for PoseMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoseMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PoseMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method '{s}' (expected lf-icp, lf-fpfh or fpfh)"))
    }
}

/// Every tunable of [`estimate_pose`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub features: FeatureParams,
    pub icp: IcpParams,
    pub fpfh: FpfhParams,
    pub sacia: SacIaParams,
    /// Voxel size the clouds are reduced to before FPFH and SAC-IA (m).
    pub fpfh_voxel: f64,
    /// ICP iterations run on every viewpoint before the best one is refined to convergence.
    pub screen_iterations: usize,
    /// Screening uses every n-th viewpoint point.
    pub screen_stride: usize,
    pub seed: u64,
}

impl Default for PoseParams {
    fn default() -> Self {
        Self {
            features: FeatureParams::default(),
            icp: IcpParams::default(),
            fpfh: FpfhParams::default(),
            sacia: SacIaParams::default(),
            fpfh_voxel: 0.005,
            screen_iterations: 8,
            screen_stride: 4,
            seed: 0,
        }
    }
}

/// Pose of a viewpoint cloud in the camera frame: `m_pose = m_ini ∘ m_icp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub m_ini: RigidTransform,
    pub m_icp: RigidTransform,
    pub m_pose: RigidTransform,
    /// Final ICP root-mean-square distance (m).
    pub residual: f64,
    pub viewpoint_index: usize,
}

impl PoseEstimate {
    pub fn new(m_ini: RigidTransform, m_icp: RigidTransform, residual: f64, viewpoint_index: usize) -> Self {
        Self { m_ini, m_icp, m_pose: m_ini.compose(&m_icp), residual, viewpoint_index }
    }
}

/// Wall time spent per stage, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub identify: f64,
    pub init: f64,
    pub fpfh: f64,
    pub sacia: f64,
    pub icp: f64,
    pub total: f64,
}

/// A recognized object and its estimated pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub object_index: usize,
    pub object_id: String,
    pub estimate: PoseEstimate,
    /// Canonical object frame in the camera frame.
    pub object_pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseOutcome {
    pub method: PoseMethod,
    pub result: Option<ObjectPose>,
    pub timings: StageTimings,
}

/// Scene inputs of [`estimate_pose`].
#[derive(Debug, Clone, Copy)]
pub struct SceneInput<'a> {
    pub image: &'a GrayImage,
    pub depth: &'a DepthImage,
    pub intrinsics: &'a CameraIntrinsics,
    pub cloud: &'a PointCloud,
}

fn template_viewpoint() -> Vec3 {
    Vec3::new(0.0, 0.0, -VIEW_CAMERA_DISTANCE)
}

/// Recognizes the in-view object and estimates its pose with `method`.
///
/// The feature-based methods return no result when identification fails.
pub fn estimate_pose(
    method: PoseMethod,
    scene: SceneInput<'_>,
    db: &[TemplateObject],
    params: &PoseParams,
) -> Result<PoseOutcome, RegistrationError> {
    let start = Instant::now();
    let mut timings = StageTimings::default();
    if scene.cloud.len() < 3 {
        return Err(RegistrationError::TooFewPoints { needed: 3, got: scene.cloud.len() });
    }
    let scene_tree = KdTree::new(scene.cloud.points())?;
    let result = match method {
        PoseMethod::LfIcp | PoseMethod::LfFpfh => {
            let t = Instant::now();
            let (features, ident) = identify(scene.image, db, &params.features)?;
            timings.identify = t.elapsed().as_secs_f64();
            match ident {
                None => None,
                Some(id) => {
                    let obj = &db[id.object_index];
                    let estimate = if method == PoseMethod::LfIcp {
                        lf_icp(obj, &id.matches, &features.keypoints, &scene, &scene_tree, params, &mut timings)?
                    } else {
                        let scene_fc = scene_feature_cloud(scene.cloud, params, &mut timings)?;
                        fpfh_align(std::slice::from_ref(obj), &scene_fc, &scene_tree, params, &mut timings)?.1
                    };
                    Some(ObjectPose {
                        object_index: id.object_index,
                        object_id: obj.object_id.clone(),
                        object_pose: obj.object_pose(estimate.viewpoint_index, &estimate.m_pose),
                        estimate,
                    })
                }
            }
        }
        PoseMethod::FpfhOnly => {
            if db.is_empty() {
                return Err(crate::features::FeatureError::EmptyDatabase.into());
            }
            let scene_fc = scene_feature_cloud(scene.cloud, params, &mut timings)?;
            let (oi, estimate) = fpfh_align(db, &scene_fc, &scene_tree, params, &mut timings)?;
            Some(ObjectPose {
                object_index: oi,
                object_id: db[oi].object_id.clone(),
                object_pose: db[oi].object_pose(estimate.viewpoint_index, &estimate.m_pose),
                estimate,
            })
        }
    };
    timings.total = start.elapsed().as_secs_f64();
    Ok(PoseOutcome { method, result, timings })
}

fn lf_icp(
    obj: &TemplateObject,
    matches: &[crate::features::Match],
    keypoints: &[crate::features::Keypoint],
    scene: &SceneInput<'_>,
    scene_tree: &KdTree,
    params: &PoseParams,
    timings: &mut StageTimings,
) -> Result<PoseEstimate, RegistrationError> {
    let screen = IcpParams { max_iterations: params.screen_iterations.clamp(1, params.icp.max_iterations), ..params.icp };
    let stride = params.screen_stride.max(1);
    let full = screen.max_iterations == params.icp.max_iterations && stride == 1;
    let mut best: Option<PoseEstimate> = None;
    for (k, view) in obj.viewpoint_clouds.iter().enumerate() {
        let t = Instant::now();
        let m_ini = init_pose(matches, keypoints, scene.depth, scene.intrinsics, view)?;
        timings.init += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let subset: Vec<Vec3> = view.points().iter().step_by(stride).copied().collect();
        let r = icp_with_index(&subset, scene_tree, &m_ini, &screen)?;
        timings.icp += t.elapsed().as_secs_f64();
        if best.as_ref().is_none_or(|b| r.residual < b.residual) {
            best = Some(PoseEstimate::new(m_ini, r.m_icp, r.residual, k));
        }
    }
    let best = best.expect("validated objects have at least one viewpoint");
    if full {
        return Ok(best);
    }
    let t = Instant::now();
    let r = icp_with_index(obj.viewpoint_clouds[best.viewpoint_index].points(), scene_tree, &best.m_pose, &params.icp)?;
    timings.icp += t.elapsed().as_secs_f64();
    Ok(PoseEstimate::new(best.m_ini, best.m_icp.compose(&r.m_icp), r.residual, best.viewpoint_index))
}

fn scene_feature_cloud(cloud: &PointCloud, params: &PoseParams, timings: &mut StageTimings) -> Result<FeatureCloud, RegistrationError> {
    let t = Instant::now();
    let fc = FeatureCloud::new(&cloud.voxel_downsample(params.fpfh_voxel), &params.fpfh, &Vec3::zeros());
    timings.fpfh += t.elapsed().as_secs_f64();
    fc
}

/// SAC-IA of every viewpoint of every object in `objects`; the best fitness is refined by ICP.
/// Returns the index within `objects` and the estimate.
fn fpfh_align(
    objects: &[TemplateObject],
    scene_fc: &FeatureCloud,
    scene_tree: &KdTree,
    params: &PoseParams,
    timings: &mut StageTimings,
) -> Result<(usize, PoseEstimate), RegistrationError> {
    let mut best: Option<(f64, usize, usize, RigidTransform)> = None;
    for (oi, obj) in objects.iter().enumerate() {
        for (k, view) in obj.viewpoint_clouds.iter().enumerate() {
            let t = Instant::now();
            let fc = FeatureCloud::new(&view.voxel_downsample(params.fpfh_voxel), &params.fpfh, &template_viewpoint())?;
            timings.fpfh += t.elapsed().as_secs_f64();
            let t = Instant::now();
            let (m, fitness) = sacia_align_features(&fc, scene_fc, &params.sacia, params.seed)?;
            timings.sacia += t.elapsed().as_secs_f64();
            if best.as_ref().is_none_or(|b| fitness < b.0) {
                best = Some((fitness, oi, k, m));
            }
        }
    }
    let (_, oi, k, m_ini) = best.expect("at least one viewpoint");
    let t = Instant::now();
    let r = icp_with_index(objects[oi].viewpoint_clouds[k].points(), scene_tree, &m_ini, &params.icp)?;
    timings.icp += t.elapsed().as_secs_f64();
    Ok((oi, PoseEstimate::new(m_ini, r.m_icp, r.residual, k)))
}
