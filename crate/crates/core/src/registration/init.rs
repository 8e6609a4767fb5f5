use super::RegistrationError;
use crate::features::{Keypoint, Match};
use crate::geometry::{CameraIntrinsics, DepthImage, PointCloud, RigidTransform};

/// Translation-only initial pose from matched scene keypoints.
///
/// The matched keypoints' pixel centroid is back-projected using the depth
/// there, or the median depth over the matched keypoints when that pixel is
/// invalid. The template's centroid is moved onto the resulting anchor.
pub fn init_pose(
    matches: &[Match],
    scene_keypoints: &[Keypoint],
    depth: &DepthImage,
    k: &CameraIntrinsics,
    template_cloud: &PointCloud,
) -> Result<RigidTransform, RegistrationError> {
    if matches.is_empty() {
        return Err(RegistrationError::InvalidParameter("init_pose needs at least one match".into()));
    }
    let (mut su, mut sv) = (0.0, 0.0);
    for m in matches {
        let kp = scene_keypoints
            .get(m.scene_index)
            .ok_or_else(|| RegistrationError::InvalidParameter(format!("match refers to keypoint {}", m.scene_index)))?;
        su += kp.u;
        sv += kp.v;
    }
    let (u, v) = (su / matches.len() as f64, sv / matches.len() as f64);
    let z = match depth_at(depth, u, v) {
        Some(z) => z,
        None => {
            let mut zs: Vec<f64> = matches
                .iter()
                .filter_map(|m| {
                    let kp = &scene_keypoints[m.scene_index];
                    depth_at(depth, kp.u, kp.v)
                })
                .collect();
            if zs.is_empty() {
                return Err(RegistrationError::NoValidDepth);
            }
            zs.sort_by(f64::total_cmp);
            let n = zs.len();
            if n % 2 == 1 {
                zs[n / 2]
            } else {
                0.5 * (zs[n / 2 - 1] + zs[n / 2])
            }
        }
    };
    let anchor = k.back_project(u, v, z)?;
    Ok(RigidTransform::from_translation(anchor - template_cloud.centroid()?))
}

fn depth_at(depth: &DepthImage, u: f64, v: f64) -> Option<f64> {
    let (x, y) = (u.round(), v.round());
    if x < 0.0 || y < 0.0 {
        return None;
    }
    depth.get(x as usize, y as usize)
}
