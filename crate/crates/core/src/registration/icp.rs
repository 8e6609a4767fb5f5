use serde::{Deserialize, Serialize};

use super::kabsch::kabsch_solve_by;
use super::{KdTree, RegistrationError};
use crate::geometry::{PointCloud, RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the accepted-set MSE changes by less than this (m²).
    pub mse_delta_tolerance: f64,
    /// Pairs farther than this multiple of the median pair distance are dropped.
    pub correspondence_reject_multiplier: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self { max_iterations: 50, mse_delta_tolerance: 1e-10, correspondence_reject_multiplier: 2.5 }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        if self.max_iterations == 0 {
            return Err(RegistrationError::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.mse_delta_tolerance > 0.0) || !(self.correspondence_reject_multiplier > 0.0) {
            return Err(RegistrationError::InvalidParameter("ICP tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Increment on top of the initial pose: the full pose is `init ∘ m_icp`.
    pub m_icp: RigidTransform,
    /// Root-mean-square distance from every transformed template point to its nearest scene point.
    pub residual: f64,
    pub iterations: usize,
    /// Accepted-correspondence MSE after each rigid solve.
    pub mse_history: Vec<f64>,
}

/// Point-to-point ICP of `template` onto `scene`, starting from `init`.
pub fn icp(template: &PointCloud, scene: &PointCloud, init: &RigidTransform, params: &IcpParams) -> Result<IcpResult, RegistrationError> {
    if scene.len() < 3 {
        return Err(RegistrationError::TooFewPoints { needed: 3, got: scene.len() });
    }
    let tree = KdTree::new(scene.points())?;
    icp_with_index(template.points(), &tree, init, params)
}

/// [`icp`] against a prebuilt scene index.
///
/// Each iteration re-pairs every template point with its nearest scene point,
/// drops pairs beyond the rejection threshold and solves the full pose from the
/// survivors. If a solve would raise the accepted-set MSE above the previous
/// iteration's, the previous estimate is kept and the loop stops.
pub fn icp_with_index(
    template: &[Vec3],
    scene: &KdTree,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, RegistrationError> {
    params.validate()?;
    if template.len() < 3 || scene.len() < 3 {
        return Err(RegistrationError::TooFewPoints { needed: 3, got: template.len().min(scene.len()) });
    }
    let mut pose = *init;
    let mut mse_history: Vec<f64> = Vec::new();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(template.len());
    let mut sorted: Vec<f64> = Vec::with_capacity(template.len());
    let mut iterations = 0;
    while iterations < params.max_iterations {
        pairs.clear();
        for (i, p) in template.iter().enumerate() {
            let n = scene.nearest(&pose.apply(p));
            pairs.push((i, n.index, n.distance));
        }
        sorted.clear();
        sorted.extend(pairs.iter().map(|p| p.2));
        let median = median_of(&mut sorted);
        let threshold = params.correspondence_reject_multiplier * median;
        pairs.retain(|p| p.2 <= threshold);
        if pairs.is_empty() {
            return Err(RegistrationError::AllCorrespondencesRejected);
        }
        let scene_pts = scene.points();
        let candidate = kabsch_solve_by(pairs.len(), |k| (template[pairs[k].0], scene_pts[pairs[k].1]))?;
        let mse = pairs.iter().map(|&(i, j, _)| (candidate.apply(&template[i]) - scene_pts[j]).norm_squared()).sum::<f64>()
            / pairs.len() as f64;
        if let Some(&prev) = mse_history.last() {
            if mse > prev {
                break;
            }
        }
        pose = candidate;
        iterations += 1;
        mse_history.push(mse);
        if mse_history.len() >= 2 && (mse_history[mse_history.len() - 2] - mse).abs() < params.mse_delta_tolerance {
            break;
        }
    }
    let residual = rms_nearest(template, scene, &pose);
    Ok(IcpResult { m_icp: init.inverse().compose(&pose), residual, iterations, mse_history })
}

pub(crate) fn rms_nearest(template: &[Vec3], scene: &KdTree, pose: &RigidTransform) -> f64 {
    let sum: f64 = template.iter().map(|p| scene.nearest(&pose.apply(p)).distance.powi(2)).sum();
    (sum / template.len() as f64).sqrt()
}

fn median_of(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_of(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_of(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn rejects_bad_params() {
        let p = IcpParams { max_iterations: 0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = IcpParams { correspondence_reject_multiplier: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
