use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::{KdTree, Neighbor, RegistrationError};
use crate::geometry::{Mat3, PointCloud, Vec3};

pub const FPFH_BINS: usize = 11;
pub const FPFH_DIM: usize = 3 * FPFH_BINS;

/// Three 11-bin histograms (α, φ, θ), each normalized to sum to 100.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpfhDescriptor {
    pub histogram: [f64; FPFH_DIM],
}

impl FpfhDescriptor {
    pub fn distance_squared(&self, other: &FpfhDescriptor) -> f64 {
        self.histogram.iter().zip(other.histogram.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.histogram[i * FPFH_BINS..(i + 1) * FPFH_BINS]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpfhParams {
    pub normal_radius: f64,
    pub feature_radius: f64,
}

impl Default for FpfhParams {
    fn default() -> Self {
        Self { normal_radius: 0.01, feature_radius: 0.025 }
    }
}

/// FPFH of every point, with normals oriented toward the origin.
pub fn fpfh(cloud: &PointCloud, normal_radius: f64, feature_radius: f64) -> Result<Vec<FpfhDescriptor>, RegistrationError> {
    fpfh_with_viewpoint(cloud, normal_radius, feature_radius, &Vec3::zeros())
}

/// FPFH of every point, with normals oriented toward `viewpoint`.
pub fn fpfh_with_viewpoint(
    cloud: &PointCloud,
    normal_radius: f64,
    feature_radius: f64,
    viewpoint: &Vec3,
) -> Result<Vec<FpfhDescriptor>, RegistrationError> {
    if !(normal_radius > 0.0 && feature_radius > normal_radius) {
        return Err(RegistrationError::InvalidParameter(format!(
            "need feature_radius > normal_radius > 0, got {feature_radius} and {normal_radius}"
        )));
    }
    if cloud.len() < 10 {
        return Err(RegistrationError::TooFewPoints { needed: 10, got: cloud.len() });
    }
    let tree = KdTree::new(cloud.points())?;
    let normals = estimate_normals(&tree, normal_radius, viewpoint)?;
    Ok(fpfh_from_normals(&tree, &normals, feature_radius))
}

/// PCA normals over `radius` neighbourhoods, flipped to face `viewpoint`.
pub fn estimate_normals(tree: &KdTree, radius: f64, viewpoint: &Vec3) -> Result<Vec<Vec3>, RegistrationError> {
    let pts = tree.points();
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            let nb = tree.radius(p, radius);
            let others = nb.iter().filter(|n| n.index != i).count();
            if others < 3 {
                return Err(RegistrationError::InsufficientNeighbors { index: i, found: others });
            }
            let c = nb.iter().map(|n| pts[n.index]).sum::<Vec3>() / nb.len() as f64;
            let mut cov = Mat3::zeros();
            for n in &nb {
                let d = pts[n.index] - c;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let normal: Vec3 = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
            Ok(if normal.dot(&(viewpoint - p)) < 0.0 { -normal } else { normal })
        })
        .collect()
}

/// Darboux-frame pair features `(α, φ, θ)`; `None` when the frame is undefined.
pub fn pair_features(p1: &Vec3, n1: &Vec3, p2: &Vec3, n2: &Vec3) -> Option<(f64, f64, f64)> {
    let mut dp = p2 - p1;
    let len = dp.norm();
    if len == 0.0 {
        return None;
    }
    let a1 = n1.dot(&dp) / len;
    let a2 = n2.dot(&dp) / len;
    // the source is the point whose normal makes the smaller angle with the connecting line
    let (s_n, t_n, phi) = if a1.abs().acos() > a2.abs().acos() {
        dp = -dp;
        (n2, n1, -a2)
    } else {
        (n1, n2, a1)
    };
    let v = dp.cross(s_n);
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return None;
    }
    let v = v / v_norm;
    let w = s_n.cross(&v);
    let alpha = v.dot(t_n);
    let theta = w.dot(t_n).atan2(s_n.dot(t_n));
    Some((alpha, phi, theta))
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = ((value - lo) / (hi - lo) * FPFH_BINS as f64).floor();
    b.clamp(0.0, (FPFH_BINS - 1) as f64) as usize
}

fn normalize_blocks(h: &mut [f64; FPFH_DIM]) {
    for block in h.chunks_mut(FPFH_BINS) {
        let sum: f64 = block.iter().sum();
        if sum > 0.0 {
            block.iter_mut().for_each(|v| *v *= 100.0 / sum);
        }
    }
}

pub(crate) fn fpfh_from_normals(tree: &KdTree, normals: &[Vec3], feature_radius: f64) -> Vec<FpfhDescriptor> {
    let pts = tree.points();
    let neighbors: Vec<Vec<Neighbor>> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| tree.radius(p, feature_radius).into_iter().filter(|n| n.index != i && n.distance > 0.0).collect())
        .collect();
    let spfh: Vec<[f64; FPFH_DIM]> = (0..pts.len())
        .map(|i| {
            let mut h = [0.0; FPFH_DIM];
            for n in &neighbors[i] {
                if let Some((f1, f2, f3)) = pair_features(&pts[i], &normals[i], &pts[n.index], &normals[n.index]) {
                    h[bin(f1, -1.0, 1.0)] += 1.0;
                    h[FPFH_BINS + bin(f2, -1.0, 1.0)] += 1.0;
                    h[2 * FPFH_BINS + bin(f3, -PI, PI)] += 1.0;
                }
            }
            normalize_blocks(&mut h);
            h
        })
        .collect();
    (0..pts.len())
        .map(|i| {
            let mut h = spfh[i];
            let k = neighbors[i].len();
            if k > 0 {
                for n in &neighbors[i] {
                    let w = 1.0 / (k as f64 * n.distance);
                    for (acc, v) in h.iter_mut().zip(spfh[n.index].iter()) {
                        *acc += w * v;
                    }
                }
            }
            normalize_blocks(&mut h);
            FpfhDescriptor { histogram: h }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_features_of_coplanar_normals() {
        let n = Vec3::z();
        let (a, b, c) = pair_features(&Vec3::zeros(), &n, &Vec3::new(0.01, 0.003, 0.0), &n).unwrap();
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12 && c.abs() < 1e-12);
        assert!(pair_features(&Vec3::zeros(), &n, &Vec3::zeros(), &n).is_none());
    }

    #[test]
    fn bins_cover_the_range() {
        assert_eq!(bin(-PI, -PI, PI), 0);
        assert_eq!(bin(PI, -PI, PI), 10);
        assert_eq!(bin(0.0, -1.0, 1.0), 5);
    }

    #[test]
    fn argument_errors() {
        let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64 * 0.001, 0.0, 0.0)).collect();
        let c = PointCloud::new(pts).unwrap();
        assert!(fpfh(&c, 0.02, 0.01).is_err());
        let small = PointCloud::new(vec![Vec3::zeros(); 5]).unwrap();
        assert!(matches!(fpfh(&small, 0.01, 0.02), Err(RegistrationError::TooFewPoints { .. })));
        let sparse: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let r = fpfh(&PointCloud::new(sparse).unwrap(), 0.01, 0.02);
        assert!(matches!(r, Err(RegistrationError::InsufficientNeighbors { index: 0, found: 0 })));
    }
}
