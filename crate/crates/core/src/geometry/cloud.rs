use std::collections::HashMap;

use super::{GeometryError, Vec3};

/// A set of 3D points in meters, optionally carrying one RGB color per point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Vec3>,
    colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self, GeometryError> {
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(GeometryError::NonFinite("point cloud"));
        }
        Ok(Self { points, colors: None })
    }

    pub fn with_colors(points: Vec<Vec3>, colors: Vec<[u8; 3]>) -> Result<Self, GeometryError> {
        if colors.len() != points.len() {
            return Err(GeometryError::ColorLengthMismatch { points: points.len(), colors: colors.len() });
        }
        let mut cloud = Self::new(points)?;
        cloud.colors = Some(colors);
        Ok(cloud)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[[u8; 3]]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    /// Applies `f` to every point, keeping colors. `f` must map finite points to finite points.
    pub fn map_points(&self, f: impl Fn(&Vec3) -> Vec3) -> PointCloud {
        PointCloud { points: self.points.iter().map(f).collect(), colors: self.colors.clone() }
    }

    pub fn centroid(&self) -> Result<Vec3, GeometryError> {
        centroid(&self.points)
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self.colors.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }

    /// Replaces the points of every occupied voxel of edge `voxel` by their mean.
    /// Output order follows the first point that fell into each voxel.
    pub fn voxel_downsample(&self, voxel: f64) -> PointCloud {
        assert!(voxel > 0.0, "voxel size must be positive");
        let mut slot: HashMap<[i64; 3], usize> = HashMap::new();
        let mut sums: Vec<(Vec3, [u32; 3], u32)> = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            let key = [(p.x / voxel).floor() as i64, (p.y / voxel).floor() as i64, (p.z / voxel).floor() as i64];
            let idx = *slot.entry(key).or_insert_with(|| {
                sums.push((Vec3::zeros(), [0; 3], 0));
                sums.len() - 1
            });
            let entry = &mut sums[idx];
            entry.0 += p;
            if let Some(c) = &self.colors {
                for k in 0..3 {
                    entry.1[k] += c[i][k] as u32;
                }
            }
            entry.2 += 1;
        }
        let points = sums.iter().map(|(s, _, n)| s / *n as f64).collect();
        let colors = self.colors.as_ref().map(|_| {
            sums.iter()
                .map(|(_, c, n)| [(c[0] / n) as u8, (c[1] / n) as u8, (c[2] / n) as u8])
                .collect()
        });
        PointCloud { points, colors }
    }
}

/// Arithmetic mean of a non-empty point set.
pub fn centroid(points: &[Vec3]) -> Result<Vec3, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    Ok(points.iter().sum::<Vec3>() / points.len() as f64)
}
