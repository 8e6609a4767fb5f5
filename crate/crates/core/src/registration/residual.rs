use super::{KdTree, RegistrationError};
use crate::geometry::{GeometryError, PointCloud};

/// Mean distance from each target point to its closest transformed template point.
pub fn residual_error(target: &PointCloud, transformed_template: &PointCloud) -> Result<f64, RegistrationError> {
    if target.is_empty() || transformed_template.is_empty() {
        return Err(GeometryError::EmptyCloud.into());
    }
    let tree = KdTree::new(transformed_template.points())?;
    Ok(residual_with_index(target, &tree))
}

pub(crate) fn residual_with_index(target: &PointCloud, template: &KdTree) -> f64 {
    let pts = template.points();
    let sum: f64 = target
        .points()
        .iter()
        .map(|t| {
            let p = &pts[template.nearest(t).index];
            (t - p).norm()
        })
        .sum();
    sum / target.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn closest_point_definition() {
        let target = PointCloud::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        let templ = PointCloud::new(vec![Vec3::new(0.1, 0.0, 0.0), Vec3::new(1.1, 0.0, 0.0)]).unwrap();
        assert!((residual_error(&target, &templ).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(residual_error(&target, &target).unwrap(), 0.0);
        let empty = PointCloud::new(vec![]).unwrap();
        assert!(residual_error(&empty, &templ).is_err());
    }
}
