use nalgebra::SVD;

use super::RegistrationError;
use crate::geometry::{Mat3, RigidTransform, Vec3};

/// Relative singular-value floor below which the cross-covariance is treated as rank ≤ 1.
const RANK_TOLERANCE: f64 = 1e-9;

/// Least-squares rigid transform mapping each source point onto its target.
pub fn kabsch_solve(pairs: &[(Vec3, Vec3)]) -> Result<RigidTransform, RegistrationError> {
    kabsch_solve_by(pairs.len(), |i| pairs[i])
}

/// Same as [`kabsch_solve`] over parallel slices.
pub fn kabsch_solve_slices(source: &[Vec3], target: &[Vec3]) -> Result<RigidTransform, RegistrationError> {
    assert_eq!(source.len(), target.len(), "source and target must have equal length");
    kabsch_solve_by(source.len(), |i| (source[i], target[i]))
}

pub(crate) fn kabsch_solve_by(n: usize, pair: impl Fn(usize) -> (Vec3, Vec3)) -> Result<RigidTransform, RegistrationError> {
    if n < 3 {
        return Err(RegistrationError::DegenerateConfiguration(format!("{n} pairs, need at least 3")));
    }
    let (mut cs, mut ct) = (Vec3::zeros(), Vec3::zeros());
    for i in 0..n {
        let (s, t) = pair(i);
        cs += s;
        ct += t;
    }
    cs /= n as f64;
    ct /= n as f64;
    let mut h = Mat3::zeros();
    let mut spread = 0.0f64;
    for i in 0..n {
        let (s, t) = pair(i);
        let (ds, dt) = (s - cs, t - ct);
        h += ds * dt.transpose();
        spread = spread.max(ds.norm()).max(dt.norm());
    }
    if !h.iter().all(|v| v.is_finite()) {
        return Err(RegistrationError::DegenerateConfiguration("non-finite input".into()));
    }
    let svd = SVD::new(h, true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let (s_max, s_mid) = (svd.singular_values[order[0]], svd.singular_values[order[1]]);
    if spread == 0.0 || s_max <= f64::MIN_POSITIVE || s_mid <= RANK_TOLERANCE * s_max {
        return Err(RegistrationError::DegenerateConfiguration("points are collinear or coincident".into()));
    }
    // H = U Σ Vᵀ and R = V D Uᵀ, with D flipping the axis of the smallest singular value on reflection
    let v = v_t.transpose();
    let mut d = Mat3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(order[2], order[2])] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = ct - rotation * cs;
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tetra() -> Vec<Vec3> {
        vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)]
    }

    #[test]
    fn identity_pairs() {
        let pairs: Vec<_> = tetra().into_iter().map(|p| (p, p)).collect();
        let t = kabsch_solve(&pairs).unwrap();
        assert!((t.to_matrix() - RigidTransform::identity().to_matrix()).amax() < 1e-12);
    }

    #[test]
    fn pure_translation() {
        let shift = Vec3::new(0.0, 1.0, 0.0);
        let pairs: Vec<_> = tetra().into_iter().map(|p| (p, p + shift)).collect();
        let t = kabsch_solve(&pairs).unwrap();
        assert!((t.translation() - shift).amax() < 1e-9);
        assert!((t.rotation() - Mat3::identity()).amax() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let line: Vec<_> = (0..5).map(|i| (Vec3::new(i as f64, 0.0, 0.0), Vec3::new(0.0, i as f64, 0.0))).collect();
        assert!(matches!(kabsch_solve(&line), Err(RegistrationError::DegenerateConfiguration(_))));
        let same = vec![(Vec3::new(1.0, 2.0, 3.0), Vec3::zeros()); 4];
        assert!(kabsch_solve(&same).is_err());
        assert!(kabsch_solve(&[(Vec3::zeros(), Vec3::zeros()); 2]).is_err());
    }

    #[test]
    fn planar_mirror_target_never_yields_reflection() {
        // coplanar points mirrored through their plane: best proper rotation is still a rotation
        let src = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, -2.0, 0.0)];
        let pairs: Vec<_> = src.iter().map(|p| (*p, Vec3::new(-p.x, p.y, p.z))).collect();
        let t = kabsch_solve(&pairs).unwrap();
        assert!((t.rotation().determinant() - 1.0).abs() < 1e-9);
        // the proper rotation achieving this is a half turn about y; it fits exactly
        for (s, q) in &pairs {
            assert!((t.apply(s) - q).norm() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn recovers_random_rigid_motion(
            pts in proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 4..30),
            rv in proptest::array::uniform3(-3.0f64..3.0),
            tr in proptest::array::uniform3(-5.0f64..5.0),
        ) {
            let truth = RigidTransform::from_rotation_vector(Vec3::from(rv), Vec3::from(tr));
            let pairs: Vec<_> = pts.iter().map(|p| { let p = Vec3::from(*p); (p, truth.apply(&p)) }).collect();
            if let Ok(t) = kabsch_solve(&pairs) {
                prop_assert!((t.rotation().determinant() - 1.0).abs() < 1e-9);
                prop_assert!(t.orthonormality_error() < 1e-9);
                for (s, q) in &pairs {
                    prop_assert!((t.apply(s) - q).norm() < 1e-7);
                }
            }
        }

        #[test]
        fn rotation_is_proper_for_arbitrary_pairs(
            pairs in proptest::collection::vec((proptest::array::uniform3(-1.0f64..1.0), proptest::array::uniform3(-1.0f64..1.0)), 3..20),
        ) {
            let pairs: Vec<_> = pairs.into_iter().map(|(a, b)| (Vec3::from(a), Vec3::from(b))).collect();
            if let Ok(t) = kabsch_solve(&pairs) {
                prop_assert!((t.rotation().determinant() - 1.0).abs() < 1e-9);
            }
        }
    }
}
