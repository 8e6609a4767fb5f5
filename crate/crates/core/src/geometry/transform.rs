use std::fmt;
use std::ops::Mul;

use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{GeometryError, Mat3, Mat4, PointCloud, Vec3};

/// Maximum per-entry deviation of `RᵀR` from identity accepted by the checked
/// constructors.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

/// A proper rigid motion `x ↦ R·x + t`, i.e. the homogeneous matrix `[R t; 0 1]`.
///
/// The rotation is kept as a full 3×3 matrix. Checked constructors reject
/// matrices that are not orthonormal with determinant +1; nothing is ever
/// re-orthogonalized behind the caller's back.
#[derive(Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("rigid transform"));
        }
        let deviation = (rotation.transpose() * rotation - Mat3::identity()).amax();
        let det = rotation.determinant();
        if deviation > ORTHONORMAL_TOLERANCE || (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(GeometryError::NotARotation { deviation, det });
        }
        Ok(Self { rotation, translation })
    }

    /// Builds a transform from a rotation that is orthonormal by construction
    /// (SVD products, axis-angle). Callers guarantee the invariant.
    pub(crate) fn from_parts_unchecked(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: Mat3::identity(), translation }
    }

    /// Rotation by `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let rotation = if axis.norm() == 0.0 {
            Mat3::identity()
        } else {
            *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
        };
        Self { rotation, translation: Vec3::zeros() }
    }

    /// Rotation vector (axis scaled by angle) followed by a translation.
    pub fn from_rotation_vector(rotvec: Vec3, translation: Vec3) -> Self {
        let rotation = *Rotation3::new(rotvec).matrix();
        Self { rotation, translation }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// `self ∘ other`: the matrix product `self · other` (`other` is applied first).
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map_points(|p| self.apply(p))
    }

    pub fn to_matrix(&self) -> Mat4 {
        let mut m = Mat4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Mat4) -> Result<Self, GeometryError> {
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(GeometryError::NotHomogeneous);
        }
        Self::new(m.fixed_view::<3, 3>(0, 0).into_owned(), m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    /// The 4×4 matrix flattened row by row.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn from_row_major(values: &[f64; 16]) -> Result<Self, GeometryError> {
        Self::from_matrix(&Mat4::from_row_slice(values))
    }

    /// Rotation angle of `R` in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Angle of the relative rotation between `self` and `other`, in radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn translation_distance_to(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Largest entry of `|RᵀR − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).amax()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

impl fmt::Debug for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RigidTransform")
            .field("rotation", &self.rotation.as_slice())
            .field("translation", &[self.translation.x, self.translation.y, self.translation.z])
            .finish()
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = <[f64; 16]>::deserialize(deserializer)?;
        RigidTransform::from_row_major(&values).map_err(serde::de::Error::custom)
    }
}
