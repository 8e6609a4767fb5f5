use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec3};

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// 640×480 sensor with a 525 px focal length, the usual structured-light RGB-D setup.
    pub fn vga() -> Self {
        Self { fx: 525.0, fy: 525.0, cx: 319.5, cy: 239.5, width: 640, height: 480 }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: &str| Err(GeometryError::InvalidIntrinsics(msg.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside image");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside image");
        }
        Ok(())
    }

    /// Pixel `(u, v)` at depth `z` to a camera-frame point.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Result<Vec3, GeometryError> {
        if !(z > 0.0) {
            return Err(GeometryError::NonPositiveDepth(z));
        }
        Ok(Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z))
    }

    pub fn project(&self, p: &Vec3) -> Result<(f64, f64), GeometryError> {
        if !(p.z > 0.0) {
            return Err(GeometryError::BehindCamera(p.z));
        }
        Ok((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self::vga()
    }
}
