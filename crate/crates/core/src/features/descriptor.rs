use serde::{Deserialize, Serialize};

use super::{IntegralImage, Keypoint};
use crate::geometry::GrayImage;

pub const DESCRIPTOR_DIM: usize = 64;

/// Upright SURF-style descriptor: 4×4 subregions × (Σdx, Σdy, Σ|dx|, Σ|dy|),
/// unit L2 norm, or all zeros for a flat patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptor(#[serde(with = "serde_arrays")] pub [f32; DESCRIPTOR_DIM]);

impl Descriptor {
    pub fn zeros() -> Self {
        Descriptor([0.0; DESCRIPTOR_DIM])
    }

    pub fn values(&self) -> &[f32; DESCRIPTOR_DIM] {
        &self.0
    }

    pub fn norm(&self) -> f32 {
        self.0.iter().map(|v| v * v).sum::<f32>().sqrt()
    }

    #[inline]
    pub fn distance_squared(&self, other: &Descriptor) -> f32 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    #[inline]
    pub fn distance(&self, other: &Descriptor) -> f32 {
        self.distance_squared(other).sqrt()
    }

    /// Scales to unit length; a zero vector stays zero.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 1e-12 {
            self.0.iter_mut().for_each(|v| *v /= n);
        } else {
            self.0 = [0.0; DESCRIPTOR_DIM];
        }
        self
    }
}

mod serde_arrays {
    use super::DESCRIPTOR_DIM;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f32; DESCRIPTOR_DIM], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f32; DESCRIPTOR_DIM], D::Error> {
        let v = Vec::<f32>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<f32>| serde::de::Error::invalid_length(v.len(), &"64 values"))
    }
}

/// Whether the 20·scale descriptor window fits inside the image.
pub fn has_descriptor_margin(kp: &Keypoint, width: usize, height: usize) -> bool {
    let m = 10.0 * kp.scale;
    kp.u - m >= 0.0 && kp.v - m >= 0.0 && kp.u + m <= (width - 1) as f64 && kp.v + m <= (height - 1) as f64
}

#[inline]
fn haar_x(ii: &IntegralImage, row: i64, col: i64, size: i64) -> f64 {
    let half = size / 2;
    ii.rect(row - half, col, size, half) - ii.rect(row - half, col - half, size, half)
}

#[inline]
fn haar_y(ii: &IntegralImage, row: i64, col: i64, size: i64) -> f64 {
    let half = size / 2;
    ii.rect(row, col - half, half, size) - ii.rect(row - half, col - half, half, size)
}

/// Descriptor of `kp`, or `None` when the keypoint is closer than 10·scale to the border.
pub fn describe(img: &GrayImage, kp: &Keypoint) -> Option<Descriptor> {
    describe_on_integral(&IntegralImage::new(img), kp)
}

pub(crate) fn describe_on_integral(ii: &IntegralImage, kp: &Keypoint) -> Option<Descriptor> {
    if !has_descriptor_margin(kp, ii.width(), ii.height()) {
        return None;
    }
    let s = kp.scale;
    let haar_size = 2 * (s.round() as i64).max(1);
    let mut out = [0.0f32; DESCRIPTOR_DIM];
    // Gaussian weight with σ = 3.3·scale, expressed in sample units
    let inv_two_sigma2 = 1.0 / (2.0 * 3.3 * 3.3);
    for sub_y in 0..4 {
        for sub_x in 0..4 {
            let (mut sdx, mut sdy, mut adx, mut ady) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for k in 0..5 {
                for l in 0..5 {
                    let oy = (sub_y * 5 + k) as f64 - 10.0 + 0.5;
                    let ox = (sub_x * 5 + l) as f64 - 10.0 + 0.5;
                    let row = (kp.v + oy * s).round() as i64;
                    let col = (kp.u + ox * s).round() as i64;
                    let w = (-(ox * ox + oy * oy) * inv_two_sigma2).exp();
                    let dx = w * haar_x(ii, row, col, haar_size);
                    let dy = w * haar_y(ii, row, col, haar_size);
                    sdx += dx;
                    sdy += dy;
                    adx += dx.abs();
                    ady += dy.abs();
                }
            }
            let base = (sub_y * 4 + sub_x) * 4;
            out[base] = sdx as f32;
            out[base + 1] = sdy as f32;
            out[base + 2] = adx as f32;
            out[base + 3] = ady as f32;
        }
    }
    Some(Descriptor(out).normalized())
}

/// Describes every keypoint with enough margin; keypoints without one are dropped.
pub fn describe_all(img: &GrayImage, keypoints: &[Keypoint]) -> (Vec<Keypoint>, Vec<Descriptor>) {
    let ii = IntegralImage::new(img);
    describe_all_on_integral(&ii, keypoints)
}

pub(crate) fn describe_all_on_integral(ii: &IntegralImage, keypoints: &[Keypoint]) -> (Vec<Keypoint>, Vec<Descriptor>) {
    keypoints
        .iter()
        .filter_map(|kp| describe_on_integral(ii, kp).map(|d| (*kp, d)))
        .unzip()
}
