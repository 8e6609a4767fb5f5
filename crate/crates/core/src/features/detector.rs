use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{FeatureError, IntegralImage};
use crate::geometry::GrayImage;

/// Smallest image side accepted by the detector.
pub const MIN_IMAGE_SIDE: usize = 32;
/// At most this many keypoints (strongest first) are kept per image.
pub const MAX_KEYPOINTS: usize = 500;
/// Ratio between the box-filter side and the Gaussian scale it approximates.
const FILTER_TO_SIGMA: f64 = 1.2 / 9.0;

/// A scale-space blob located with sub-pixel accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Column, in pixels.
    pub u: f64,
    /// Row, in pixels.
    pub v: f64,
    /// Gaussian-equivalent scale, in pixels.
    pub scale: f64,
    /// Determinant-of-Hessian response at the discrete maximum.
    pub response: f64,
}

/// Box-filter side for layer `layer` (0..4) of octave `octave` (0-based):
/// 9, 15, 21, 27 in the first octave, with the spacing doubling per octave.
pub fn filter_size(octave: usize, layer: usize) -> usize {
    3 * ((1 << (octave + 1)) * (layer + 1) + 1)
}

struct ResponseLayer {
    cols: usize,
    rows: usize,
    step: usize,
    filter: usize,
    values: Vec<f64>,
}

impl ResponseLayer {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// Normalized box-filter Hessian determinant at pixel `(row, col)` for filter side `w`.
pub(crate) fn hessian_response(ii: &IntegralImage, row: i64, col: i64, w: usize) -> f64 {
    let w = w as i64;
    let b = (w - 1) / 2;
    let l = w / 3;
    let (r, c) = (row, col);
    let dxx = ii.rect(r - l + 1, c - b, 2 * l - 1, w) - 3.0 * ii.rect(r - l + 1, c - l / 2, 2 * l - 1, l);
    let dyy = ii.rect(r - b, c - l + 1, w, 2 * l - 1) - 3.0 * ii.rect(r - l / 2, c - l + 1, l, 2 * l - 1);
    let dxy = ii.rect(r - l, c + 1, l, l) + ii.rect(r + 1, c - l, l, l)
        - ii.rect(r - l, c - l, l, l)
        - ii.rect(r + 1, c + 1, l, l);
    let inv_area = 1.0 / (w * w) as f64;
    let (dxx, dyy, dxy) = (dxx * inv_area, dyy * inv_area, dxy * inv_area);
    dxx * dyy - 0.81 * dxy * dxy
}

fn build_layer(ii: &IntegralImage, filter: usize, step: usize) -> ResponseLayer {
    let (w, h) = (ii.width(), ii.height());
    let cols = w.div_ceil(step);
    let rows = h.div_ceil(step);
    let half = (filter - 1) / 2;
    let mut values = vec![0.0; cols * rows];
    for r in 0..rows {
        let y = r * step;
        if y < half || y + half >= h {
            continue;
        }
        for c in 0..cols {
            let x = c * step;
            if x < half || x + half >= w {
                continue;
            }
            values[r * cols + c] = hessian_response(ii, y as i64, x as i64, filter);
        }
    }
    ResponseLayer { cols, rows, step, filter, values }
}

/// Fast-Hessian blob detector.
///
/// Returns keypoints sorted by descending response, at most [`MAX_KEYPOINTS`].
pub fn detect_keypoints(img: &GrayImage, threshold: f64, octaves: usize) -> Result<Vec<Keypoint>, FeatureError> {
    if img.width() < MIN_IMAGE_SIDE || img.height() < MIN_IMAGE_SIDE {
        return Err(FeatureError::ImageTooSmall { width: img.width(), height: img.height() });
    }
    if !(threshold > 0.0) {
        return Err(FeatureError::InvalidParameter(format!("threshold must be positive, got {threshold}")));
    }
    if !(1..=4).contains(&octaves) {
        return Err(FeatureError::InvalidParameter(format!("octaves must be in 1..=4, got {octaves}")));
    }
    let ii = IntegralImage::new(img);
    detect_on_integral(&ii, threshold, octaves)
}

pub(crate) fn detect_on_integral(ii: &IntegralImage, threshold: f64, octaves: usize) -> Result<Vec<Keypoint>, FeatureError> {
    let mut keypoints = Vec::new();
    for octave in 0..octaves {
        let step = 1 << octave;
        let layers: Vec<ResponseLayer> = (0..4).map(|i| build_layer(ii, filter_size(octave, i), step)).collect();
        for mid in 1..3 {
            find_extrema(&layers, mid, threshold, ii.width(), ii.height(), &mut keypoints);
        }
    }
    keypoints.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.v.total_cmp(&b.v))
            .then(a.u.total_cmp(&b.u))
            .then(a.scale.total_cmp(&b.scale))
    });
    let mut keypoints = suppress_cross_octave_duplicates(keypoints);
    keypoints.truncate(MAX_KEYPOINTS);
    Ok(keypoints)
}

/// Octaves overlap in scale, so one blob can peak in two of them. Keeps the
/// stronger of any two keypoints closer than half the smaller scale whose
/// scales differ by less than 1.5×. Input must be sorted strongest first.
fn suppress_cross_octave_duplicates(sorted: Vec<Keypoint>) -> Vec<Keypoint> {
    let mut kept: Vec<Keypoint> = Vec::with_capacity(sorted.len());
    for kp in sorted {
        let duplicate = kept.iter().any(|k| {
            let (lo, hi) = if k.scale < kp.scale { (k.scale, kp.scale) } else { (kp.scale, k.scale) };
            hi < 1.5 * lo && (k.u - kp.u).hypot(k.v - kp.v) < 0.5 * lo
        });
        if !duplicate {
            kept.push(kp);
        }
    }
    kept
}

fn find_extrema(
    layers: &[ResponseLayer],
    mid: usize,
    threshold: f64,
    width: usize,
    height: usize,
    out: &mut Vec<Keypoint>,
) {
    let (below, layer, above) = (&layers[mid - 1], &layers[mid], &layers[mid + 1]);
    let step = layer.step;
    // samples whose neighbourhood lies entirely in the valid region of the largest filter
    let border = (above.filter - 1) / 2;
    let margin = border.div_ceil(step) + 1;
    if layer.rows <= 2 * margin || layer.cols <= 2 * margin {
        return;
    }
    for r in margin..layer.rows - margin {
        for c in margin..layer.cols - margin {
            let v = layer.at(r, c);
            if v < threshold {
                continue;
            }
            if !is_strict_max(v, r, c, below, layer, above) {
                continue;
            }
            if let Some(kp) = interpolate(r, c, below, layer, above, v) {
                if kp.u >= 0.0 && kp.v >= 0.0 && kp.u < width as f64 && kp.v < height as f64 && kp.scale > 0.0 {
                    out.push(kp);
                }
            }
        }
    }
}

fn is_strict_max(v: f64, r: usize, c: usize, below: &ResponseLayer, layer: &ResponseLayer, above: &ResponseLayer) -> bool {
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            let rr = (r as i64 + dr) as usize;
            let cc = (c as i64 + dc) as usize;
            if below.at(rr, cc) >= v || above.at(rr, cc) >= v {
                return false;
            }
            if (dr != 0 || dc != 0) && layer.at(rr, cc) >= v {
                return false;
            }
        }
    }
    true
}

/// Quadratic fit of the response around a discrete maximum in (x, y, scale).
fn interpolate(r: usize, c: usize, below: &ResponseLayer, layer: &ResponseLayer, above: &ResponseLayer, v: f64) -> Option<Keypoint> {
    let at = |l: &ResponseLayer, dr: i64, dc: i64| l.at((r as i64 + dr) as usize, (c as i64 + dc) as usize);
    let dx = (at(layer, 0, 1) - at(layer, 0, -1)) / 2.0;
    let dy = (at(layer, 1, 0) - at(layer, -1, 0)) / 2.0;
    let ds = (at(above, 0, 0) - at(below, 0, 0)) / 2.0;
    let dxx = at(layer, 0, 1) + at(layer, 0, -1) - 2.0 * v;
    let dyy = at(layer, 1, 0) + at(layer, -1, 0) - 2.0 * v;
    let dss = at(above, 0, 0) + at(below, 0, 0) - 2.0 * v;
    let dxy = (at(layer, 1, 1) - at(layer, 1, -1) - at(layer, -1, 1) + at(layer, -1, -1)) / 4.0;
    let dxs = (at(above, 0, 1) - at(above, 0, -1) - at(below, 0, 1) + at(below, 0, -1)) / 4.0;
    let dys = (at(above, 1, 0) - at(above, -1, 0) - at(below, 1, 0) + at(below, -1, 0)) / 4.0;
    let hessian = Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
    let offset = -(hessian.try_inverse()? * Vector3::new(dx, dy, ds));
    if offset.iter().any(|o| !o.is_finite() || o.abs() >= 0.5) {
        return None;
    }
    let step = layer.step as f64;
    let filter_step = (layer.filter - below.filter) as f64;
    Some(Keypoint {
        u: (c as f64 + offset.x) * step,
        v: (r as f64 + offset.y) * step,
        scale: FILTER_TO_SIGMA * (layer.filter as f64 + offset.z * filter_step),
        response: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_sizes_per_octave() {
        let sizes: Vec<Vec<usize>> = (0..4).map(|o| (0..4).map(|i| filter_size(o, i)).collect()).collect();
        assert_eq!(sizes[0], vec![9, 15, 21, 27]);
        assert_eq!(sizes[1], vec![15, 27, 39, 51]);
        assert_eq!(sizes[2], vec![27, 51, 75, 99]);
        assert_eq!(sizes[3], vec![51, 99, 147, 195]);
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = GrayImage::filled(64, 64, 0.5);
        assert!(detect_keypoints(&img, 1e-4, 3).unwrap().is_empty());
    }

    #[test]
    fn argument_errors() {
        let small = GrayImage::filled(31, 64, 0.5);
        assert!(matches!(detect_keypoints(&small, 1e-4, 1), Err(FeatureError::ImageTooSmall { .. })));
        let img = GrayImage::filled(64, 64, 0.5);
        assert!(detect_keypoints(&img, 0.0, 1).is_err());
        assert!(detect_keypoints(&img, 1e-4, 0).is_err());
        assert!(detect_keypoints(&img, 1e-4, 5).is_err());
    }
}
