use super::GeometryError;

/// Single-channel intensity image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, GeometryError> {
        if data.len() != width * height {
            return Err(GeometryError::ImageSize { expected: width * height, got: data.len() });
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(GeometryError::PixelRange(*bad as f64));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self { width, height, data: vec![value; width * height] }
    }

    /// Builds an image from a per-pixel function `f(x, y)`; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self { width, height, data }
    }

    /// Luma conversion (0.299 R + 0.587 G + 0.114 B) of 8-bit RGB pixels.
    pub fn from_rgb(width: usize, height: usize, rgb: &[[u8; 3]]) -> Result<Self, GeometryError> {
        if rgb.len() != width * height {
            return Err(GeometryError::ImageSize { expected: width * height, got: rgb.len() });
        }
        let data = rgb.iter().map(|&c| luma(c)).collect();
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Image rotated by 90° clockwise: pixel `(x, y)` moves to `(height − 1 − y, x)`.
    pub fn rotate90(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (h - 1 - y, x);
                data[ny * h + nx] = self.data[y * w + x];
            }
        }
        GrayImage { width: h, height: w, data }
    }
}

pub(crate) fn luma(c: [u8; 3]) -> f32 {
    ((0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64) / 255.0) as f32
}

/// Depth map in meters, row-major; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, GeometryError> {
        if data.len() != width * height {
            return Err(GeometryError::ImageSize { expected: width * height, got: data.len() });
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(GeometryError::PixelRange(*bad as f64));
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Depth at a pixel, `None` when the pixel is invalid or outside the image.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let d = self.data[y * self.width + x];
        (d > 0.0).then_some(d as f64)
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }
}
