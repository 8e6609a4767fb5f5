use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{CameraIntrinsics, DepthImage, GrayImage, PointCloud, RigidTransform, Vec3};

/// Gray level of pixels no surface point lands on.
pub const BACKGROUND_GRAY: f32 = 0.5;

/// Z-buffered point splatting: every point covers the 3×3 pixel block around
/// its projection. Empty pixels are background gray with depth 0. Gaussian
/// noise of `noise_sigma` meters is added to every valid depth.
pub fn render_cloud(
    model: &PointCloud,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> (GrayImage, DepthImage) {
    let (w, h) = (k.width as usize, k.height as usize);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut gray = vec![BACKGROUND_GRAY; w * h];
    let colors = model.colors();
    for (i, p) in model.points().iter().enumerate() {
        let c = pose.apply(p);
        if c.z <= 0.0 {
            continue;
        }
        let u = k.fx * c.x / c.z + k.cx;
        let v = k.fy * c.y / c.z + k.cy;
        let (pu, pv) = (u.round() as i64, v.round() as i64);
        let value = colors.map_or(0.8, |cs| crate::geometry::luma(cs[i]));
        for dv in -1..=1 {
            for du in -1..=1 {
                let (x, y) = (pu + du, pv + dv);
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let idx = y as usize * w + x as usize;
                if c.z < zbuf[idx] {
                    zbuf[idx] = c.z;
                    gray[idx] = value;
                }
            }
        }
    }
    let noise = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("finite sigma"));
    let depth: Vec<f32> = zbuf
        .iter()
        .map(|&z| {
            if !z.is_finite() {
                return 0.0;
            }
            let z = match &noise {
                Some(n) => z + n.sample(rng),
                None => z,
            };
            z.max(0.0) as f32
        })
        .collect();
    (
        GrayImage::new(w, h, gray).expect("gray values in range"),
        DepthImage::new(w, h, depth).expect("depths finite and non-negative"),
    )
}

/// Back-projects every valid depth pixel into the camera frame.
pub fn depth_to_cloud(depth: &DepthImage, k: &CameraIntrinsics) -> PointCloud {
    let mut pts: Vec<Vec3> = Vec::with_capacity(depth.valid_count());
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            if let Some(z) = depth.get(x, y) {
                pts.push(k.back_project(x as f64, y as f64, z).expect("valid depth is positive"));
            }
        }
    }
    PointCloud::new(pts).expect("finite points")
}
