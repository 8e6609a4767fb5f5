use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{PointCloud, Vec3};
use crate::rfid::{Epc, EpcBinding, TagRole};

/// The three generated objects. Object frame: +y down along the body axis,
/// origin on the axis at mid-height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinObject {
    Bottle,
    Cup,
    Mug,
}

impl BuiltinObject {
    pub const ALL: [BuiltinObject; 3] = [BuiltinObject::Bottle, BuiltinObject::Cup, BuiltinObject::Mug];

    pub fn id(&self) -> &'static str {
        match self {
            BuiltinObject::Bottle => "bottle",
            BuiltinObject::Cup => "cup",
            BuiltinObject::Mug => "mug",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.id() == id)
    }

    /// Surface of revolution about the y axis; yaw cannot be recovered from geometry.
    pub fn is_axially_symmetric(&self) -> bool {
        !matches!(self, BuiltinObject::Mug)
    }

    fn index(&self) -> u128 {
        *self as u128
    }

    /// Tags attached to the object.
    pub fn epc_bindings(&self) -> Vec<EpcBinding> {
        let epc = |role: u128| Epc::from_u128(0x3034_0000_0000_0000_0000_0000 | (self.index() + 1) << 8 | role);
        let b = |role, n| EpcBinding { epc: epc(n), role };
        match self {
            BuiltinObject::Bottle => vec![b(TagRole::Identity, 0), b(TagRole::Temperature, 4)],
            BuiltinObject::Cup => vec![b(TagRole::Identity, 0)],
            BuiltinObject::Mug => {
                vec![b(TagRole::WaterA, 1), b(TagRole::WaterB, 2), b(TagRole::WaterC, 3), b(TagRole::Temperature, 4)]
            }
        }
    }

    fn texture_seed(&self) -> u64 {
        0x5eed_0000 + self.index() as u64 * 7919
    }

    /// Uncolored surface samples roughly `step` meters apart.
    pub fn surface(&self, step: f64) -> Vec<Vec3> {
        let mut pts = Vec::new();
        match self {
            BuiltinObject::Bottle => {
                revolve(&mut pts, step, &[(0.0, 0.065), (0.035, 0.065), (0.035, -0.02), (0.013, -0.045), (0.013, -0.065), (0.0, -0.065)]);
            }
            BuiltinObject::Cup => {
                revolve(&mut pts, step, &[(0.0, 0.05), (0.03, 0.05), (0.042, -0.05), (0.0, -0.05)]);
            }
            BuiltinObject::Mug => {
                revolve(&mut pts, step, &[(0.0, 0.0475), (0.04, 0.0475), (0.04, -0.0475), (0.0, -0.0475)]);
                handle(&mut pts, step);
            }
        }
        pts
    }

    /// Colored surface with a procedural blob texture.
    pub fn model_cloud(&self, step: f64) -> PointCloud {
        let pts = self.surface(step);
        let tex = BlobTexture::new(self, &self.surface(0.004));
        let colors = pts.iter().map(|p| tex.color(p)).collect();
        PointCloud::with_colors(pts, colors).expect("generated surface is finite")
    }
}

/// Samples the surface swept by rotating the (radius, y) polyline about the y axis.
fn revolve(pts: &mut Vec<Vec3>, step: f64, profile: &[(f64, f64)]) {
    for w in profile.windows(2) {
        let ((r0, y0), (r1, y1)) = (w[0], w[1]);
        let len = (r1 - r0).hypot(y1 - y0);
        let n_seg = (len / step).ceil().max(1.0) as usize;
        for i in 0..n_seg {
            let t = (i as f64 + 0.5) / n_seg as f64;
            let (r, y) = (r0 + t * (r1 - r0), y0 + t * (y1 - y0));
            let n_theta = ((TAU * r) / step).ceil().max(1.0) as usize;
            for j in 0..n_theta {
                let th = TAU * (j as f64 + 0.5 * (i % 2) as f64) / n_theta as f64;
                pts.push(Vec3::new(r * th.cos(), y, r * th.sin()));
            }
        }
    }
}

/// Tube of radius 7 mm along a half circle bulging out of the mug's +x side.
fn handle(pts: &mut Vec<Vec3>, step: f64) {
    let (center_x, major, minor) = (0.04, 0.03, 0.007);
    let n_phi = ((PI * major) / step).ceil() as usize;
    let n_psi = ((TAU * minor) / step).ceil() as usize;
    for i in 0..=n_phi {
        let phi = -FRAC_PI_2 + PI * i as f64 / n_phi as f64;
        let (c, s) = (phi.cos(), phi.sin());
        let spine = Vec3::new(center_x + major * c, major * s, 0.0);
        let radial = Vec3::new(c, s, 0.0);
        for j in 0..n_psi {
            let psi = TAU * j as f64 / n_psi as f64;
            let p = spine + minor * (psi.cos() * radial + psi.sin() * Vec3::z());
            if p.x.hypot(p.z) > 0.04 {
                pts.push(p);
            }
        }
    }
}

struct Blob {
    center: Vec3,
    sigma: f64,
    amplitude: f64,
}

/// Solid texture: Gaussian blobs centred on the surface over a light base tone.
struct BlobTexture {
    blobs: Vec<Blob>,
}

const BASE_TONE: f64 = 0.72;

impl BlobTexture {
    fn new(obj: &BuiltinObject, surface: &[Vec3]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(obj.texture_seed());
        let mut blobs: Vec<Blob> = Vec::new();
        let mut attempts = 0;
        while attempts < 20_000 && blobs.len() < 400 {
            attempts += 1;
            let center = surface[rng.random_range(0..surface.len())];
            let sigma = rng.random_range(0.0025..0.006);
            if blobs.iter().any(|b| (b.center - center).norm() < 2.2 * (b.sigma + sigma)) {
                continue;
            }
            let amplitude = if rng.random::<bool>() { -rng.random_range(0.45..0.65) } else { rng.random_range(0.2..0.28) };
            blobs.push(Blob { center, sigma, amplitude });
        }
        Self { blobs }
    }

    fn color(&self, p: &Vec3) -> [u8; 3] {
        let mut v = BASE_TONE;
        for b in &self.blobs {
            let d2 = (p - b.center).norm_squared();
            if d2 < 16.0 * b.sigma * b.sigma {
                v += b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
            }
        }
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        [g, g, g]
    }
}
