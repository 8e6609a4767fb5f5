use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{generate_scene, view_pose};
use super::{BuiltinObject, HarnessError};
use crate::features::TemplateObject;
use crate::geometry::{CameraIntrinsics, RigidTransform, Vec3};
use crate::registration::{estimate_pose, residual_error, PoseEstimate, PoseMethod, PoseParams, SceneInput};

pub const BENCH_SCHEMA_VERSION: u32 = 1;
/// Scene yaws are drawn from ±this many degrees.
pub const MAX_SCENE_YAW_DEG: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub pose: PoseParams,
    pub intrinsics: CameraIntrinsics,
    /// Depth noise of the rendered scenes (m).
    pub noise_sigma: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { pose: PoseParams::default(), intrinsics: CameraIntrinsics::vga(), noise_sigma: 0.0 }
    }
}

/// One method on one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRow {
    pub object_id: String,
    pub view: usize,
    pub distance_m: f64,
    pub yaw_deg: f64,
    /// Seed the scene was rendered with.
    pub scene_seed: u64,
    pub method: PoseMethod,
    pub identified: Option<String>,
    pub correct: bool,
    /// ℰ of the scene cloud against the posed viewpoint cloud.
    pub residual_m: Option<f64>,
    pub translation_error_m: Option<f64>,
    /// About the symmetry axis only for axially symmetric objects.
    pub rotation_error_deg: Option<f64>,
    pub estimate: Option<PoseEstimate>,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: PoseMethod,
    pub scenes: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Mean ℰ over the scenes with a result.
    pub mean_residual_m: Option<f64>,
    pub mean_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub seed: u64,
    pub n_views_per_object: usize,
    pub distance_range_m: (f64, f64),
    pub noise_sigma_m: f64,
    pub methods: Vec<MethodSummary>,
    pub rows: Vec<SceneRow>,
}

impl BenchReport {
    pub fn summary(&self, method: PoseMethod) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn rows_for(&self, method: PoseMethod) -> impl Iterator<Item = &SceneRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// The report with every wall-time field zeroed; equal for equal seeds.
    pub fn without_timings(&self) -> BenchReport {
        let mut r = self.clone();
        r.methods.iter_mut().for_each(|m| m.mean_time_s = 0.0);
        r.rows.iter_mut().for_each(|row| row.time_s = 0.0);
        r
    }
}

/// Rotation error in degrees. For axially symmetric objects only the tilt of the
/// symmetry axis (object y) counts.
pub fn rotation_error_deg(object_id: &str, truth: &RigidTransform, estimate: &RigidTransform) -> f64 {
    let symmetric = BuiltinObject::from_id(object_id).is_some_and(|o| o.is_axially_symmetric());
    if symmetric {
        let a = truth.rotation() * Vec3::y();
        let b = estimate.rotation() * Vec3::y();
        a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees()
    } else {
        let r = truth.rotation().transpose() * estimate.rotation();
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees()
    }
}

/// [`run_benchmark_with`] using default options.
pub fn run_benchmark(
    db: &[TemplateObject],
    n_views: usize,
    distance_range: (f64, f64),
    methods: &[PoseMethod],
    seed: u64,
) -> Result<BenchReport, HarnessError> {
    run_benchmark_with(db, n_views, distance_range, methods, seed, &BenchOptions::default())
}

/// Renders `n_views` seeded views of every object and runs each method on each.
///
/// Yaw is uniform in ±[`MAX_SCENE_YAW_DEG`] and distance uniform in `distance_range`.
/// Times cover `estimate_pose` only.
pub fn run_benchmark_with(
    db: &[TemplateObject],
    n_views: usize,
    distance_range: (f64, f64),
    methods: &[PoseMethod],
    seed: u64,
    options: &BenchOptions,
) -> Result<BenchReport, HarnessError> {
    let (lo, hi) = distance_range;
    if n_views == 0 {
        return Err(HarnessError::InvalidParameter("n_views must be at least 1".into()));
    }
    if !(lo > 0.1 && hi < 2.0 && lo <= hi) {
        return Err(HarnessError::InvalidParameter(format!("distance range {lo}:{hi} must lie within (0.1, 2.0)")));
    }
    if methods.is_empty() {
        return Err(HarnessError::InvalidParameter("no methods selected".into()));
    }
    let k = &options.intrinsics;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for obj in db {
        for view in 0..n_views {
            let yaw_deg = rng.random_range(-MAX_SCENE_YAW_DEG..=MAX_SCENE_YAW_DEG);
            let distance_m = if lo == hi { lo } else { rng.random_range(lo..hi) };
            let scene_seed: u64 = rng.random();
            let truth = view_pose(distance_m, yaw_deg.to_radians());
            let scene = generate_scene(db, &obj.object_id, &truth, options.noise_sigma, scene_seed, k)?;
            let input = SceneInput { image: &scene.gray, depth: &scene.depth, intrinsics: k, cloud: &scene.cloud };
            for &method in methods {
                let t = Instant::now();
                let outcome = estimate_pose(method, input, db, &options.pose)?;
                let time_s = t.elapsed().as_secs_f64();
                let mut row = SceneRow {
                    object_id: obj.object_id.clone(),
                    view,
                    distance_m,
                    yaw_deg,
                    scene_seed,
                    method,
                    identified: None,
                    correct: false,
                    residual_m: None,
                    translation_error_m: None,
                    rotation_error_deg: None,
                    estimate: None,
                    time_s,
                };
                if let Some(r) = outcome.result {
                    let template = &db[r.object_index].viewpoint_clouds[r.estimate.viewpoint_index];
                    let posed = r.estimate.m_pose.apply_cloud(template);
                    row.residual_m = Some(residual_error(&scene.cloud, &posed)?);
                    row.correct = r.object_id == obj.object_id;
                    if row.correct {
                        row.translation_error_m = Some((r.object_pose.translation() - truth.translation()).norm());
                        row.rotation_error_deg = Some(rotation_error_deg(&obj.object_id, &truth, &r.object_pose));
                    }
                    row.estimate = Some(r.estimate);
                    row.identified = Some(r.object_id);
                }
                rows.push(row);
            }
        }
    }
    let summaries = methods.iter().map(|&m| summarize(m, &rows)).collect();
    Ok(BenchReport {
        schema_version: BENCH_SCHEMA_VERSION,
        seed,
        n_views_per_object: n_views,
        distance_range_m: distance_range,
        noise_sigma_m: options.noise_sigma,
        methods: summaries,
        rows,
    })
}

fn summarize(method: PoseMethod, rows: &[SceneRow]) -> MethodSummary {
    let mine: Vec<&SceneRow> = rows.iter().filter(|r| r.method == method).collect();
    let scenes = mine.len();
    let correct = mine.iter().filter(|r| r.correct).count();
    let residuals: Vec<f64> = mine.iter().filter_map(|r| r.residual_m).collect();
    MethodSummary {
        method,
        scenes,
        correct,
        accuracy: correct as f64 / scenes.max(1) as f64,
        mean_residual_m: (!residuals.is_empty()).then(|| residuals.iter().sum::<f64>() / residuals.len() as f64),
        mean_time_s: mine.iter().map(|r| r.time_s).sum::<f64>() / scenes.max(1) as f64,
    }
}
