use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fpfh::{estimate_normals, fpfh_from_normals};
use super::kabsch::kabsch_solve_by;
use super::{FpfhDescriptor, FpfhParams, KdTree, RegistrationError};
use crate::geometry::{PointCloud, RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SacIaParams {
    pub n_samples: usize,
    pub iterations: usize,
    /// Minimum pairwise distance between the template points of one sample (m).
    pub min_sample_distance: f64,
    /// Each sample is paired with a random one of this many feature-space neighbours.
    pub k_correspondences: usize,
    /// Closest-point distances are clipped to this value when scoring (m).
    pub truncation_distance: f64,
}

impl Default for SacIaParams {
    fn default() -> Self {
        Self { n_samples: 3, iterations: 500, min_sample_distance: 0.02, k_correspondences: 5, truncation_distance: 0.02 }
    }
}

/// A cloud with its search index and per-point FPFH descriptors.
#[derive(Debug, Clone)]
pub struct FeatureCloud {
    pub tree: KdTree,
    pub descriptors: Vec<FpfhDescriptor>,
}

impl FeatureCloud {
    pub fn new(cloud: &PointCloud, params: &FpfhParams, viewpoint: &Vec3) -> Result<Self, RegistrationError> {
        if !(params.normal_radius > 0.0 && params.feature_radius > params.normal_radius) {
            return Err(RegistrationError::InvalidParameter("need feature_radius > normal_radius > 0".into()));
        }
        if cloud.len() < 10 {
            return Err(RegistrationError::TooFewPoints { needed: 10, got: cloud.len() });
        }
        let tree = KdTree::new(cloud.points())?;
        let normals = estimate_normals(&tree, params.normal_radius, viewpoint)?;
        let descriptors = fpfh_from_normals(&tree, &normals, params.feature_radius);
        Ok(Self { tree, descriptors })
    }

    pub fn points(&self) -> &[Vec3] {
        self.tree.points()
    }
}

/// SAC-IA with default FPFH radii and origin viewpoints on both clouds.
pub fn sacia_align(
    template: &PointCloud,
    scene: &PointCloud,
    n_samples: usize,
    iterations: usize,
    seed: u64,
) -> Result<(RigidTransform, f64), RegistrationError> {
    let fp = FpfhParams::default();
    let t = FeatureCloud::new(template, &fp, &Vec3::zeros())?;
    let s = FeatureCloud::new(scene, &fp, &Vec3::zeros())?;
    let params = SacIaParams { n_samples, iterations, ..Default::default() };
    sacia_align_features(&t, &s, &params, seed)
}

/// Truncated mean closest-point distance of the transformed template.
pub fn truncated_fitness(template: &[Vec3], scene: &KdTree, pose: &RigidTransform, truncation: f64) -> f64 {
    let sum: f64 = template.iter().map(|p| scene.nearest_distance_capped(&pose.apply(p), truncation)).sum();
    sum / template.len() as f64
}

/// [`truncated_fitness`], or `None` as soon as it can no longer be below `bound`.
fn fitness_below(template: &[Vec3], scene: &KdTree, pose: &RigidTransform, truncation: f64, bound: f64) -> Option<f64> {
    let limit = bound * template.len() as f64;
    let mut sum = 0.0;
    for p in template {
        sum += scene.nearest_distance_capped(&pose.apply(p), truncation);
        if sum >= limit {
            return None;
        }
    }
    Some(sum / template.len() as f64)
}

/// Sample-consensus initial alignment of `template` onto `scene`. Lower fitness is better.
pub fn sacia_align_features(
    template: &FeatureCloud,
    scene: &FeatureCloud,
    params: &SacIaParams,
    seed: u64,
) -> Result<(RigidTransform, f64), RegistrationError> {
    if params.n_samples < 3 {
        return Err(RegistrationError::InvalidParameter("SAC-IA needs at least 3 samples".into()));
    }
    if params.iterations == 0 || params.k_correspondences == 0 || !(params.truncation_distance > 0.0) {
        return Err(RegistrationError::InvalidParameter("invalid SAC-IA parameters".into()));
    }
    let tp = template.points();
    let sp = scene.points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut feature_nn: Vec<Option<Vec<usize>>> = vec![None; tp.len()];
    let mut best: Option<(RigidTransform, f64)> = None;
    let mut last_err = None;
    let min_d2 = params.min_sample_distance * params.min_sample_distance;
    let mut samples = Vec::with_capacity(params.n_samples);
    let mut targets = Vec::with_capacity(params.n_samples);
    for _ in 0..params.iterations {
        samples.clear();
        let mut attempts = 0;
        while samples.len() < params.n_samples && attempts < 100 * params.n_samples {
            attempts += 1;
            let c = rng.random_range(0..tp.len());
            if samples.iter().all(|&s: &usize| (tp[s] - tp[c]).norm_squared() >= min_d2) {
                samples.push(c);
            }
        }
        if samples.len() < 3 {
            last_err = Some(RegistrationError::DegenerateConfiguration("could not draw separated samples".into()));
            continue;
        }
        targets.clear();
        for &s in &samples {
            let nn = feature_nn[s].get_or_insert_with(|| feature_neighbors(&template.descriptors[s], &scene.descriptors, params.k_correspondences));
            targets.push(nn[rng.random_range(0..nn.len())]);
        }
        let pose = match kabsch_solve_by(samples.len(), |i| (tp[samples[i]], sp[targets[i]])) {
            Ok(p) => p,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let bound = best.as_ref().map_or(f64::INFINITY, |b| b.1);
        if let Some(fitness) = fitness_below(tp, &scene.tree, &pose, params.truncation_distance, bound) {
            best = Some((pose, fitness));
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| RegistrationError::DegenerateConfiguration("no SAC-IA trial succeeded".into())))
}

/// Indices of the `k` scene descriptors closest to `d`, ties by index.
fn feature_neighbors(d: &FpfhDescriptor, scene: &[FpfhDescriptor], k: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = scene.iter().enumerate().map(|(j, s)| (d.distance_squared(s), j)).collect();
    let k = k.min(dist.len());
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dist.truncate(k);
    }
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.into_iter().map(|(_, j)| j).collect()
}
