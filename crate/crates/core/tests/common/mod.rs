#![allow(dead_code)]

use nalgebra::Rotation3;
use xvision::geometry::{Mat3, Vec3};

/// Least-squares cost of the best translation for a fixed rotation.
pub fn rigid_cost(r: &Mat3, pairs: &[(Vec3, Vec3)]) -> f64 {
    let n = pairs.len() as f64;
    let cs = pairs.iter().map(|p| p.0).sum::<Vec3>() / n;
    let ct = pairs.iter().map(|p| p.1).sum::<Vec3>() / n;
    let t = ct - r * cs;
    pairs.iter().map(|(s, q)| (r * s + t - q).norm_squared()).sum()
}

fn search(pairs: &[(Vec3, Vec3)], center: Vec3, half_extent: f64, step: f64, best: &mut (f64, Vec3)) {
    let n = (half_extent / step).round() as i64;
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                let rv = center + Vec3::new(i as f64, j as f64, k as f64) * step;
                if rv.norm() > std::f64::consts::PI + step {
                    continue;
                }
                let c = rigid_cost(Rotation3::new(rv).matrix(), pairs);
                if c < best.0 {
                    *best = (c, rv);
                }
            }
        }
    }
}

/// Hierarchical grid search over rotation vectors: 8° over the whole ball,
/// then 2° and finally 0.5° around the incumbent. Returns (cost, rotation).
pub fn grid_search_rotation(pairs: &[(Vec3, Vec3)]) -> (f64, Mat3) {
    let deg = std::f64::consts::PI / 180.0;
    let mut best = (f64::INFINITY, Vec3::zeros());
    search(pairs, Vec3::zeros(), std::f64::consts::PI, 8.0 * deg, &mut best);
    search(pairs, best.1, 8.0 * deg, 2.0 * deg, &mut best);
    search(pairs, best.1, 2.0 * deg, 0.5 * deg, &mut best);
    (best.0, *Rotation3::new(best.1).matrix())
}

pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos()
}

/// Mean closest-point distance by exhaustive double loop.
pub fn brute_force_residual(target: &[Vec3], template: &[Vec3]) -> f64 {
    let mut sum = 0.0;
    for t in target {
        let mut best = f64::INFINITY;
        let mut best_p = &template[0];
        for p in template {
            let d = (t - p).norm();
            if d < best {
                best = d;
                best_p = p;
            }
        }
        sum += (t - best_p).norm();
    }
    sum / target.len() as f64
}

/// Linear-scan nearest neighbour: (index, distance), lowest index on ties.
pub fn linear_nearest(points: &[Vec3], q: &Vec3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// Built-in database with default parameters, built once per test binary.
pub fn builtin_db() -> &'static [xvision::features::TemplateObject] {
    static DB: std::sync::OnceLock<Vec<xvision::features::TemplateObject>> = std::sync::OnceLock::new();
    DB.get_or_init(|| {
        xvision::harness::build_builtin_database(&Default::default(), &xvision::CameraIntrinsics::vga()).expect("built-in database")
    })
}

/// Dense row-major product of 4×4 matrices, written out element by element.
pub fn dense_mat4_product(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn to_rows(t: &xvision::RigidTransform) -> [[f64; 4]; 4] {
    let m = t.to_matrix();
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

pub fn random_transform(rng: &mut impl rand::Rng) -> xvision::RigidTransform {
    let rv = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    let t = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    xvision::RigidTransform::from_rotation_vector(rv, t)
}

/// Outcome of the scripted single-mug fusion run.
pub struct MugFixture {
    pub registry: xvision::fusion::Registry,
    pub annotations: Vec<xvision::fusion::AugmentedAnnotation>,
    /// Ground-truth mug pose in the world frame.
    pub truth_world: xvision::RigidTransform,
    pub calibration: xvision::fusion::CalibrationSet,
    pub ambient_celsius: f64,
    pub now_us: u64,
}

pub const MUG_AMBIENT_C: f64 = 37.25;

/// One mug: a rendered scene through LF_ICP, a TCP inventory of its three-tag
/// rig (A and B detuned, so the level is Middle) and a temperature trigger.
pub fn scripted_mug_fixture() -> MugFixture {
    use rand::SeedableRng;
    use std::sync::Arc;
    use std::time::Duration;
    use xvision::fusion::{to_world_pose, CalibrationSet, RfidBatch, Registry, StalenessPolicy, VisionEvent};
    use xvision::harness::{generate_scene, view_pose};
    use xvision::registration::{estimate_pose, PoseMethod, PoseParams, SceneInput};
    use xvision::rfid::{AntennaConfig, Clock, PopulationConfig, ReaderClient, ReaderServer, SimReader, TagConfig, TagRole};
    use xvision::RigidTransform;

    let db = builtin_db();
    let k = xvision::CameraIntrinsics::vga();
    let registry = Registry::from_database(db).expect("registry");
    let calibration = CalibrationSet {
        t_depcam_to_hololens: RigidTransform::from_rotation_vector(Vec3::new(0.0, 0.1, 0.0), Vec3::new(0.02, -0.05, 0.01)),
        t_hololens_to_world: RigidTransform::from_rotation_vector(Vec3::new(0.0, 0.0, 0.5), Vec3::new(1.0, 2.0, 1.5)),
    };

    let truth_cam = view_pose(0.41, 0.35);
    let scene = generate_scene(db, "mug", &truth_cam, 0.0, 11, &k).expect("scene");
    let input = SceneInput { image: &scene.gray, depth: &scene.depth, intrinsics: &k, cloud: &scene.cloud };
    let out = estimate_pose(PoseMethod::LfIcp, input, db, &PoseParams::default()).expect("pose");
    let found = out.result.expect("mug identified");
    registry
        .ingest_vision(&VisionEvent { object_id: found.object_id, m_pose_depcam: found.object_pose, timestamp_us: 1_000_000 }, &calibration)
        .expect("vision ingest");

    let mug = db.iter().find(|o| o.object_id == "mug").unwrap();
    let tags = mug
        .epc_bindings
        .iter()
        .map(|b| TagConfig {
            epc: b.epc,
            position: [0.0, 0.0, 0.6],
            has_temperature_ic: b.role == TagRole::Temperature,
            battery_assisted: false,
            water_detuned: matches!(b.role, TagRole::WaterA | TagRole::WaterB),
            ambient_celsius: MUG_AMBIENT_C,
        })
        .collect();
    let population = PopulationConfig { antennas: vec![AntennaConfig { id: 1, position: [0.0, 0.0, 0.0] }], tags }
        .into_population()
        .expect("population");
    let reader = SimReader::new(population, Default::default(), Clock::Stepped { start_us: 1_100_000, step_us: 1_000 }).expect("reader");
    let server = ReaderServer::spawn(Arc::new(reader), "127.0.0.1:0").expect("server");
    let mut client = ReaderClient::connect(server.local_addr(), Duration::from_secs(5)).expect("client");
    let events = client.inventory(None).expect("inventory");
    let temp_epc = mug.epc_bindings.iter().find(|b| b.role == TagRole::Temperature).unwrap().epc;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut reading = client.trigger_temperature(&temp_epc, &mut rng).expect("temperature");
    drop(client);
    server.shutdown();
    let batch_ts = events.iter().map(|e| e.timestamp_us).max().unwrap_or(1_100_000);
    reading.timestamp_us = batch_ts;
    registry.ingest_rfid(&RfidBatch { timestamp_us: batch_ts, events, temperatures: vec![reading] });

    let now_us = 1_500_000;
    let annotations = registry.snapshot(now_us, &StalenessPolicy::default());
    MugFixture {
        registry,
        annotations,
        truth_world: to_world_pose(&truth_cam, &calibration),
        calibration,
        ambient_celsius: MUG_AMBIENT_C,
        now_us,
    }
}
