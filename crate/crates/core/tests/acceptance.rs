//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use xvision::fusion::{to_world_pose, CalibrationSet, StalenessPolicy};
use xvision::geometry::{PointCloud, Vec3};
use xvision::harness::*;
use xvision::registration::*;
use xvision::rfid::protocol::*;
use xvision::rfid::*;
use xvision::{CameraIntrinsics, RigidTransform};

// Tolerances
const BENCH_SEED: u64 = 42;
const BENCH_VIEWS: usize = 5;
const BENCH_RANGE: (f64, f64) = (0.3, 0.5);
const MIN_LF_CORRECT: usize = 14;
const MAX_SUITE_SECONDS: f64 = 300.0;
const MIN_SPEEDUP_VS_FPFH: f64 = 5.0;
const POSE_TRANSLATION_M: f64 = 0.005;
const POSE_ROTATION_DEG: f64 = 2.0;
const MIN_POSE_OK: usize = 13;
const NOISE_SIGMA_M: f64 = 0.001;
const MAX_NOISY_MEAN_RESIDUAL_M: f64 = 0.01;
const TEMP_TOLERANCE_C: f64 = 0.25;
const KABSCH_GRID_TOLERANCE: f64 = 1e-6;
const TRANSFORM_TOLERANCE: f64 = 1e-9;
const MIN_RFID_SAFE_M: f64 = 1.0;
const VISION_PEAK_M: (f64, f64) = (0.3, 0.8);

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(rng.random_range(-extent..extent), rng.random_range(-extent..extent), rng.random_range(-extent..extent)))
        .collect()
}

/// Pose error against ground truth; spin about the axis of a turned object is not observable.
fn pose_error(object_id: &str, truth: &RigidTransform, est: &RigidTransform) -> (f64, f64) {
    let t = (truth.translation() - est.translation()).norm();
    let deg = if object_id == "mug" {
        rotation_angle_between(truth.rotation(), est.rotation()).to_degrees()
    } else {
        let (a, b) = (truth.rotation() * Vec3::y(), est.rotation() * Vec3::y());
        a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees()
    };
    (t, deg)
}

struct Suite {
    report: BenchReport,
    wall_s: f64,
}

fn run_suite() -> Suite {
    let db = builtin_db();
    let start = Instant::now();
    let report = run_benchmark(db, BENCH_VIEWS, BENCH_RANGE, &PoseMethod::ALL, BENCH_SEED).expect("benchmark runs");
    Suite { report, wall_s: start.elapsed().as_secs_f64() }
}

fn correct(report: &BenchReport, m: PoseMethod) -> usize {
    report.rows_for(m).filter(|r| r.identified.as_deref() == Some(r.object_id.as_str())).count()
}

fn criterion_1(s: &Suite) -> Outcome {
    let n = s.report.rows_for(PoseMethod::LfIcp).count();
    check(n == 15, || format!("expected 15 scenes, got {n}"))?;
    let (icp, lf_fpfh, fpfh) = (correct(&s.report, PoseMethod::LfIcp), correct(&s.report, PoseMethod::LfFpfh), correct(&s.report, PoseMethod::FpfhOnly));
    let msg = format!("LF_ICP {icp}/15, LF_FPFH {lf_fpfh}/15, FPFH_ONLY {fpfh}/15, suite {:.1} s", s.wall_s);
    check(icp >= MIN_LF_CORRECT && lf_fpfh >= MIN_LF_CORRECT, || msg.clone())?;
    check(fpfh <= icp.min(lf_fpfh), || msg.clone())?;
    check(s.wall_s < MAX_SUITE_SECONDS, || msg.clone())?;
    Ok(msg)
}

fn criterion_2(s: &Suite) -> Outcome {
    let mean = |m| {
        let t: Vec<f64> = s.report.rows_for(m).map(|r| r.time_s).collect();
        t.iter().sum::<f64>() / t.len() as f64
    };
    let (a, b, c) = (mean(PoseMethod::LfIcp), mean(PoseMethod::LfFpfh), mean(PoseMethod::FpfhOnly));
    let msg = format!("mean s/scene LF_ICP {a:.3} < LF_FPFH {b:.3} < FPFH_ONLY {c:.3}, speedup {:.1}x", c / a);
    check(a < b && b < c && c >= MIN_SPEEDUP_VS_FPFH * a, || msg.clone())?;
    Ok(msg)
}

fn criterion_3(s: &Suite) -> Outcome {
    let db = builtin_db();
    let k = CameraIntrinsics::vga();
    let mut ok = 0;
    for row in s.report.rows_for(PoseMethod::LfIcp) {
        let truth = view_pose(row.distance_m, row.yaw_deg.to_radians());
        let (Some(id), Some(est)) = (&row.identified, &row.estimate) else { continue };
        let obj = db.iter().find(|o| &o.object_id == id).unwrap();
        let (t, deg) = pose_error(&row.object_id, &truth, &est.m_pose.compose(&obj.viewpoint_frames[est.viewpoint_index]));
        ok += (id == &row.object_id && t <= POSE_TRANSLATION_M && deg <= POSE_ROTATION_DEG) as usize;
    }

    // residuals of one scene in ten recomputed exhaustively from regenerated scenes
    let rows: Vec<&SceneRow> = s.report.rows.iter().filter(|r| r.estimate.is_some()).collect();
    let mut oracle_checked = 0;
    for row in rows.iter().step_by(10) {
        let est = row.estimate.as_ref().unwrap();
        let obj = db.iter().find(|o| Some(&o.object_id) == row.identified.as_ref()).unwrap();
        let scene = generate_scene(db, &row.object_id, &view_pose(row.distance_m, row.yaw_deg.to_radians()), 0.0, row.scene_seed, &k).unwrap();
        let posed = est.m_pose.apply_cloud(&obj.viewpoint_clouds[est.viewpoint_index]);
        let oracle = brute_force_residual(scene.cloud.points(), posed.points());
        check(row.residual_m == Some(oracle), || format!("residual {:?} vs oracle {oracle} for {}", row.residual_m, row.object_id))?;
        oracle_checked += 1;
    }

    let noisy = run_benchmark_with(
        db,
        BENCH_VIEWS,
        BENCH_RANGE,
        &[PoseMethod::LfIcp],
        BENCH_SEED,
        &BenchOptions { noise_sigma: NOISE_SIGMA_M, ..Default::default() },
    )
    .expect("noisy benchmark runs");
    let res: Vec<f64> = noisy.rows.iter().map(|r| r.residual_m.unwrap_or(f64::INFINITY)).collect();
    let mean = res.iter().sum::<f64>() / res.len() as f64;
    let msg = format!(
        "{ok}/15 poses within 5 mm and 2 deg; mean residual with 1 mm noise {mean:.5} m; {oracle_checked} residuals match the exhaustive oracle"
    );
    check(ok >= MIN_POSE_OK && mean < MAX_NOISY_MEAN_RESIDUAL_M, || msg.clone())?;
    Ok(msg)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..100 {
        let (n, m) = (rng.random_range(1..=200), rng.random_range(1..=200));
        let a = random_points(&mut rng, n, 1.0);
        let b = random_points(&mut rng, m, 1.0);
        let got = residual_error(&PointCloud::new(a.clone()).unwrap(), &PointCloud::new(b.clone()).unwrap()).unwrap();
        let want = brute_force_residual(&a, &b);
        check(got == want, || format!("pair {i}: {got} != {want}"))?;
    }
    Ok("100 random pairs match the exhaustive residual exactly".into())
}

fn ellipsoid(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            Vec3::new(0.05 * r * phi.cos(), 0.035 * r * phi.sin(), 0.07 * z)
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

fn criterion_5() -> Outcome {
    let params = IcpParams::default();
    let noise = Normal::new(0.0, 0.001).unwrap();
    let template = ellipsoid(2000, 5);

    let id = icp(&template, &template, &RigidTransform::identity(), &params).unwrap();
    check(id.residual < 1e-9 && id.iterations <= 2, || format!("identity: residual {} after {} iterations", id.residual, id.iterations))?;

    let mut fixtures = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut histories = vec![id.mse_history];
    for _ in 0..10 {
        let truth = RigidTransform::from_rotation_vector(
            Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)),
            Vec3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01)),
        );
        let scene = PointCloud::new(
            template.points().iter().map(|p| truth.apply(p) + Vec3::from_fn(|_, _| noise.sample(&mut rng))).collect(),
        )
        .unwrap();
        histories.push(icp(&template, &scene, &RigidTransform::identity(), &params).unwrap().mse_history);
        fixtures += 1;
    }
    for (i, h) in histories.iter().enumerate() {
        check(h.windows(2).all(|w| w[1] <= w[0]), || format!("fixture {i}: MSE increased {h:?}"))?;
    }

    let pair_noise = Normal::new(0.0, 0.05).unwrap();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let truth = RigidTransform::from_rotation_vector(
            Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)),
            Vec3::new(0.3, -0.2, 1.0),
        );
        let pairs: Vec<_> = random_points(&mut rng, 10, 1.0)
            .into_iter()
            .map(|p| (p, truth.apply(&p) + Vec3::from_fn(|_, _| pair_noise.sample(&mut rng))))
            .collect();
        let t = kabsch_solve(&pairs).unwrap();
        let (grid_cost, grid_r) = grid_search_rotation(&pairs);
        let cost = rigid_cost(t.rotation(), &pairs);
        check(cost <= grid_cost + KABSCH_GRID_TOLERANCE, || format!("kabsch case {seed}: cost {cost} above grid {grid_cost}"))?;
        let deg = rotation_angle_between(t.rotation(), &grid_r).to_degrees();
        check(deg <= 1.0, || format!("kabsch case {seed}: {deg} deg from the grid optimum"))?;
    }
    Ok(format!("MSE non-increasing on {fixtures} fixtures, identity converges, kabsch matches the 0.5 deg grid on 20 cases"))
}

fn criterion_6() -> Outcome {
    for bits in 0..8u8 {
        let (a, b, c) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
        let want = match (a, b, c) {
            (false, true, true) => WaterLevel::Empty,
            (false, false, true) => WaterLevel::Middle,
            (false, false, false) => WaterLevel::Full,
            _ => WaterLevel::Unknown,
        };
        let got = decode_water_level(a, b, c);
        check(got == want, || format!("({a}, {b}, {c}) gave {got:?}, expected {want:?}"))?;
    }
    Ok("8 triples decoded; Empty/Middle/Full rows exact".into())
}

fn criterion_7() -> Outcome {
    let e = Epc::from_u128(7);
    let pop = PopulationConfig {
        antennas: vec![AntennaConfig { id: 1, position: [0.0; 3] }],
        tags: vec![TagConfig {
            epc: e,
            position: [0.5, 0.0, 0.0],
            has_temperature_ic: true,
            battery_assisted: false,
            water_detuned: false,
            ambient_celsius: 20.0,
        }],
    }
    .into_population()
    .unwrap();
    let reader = Arc::new(SimReader::new(pop, ChannelParams::default(), Clock::System).unwrap());
    let server = ReaderServer::spawn(reader.clone(), "127.0.0.1:0").unwrap();
    let mut client = ReaderClient::connect(server.local_addr(), Duration::from_secs(5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let result = (|| {
        for _ in 0..100 {
            let ambient: f64 = rng.random_range(-64.0..=64.0);
            reader.update_tag(&e, |t| t.ambient_celsius = ambient);
            client.write_word(&e, 3, 256, rng.random()).map_err(|err| err.to_string())?;
            let word = client.read_word(&e, 3, 256).map_err(|err| err.to_string())?;
            let celsius = (word as i16) as f64 * 0.25;
            worst = worst.max((celsius - ambient).abs());
            check((celsius - ambient).abs() <= TEMP_TOLERANCE_C, || format!("ambient {ambient} read back {celsius}"))?;
        }
        reader.update_tag(&e, |t| t.ambient_celsius = 80.0);
        let hot = client.trigger_temperature(&e, &mut rng).map_err(|err| err.to_string())?.celsius;
        check(hot == 64.0, || format!("80 C read back {hot}"))?;
        for q in -256i32..=256 {
            let c = q as f64 * 0.25;
            let w = encode_temp_word(c);
            check(w == (q as i16) as u16 && decode_temp_word(w) == c, || format!("codec mismatch at {c}"))?;
        }
        Ok(format!("100 ambients within {worst:.3} C over TCP, 80 C clamps to 64.0, 513 grid values exact"))
    })();
    drop(client);
    server.shutdown();
    result
}

fn random_message(rng: &mut ChaCha8Rng, ty: u8) -> Message {
    let e = |rng: &mut ChaCha8Rng| Epc(rng.random());
    let status = |rng: &mut ChaCha8Rng| [Status::Ok, Status::TagNotFound, Status::MemoryOverrun][rng.random_range(0..3)];
    match ty {
        msg_type::INVENTORY_REQ => Message::InventoryReq { antenna: if rng.random() { Some(rng.random()) } else { None } },
        msg_type::TAG_REPORT => Message::TagReport {
            tags: (0..rng.random_range(0..20))
                .map(|_| TagReportEntry { epc: e(rng), rssi_centi_dbm: rng.random(), antenna: rng.random(), timestamp_us: rng.random() })
                .collect(),
        },
        msg_type::WRITE_REQ => Message::WriteReq { epc: e(rng), bank: rng.random(), wordptr: rng.random(), word: rng.random() },
        msg_type::WRITE_RESP => Message::WriteResp { status: status(rng) },
        msg_type::READ_REQ => Message::ReadReq { epc: e(rng), bank: rng.random(), wordptr: rng.random() },
        _ => Message::ReadResp { status: status(rng), word: rng.random() },
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for ty in 1..=6u8 {
        for i in 0..1000 {
            let m = random_message(&mut rng, ty);
            let bytes = encode_message(&m).map_err(|e| e.to_string())?;
            let back = decode_message(&bytes).map_err(|e| format!("type {ty} case {i}: {e}"))?;
            check(back == m && encode_message(&back).unwrap() == bytes, || format!("type {ty} case {i} not bit-exact"))?;
        }
        let good = encode_message(&random_message(&mut rng, ty)).unwrap();
        let mut bad = good.clone();
        bad[0] ^= 0xFF;
        check(matches!(decode_message(&bad), Err(ProtocolError::BadMagic(_))), || format!("type {ty}: bad magic accepted"))?;
        for cut in 0..good.len() {
            check(matches!(decode_message(&good[..cut]), Err(ProtocolError::Truncated { .. })), || format!("type {ty}: cut at {cut}"))?;
        }
        for unknown in [0u8, 7, 0x80, 0xFF] {
            let mut bad = good.clone();
            bad[3] = unknown;
            check(decode_message(&bad) == Err(ProtocolError::UnknownMessageType(unknown)), || format!("type byte {unknown} accepted"))?;
        }
    }
    // arbitrary bytes, including valid headers with garbage payloads, must not panic
    for _ in 0..5000 {
        let n = rng.random_range(0..48);
        let mut bytes: Vec<u8> = (0..n).map(|_| rng.random()).collect();
        if n >= 4 && rng.random() {
            let ty = rng.random_range(1..=6);
            let head = encode_message(&random_message(&mut rng, ty)).unwrap();
            bytes[..4].copy_from_slice(&head[..4]);
        }
        let _ = decode_message(&bytes);
    }
    Ok("6000 round-trips bit-exact; bad magic, truncation and unknown types rejected; 5000 random frames decoded without panic".into())
}

fn criterion_9() -> Outcome {
    let fixture = VisionFixture { object_id: "mug".into(), intrinsics: CameraIntrinsics::vga(), features: Default::default() };
    let report = working_range_sweep(builtin_db(), &ChannelParams::default(), &fixture, 0.15, 2.0, 38).map_err(|e| e.to_string())?;
    let rows = &report.rows;
    check(rows.windows(2).all(|w| w[1].rfid_score <= w[0].rfid_score), || "rfid_score increases with distance".into())?;
    // safe range: the run of rows from the nearest distance with score >= 0.5
    let safe_end = rows.iter().take_while(|r| r.rfid_score >= 0.5).last().map_or(0.0, |r| r.distance_m);
    let peak = rows.iter().max_by(|a, b| a.vision_score.total_cmp(&b.vision_score)).unwrap().distance_m;
    let msg = format!("rfid monotone, safe to {safe_end:.2} m; vision peak at {peak:.2} m");
    check(safe_end >= MIN_RFID_SAFE_M && (VISION_PEAK_M.0..=VISION_PEAK_M.1).contains(&peak), || msg.clone())?;
    Ok(msg)
}

fn criterion_10() -> Outcome {
    let f = scripted_mug_fixture();
    check(f.annotations.len() == 1, || format!("{} annotations", f.annotations.len()))?;
    let a = &f.annotations[0];
    check(a.world_pose.is_some() && a.water_level.is_some() && a.temperature_celsius.is_some(), || format!("missing field in {a:?}"))?;
    check(!a.stale.pose && !a.stale.water && !a.stale.temp, || "fresh annotation marked stale".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let cal = CalibrationSet { t_depcam_to_hololens: random_transform(&mut rng), t_hololens_to_world: random_transform(&mut rng) };
        let m = random_transform(&mut rng);
        let oracle = dense_mat4_product(&dense_mat4_product(&to_rows(&cal.t_hololens_to_world), &to_rows(&cal.t_depcam_to_hololens)), &to_rows(&m));
        let got = to_rows(&to_world_pose(&m, &cal));
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((got[i][j] - oracle[i][j]).abs());
            }
        }
    }
    check(worst <= TRANSFORM_TOLERANCE, || format!("transform chain off by {worst:e}"))?;

    let policy = StalenessPolicy::default();
    check(f.registry.snapshot(f.now_us, &policy) == f.registry.snapshot(f.now_us, &policy), || "snapshot not idempotent".into())?;
    let last_pose = 1_000_000;
    let at_ttl = f.registry.snapshot(last_pose + policy.pose_ttl_us, &policy);
    let past_ttl = f.registry.snapshot(last_pose + policy.pose_ttl_us + 1, &policy);
    check(!at_ttl[0].stale.pose && past_ttl[0].stale.pose, || "pose staleness does not switch at the TTL".into())?;
    check(!past_ttl[0].stale.water && !past_ttl[0].stale.temp, || "sensor fields aged with the pose".into())?;
    let late = f.registry.snapshot(f.now_us + 60_000_000, &policy);
    check(late[0].stale.water && late[0].stale.temp, || "sensor fields never go stale".into())?;
    Ok(format!("one annotation with pose, water {:?}, {:.2} C; chain within {worst:.1e}; idempotent; TTL flags correct", a.water_level.unwrap(), a.temperature_celsius.unwrap()))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(format!(
            "panicked: {}",
            p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
        )),
    }
}

fn main() {
    // libtest flags such as --nocapture or a name filter are accepted and ignored
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let suite = catch_unwind(run_suite).map_err(|_| "benchmark panicked".to_string());
    let suite = &suite;
    let with_suite = |f: fn(&Suite) -> Outcome| move || match suite {
        Ok(s) => f(s),
        Err(e) => Err(e.clone()),
    };
    let results = [
        guarded(with_suite(criterion_1)),
        guarded(with_suite(criterion_2)),
        guarded(with_suite(criterion_3)),
        guarded(criterion_4),
        guarded(criterion_5),
        guarded(criterion_6),
        guarded(criterion_7),
        guarded(criterion_8),
        guarded(criterion_9),
        guarded(criterion_10),
    ];
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(msg) => println!("PASS criterion {}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
