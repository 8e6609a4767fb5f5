use std::fs;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xvision::features::{load_database, save_database, FeatureParams, TemplateObject};
use xvision::fusion::{write_annotations, RfidBatch, Registry, ServerConfig, VisionEvent};
use xvision::geometry::io::{load_depth, load_gray, load_ply, save_depth, save_gray, save_ply, DepthSidecar};
use xvision::harness::{
    build_builtin_database, generate_scene, run_benchmark_with, view_pose, working_range_sweep, BenchOptions, DbBuildParams, VisionFixture,
};
use xvision::registration::{estimate_pose, PoseMethod, PoseParams, SceneInput};
use xvision::rfid::{ChannelParams, Clock, PopulationConfig, ReaderClient, ReaderServer, SimReader, TagRole, TemperatureReading};
use xvision::{CameraIntrinsics, RigidTransform};

/// Depth PGMs store tenths of a millimeter.
const DEPTH_SCALE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "xvision", version, about = "Object identification, pose estimation and RFID sensing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the built-in three-object template database.
    BuildDb {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic scene of one database object.
    RenderScene(RenderArgs),
    /// Identify the in-view object and estimate its pose.
    EstimatePose(EstimateArgs),
    /// Run the recognition benchmark.
    Bench(BenchArgs),
    /// Sweep camera and reader distance and score both sensors.
    RangeSweep(SweepArgs),
    /// Serve a simulated RFID reader over TCP.
    ReaderSim(ReaderSimArgs),
    /// Fuse a scene stream with reader data into annotations.
    Fuse(FuseArgs),
}

#[derive(Args)]
struct FeatureArgs {
    /// Matches needed to accept an identification.
    #[arg(long, default_value_t = FeatureParams::default().min_matches)]
    min_matches: usize,
    /// Lowe ratio for descriptor matching.
    #[arg(long, default_value_t = FeatureParams::default().ratio)]
    ratio: f32,
}

impl FeatureArgs {
    fn params(&self) -> Result<FeatureParams> {
        if self.min_matches == 0 || !(self.ratio > 0.0 && self.ratio <= 1.0) {
            bail!("need --min-matches >= 1 and --ratio in (0, 1]");
        }
        Ok(FeatureParams { min_matches: self.min_matches, ratio: self.ratio, ..Default::default() })
    }
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    object: String,
    #[arg(long, default_value_t = 0.4)]
    distance: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    yaw_deg: f64,
    /// Depth noise sigma in meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving image.pgm, depth.pgm, depth.json, scene.ply and truth.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, default_value = "lf-icp")]
    method: PoseMethod,
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Depth PGM with its JSON sidecar next to it.
    #[arg(long)]
    depth: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    features: FeatureArgs,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long, default_value_t = 5)]
    views: usize,
    #[arg(long, default_value = "0.3:0.5", value_parser = parse_range)]
    range: (f64, f64),
    #[arg(long, value_delimiter = ',', default_value = "lf-icp,lf-fpfh,fpfh")]
    methods: Vec<PoseMethod>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Depth noise sigma in meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long, default_value = "mug")]
    object: String,
    #[arg(long, default_value_t = 0.15)]
    min: f64,
    #[arg(long, default_value_t = 2.0)]
    max: f64,
    #[arg(long, default_value_t = 38)]
    steps: usize,
    /// Channel parameters as JSON; defaults when absent.
    #[arg(long)]
    channel: Option<PathBuf>,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ReaderSimArgs {
    /// Population config (antennas and tags) as JSON.
    #[arg(long)]
    population: PathBuf,
    #[arg(long, default_value = "127.0.0.1:5084")]
    listen: String,
    #[arg(long)]
    channel: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    /// Server config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Directory of scene directories as written by render-scene, processed in name order.
    #[arg(long)]
    scenes: PathBuf,
    /// Population for the in-process reader, used when the config names no reader endpoint.
    #[arg(long)]
    population: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// NDJSON output; stdout when absent and the config has no listen endpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got '{s}'"))?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok((lo, hi))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_db(path: &Path, features: &FeatureParams) -> Result<Vec<TemplateObject>> {
    load_database(path, features).with_context(|| format!("loading database {}", path.display()))
}

fn channel_params(path: Option<&Path>) -> Result<ChannelParams> {
    let p = match path {
        Some(p) => read_json(p)?,
        None => ChannelParams::default(),
    };
    p.validate()?;
    Ok(p)
}

/// Prints a line; a closed stdout (e.g. piped into `head`) is not an error.
fn say(args: std::fmt::Arguments) -> Result<()> {
    match writeln!(std::io::stdout(), "{args}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn now_us() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0)
}

#[derive(Serialize, Deserialize)]
struct SceneTruth {
    object_id: String,
    pose: RigidTransform,
    noise_sigma: f64,
    seed: u64,
}

fn render_scene(a: &RenderArgs) -> Result<()> {
    let db = load_db(&a.db, &FeatureParams::default())?;
    let k = CameraIntrinsics::vga();
    let pose = view_pose(a.distance, a.yaw_deg.to_radians());
    let scene = generate_scene(&db, &a.object, &pose, a.noise, a.seed, &k)?;
    fs::create_dir_all(&a.out)?;
    save_gray(&scene.gray, &a.out.join("image.pgm"))?;
    save_depth(&scene.depth, &DepthSidecar { depth_scale: DEPTH_SCALE, intrinsics: k }, &a.out.join("depth.pgm"))?;
    save_ply(&scene.cloud, &a.out.join("scene.ply"))?;
    write_json(&a.out.join("truth.json"), &SceneTruth { object_id: a.object.clone(), pose, noise_sigma: a.noise, seed: a.seed })?;
    info!("rendered {} points to {}", scene.cloud.len(), a.out.display());
    Ok(())
}

/// Pose estimate as emitted by `estimate-pose`; matrices are row-major 4×4.
#[derive(Serialize)]
struct PoseReport {
    method: PoseMethod,
    object_id: Option<String>,
    viewpoint_index: Option<usize>,
    m_ini: Option<RigidTransform>,
    m_icp: Option<RigidTransform>,
    m_pose: Option<RigidTransform>,
    object_pose: Option<RigidTransform>,
    residual: Option<f64>,
    timings: xvision::registration::StageTimings,
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let features = a.features.params()?;
    let db = load_db(&a.db, &features)?;
    let image = load_gray(&a.image)?;
    let (depth, sidecar) = load_depth(&a.depth)?;
    let cloud = load_ply(&a.scene)?;
    let input = SceneInput { image: &image, depth: &depth, intrinsics: &sidecar.intrinsics, cloud: &cloud };
    let params = PoseParams { features, seed: a.seed, ..Default::default() };
    let out = estimate_pose(a.method, input, &db, &params)?;
    let r = out.result.as_ref();
    let report = PoseReport {
        method: out.method,
        object_id: r.map(|r| r.object_id.clone()),
        viewpoint_index: r.map(|r| r.estimate.viewpoint_index),
        m_ini: r.map(|r| r.estimate.m_ini),
        m_icp: r.map(|r| r.estimate.m_icp),
        m_pose: r.map(|r| r.estimate.m_pose),
        object_pose: r.map(|r| r.object_pose),
        residual: r.map(|r| r.estimate.residual),
        timings: out.timings,
    };
    match &a.out {
        Some(path) => write_json(path, &report),
        None => {
            say(format_args!("{}", serde_json::to_string_pretty(&report)?))?;
            Ok(())
        }
    }
}

fn bench(a: &BenchArgs) -> Result<()> {
    let features = a.features.params()?;
    let db = load_db(&a.db, &features)?;
    let options = BenchOptions { pose: PoseParams { features, ..Default::default() }, noise_sigma: a.noise, ..Default::default() };
    let report = run_benchmark_with(&db, a.views, a.range, &a.methods, a.seed, &options)?;
    for m in &report.methods {
        say(format_args!(
            "{:8} accuracy {}/{}  mean residual {}  mean time {:.3} s",
            m.method.as_str(),
            m.correct,
            m.scenes,
            m.mean_residual_m.map_or("n/a".to_string(), |r| format!("{r:.5} m")),
            m.mean_time_s
        ))?;
    }
    write_json(&a.out, &report)
}

fn range_sweep(a: &SweepArgs) -> Result<()> {
    let db = load_db(&a.db, &FeatureParams::default())?;
    let channel = channel_params(a.channel.as_deref())?;
    let fixture = VisionFixture { object_id: a.object.clone(), intrinsics: CameraIntrinsics::vga(), features: FeatureParams::default() };
    let report = working_range_sweep(&db, &channel, &fixture, a.min, a.max, a.steps)?;
    fs::write(&a.out, report.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    say(format_args!("rfid safe ranges: {:?}", report.rfid_safe_ranges))?;
    say(format_args!("vision safe ranges: {:?}", report.vision_safe_ranges))?;
    Ok(())
}

fn reader_sim(a: &ReaderSimArgs) -> Result<()> {
    let population = PopulationConfig::load(&a.population)?.into_population()?;
    let reader = SimReader::new(population, channel_params(a.channel.as_deref())?, Clock::System)?;
    let server = ReaderServer::spawn(Arc::new(reader), &a.listen)?;
    say(format_args!("listening on {}", server.local_addr()))?;
    std::io::stdout().flush()?;
    server.join();
    Ok(())
}

enum ReaderLink {
    Remote(ReaderClient<std::net::TcpStream>),
    Local(ReaderClient<std::net::TcpStream>, ReaderServer),
}

impl ReaderLink {
    fn client(&mut self) -> &mut ReaderClient<std::net::TcpStream> {
        match self {
            ReaderLink::Remote(c) | ReaderLink::Local(c, _) => c,
        }
    }
}

fn fuse(a: &FuseArgs) -> Result<()> {
    let config = ServerConfig::load(&a.config)?;
    let policy = config.policy()?;
    let db = load_db(Path::new(&config.registry_path), &FeatureParams::default())?;
    let registry = Registry::from_database(&db)?;
    let mut link = match (&config.reader_endpoint, &a.population) {
        (Some(ep), _) => {
            let addr = ep.parse().with_context(|| format!("reader endpoint '{ep}'"))?;
            ReaderLink::Remote(ReaderClient::connect(addr, Duration::from_secs(5))?)
        }
        (None, Some(pop)) => {
            let population = PopulationConfig::load(pop)?.into_population()?;
            let reader = SimReader::new(population, ChannelParams::default(), Clock::System)?;
            let server = ReaderServer::spawn(Arc::new(reader), "127.0.0.1:0")?;
            let client = ReaderClient::connect(server.local_addr(), Duration::from_secs(5))?;
            ReaderLink::Local(client, server)
        }
        (None, None) => bail!("the config names no reader endpoint; pass --population for an in-process reader"),
    };
    let temperature_epcs: Vec<_> =
        db.iter().flat_map(|o| o.epc_bindings.iter()).filter(|b| b.role == TagRole::Temperature).map(|b| b.epc).collect();

    let mut scene_dirs: Vec<PathBuf> = fs::read_dir(&a.scenes)
        .with_context(|| format!("reading {}", a.scenes.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("image.pgm").is_file())
        .collect();
    scene_dirs.sort();
    if scene_dirs.is_empty() {
        bail!("no scenes under {}", a.scenes.display());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let params = PoseParams { seed: a.seed, ..Default::default() };
    let mut lines = Vec::new();
    for dir in &scene_dirs {
        let image = load_gray(&dir.join("image.pgm"))?;
        let (depth, sidecar) = load_depth(&dir.join("depth.pgm"))?;
        let cloud = load_ply(&dir.join("scene.ply"))?;
        let input = SceneInput { image: &image, depth: &depth, intrinsics: &sidecar.intrinsics, cloud: &cloud };
        let out = estimate_pose(PoseMethod::LfIcp, input, &db, &params)?;
        if let Some(r) = out.result {
            let event = VisionEvent { object_id: r.object_id, m_pose_depcam: r.object_pose, timestamp_us: now_us() };
            registry.ingest_vision(&event, &config.calibration)?;
        }
        let client = link.client();
        let events = client.inventory(None)?;
        let mut temperatures: Vec<TemperatureReading> = Vec::new();
        for epc in temperature_epcs.iter().filter(|e| events.iter().any(|ev| ev.epc == **e)) {
            temperatures.push(client.trigger_temperature(epc, &mut rng)?);
        }
        registry.ingest_rfid(&RfidBatch { timestamp_us: now_us(), events, temperatures });
        let snapshot = registry.snapshot(now_us(), &policy);
        info!("{}: {} annotations", dir.display(), snapshot.len());
        lines.extend(snapshot);
    }
    if let ReaderLink::Local(client, server) = link {
        drop(client);
        server.shutdown();
    }

    if let Some(path) = &a.out {
        let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
        write_annotations(&mut w, &lines)?;
        w.flush()?;
    }
    if let Some(ep) = &config.listen_endpoint {
        let listener = TcpListener::bind(ep).with_context(|| format!("binding {ep}"))?;
        say(format_args!("serving annotations on {}", listener.local_addr()?))?;
        std::io::stdout().flush()?;
        let (mut stream, peer) = listener.accept()?;
        info!("annotation client {peer}");
        write_annotations(&mut stream, &lines)?;
    } else if a.out.is_none() {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        write_annotations(&mut lock, &lines)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::BuildDb { out } => {
            let db = build_builtin_database(&DbBuildParams::default(), &CameraIntrinsics::vga())?;
            save_database(&db, out)?;
            say(format_args!("wrote {} objects to {}", db.len(), out.display()))?;
            Ok(())
        }
        Command::RenderScene(a) => render_scene(a),
        Command::EstimatePose(a) => estimate(a),
        Command::Bench(a) => bench(a),
        Command::RangeSweep(a) => range_sweep(a),
        Command::ReaderSim(a) => reader_sim(a),
        Command::Fuse(a) => fuse(a),
    }
}
