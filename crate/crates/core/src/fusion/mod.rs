//! World-frame fusion of vision poses and RFID sensor readings.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::TemplateObject;
use crate::geometry::RigidTransform;
use crate::rfid::{decode_water_level, Epc, EpcBinding, ReadEvent, TagRole, TemperatureReading, WaterLevel};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("EPC {epc} is bound to both '{first}' and '{second}'")]
    ConflictingBinding { epc: Epc, first: String, second: String },
    #[error("duplicate object '{0}'")]
    DuplicateObject(String),
    #[error("config: {0}")]
    Config(String),
    #[error("annotation stream: {0}")]
    Stream(String),
}

/// Depth camera → headset → world calibration chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub t_depcam_to_hololens: RigidTransform,
    /// Updated on every head-pose event.
    pub t_hololens_to_world: RigidTransform,
}


/// `T_h2w · (T_d2h · M)`.
pub fn to_world_pose(m_pose_depcam: &RigidTransform, cal: &CalibrationSet) -> RigidTransform {
    cal.t_hololens_to_world.compose(&cal.t_depcam_to_hololens.compose(m_pose_depcam))
}

/// A pose estimate from the vision pipeline, in the depth-camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionEvent {
    pub object_id: String,
    pub m_pose_depcam: RigidTransform,
    pub timestamp_us: u64,
}

/// One RFID poll: the inventory round plus any temperature readings taken with it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RfidBatch {
    pub timestamp_us: u64,
    pub events: Vec<ReadEvent>,
    pub temperatures: Vec<TemperatureReading>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    WaterLevel,
    Temperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorValue {
    WaterLevel(WaterLevel),
    Temperature(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRegistryEntry {
    pub object_id: String,
    pub epc_bindings: Vec<EpcBinding>,
    pub latest_world_pose: Option<(RigidTransform, u64)>,
    pub sensor_state: BTreeMap<SensorKind, (SensorValue, u64)>,
    pub model_ref: String,
}

impl ObjectRegistryEntry {
    pub fn new(object_id: impl Into<String>, epc_bindings: Vec<EpcBinding>, model_ref: impl Into<String>) -> Self {
        Self {
            object_id: object_id.into(),
            epc_bindings,
            latest_world_pose: None,
            sensor_state: BTreeMap::new(),
            model_ref: model_ref.into(),
        }
    }

    fn rig(&self) -> Option<[Epc; 3]> {
        let find = |role| self.epc_bindings.iter().find(|b| b.role == role).map(|b| b.epc);
        Some([find(TagRole::WaterA)?, find(TagRole::WaterB)?, find(TagRole::WaterC)?])
    }

    /// Last-writer-wins by timestamp; older values are dropped.
    fn set_sensor(&mut self, kind: SensorKind, value: SensorValue, ts: u64) -> bool {
        match self.sensor_state.get(&kind) {
            Some((_, old)) if ts < *old => false,
            _ => {
                self.sensor_state.insert(kind, (value, ts));
                true
            }
        }
    }
}

/// Time-to-live per field, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StalenessPolicy {
    pub pose_ttl_us: u64,
    pub sensor_ttl_us: u64,
}

impl Default for StalenessPolicy {
    fn default() -> Self {
        Self { pose_ttl_us: 2_000_000, sensor_ttl_us: 10_000_000 }
    }
}

impl StalenessPolicy {
    pub fn uniform(ttl_us: u64) -> Self {
        Self { pose_ttl_us: ttl_us, sensor_ttl_us: ttl_us }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Staleness {
    pub pose: bool,
    pub water: bool,
    pub temp: bool,
}

/// Fused state of one object at a point in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedAnnotation {
    pub object_id: String,
    /// Row-major 4×4, or null before the first pose.
    pub world_pose: Option<RigidTransform>,
    pub water_level: Option<WaterLevel>,
    pub temperature_celsius: Option<f64>,
    pub stale: Staleness,
    /// Newest timestamp among the fields present.
    pub timestamp_us: u64,
}

#[derive(Debug, Default)]
struct Inner {
    entries: BTreeMap<String, ObjectRegistryEntry>,
    epc_index: HashMap<Epc, (String, TagRole)>,
    unknown_epcs: u64,
}

/// Shared object registry. Each ingest is applied under one write lock and
/// snapshots hold the read lock, so a snapshot never sees half an update.
#[derive(Debug, Default)]
pub struct Registry {
    inner: RwLock<Inner>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_database(db: &[TemplateObject]) -> Result<Self, FusionError> {
        let reg = Self::new();
        for obj in db {
            reg.register(ObjectRegistryEntry::new(obj.object_id.clone(), obj.epc_bindings.clone(), obj.model_ref.clone()))?;
        }
        Ok(reg)
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn register(&self, entry: ObjectRegistryEntry) -> Result<(), FusionError> {
        let mut inner = self.write();
        if inner.entries.contains_key(&entry.object_id) {
            return Err(FusionError::DuplicateObject(entry.object_id));
        }
        for b in &entry.epc_bindings {
            if let Some((other, _)) = inner.epc_index.get(&b.epc) {
                return Err(FusionError::ConflictingBinding { epc: b.epc, first: other.clone(), second: entry.object_id.clone() });
            }
        }
        for b in &entry.epc_bindings {
            inner.epc_index.insert(b.epc, (entry.object_id.clone(), b.role));
        }
        inner.entries.insert(entry.object_id.clone(), entry);
        Ok(())
    }

    /// Stores the world pose unless the event is older than the stored one.
    /// Returns whether the state changed.
    pub fn ingest_vision(&self, event: &VisionEvent, cal: &CalibrationSet) -> Result<bool, FusionError> {
        let mut inner = self.write();
        let entry = inner.entries.get_mut(&event.object_id).ok_or_else(|| FusionError::UnknownObject(event.object_id.clone()))?;
        if let Some((_, ts)) = entry.latest_world_pose {
            if event.timestamp_us < ts {
                return Ok(false);
            }
        }
        entry.latest_world_pose = Some((to_world_pose(&event.m_pose_depcam, cal), event.timestamp_us));
        Ok(true)
    }

    /// Resolves EPCs to objects, decodes water-level rigs from tag presence and
    /// stores temperatures. Unbound EPCs only bump the diagnostics counter.
    pub fn ingest_rfid(&self, batch: &RfidBatch) {
        let mut inner = self.write();
        let Inner { entries, epc_index, unknown_epcs } = &mut *inner;
        for ev in &batch.events {
            if !epc_index.contains_key(&ev.epc) {
                *unknown_epcs += 1;
            }
        }
        for entry in entries.values_mut() {
            if let Some([a, b, c]) = entry.rig() {
                let seen = |e: Epc| batch.events.iter().any(|ev| ev.epc == e);
                let level = decode_water_level(seen(a), seen(b), seen(c));
                entry.set_sensor(SensorKind::WaterLevel, SensorValue::WaterLevel(level), batch.timestamp_us);
            }
        }
        for t in &batch.temperatures {
            match epc_index.get(&t.epc) {
                Some((id, _)) => {
                    let entry = entries.get_mut(id).expect("index refers to registered objects");
                    entry.set_sensor(SensorKind::Temperature, SensorValue::Temperature(t.celsius), t.timestamp_us);
                }
                None => *unknown_epcs += 1,
            }
        }
    }

    /// Number of observations whose EPC is not bound to any object.
    pub fn unknown_epc_count(&self) -> u64 {
        self.read().unknown_epcs
    }

    pub fn entry(&self, object_id: &str) -> Option<ObjectRegistryEntry> {
        self.read().entries.get(object_id).cloned()
    }

    /// One annotation per object with any known state, sorted by object id.
    pub fn snapshot(&self, now_us: u64, policy: &StalenessPolicy) -> Vec<AugmentedAnnotation> {
        let inner = self.read();
        let stale = |ts: u64, ttl: u64| now_us.saturating_sub(ts) > ttl;
        inner
            .entries
            .values()
            .filter_map(|e| {
                let water = e.sensor_state.get(&SensorKind::WaterLevel);
                let temp = e.sensor_state.get(&SensorKind::Temperature);
                if e.latest_world_pose.is_none() && water.is_none() && temp.is_none() {
                    return None;
                }
                let timestamp_us = [e.latest_world_pose.map(|p| p.1), water.map(|w| w.1), temp.map(|t| t.1)]
                    .into_iter()
                    .flatten()
                    .max()
                    .unwrap_or(0);
                Some(AugmentedAnnotation {
                    object_id: e.object_id.clone(),
                    world_pose: e.latest_world_pose.map(|p| p.0),
                    water_level: water.and_then(|(v, _)| match v {
                        SensorValue::WaterLevel(l) => Some(*l),
                        SensorValue::Temperature(_) => None,
                    }),
                    temperature_celsius: temp.and_then(|(v, _)| match v {
                        SensorValue::Temperature(c) => Some(*c),
                        SensorValue::WaterLevel(_) => None,
                    }),
                    stale: Staleness {
                        pose: e.latest_world_pose.is_some_and(|p| stale(p.1, policy.pose_ttl_us)),
                        water: water.is_some_and(|w| stale(w.1, policy.sensor_ttl_us)),
                        temp: temp.is_some_and(|t| stale(t.1, policy.sensor_ttl_us)),
                    },
                    timestamp_us,
                })
            })
            .collect()
    }
}

/// Writes one JSON object per line.
pub fn write_annotations(w: &mut impl Write, annotations: &[AugmentedAnnotation]) -> std::io::Result<()> {
    for a in annotations {
        serde_json::to_writer(&mut *w, a).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Parses an annotation stream, skipping blank lines.
pub fn read_annotations(r: impl BufRead) -> Result<Vec<AugmentedAnnotation>, FusionError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| FusionError::Stream(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| FusionError::Stream(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// Fusion server settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    #[serde(default = "default_pose_ttl")]
    pub pose_ttl_s: f64,
    #[serde(default = "default_sensor_ttl")]
    pub sensor_ttl_s: f64,
    /// Template database directory the registry is built from.
    pub registry_path: String,
    /// `host:port` of the reader service; `None` runs an in-process simulated reader.
    #[serde(default)]
    pub reader_endpoint: Option<String>,
    /// `host:port` to serve the annotation stream on; `None` writes to stdout or a file.
    #[serde(default)]
    pub listen_endpoint: Option<String>,
    #[serde(default)]
    pub calibration: CalibrationSet,
}

fn default_pose_ttl() -> f64 {
    2.0
}

fn default_sensor_ttl() -> f64 {
    10.0
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let text = std::fs::read_to_string(path).map_err(|e| FusionError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ServerConfig = serde_json::from_str(&text).map_err(|e| FusionError::Config(format!("{}: {e}", path.display())))?;
        cfg.policy()?;
        Ok(cfg)
    }

    pub fn policy(&self) -> Result<StalenessPolicy, FusionError> {
        let us = |s: f64| {
            if s.is_finite() && s >= 0.0 {
                Ok((s * 1e6).round() as u64)
            } else {
                Err(FusionError::Config(format!("invalid ttl {s}")))
            }
        };
        Ok(StalenessPolicy { pose_ttl_us: us(self.pose_ttl_s)?, sensor_ttl_us: us(self.sensor_ttl_s)? })
    }
}
