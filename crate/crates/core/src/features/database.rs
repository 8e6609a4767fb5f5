//! Template objects and their on-disk layout.
//!
//! ```text
//! <db>/<object_id>/manifest.json
//!                 /template_00.pgm   template image
//!                 /template_00.desc  descriptor cache (XVDS container, dim 64)
//!                 /template_00.kp    keypoint cache   (XVDS container, dim 4: u, v, scale, response)
//!                 /viewpoint_00.ply  viewpoint cloud
//!                 /model.ply         optional full-surface colored model
//! ```
//!
//! An XVDS container is a 16-byte header (magic `XVDS`, version u32, count u32,
//! dim u32) followed by `count × dim` 32-bit floats, all little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{extract_features, Descriptor, FeatureError, FeatureParams, Keypoint, DESCRIPTOR_DIM};
use crate::geometry::io::{load_gray, load_ply, save_gray, save_ply};
use crate::geometry::{GrayImage, PointCloud, RigidTransform};
use crate::rfid::{Epc, EpcBinding};

pub const XVDS_MAGIC: [u8; 4] = *b"XVDS";
pub const XVDS_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const CAMERA_CONVENTION: &str = "pinhole, right-handed: +x right, +y down, +z forward";
/// Viewpoint clouds are captured by a camera on the view frame's -z axis at this distance (m).
pub const VIEW_CAMERA_DISTANCE: f64 = 0.4;

/// A template image with its precomputed features.
#[derive(Debug, Clone)]
pub struct TemplateImage {
    pub image: GrayImage,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl TemplateImage {
    pub fn from_image(image: GrayImage, params: &FeatureParams) -> Result<Self, FeatureError> {
        let (keypoints, descriptors) = extract_features(&image, params)?;
        Ok(Self { image, keypoints, descriptors })
    }
}

/// One identifiable object.
///
/// Viewpoint cloud `k` is expressed in its own frame; `viewpoint_frames[k]`
/// maps canonical object coordinates into that frame, so a pose estimated for
/// viewpoint `k` is turned into the canonical object pose by composing with it.
#[derive(Debug, Clone)]
pub struct TemplateObject {
    pub object_id: String,
    pub template_images: Vec<TemplateImage>,
    pub viewpoint_clouds: Vec<PointCloud>,
    pub viewpoint_frames: Vec<RigidTransform>,
    pub epc_bindings: Vec<EpcBinding>,
    /// Full-surface colored model used by the synthetic renderer.
    pub model_cloud: Option<PointCloud>,
    /// Asset reference handed to consumers for display.
    pub model_ref: String,
}

impl TemplateObject {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |msg: String| Err(FeatureError::InvalidDatabase(msg));
        if self.template_images.is_empty() {
            return bad(format!("object '{}' has no template image", self.object_id));
        }
        if self.viewpoint_clouds.is_empty() {
            return bad(format!("object '{}' has no viewpoint cloud", self.object_id));
        }
        if self.viewpoint_frames.len() != self.viewpoint_clouds.len() {
            return bad(format!("object '{}': viewpoint frame count does not match clouds", self.object_id));
        }
        if self.viewpoint_clouds.iter().any(PointCloud::is_empty) {
            return bad(format!("object '{}' has an empty viewpoint cloud", self.object_id));
        }
        Ok(())
    }

    pub fn epcs(&self) -> impl Iterator<Item = Epc> + '_ {
        self.epc_bindings.iter().map(|b| b.epc)
    }

    /// Pose of the canonical object frame given a pose estimated for viewpoint `k`.
    pub fn object_pose(&self, viewpoint: usize, pose: &RigidTransform) -> RigidTransform {
        pose.compose(&self.viewpoint_frames[viewpoint])
    }
}

/// Checks per-object invariants and id uniqueness.
pub fn validate_database(db: &[TemplateObject]) -> Result<(), FeatureError> {
    if db.is_empty() {
        return Err(FeatureError::EmptyDatabase);
    }
    for (i, obj) in db.iter().enumerate() {
        obj.validate()?;
        if db[..i].iter().any(|o| o.object_id == obj.object_id) {
            return Err(FeatureError::InvalidDatabase(format!("duplicate object id '{}'", obj.object_id)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ViewpointEntry {
    file: String,
    frame: RigidTransform,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    object_id: String,
    camera_convention: String,
    model_ref: String,
    epc_bindings: Vec<EpcBinding>,
    template_images: Vec<String>,
    viewpoint_clouds: Vec<ViewpointEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_cloud: Option<String>,
}

/// Serializes a row-major float matrix into an XVDS container.
pub fn encode_xvds(rows: &[Vec<f32>], dim: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + rows.len() * dim * 4);
    out.extend_from_slice(&XVDS_MAGIC);
    out.extend_from_slice(&XVDS_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for row in rows {
        assert_eq!(row.len(), dim);
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses an XVDS container into `(dim, rows)`.
pub fn decode_xvds(bytes: &[u8]) -> Result<(usize, Vec<Vec<f32>>), FeatureError> {
    let bad = |msg: &str| FeatureError::DescriptorFile(msg.to_string());
    if bytes.len() < 16 {
        return Err(bad("shorter than header"));
    }
    if bytes[..4] != XVDS_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    if word(4) != XVDS_VERSION as usize {
        return Err(bad("unsupported version"));
    }
    let (count, dim) = (word(8), word(12));
    let body = &bytes[16..];
    if dim == 0 || body.len() != count * dim * 4 {
        return Err(bad("payload size does not match header"));
    }
    let values: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((dim, values.chunks_exact(dim).map(<[f32]>::to_vec).collect()))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FeatureError + '_ {
    move |e| FeatureError::InvalidDatabase(format!("{}: {e}", path.display()))
}

fn write_features(t: &TemplateImage, stem: &Path) -> Result<(), FeatureError> {
    let desc: Vec<Vec<f32>> = t.descriptors.iter().map(|d| d.0.to_vec()).collect();
    let kps: Vec<Vec<f32>> =
        t.keypoints.iter().map(|k| vec![k.u as f32, k.v as f32, k.scale as f32, k.response as f32]).collect();
    let desc_path = stem.with_extension("desc");
    fs::write(&desc_path, encode_xvds(&desc, DESCRIPTOR_DIM)).map_err(io_err(&desc_path))?;
    let kp_path = stem.with_extension("kp");
    fs::write(&kp_path, encode_xvds(&kps, 4)).map_err(io_err(&kp_path))
}

fn read_features(stem: &Path) -> Result<Option<(Vec<Keypoint>, Vec<Descriptor>)>, FeatureError> {
    let (desc_path, kp_path) = (stem.with_extension("desc"), stem.with_extension("kp"));
    if !desc_path.exists() || !kp_path.exists() {
        return Ok(None);
    }
    let (dim, rows) = decode_xvds(&fs::read(&desc_path).map_err(io_err(&desc_path))?)?;
    if dim != DESCRIPTOR_DIM {
        return Err(FeatureError::DescriptorFile(format!("{}: dim {dim}, expected 64", desc_path.display())));
    }
    let descriptors = rows.into_iter().map(|r| Descriptor(r.try_into().unwrap())).collect::<Vec<_>>();
    let (kdim, krows) = decode_xvds(&fs::read(&kp_path).map_err(io_err(&kp_path))?)?;
    if kdim != 4 || krows.len() != descriptors.len() {
        return Err(FeatureError::DescriptorFile(format!("{}: inconsistent keypoint cache", kp_path.display())));
    }
    let keypoints = krows
        .iter()
        .map(|r| Keypoint { u: r[0] as f64, v: r[1] as f64, scale: r[2] as f64, response: r[3] as f64 })
        .collect();
    Ok(Some((keypoints, descriptors)))
}

/// Writes one directory per object under `dir`.
pub fn save_database(db: &[TemplateObject], dir: &Path) -> Result<(), FeatureError> {
    validate_database(db)?;
    for obj in db {
        let odir = dir.join(&obj.object_id);
        fs::create_dir_all(&odir).map_err(io_err(&odir))?;
        let mut manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            object_id: obj.object_id.clone(),
            camera_convention: CAMERA_CONVENTION.to_string(),
            model_ref: obj.model_ref.clone(),
            epc_bindings: obj.epc_bindings.clone(),
            template_images: Vec::new(),
            viewpoint_clouds: Vec::new(),
            model_cloud: None,
        };
        for (i, t) in obj.template_images.iter().enumerate() {
            let name = format!("template_{i:02}.pgm");
            save_gray(&t.image, &odir.join(&name))?;
            write_features(t, &odir.join(&name))?;
            manifest.template_images.push(name);
        }
        for (i, (cloud, frame)) in obj.viewpoint_clouds.iter().zip(&obj.viewpoint_frames).enumerate() {
            let name = format!("viewpoint_{i:02}.ply");
            save_ply(cloud, &odir.join(&name))?;
            manifest.viewpoint_clouds.push(ViewpointEntry { file: name, frame: *frame });
        }
        if let Some(model) = &obj.model_cloud {
            save_ply(model, &odir.join("model.ply"))?;
            manifest.model_cloud = Some("model.ply".into());
        }
        let mpath = odir.join("manifest.json");
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| FeatureError::InvalidDatabase(e.to_string()))?;
        fs::write(&mpath, json).map_err(io_err(&mpath))?;
    }
    Ok(())
}

/// Loads every object directory (sorted by name). Cached features are used
/// when present; otherwise they are computed with `params`.
pub fn load_database(dir: &Path, params: &FeatureParams) -> Result<Vec<TemplateObject>, FeatureError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    let mut db = Vec::with_capacity(dirs.len());
    for odir in dirs {
        let mpath = odir.join("manifest.json");
        let manifest: Manifest = serde_json::from_slice(&fs::read(&mpath).map_err(io_err(&mpath))?)
            .map_err(|e| FeatureError::InvalidDatabase(format!("{}: {e}", mpath.display())))?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(FeatureError::InvalidDatabase(format!(
                "{}: unsupported schema version {}",
                mpath.display(),
                manifest.schema_version
            )));
        }
        let mut template_images = Vec::new();
        for name in &manifest.template_images {
            let path = odir.join(name);
            let image = load_gray(&path)?;
            let t = match read_features(&path)? {
                Some((keypoints, descriptors)) => TemplateImage { image, keypoints, descriptors },
                None => TemplateImage::from_image(image, params)?,
            };
            template_images.push(t);
        }
        let mut viewpoint_clouds = Vec::new();
        let mut viewpoint_frames = Vec::new();
        for entry in &manifest.viewpoint_clouds {
            viewpoint_clouds.push(load_ply(&odir.join(&entry.file))?);
            viewpoint_frames.push(entry.frame);
        }
        let model_cloud = match &manifest.model_cloud {
            Some(name) => Some(load_ply(&odir.join(name))?),
            None => None,
        };
        db.push(TemplateObject {
            object_id: manifest.object_id,
            template_images,
            viewpoint_clouds,
            viewpoint_frames,
            epc_bindings: manifest.epc_bindings,
            model_cloud,
            model_ref: manifest.model_ref,
        });
    }
    validate_database(&db)?;
    Ok(db)
}
