//! Upright SURF-style local features and template-database identification.

mod database;
mod descriptor;
mod detector;
mod identify;
mod integral;
mod matching;

pub use database::{
    decode_xvds, encode_xvds, load_database, save_database, validate_database, TemplateImage, TemplateObject,
    CAMERA_CONVENTION, VIEW_CAMERA_DISTANCE, XVDS_MAGIC, XVDS_VERSION,
};
pub use descriptor::{describe, describe_all, has_descriptor_margin, Descriptor, DESCRIPTOR_DIM};
pub use detector::{detect_keypoints, filter_size, Keypoint, MAX_KEYPOINTS, MIN_IMAGE_SIDE};
pub use identify::{identify, identify_descriptors, score_templates, Identification, TemplateScore};
pub use integral::IntegralImage;
pub use matching::{match_descriptors, unique_matches, Match, DEFAULT_RATIO};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::io::IoError;
use crate::geometry::GrayImage;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image {width}x{height} is smaller than the 32x32 minimum")]
    ImageTooSmall { width: usize, height: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("template database is empty")]
    EmptyDatabase,
    #[error("invalid template database: {0}")]
    InvalidDatabase(String),
    #[error("descriptor cache: {0}")]
    DescriptorFile(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Detector, matcher and identification settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub hessian_threshold: f64,
    pub octaves: usize,
    pub ratio: f32,
    pub min_matches: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { hessian_threshold: 2e-4, octaves: 3, ratio: DEFAULT_RATIO, min_matches: 12 }
    }
}

/// Keypoints and descriptors of one image; entries correspond by index.
#[derive(Debug, Clone, Default)]
pub struct SceneFeatures {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

/// Detects keypoints and describes them, dropping those too close to the border.
pub fn extract_features(img: &GrayImage, params: &FeatureParams) -> Result<(Vec<Keypoint>, Vec<Descriptor>), FeatureError> {
    if img.width() < MIN_IMAGE_SIDE || img.height() < MIN_IMAGE_SIDE {
        return Err(FeatureError::ImageTooSmall { width: img.width(), height: img.height() });
    }
    let ii = IntegralImage::new(img);
    let kps = detector::detect_on_integral(&ii, params.hessian_threshold, params.octaves)?;
    Ok(descriptor::describe_all_on_integral(&ii, &kps))
}

pub fn scene_features(img: &GrayImage, params: &FeatureParams) -> Result<SceneFeatures, FeatureError> {
    let (keypoints, descriptors) = extract_features(img, params)?;
    Ok(SceneFeatures { keypoints, descriptors })
}
