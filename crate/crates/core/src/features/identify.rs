use std::cmp::Ordering;

use super::{match_descriptors, unique_matches, scene_features, Descriptor, FeatureError, FeatureParams, Match, SceneFeatures, TemplateObject};
use crate::geometry::GrayImage;

/// Match statistics of the scene against one template image.
#[derive(Debug, Clone)]
pub struct TemplateScore {
    pub object_index: usize,
    pub template_image_index: usize,
    pub matches: Vec<Match>,
    pub mean_distance: f32,
}

impl TemplateScore {
    pub fn count(&self) -> usize {
        self.matches.len()
    }

    /// Ranking: more matches first, then smaller mean distance, then lower indices.
    fn rank(&self, other: &TemplateScore) -> Ordering {
        other
            .count()
            .cmp(&self.count())
            .then(self.mean_distance.total_cmp(&other.mean_distance))
            .then(self.object_index.cmp(&other.object_index))
            .then(self.template_image_index.cmp(&other.template_image_index))
    }
}

/// Winning template of an identification.
#[derive(Debug, Clone)]
pub struct Identification {
    pub object_index: usize,
    pub object_id: String,
    pub template_image_index: usize,
    pub matches: Vec<Match>,
    pub mean_distance: f32,
}

/// Scores every template image of every object, best first. Each template
/// descriptor supports at most one match.
pub fn score_templates(scene: &[Descriptor], db: &[TemplateObject], ratio: f32) -> Vec<TemplateScore> {
    let mut scores: Vec<TemplateScore> = db
        .iter()
        .enumerate()
        .flat_map(|(oi, obj)| {
            obj.template_images.iter().enumerate().map(move |(ti, t)| {
                let matches = unique_matches(&match_descriptors(scene, &t.descriptors, ratio));
                let mean_distance = if matches.is_empty() {
                    f32::INFINITY
                } else {
                    matches.iter().map(|m| m.distance).sum::<f32>() / matches.len() as f32
                };
                TemplateScore { object_index: oi, template_image_index: ti, matches, mean_distance }
            })
        })
        .collect();
    scores.sort_by(TemplateScore::rank);
    scores
}

/// Identifies the object from precomputed scene descriptors.
///
/// Returns `None` when the best template collects fewer than `min_matches` matches.
pub fn identify_descriptors(
    scene: &[Descriptor],
    db: &[TemplateObject],
    ratio: f32,
    min_matches: usize,
) -> Result<Option<Identification>, FeatureError> {
    if db.is_empty() {
        return Err(FeatureError::EmptyDatabase);
    }
    if min_matches == 0 {
        return Err(FeatureError::InvalidParameter("min_matches must be at least 1".into()));
    }
    let best = score_templates(scene, db, ratio).into_iter().next();
    Ok(best.filter(|s| s.count() >= min_matches).map(|s| Identification {
        object_index: s.object_index,
        object_id: db[s.object_index].object_id.clone(),
        template_image_index: s.template_image_index,
        mean_distance: s.mean_distance,
        matches: s.matches,
    }))
}

/// Extracts scene features and identifies the in-view object.
pub fn identify(
    scene_img: &GrayImage,
    db: &[TemplateObject],
    params: &FeatureParams,
) -> Result<(SceneFeatures, Option<Identification>), FeatureError> {
    if db.is_empty() {
        return Err(FeatureError::EmptyDatabase);
    }
    let features = scene_features(scene_img, params)?;
    let id = identify_descriptors(&features.descriptors, db, params.ratio, params.min_matches)?;
    Ok((features, id))
}
