use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::scene::{generate_scene, view_pose};
use super::HarnessError;
use crate::features::{scene_features, score_templates, FeatureParams, TemplateObject};
use crate::geometry::{CameraIntrinsics, Vec3};
use crate::rfid::{normalized_rssi, tag_respond, ChannelParams, Epc, TagRecord};

pub const SWEEP_CSV_HEADER: &str = "distance_m,rfid_score,vision_score";
/// Scores at or above this count as good quality.
pub const SAFE_SCORE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub distance_m: f64,
    pub rfid_score: f64,
    pub vision_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Contiguous `[start, end]` distance intervals with rfid_score ≥ [`SAFE_SCORE`].
    pub rfid_safe_ranges: Vec<(f64, f64)>,
    pub vision_safe_ranges: Vec<(f64, f64)>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for r in &self.rows {
            writeln!(out, "{:.4},{:.6},{:.6}", r.distance_m, r.rfid_score, r.vision_score).expect("writing to a String");
        }
        out
    }

    /// Distance with the highest vision score (first on ties).
    pub fn vision_peak(&self) -> Option<f64> {
        self.rows.iter().fold(None::<&SweepRow>, |best, r| match best {
            Some(b) if b.vision_score >= r.vision_score => Some(b),
            _ => Some(r),
        })
        .map(|r| r.distance_m)
    }
}

/// Camera side of the sweep: the object rendered face-on at each distance.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionFixture {
    pub object_id: String,
    pub intrinsics: CameraIntrinsics,
    pub features: FeatureParams,
}

/// Contiguous runs of rows whose `score` is at least `threshold`.
pub fn safe_ranges(rows: &[SweepRow], score: impl Fn(&SweepRow) -> f64, threshold: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for r in rows {
        if score(r) >= threshold {
            start.get_or_insert(r.distance_m);
            last = r.distance_m;
        } else if let Some(s) = start.take() {
            out.push((s, last));
        }
    }
    if let Some(s) = start {
        out.push((s, last));
    }
    out
}

/// Normalized RSSI of a plain passive tag at `distance`, 0 when it does not reply.
pub fn rfid_score(channel: &ChannelParams, distance: f64) -> Result<f64, HarnessError> {
    let tag = TagRecord::new(Epc::default(), Vec3::zeros());
    let ev = tag_respond(&tag, distance, channel, 0, 0).map_err(|e| HarnessError::InvalidParameter(e.to_string()))?;
    Ok(ev.map_or(0.0, |e| normalized_rssi(e.rssi)))
}

/// Matches of the rendered object's best template, 0 when the object cannot be rendered.
fn vision_matches(db: &[TemplateObject], fixture: &VisionFixture, distance: f64) -> Result<usize, HarnessError> {
    let scene = match generate_scene(db, &fixture.object_id, &view_pose(distance, 0.0), 0.0, 0, &fixture.intrinsics) {
        Ok(s) => s,
        Err(HarnessError::ObjectBehindCamera { .. } | HarnessError::TooFewVisiblePoints { .. }) => return Ok(0),
        Err(e) => return Err(e),
    };
    let feats = scene_features(&scene.gray, &fixture.features)?;
    let scores = score_templates(&feats.descriptors, db, fixture.features.ratio);
    Ok(scores
        .iter()
        .filter(|s| db[s.object_index].object_id == fixture.object_id)
        .map(|s| s.count())
        .max()
        .unwrap_or(0))
}

/// Samples `steps` evenly spaced distances in `[d_min, d_max]`.
///
/// The vision score is the match count normalized by the sweep's maximum.
pub fn working_range_sweep(
    db: &[TemplateObject],
    channel: &ChannelParams,
    fixture: &VisionFixture,
    d_min: f64,
    d_max: f64,
    steps: usize,
) -> Result<SweepReport, HarnessError> {
    if !(d_min > 0.0 && d_min < d_max) || steps < 2 {
        return Err(HarnessError::InvalidParameter(format!("need 0 < d_min < d_max and steps >= 2, got {d_min}, {d_max}, {steps}")));
    }
    channel.validate().map_err(|e| HarnessError::InvalidParameter(e.to_string()))?;
    let distances: Vec<f64> = (0..steps).map(|i| d_min + (d_max - d_min) * i as f64 / (steps - 1) as f64).collect();
    let counts = distances.iter().map(|&d| vision_matches(db, fixture, d)).collect::<Result<Vec<_>, _>>()?;
    let best = counts.iter().copied().max().unwrap_or(0);
    let rows = distances
        .iter()
        .zip(&counts)
        .map(|(&d, &c)| {
            Ok(SweepRow {
                distance_m: d,
                rfid_score: rfid_score(channel, d)?,
                vision_score: if best == 0 { 0.0 } else { (c as f64 / best as f64).clamp(0.0, 1.0) },
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(SweepReport {
        rfid_safe_ranges: safe_ranges(&rows, |r| r.rfid_score, SAFE_SCORE),
        vision_safe_ranges: safe_ranges(&rows, |r| r.vision_score, SAFE_SCORE),
        rows,
    })
}
