use serde::{Deserialize, Serialize};

use super::Descriptor;

pub const DEFAULT_RATIO: f32 = 0.7;

/// A scene descriptor paired with its nearest template descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub scene_index: usize,
    pub template_index: usize,
    /// L2 distance between the two descriptors.
    pub distance: f32,
}

/// Nearest and second-nearest template descriptors of `query` as `(index, d1, d2)`.
fn two_nearest(query: &Descriptor, templ: &[Descriptor]) -> (usize, f32, f32) {
    let (mut best, mut d1, mut d2) = (0, f32::INFINITY, f32::INFINITY);
    for (j, t) in templ.iter().enumerate() {
        let d = query.distance_squared(t);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = j;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1.sqrt(), d2.sqrt())
}

/// Brute-force nearest-neighbour matching with Lowe's ratio test.
///
/// A scene descriptor is matched iff `d1 / d2 < ratio`. With fewer than two
/// template descriptors no ratio can be formed and nothing is matched.
pub fn match_descriptors(scene: &[Descriptor], templ: &[Descriptor], ratio: f32) -> Vec<Match> {
    assert!(ratio > 0.0 && ratio <= 1.0, "ratio must be in (0, 1]");
    if templ.len() < 2 {
        return Vec::new();
    }
    scene
        .iter()
        .enumerate()
        .filter_map(|(i, q)| {
            let (j, d1, d2) = two_nearest(q, templ);
            (d2 > 0.0 && d1 / d2 < ratio).then_some(Match { scene_index: i, template_index: j, distance: d1 })
        })
        .collect()
}

/// Keeps, for every template descriptor, only its closest match (lowest scene
/// index on ties). Output stays in scene order.
pub fn unique_matches(matches: &[Match]) -> Vec<Match> {
    let mut best: std::collections::HashMap<usize, Match> = std::collections::HashMap::new();
    for m in matches {
        best.entry(m.template_index)
            .and_modify(|b| {
                if m.distance < b.distance || (m.distance == b.distance && m.scene_index < b.scene_index) {
                    *b = *m;
                }
            })
            .or_insert(*m);
    }
    let mut out: Vec<Match> = best.into_values().collect();
    out.sort_by_key(|m| m.scene_index);
    out
}
