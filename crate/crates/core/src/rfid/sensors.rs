use serde::{Deserialize, Serialize};

use super::Epc;

/// Liquid level inferred from which of the three rig tags still respond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaterLevel {
    Empty,
    Middle,
    Full,
    Unknown,
}

/// Maps responding flags of tags A (lowest), B and C (highest) to a level.
///
/// Only three triples are meaningful: A is submerged in every filled state,
/// so any triple with A responding, and any non-monotone triple, is `Unknown`.
pub fn decode_water_level(a: bool, b: bool, c: bool) -> WaterLevel {
    match (a, b, c) {
        (false, true, true) => WaterLevel::Empty,
        (false, false, true) => WaterLevel::Middle,
        (false, false, false) => WaterLevel::Full,
        _ => WaterLevel::Unknown,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureReading {
    pub celsius: f64,
    pub epc: Epc,
    pub timestamp_us: u64,
}

pub const TEMP_MIN_C: f64 = -64.0;
pub const TEMP_MAX_C: f64 = 64.0;
/// Word range produced by [`encode_temp_word`], as signed values.
pub const TEMP_WORD_RANGE: std::ops::RangeInclusive<i16> = -256..=256;

/// Clamps to [−64, 64] °C, rounds to 0.25 °C and stores quarter-degrees as a two's-complement word.
pub fn encode_temp_word(celsius: f64) -> u16 {
    let c = if celsius.is_nan() { 0.0 } else { celsius.clamp(TEMP_MIN_C, TEMP_MAX_C) };
    ((c * 4.0).round() as i16) as u16
}

pub fn decode_temp_word(word: u16) -> f64 {
    (word as i16) as f64 / 4.0
}
