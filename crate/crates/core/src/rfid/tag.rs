use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{encode_temp_word, Epc, RfidError};
use crate::geometry::Vec3;

/// Words per bank: reserved, EPC, TID, user.
pub const BANK_WORDS: [usize; 4] = [4, 8, 6, 512];
pub const USER_BANK: u8 = 3;
/// User-memory word the temperature IC overwrites with its measurement.
pub const TEMPERATURE_WORD: u16 = 256;

/// A simulated tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TagRecord {
    pub epc: Epc,
    pub memory_banks: [Vec<u16>; 4],
    pub has_temperature_ic: bool,
    pub battery_assisted: bool,
    pub position: Vec3,
    pub water_detuned: bool,
    pub ambient_celsius: f64,
}

/// A memory access outside the bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryError {
    Overrun,
}

impl TagRecord {
    pub fn new(epc: Epc, position: Vec3) -> Self {
        let mut banks: [Vec<u16>; 4] = BANK_WORDS.map(|n| vec![0u16; n]);
        // EPC bank: CRC, PC (96-bit length), then the EPC itself
        banks[1][1] = 0x3000;
        for (i, w) in epc.0.chunks(2).enumerate() {
            banks[1][2 + i] = u16::from_be_bytes([w[0], w[1]]);
        }
        Self {
            epc,
            memory_banks: banks,
            has_temperature_ic: false,
            battery_assisted: false,
            position,
            water_detuned: false,
            ambient_celsius: 20.0,
        }
    }

    pub fn read_word(&self, bank: u8, wordptr: u16) -> Result<u16, MemoryError> {
        self.memory_banks
            .get(bank as usize)
            .and_then(|b| b.get(wordptr as usize))
            .copied()
            .ok_or(MemoryError::Overrun)
    }

    /// Stores `word`. A write to the temperature word of a temperature tag
    /// triggers a measurement, which replaces the written value.
    pub fn write_word(&mut self, bank: u8, wordptr: u16, word: u16) -> Result<(), MemoryError> {
        let measured = self.has_temperature_ic && bank == USER_BANK && wordptr == TEMPERATURE_WORD;
        let ambient = self.ambient_celsius;
        let slot = self
            .memory_banks
            .get_mut(bank as usize)
            .and_then(|b| b.get_mut(wordptr as usize))
            .ok_or(MemoryError::Overrun)?;
        *slot = if measured { encode_temp_word(ambient) } else { word };
        Ok(())
    }
}

/// Tag entry of a population config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagConfig {
    pub epc: Epc,
    pub position: [f64; 3],
    #[serde(default)]
    pub has_temperature_ic: bool,
    #[serde(default)]
    pub battery_assisted: bool,
    #[serde(default)]
    pub water_detuned: bool,
    #[serde(default = "default_ambient")]
    pub ambient_celsius: f64,
}

fn default_ambient() -> f64 {
    20.0
}

/// Reader antenna placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaConfig {
    pub id: u8,
    pub position: [f64; 3],
}

/// Population config file: antennas and tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub antennas: Vec<AntennaConfig>,
    pub tags: Vec<TagConfig>,
}

impl PopulationConfig {
    pub fn load(path: &Path) -> Result<Self, RfidError> {
        let text = std::fs::read_to_string(path).map_err(|e| RfidError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RfidError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), RfidError> {
        let text = serde_json::to_string_pretty(self).expect("population config serializes");
        std::fs::write(path, text).map_err(|e| RfidError::Config(format!("{}: {e}", path.display())))
    }

    /// Builds the tag map, rejecting duplicate EPCs and antenna ids.
    pub fn into_population(self) -> Result<Population, RfidError> {
        let mut tags = BTreeMap::new();
        for t in self.tags {
            let pos = Vec3::from(t.position);
            if !pos.iter().all(|v| v.is_finite()) || !t.ambient_celsius.is_finite() {
                return Err(RfidError::Config(format!("tag {}: non-finite value", t.epc)));
            }
            let mut rec = TagRecord::new(t.epc, pos);
            rec.has_temperature_ic = t.has_temperature_ic;
            rec.battery_assisted = t.battery_assisted;
            rec.water_detuned = t.water_detuned;
            rec.ambient_celsius = t.ambient_celsius;
            if tags.insert(t.epc, rec).is_some() {
                return Err(RfidError::Config(format!("duplicate EPC {}", t.epc)));
            }
        }
        let mut antennas: Vec<(u8, Vec3)> = Vec::new();
        for a in self.antennas {
            if antennas.iter().any(|(id, _)| *id == a.id) {
                return Err(RfidError::Config(format!("duplicate antenna id {}", a.id)));
            }
            antennas.push((a.id, Vec3::from(a.position)));
        }
        antennas.sort_by_key(|a| a.0);
        if antennas.is_empty() {
            return Err(RfidError::Config("at least one antenna is required".into()));
        }
        Ok(Population { tags, antennas })
    }
}

/// Tags keyed by EPC plus the antenna layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub tags: BTreeMap<Epc, TagRecord>,
    /// (antenna id, position), sorted by id.
    pub antennas: Vec<(u8, Vec3)>,
}
