//! Simulated RFID subsystem: tags, link model, sensor decoders and the reader protocol.

mod channel;
mod epc;
pub mod protocol;
mod reader;
mod sensors;
mod tag;

pub use channel::{backscatter_rssi, normalized_rssi, tag_respond, ChannelParams, ReadEvent};
pub use epc::{Epc, EpcBinding, ParseEpcError, TagRole};
pub use reader::{Clock, ReaderClient, ReaderServer, SimReader};
pub use sensors::{
    decode_temp_word, decode_water_level, encode_temp_word, TemperatureReading, WaterLevel, TEMP_MAX_C, TEMP_MIN_C,
    TEMP_WORD_RANGE,
};
pub use tag::{AntennaConfig, MemoryError, Population, PopulationConfig, TagConfig, TagRecord, BANK_WORDS, TEMPERATURE_WORD, USER_BANK};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RfidError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("tag {0} not found")]
    TagNotFound(Epc),
    #[error("tag {0} has no temperature sensor")]
    NotATemperatureTag(Epc),
    #[error("reader did not answer in time")]
    ProtocolTimeout,
    #[error("unexpected response type 0x{0:02X}")]
    UnexpectedResponse(u8),
    #[error("memory access out of range")]
    MemoryOverrun,
    #[error(transparent)]
    Protocol(#[from] protocol::ProtocolError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("configuration: {0}")]
    Config(String),
}
