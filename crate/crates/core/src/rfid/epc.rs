use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// 96-bit Electronic Product Code.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Epc(pub [u8; 12]);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid EPC '{0}': expected 24 hex digits")]
pub struct ParseEpcError(String);

impl Epc {
    pub fn from_u128(v: u128) -> Self {
        let bytes = v.to_be_bytes();
        let mut out = [0u8; 12];
        out.copy_from_slice(&bytes[4..]);
        Epc(out)
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02X}")).collect()
    }
}

impl FromStr for Epc {
    type Err = ParseEpcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
        if digits.len() != 24 || !digits.is_ascii() {
            return Err(ParseEpcError(s.to_string()));
        }
        let mut out = [0u8; 12];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&digits[2 * i..2 * i + 2], 16).map_err(|_| ParseEpcError(s.to_string()))?;
        }
        Ok(Epc(out))
    }
}

impl fmt::Display for Epc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Epc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Epc({})", self.to_hex())
    }
}

impl Serialize for Epc {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Epc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What a tag bound to an object reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagRole {
    /// Plain identity tag.
    Identity,
    /// Lowest tag of a three-tag water-level rig.
    WaterA,
    WaterB,
    /// Highest tag of the rig.
    WaterC,
    /// Tag with an on-chip temperature sensor.
    Temperature,
}

/// One EPC bound to an object, with the role it plays for that object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpcBinding {
    pub epc: Epc,
    pub role: TagRole,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip() {
        let epc = Epc::from_u128(0x3034_1234_5678_9ABC_DEF0_1234);
        assert_eq!(epc.to_hex(), "3034123456789ABCDEF01234");
        assert_eq!("3034123456789abcdef01234".parse::<Epc>().unwrap(), epc);
        assert_eq!("0x3034123456789ABCDEF01234".parse::<Epc>().unwrap(), epc);
        assert!("1234".parse::<Epc>().is_err());
        assert!("30341234567G9ABCDEF01234".parse::<Epc>().is_err());
        let json = serde_json::to_string(&EpcBinding { epc, role: TagRole::WaterB }).unwrap();
        assert_eq!(json, r#"{"epc":"3034123456789ABCDEF01234","role":"water_b"}"#);
    }
}
