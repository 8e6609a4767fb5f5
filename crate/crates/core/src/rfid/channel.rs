use serde::{Deserialize, Serialize};

use super::{Epc, RfidError, TagRecord};

/// Log-distance backscatter link model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Reader transmit power, dBm EIRP.
    pub tx_eirp: f64,
    /// Reader antenna gain, dBi.
    pub antenna_gain: f64,
    /// Backscattered power at 1 m, dBm. Round-trip losses are folded in here.
    pub reference_rssi_at_1m: f64,
    pub path_loss_exponent: f64,
    /// Weakest backscatter the reader can decode, dBm.
    pub reader_sensitivity: f64,
    /// Farthest distance at which a passive tag harvests enough power to reply, m.
    pub tag_wakeup_threshold_distance: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            tx_eirp: 36.0,
            antenna_gain: 8.5,
            reference_rssi_at_1m: -40.0,
            path_loss_exponent: 2.0,
            reader_sensitivity: -80.0,
            tag_wakeup_threshold_distance: 1.5,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), RfidError> {
        let all = [
            self.tx_eirp,
            self.antenna_gain,
            self.reference_rssi_at_1m,
            self.path_loss_exponent,
            self.reader_sensitivity,
            self.tag_wakeup_threshold_distance,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(RfidError::Config("channel parameters must be finite".into()));
        }
        if self.path_loss_exponent <= 0.0 {
            return Err(RfidError::Config("path_loss_exponent must be positive".into()));
        }
        if self.reader_sensitivity >= self.reference_rssi_at_1m {
            return Err(RfidError::Config("reader_sensitivity must be below reference_rssi_at_1m".into()));
        }
        if self.tag_wakeup_threshold_distance <= 0.0 {
            return Err(RfidError::Config("tag_wakeup_threshold_distance must be positive".into()));
        }
        Ok(())
    }
}

/// One tag observation at the reader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadEvent {
    pub epc: Epc,
    /// dBm, never positive.
    pub rssi: f64,
    pub antenna_id: u8,
    /// Microseconds since the Unix epoch.
    pub timestamp_us: u64,
}

/// Backscattered power at the reader for a tag `distance` meters away, dBm.
pub fn backscatter_rssi(distance: f64, p: &ChannelParams) -> Result<f64, RfidError> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(RfidError::NonPositiveDistance(distance));
    }
    Ok(p.reference_rssi_at_1m - 10.0 * p.path_loss_exponent * distance.log10())
}

/// The tag's reply to an inventory round, if any.
///
/// Detuned tags never reply. Passive tags beyond the wakeup distance stay
/// dark; battery-assisted tags skip that gate. Replies weaker than the reader
/// sensitivity are lost. The reported RSSI is capped at 0 dBm.
pub fn tag_respond(
    tag: &TagRecord,
    distance: f64,
    p: &ChannelParams,
    antenna_id: u8,
    now_us: u64,
) -> Result<Option<ReadEvent>, RfidError> {
    let rssi = backscatter_rssi(distance, p)?;
    if tag.water_detuned {
        return Ok(None);
    }
    if !tag.battery_assisted && distance > p.tag_wakeup_threshold_distance {
        return Ok(None);
    }
    if rssi < p.reader_sensitivity {
        return Ok(None);
    }
    Ok(Some(ReadEvent { epc: tag.epc, rssi: rssi.min(0.0), antenna_id, timestamp_us: now_us }))
}

/// Linear score: 1 at −20 dBm or stronger, 0 at the −80 dBm sensitivity floor or weaker.
pub fn normalized_rssi(rssi: f64) -> f64 {
    ((rssi + 80.0) / 60.0).clamp(0.0, 1.0)
}
