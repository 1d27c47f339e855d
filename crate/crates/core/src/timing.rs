//! Frame airtimes and the success/collision durations built from them.

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Airtime of a frame of `bytes` octets sent at `rate` bit/s after a fixed PHY overhead.
pub fn frame_airtime(bytes: u32, rate: f64, phy_overhead: f64) -> Result<f64> {
    if bytes == 0 {
        return Err(Error::InvalidParameter("frame size must be at least one octet".into()));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidParameter(format!("rate must be positive, got {rate}")));
    }
    if !(phy_overhead.is_finite() && phy_overhead >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "phy overhead must be non-negative, got {phy_overhead}"
        )));
    }
    Ok(phy_overhead + 8.0 * bytes as f64 / rate)
}

/// Derived durations, all in seconds except `n_frame_slots`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingDurations {
    pub t_rts: f64,
    pub t_cts: f64,
    pub t_ack: f64,
    pub t_data: f64,
    /// Channel time of a successful RTS/CTS/DATA/ACK exchange.
    pub t_suc: f64,
    /// Channel time lost to an RTS collision.
    pub t_col: f64,
    /// Mean payload duration `E[P]`.
    pub e_payload: f64,
    /// `N^F`: the success duration rounded up to whole slots.
    pub n_frame_slots: u64,
}

/// Rounds `duration / slot` up, ignoring float noise just above an integer.
pub(crate) fn slots_ceil(duration: f64, slot: f64) -> u64 {
    let ratio = duration / slot;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        ratio.ceil() as u64
    }
}

pub fn derive_timings(params: &ModelParams) -> Result<TimingDurations> {
    params.validate()?;
    let t_rts = frame_airtime(params.rts_bytes, params.control_rate, params.phy_overhead)?;
    let t_cts = frame_airtime(params.cts_bytes, params.control_rate, params.phy_overhead)?;
    let t_ack = frame_airtime(params.ack_bytes, params.control_rate, params.phy_overhead)?;
    let t_data = frame_airtime(params.msdu_bytes, params.data_rate, params.phy_overhead)?;

    let sifs_count = if params.strict_paper_timing { 2.0 } else { 3.0 };
    let t_suc = t_rts + sifs_count * params.sifs + t_cts + params.difs + t_data + t_ack;
    let t_col = t_rts + params.sifs + params.difs + params.rifs;
    if t_suc <= t_col {
        return Err(Error::InvalidParameter(format!(
            "success duration {t_suc:e} s does not exceed collision duration {t_col:e} s"
        )));
    }
    Ok(TimingDurations {
        t_rts,
        t_cts,
        t_ack,
        t_data,
        t_suc,
        t_col,
        e_payload: t_data,
        n_frame_slots: slots_ceil(t_suc, params.slot_time).max(1),
    })
}
