//! Protocol constants for one network configuration.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How the stage-`i` contention window grows with the retry stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowConvention {
    /// `W_i = 2^i * W0`; stage 0 has exactly `W0` counter values.
    Doubling,
    /// `W_i = 2^i * W0 - 1`.
    DoublingMinusOne,
}

impl fmt::Display for WindowConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowConvention::Doubling => f.write_str("doubling"),
            WindowConvention::DoublingMinusOne => f.write_str("doubling-minus-one"),
        }
    }
}

impl FromStr for WindowConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doubling" => Ok(WindowConvention::Doubling),
            "doubling-minus-one" => Ok(WindowConvention::DoublingMinusOne),
            other => Err(Error::Config(format!(
                "unknown window convention `{other}` (expected doubling or doubling-minus-one)"
            ))),
        }
    }
}

/// Backoff window geometry: minimum window, retry limit and growth rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BackoffWindows {
    pub w0: u32,
    pub m: u32,
    pub convention: WindowConvention,
}

impl BackoffWindows {
    pub fn new(w0: u32, m: u32) -> Self {
        BackoffWindows {
            w0,
            m,
            convention: WindowConvention::Doubling,
        }
    }

    pub fn with_convention(mut self, convention: WindowConvention) -> Self {
        self.convention = convention;
        self
    }

    /// Number of counter values `W_i` at backoff stage `stage`.
    pub fn width(&self, stage: u32) -> u64 {
        let doubled = (self.w0 as u64) << stage;
        match self.convention {
            WindowConvention::Doubling => doubled,
            WindowConvention::DoublingMinusOne => doubled - 1,
        }
    }

    pub fn widths(&self) -> Vec<u64> {
        (0..=self.m).map(|i| self.width(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w0 < 2 {
            return Err(Error::InvalidParameter(format!("w0 must be at least 2, got {}", self.w0)));
        }
        if self.m > 16 {
            return Err(Error::InvalidParameter(format!("m must be at most 16, got {}", self.m)));
        }
        Ok(())
    }
}

/// Rule used to divide the total CBAP among sectors when no explicit split is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SplitRule {
    #[default]
    Equal,
    Proportional,
}

impl fmt::Display for SplitRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitRule::Equal => f.write_str("equal"),
            SplitRule::Proportional => f.write_str("proportional"),
        }
    }
}

impl FromStr for SplitRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(SplitRule::Equal),
            "proportional" => Ok(SplitRule::Proportional),
            other => Err(Error::Config(format!(
                "unknown split rule `{other}` (expected equal or proportional)"
            ))),
        }
    }
}

/// Every protocol constant of one configuration. Times are in seconds, rates in bit/s,
/// frame sizes in octets and interval lengths in slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub q: usize,
    pub sector_populations: Vec<usize>,
    pub w0: u32,
    pub m: u32,
    pub bi_slots: u64,
    pub cbap_slots: u64,
    pub cbap_split: Vec<u64>,
    pub slot_time: f64,
    pub sifs: f64,
    pub difs: f64,
    pub rifs: f64,
    pub rts_bytes: u32,
    pub cts_bytes: u32,
    pub ack_bytes: u32,
    pub msdu_bytes: u32,
    pub control_rate: f64,
    pub data_rate: f64,
    pub phy_overhead: f64,
    /// Use the success duration exactly as printed (one SIFS fewer than a standard
    /// RTS/CTS/DATA/ACK timeline). When false, a SIFS is inserted before the ACK.
    pub strict_paper_timing: bool,
    pub window_convention: WindowConvention,
}

pub const DEFAULT_SLOT_TIME: f64 = 5e-6;
pub const DEFAULT_CONTROL_RATE: f64 = 27.5e6;
pub const DEFAULT_DATA_RATE: f64 = 2e9;

impl Default for ModelParams {
    /// Ten stations in one sector, 100 ms beacon interval with a 40 % CBAP, MCS4 data.
    fn default() -> Self {
        let bi_slots = 20_000;
        let cbap_slots = 8_000;
        ModelParams {
            n: 10,
            q: 1,
            sector_populations: vec![10],
            w0: 7,
            m: 5,
            bi_slots,
            cbap_slots,
            cbap_split: vec![cbap_slots],
            slot_time: DEFAULT_SLOT_TIME,
            sifs: 2.5e-6,
            difs: 13.5e-6,
            rifs: 9e-6,
            rts_bytes: 20,
            cts_bytes: 26,
            ack_bytes: 14,
            msdu_bytes: 7995,
            control_rate: DEFAULT_CONTROL_RATE,
            data_rate: DEFAULT_DATA_RATE,
            phy_overhead: 0.0,
            strict_paper_timing: true,
            window_convention: WindowConvention::Doubling,
        }
    }
}

impl ModelParams {
    pub fn windows(&self) -> BackoffWindows {
        BackoffWindows::new(self.w0, self.m).with_convention(self.window_convention)
    }

    pub fn cbap_fraction(&self) -> f64 {
        self.cbap_slots as f64 / self.bi_slots as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.q == 0 {
            return bad("q must be at least 1".into());
        }
        if self.sector_populations.len() != self.q {
            return bad(format!(
                "sector_populations has {} entries for q = {}",
                self.sector_populations.len(),
                self.q
            ));
        }
        if self.cbap_split.len() != self.q {
            return bad(format!("cbap_split has {} entries for q = {}", self.cbap_split.len(), self.q));
        }
        if let Some(k) = self.sector_populations.iter().position(|&n_k| n_k == 0) {
            return bad(format!("sector {k} has no stations"));
        }
        let total: usize = self.sector_populations.iter().sum();
        if total != self.n {
            return bad(format!("sector populations sum to {total}, expected n = {}", self.n));
        }
        let split: u64 = self.cbap_split.iter().sum();
        if split != self.cbap_slots {
            return bad(format!("cbap_split sums to {split}, expected cbap_slots = {}", self.cbap_slots));
        }
        if self.cbap_slots == 0 || self.cbap_slots > self.bi_slots {
            return bad(format!(
                "cbap_slots must lie in [1, bi_slots = {}], got {}",
                self.bi_slots, self.cbap_slots
            ));
        }
        self.windows().validate()?;
        let durations = [
            ("slot_time", self.slot_time),
            ("sifs", self.sifs),
            ("difs", self.difs),
            ("rifs", self.rifs),
            ("control_rate", self.control_rate),
            ("data_rate", self.data_rate),
        ];
        for (name, value) in durations {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("{name} must be positive, got {value}"));
            }
        }
        if !(self.phy_overhead.is_finite() && self.phy_overhead >= 0.0) {
            return bad(format!("phy_overhead must be non-negative, got {}", self.phy_overhead));
        }
        for (name, bytes) in [
            ("rts_bytes", self.rts_bytes),
            ("cts_bytes", self.cts_bytes),
            ("ack_bytes", self.ack_bytes),
            ("msdu_bytes", self.msdu_bytes),
        ] {
            if bytes == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Assigns `n` stations to `q` sectors round-robin: sector `k` gets `n / q` stations plus
/// one more for each of the first `n % q` sectors.
pub fn round_robin_populations(n: usize, q: usize) -> Vec<usize> {
    (0..q).map(|k| n / q + usize::from(k < n % q)).collect()
}

/// Splits `cbap_slots` among sectors. Remainder slots go to the first sectors.
pub fn split_cbap(cbap_slots: u64, populations: &[usize], rule: SplitRule) -> Vec<u64> {
    let q = populations.len() as u64;
    if q == 0 {
        return Vec::new();
    }
    let mut split: Vec<u64> = match rule {
        SplitRule::Equal => vec![cbap_slots / q; populations.len()],
        SplitRule::Proportional => {
            let n: u64 = populations.iter().map(|&n_k| n_k as u64).sum();
            populations
                .iter()
                .map(|&n_k| cbap_slots * n_k as u64 / n.max(1))
                .collect()
        }
    };
    let assigned: u64 = split.iter().sum();
    for slot in split.iter_mut().take((cbap_slots - assigned) as usize) {
        *slot += 1;
    }
    split
}
