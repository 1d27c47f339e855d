//! Flat `key = value` configuration files and layered overrides.
//!
//! Layers are applied in order defaults < file < command line. Every field of
//! [`ModelParams`] has a key; `bi_ms` and `cbap_fraction` are alternative ways of
//! giving `bi_slots` and `cbap_slots`, and the most recent layer wins between them.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::{round_robin_populations, split_cbap, ModelParams, SplitRule, WindowConvention};

/// Partially specified parameters. `None` means "inherit from the layer below".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamOverrides {
    pub n: Option<usize>,
    pub q: Option<usize>,
    pub sector_populations: Option<Vec<usize>>,
    pub w0: Option<u32>,
    pub m: Option<u32>,
    pub bi_slots: Option<u64>,
    pub bi_ms: Option<f64>,
    pub cbap_slots: Option<u64>,
    pub cbap_fraction: Option<f64>,
    pub cbap_split: Option<Vec<u64>>,
    pub split_rule: Option<SplitRule>,
    pub slot_time: Option<f64>,
    pub sifs: Option<f64>,
    pub difs: Option<f64>,
    pub rifs: Option<f64>,
    pub rts_bytes: Option<u32>,
    pub cts_bytes: Option<u32>,
    pub ack_bytes: Option<u32>,
    pub msdu_bytes: Option<u32>,
    pub control_rate: Option<f64>,
    pub data_rate: Option<f64>,
    pub phy_overhead: Option<f64>,
    pub strict_paper_timing: Option<bool>,
    pub window_convention: Option<WindowConvention>,
}

pub const KEYS: &[&str] = &[
    "n",
    "q",
    "sector_populations",
    "w0",
    "m",
    "bi_slots",
    "bi_ms",
    "cbap_slots",
    "cbap_fraction",
    "cbap_split",
    "split_rule",
    "slot_time",
    "sifs",
    "difs",
    "rifs",
    "rts_bytes",
    "cts_bytes",
    "ack_bytes",
    "msdu_bytes",
    "control_rate",
    "data_rate",
    "phy_overhead",
    "strict_paper_timing",
    "window_convention",
];

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.parse::<T>()
        .map_err(|e| Error::Config(format!("bad value `{raw}` for `{key}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    raw.split(',').map(|item| parse_value(key, item.trim())).collect()
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{raw}` for `{key}`"))),
    }
}

impl ParamOverrides {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are ignored; unknown or
    /// repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = ParamOverrides::default();
        let mut seen = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            out.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip_prefix(e))))?;
            seen.push(key);
        }
        Ok(out)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = Some(parse_value(key, value)?),
            "q" => self.q = Some(parse_value(key, value)?),
            "sector_populations" => self.sector_populations = Some(parse_list(key, value)?),
            "w0" => self.w0 = Some(parse_value(key, value)?),
            "m" => self.m = Some(parse_value(key, value)?),
            "bi_slots" => self.bi_slots = Some(parse_value(key, value)?),
            "bi_ms" => self.bi_ms = Some(parse_value(key, value)?),
            "cbap_slots" => self.cbap_slots = Some(parse_value(key, value)?),
            "cbap_fraction" => self.cbap_fraction = Some(parse_value(key, value)?),
            "cbap_split" => self.cbap_split = Some(parse_list(key, value)?),
            "split_rule" => self.split_rule = Some(value.parse()?),
            "slot_time" => self.slot_time = Some(parse_value(key, value)?),
            "sifs" => self.sifs = Some(parse_value(key, value)?),
            "difs" => self.difs = Some(parse_value(key, value)?),
            "rifs" => self.rifs = Some(parse_value(key, value)?),
            "rts_bytes" => self.rts_bytes = Some(parse_value(key, value)?),
            "cts_bytes" => self.cts_bytes = Some(parse_value(key, value)?),
            "ack_bytes" => self.ack_bytes = Some(parse_value(key, value)?),
            "msdu_bytes" => self.msdu_bytes = Some(parse_value(key, value)?),
            "control_rate" => self.control_rate = Some(parse_value(key, value)?),
            "data_rate" => self.data_rate = Some(parse_value(key, value)?),
            "phy_overhead" => self.phy_overhead = Some(parse_value(key, value)?),
            "strict_paper_timing" => self.strict_paper_timing = Some(parse_bool(key, value)?),
            "window_convention" => self.window_convention = Some(value.parse()?),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `upper` on top of `self`. Giving `n` or `q` in the upper layer discards
    /// explicit per-sector lists from the lower one, and the slot/ms (or slots/fraction)
    /// alternatives replace each other.
    pub fn overlay(mut self, upper: &ParamOverrides) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if upper.$field.is_some() { self.$field = upper.$field.clone(); })*
            };
        }
        if upper.n.is_some() || upper.q.is_some() {
            self.sector_populations = None;
        }
        if upper.q.is_some() {
            self.cbap_split = None;
        }
        if upper.bi_ms.is_some() {
            self.bi_slots = None;
        }
        if upper.bi_slots.is_some() {
            self.bi_ms = None;
        }
        if upper.cbap_fraction.is_some() {
            self.cbap_slots = None;
        }
        if upper.cbap_slots.is_some() {
            self.cbap_fraction = None;
        }
        if upper.cbap_fraction.is_some() || upper.cbap_slots.is_some() || upper.split_rule.is_some() {
            self.cbap_split = None;
        }
        take!(
            n, q, sector_populations, w0, m, bi_slots, bi_ms, cbap_slots, cbap_fraction,
            cbap_split, split_rule, slot_time, sifs, difs, rifs, rts_bytes, cts_bytes,
            ack_bytes, msdu_bytes, control_rate, data_rate, phy_overhead,
            strict_paper_timing, window_convention
        );
        self
    }

    /// Resolves against the built-in defaults and validates the result.
    pub fn resolve(&self) -> Result<ModelParams> {
        let d = ModelParams::default();
        let slot_time = self.slot_time.unwrap_or(d.slot_time);
        if !(slot_time.is_finite() && slot_time > 0.0) {
            return Err(Error::InvalidParameter(format!("slot_time must be positive, got {slot_time}")));
        }

        let (n, q, sector_populations) = match &self.sector_populations {
            Some(pops) => {
                let total = pops.iter().sum();
                if let Some(n) = self.n.filter(|&n| n != total) {
                    return Err(Error::InvalidParameter(format!(
                        "sector populations sum to {total}, expected n = {n}"
                    )));
                }
                if let Some(q) = self.q.filter(|&q| q != pops.len()) {
                    return Err(Error::InvalidParameter(format!(
                        "{} sector populations given for q = {q}",
                        pops.len()
                    )));
                }
                (total, pops.len(), pops.clone())
            }
            None => {
                let n = self.n.unwrap_or(d.n);
                let q = self.q.unwrap_or(d.q);
                (n, q, round_robin_populations(n, q))
            }
        };

        let bi_slots = match (self.bi_slots, self.bi_ms) {
            (Some(slots), _) => slots,
            (None, Some(ms)) => {
                if !(ms.is_finite() && ms > 0.0) {
                    return Err(Error::InvalidParameter(format!("bi_ms must be positive, got {ms}")));
                }
                (ms * 1e-3 / slot_time).round() as u64
            }
            (None, None) => (d.bi_slots as f64 * d.slot_time / slot_time).round() as u64,
        };
        let fraction = self.cbap_fraction.unwrap_or(d.cbap_fraction());
        if self.cbap_slots.is_none() && !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cbap_fraction must lie in (0, 1], got {fraction}"
            )));
        }
        let cbap_slots = match (&self.cbap_split, self.cbap_slots) {
            (Some(split), None) if self.cbap_fraction.is_none() => split.iter().sum(),
            (_, Some(slots)) => slots,
            _ => (fraction * bi_slots as f64).round() as u64,
        };
        let cbap_split = match &self.cbap_split {
            Some(split) => split.clone(),
            None => split_cbap(cbap_slots, &sector_populations, self.split_rule.unwrap_or_default()),
        };

        let params = ModelParams {
            n,
            q,
            sector_populations,
            w0: self.w0.unwrap_or(d.w0),
            m: self.m.unwrap_or(d.m),
            bi_slots,
            cbap_slots,
            cbap_split,
            slot_time,
            sifs: self.sifs.unwrap_or(d.sifs),
            difs: self.difs.unwrap_or(d.difs),
            rifs: self.rifs.unwrap_or(d.rifs),
            rts_bytes: self.rts_bytes.unwrap_or(d.rts_bytes),
            cts_bytes: self.cts_bytes.unwrap_or(d.cts_bytes),
            ack_bytes: self.ack_bytes.unwrap_or(d.ack_bytes),
            msdu_bytes: self.msdu_bytes.unwrap_or(d.msdu_bytes),
            control_rate: self.control_rate.unwrap_or(d.control_rate),
            data_rate: self.data_rate.unwrap_or(d.data_rate),
            phy_overhead: self.phy_overhead.unwrap_or(d.phy_overhead),
            strict_paper_timing: self.strict_paper_timing.unwrap_or(d.strict_paper_timing),
            window_convention: self.window_convention.unwrap_or(d.window_convention),
        };
        params.validate()?;
        Ok(params)
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(msg) | Error::InvalidParameter(msg) => msg,
        other => other.to_string(),
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ModelParams {
    /// Canonical `key = value` pairs for the resolved parameters. Feeding them back
    /// through [`ParamOverrides::parse`] reproduces `self`.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n", self.n.to_string()),
            ("q", self.q.to_string()),
            ("sector_populations", join(&self.sector_populations)),
            ("w0", self.w0.to_string()),
            ("m", self.m.to_string()),
            ("bi_slots", self.bi_slots.to_string()),
            ("cbap_slots", self.cbap_slots.to_string()),
            ("cbap_split", join(&self.cbap_split)),
            ("slot_time", self.slot_time.to_string()),
            ("sifs", self.sifs.to_string()),
            ("difs", self.difs.to_string()),
            ("rifs", self.rifs.to_string()),
            ("rts_bytes", self.rts_bytes.to_string()),
            ("cts_bytes", self.cts_bytes.to_string()),
            ("ack_bytes", self.ack_bytes.to_string()),
            ("msdu_bytes", self.msdu_bytes.to_string()),
            ("control_rate", self.control_rate.to_string()),
            ("data_rate", self.data_rate.to_string()),
            ("phy_overhead", self.phy_overhead.to_string()),
            ("strict_paper_timing", self.strict_paper_timing.to_string()),
            ("window_convention", self.window_convention.to_string()),
        ]
    }

    pub fn to_config_text(&self) -> String {
        self.to_key_values()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Short stable digest of the canonical configuration.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_config_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_overrides_resolve_to_defaults() {
        assert_eq!(ParamOverrides::default().resolve().unwrap(), ModelParams::default());
    }

    #[test]
    fn parses_comments_and_lists() {
        let text = "# four sectors\nn = 40\nq = 4 # trailing\n\ncbap_fraction = 1.0\nsplit_rule = proportional\n";
        let params = ParamOverrides::parse(text).unwrap().resolve().unwrap();
        assert_eq!(params.sector_populations, vec![10, 10, 10, 10]);
        assert_eq!(params.cbap_slots, params.bi_slots);
        assert_eq!(params.cbap_split, vec![5000; 4]);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = ParamOverrides::parse("n = 3\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("unknown key `bogus`"), "{err}");
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(ParamOverrides::parse("n 3").is_err());
        assert!(ParamOverrides::parse("n = three").is_err());
        assert!(ParamOverrides::parse("n = 3\nn = 4").is_err());
        assert!(ParamOverrides::parse("strict_paper_timing = maybe").is_err());
    }

    #[test]
    fn cli_layer_overrides_file_layer() {
        let file = ParamOverrides::parse("n = 6\nsector_populations = 3,3\nq = 2\nbi_slots = 1000\n").unwrap();
        let cli = ParamOverrides {
            n: Some(9),
            bi_ms: Some(50.0),
            ..Default::default()
        };
        let params = file.overlay(&cli).resolve().unwrap();
        assert_eq!(params.sector_populations, vec![5, 4]);
        assert_eq!(params.bi_slots, 10_000);
        assert_eq!(params.cbap_slots, 4_000);
    }

    #[test]
    fn explicit_populations_must_match_n() {
        let o = ParamOverrides::parse("n = 5\nsector_populations = 2,2").unwrap();
        assert!(matches!(o.resolve(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn canonical_dump_round_trips() {
        let params = ParamOverrides::parse("n = 7\nq = 3\ncbap_fraction = 0.5\nstrict_paper_timing = off")
            .unwrap()
            .resolve()
            .unwrap();
        let back = ParamOverrides::parse(&params.to_config_text()).unwrap().resolve().unwrap();
        assert_eq!(back, params);
        assert_eq!(back.config_hash(), params.config_hash());
        assert_eq!(params.config_hash().len(), 16);
    }

    #[test]
    fn every_model_field_has_a_key() {
        for (key, _) in ModelParams::default().to_key_values() {
            assert!(KEYS.contains(&key), "{key}");
        }
    }
}
