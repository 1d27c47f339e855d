//! Per-sector suspension and resumption probabilities.

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::timing::TimingDurations;

/// Transition constants shared by every backoff state of one sector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transitions {
    /// Leave contention from a counter value `j >= 2`.
    pub p_h: f64,
    /// Leave contention from `j = 1`, when the remaining CBAP cannot fit a frame exchange.
    pub p_h_prime: f64,
    /// Resume contention from a suspended state.
    pub p_r: f64,
    /// Stay suspended; always `1 - p_r`.
    pub p_f: f64,
}

impl Transitions {
    /// Builds constants directly, e.g. for validation grids that are not tied to slot counts.
    pub fn new(p_h: f64, p_h_prime: f64, p_f: f64) -> Result<Self> {
        let probability = |x: f64| (0.0..=1.0).contains(&x);
        if !(probability(p_h) && probability(p_h_prime) && p_h <= p_h_prime && p_h_prime < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= p_H <= p'_H < 1, got p_H = {p_h}, p'_H = {p_h_prime}"
            )));
        }
        if !(0.0..1.0).contains(&p_f) {
            return Err(Error::InvalidParameter(format!("need 0 <= p_f < 1, got {p_f}")));
        }
        Ok(Transitions {
            p_h,
            p_h_prime,
            p_r: 1.0 - p_f,
            p_f,
        })
    }

    /// No suspension at all: the sector owns the whole beacon interval.
    pub fn always_contending() -> Self {
        Transitions {
            p_h: 0.0,
            p_h_prime: 0.0,
            p_r: 1.0,
            p_f: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorModel {
    pub sector: usize,
    pub n_k: usize,
    pub cbap_k_slots: u64,
    pub transitions: Transitions,
}

impl SectorModel {
    pub fn p_h(&self) -> f64 {
        self.transitions.p_h
    }

    pub fn p_h_prime(&self) -> f64 {
        self.transitions.p_h_prime
    }

    pub fn p_r(&self) -> f64 {
        self.transitions.p_r
    }

    pub fn p_f(&self) -> f64 {
        self.transitions.p_f
    }
}

pub fn derive_sector_models(params: &ModelParams, timings: &TimingDurations) -> Result<Vec<SectorModel>> {
    params.validate()?;
    let frame_slots = timings.n_frame_slots;
    params
        .sector_populations
        .iter()
        .zip(&params.cbap_split)
        .enumerate()
        .map(|(sector, (&n_k, &cbap_k_slots))| {
            if cbap_k_slots <= frame_slots {
                return Err(Error::InfeasibleCbap {
                    sector,
                    cbap_slots: cbap_k_slots,
                    frame_slots,
                });
            }
            let cbap = cbap_k_slots as f64;
            let p_r = cbap / params.bi_slots as f64;
            Ok(SectorModel {
                sector,
                n_k,
                cbap_k_slots,
                transitions: Transitions {
                    p_h: 1.0 / cbap,
                    p_h_prime: frame_slots as f64 / cbap,
                    p_r,
                    p_f: 1.0 - p_r,
                },
            })
        })
        .collect()
}
