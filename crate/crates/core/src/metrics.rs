//! Channel utilization and MAC delay from a solved fixed point.

use crate::error::{Error, Result};
use crate::markov::{solve_fixed_point, FixedPointSolution, SolverOptions};
use crate::params::{BackoffWindows, ModelParams};
use crate::sector::{derive_sector_models, SectorModel};
use crate::timing::{derive_timings, TimingDurations};

/// Outcome probabilities of one contention step, as seen by all stations of a sector
/// and by one tagged station looking at the other `n_k - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotProbabilities {
    pub p_idle: f64,
    pub p_suc: f64,
    pub p_col: f64,
    pub po_idle: f64,
    pub po_suc: f64,
    pub po_col: f64,
}

impl SlotProbabilities {
    pub fn new(tau: f64, n_k: usize) -> Self {
        let n = n_k as i32;
        let quiet = 1.0 - tau;
        let p_idle = quiet.powi(n);
        let p_suc = n as f64 * tau * quiet.powi(n - 1);
        let po_idle = quiet.powi(n - 1);
        let po_suc = if n_k >= 2 {
            (n - 1) as f64 * tau * quiet.powi(n - 2)
        } else {
            0.0
        };
        SlotProbabilities {
            p_idle,
            p_suc,
            p_col: 1.0 - p_idle - p_suc,
            po_idle,
            po_suc,
            po_col: 1.0 - po_idle - po_suc,
        }
    }
}

/// Fraction of a sector's CBAP time carrying successful payload.
pub fn sector_utilization(sp: &SlotProbabilities, timings: &TimingDurations, slot_time: f64) -> f64 {
    let mean_step = sp.p_idle * slot_time + sp.p_suc * timings.t_suc + sp.p_col * timings.t_col;
    sp.p_suc * timings.e_payload / mean_step
}

/// CBAP-time-weighted mean of per-sector utilizations.
pub fn aggregate_utilization(per_sector: &[(f64, u64)]) -> f64 {
    let total: u64 = per_sector.iter().map(|&(_, slots)| slots).sum();
    per_sector
        .iter()
        .map(|&(u, slots)| u * slots as f64)
        .sum::<f64>()
        / total as f64
}

/// Mean real time of one chain step, including time spent outside the sector's CBAP.
pub fn sigma_avg(sp: &SlotProbabilities, timings: &TimingDurations, sector: &SectorModel, params: &ModelParams) -> f64 {
    let p_h = sector.p_h();
    let contention = sp.po_idle * params.slot_time + sp.po_suc * timings.t_suc + sp.po_col * timings.t_col;
    let outside_slots = (params.bi_slots - sector.cbap_k_slots) as f64;
    (1.0 - p_h) * contention + p_h * outside_slots * params.slot_time
}

/// `P(TX = i | success)` for `i` in `0..=m`.
pub fn stage_success_weights(p: f64, m: u32) -> Vec<f64> {
    let delivered = 1.0 - p.powi(m as i32 + 1);
    (0..=m)
        .map(|i| if delivered > 0.0 { p.powi(i as i32) * (1.0 - p) / delivered } else { 0.0 })
        .collect()
}

pub fn drop_probability(p: f64, m: u32) -> f64 {
    p.powi(m as i32 + 1)
}

/// Mean delay from reaching the head of the queue to successful delivery, in seconds.
pub fn expected_delay(
    sol: &FixedPointSolution,
    sp: &SlotProbabilities,
    timings: &TimingDurations,
    sector: &SectorModel,
    params: &ModelParams,
    windows: &BackoffWindows,
) -> Result<f64> {
    let decrement = 1.0 - sol.p_b - sector.p_h();
    if decrement.is_nan() || decrement <= 0.0 {
        return Err(Error::SaturationInfeasible { decrement });
    }
    let step = sigma_avg(sp, timings, sector, params);
    let weights = stage_success_weights(sol.p, windows.m);
    let mut backoff_slots = 0.0;
    let mut delay = 0.0;
    for (stage, weight) in (0..=windows.m).zip(weights) {
        backoff_slots += (windows.width(stage) as f64 - 1.0) / 2.0;
        let stage_delay = stage as f64 * timings.t_col + timings.t_suc + backoff_slots * step / decrement;
        delay += weight * stage_delay;
    }
    Ok(delay)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorReport {
    pub sector: usize,
    pub n_k: usize,
    pub cbap_k_slots: u64,
    pub utilization: f64,
    /// `None` when no packet was delivered (simulation only).
    pub mean_delay: Option<f64>,
    pub drop_prob: f64,
    pub solution: Option<FixedPointSolution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    pub sectors: Vec<SectorReport>,
    pub utilization: f64,
    pub mean_delay: Option<f64>,
    pub drop_prob: f64,
}

impl PerformanceReport {
    /// Aggregates sector rows. The mean delay is averaged over delivered packets, so each
    /// sector is weighted by its delivery rate `n_k / E[D_k]`; the drop probability by
    /// station count.
    pub fn from_sectors(sectors: Vec<SectorReport>) -> Self {
        let utilization = aggregate_utilization(
            &sectors.iter().map(|s| (s.utilization, s.cbap_k_slots)).collect::<Vec<_>>(),
        );
        let stations: usize = sectors.iter().map(|s| s.n_k).sum();
        let delivered: Vec<(usize, f64)> = sectors
            .iter()
            .filter_map(|s| s.mean_delay.map(|d| (s.n_k, d)))
            .collect();
        let mean_delay = if delivered.is_empty() {
            None
        } else {
            let n: usize = delivered.iter().map(|&(n_k, _)| n_k).sum();
            let rate: f64 = delivered.iter().map(|&(n_k, d)| n_k as f64 / d).sum();
            Some(n as f64 / rate)
        };
        let drop_prob = sectors.iter().map(|s| s.drop_prob * s.n_k as f64).sum::<f64>() / stations as f64;
        PerformanceReport {
            sectors,
            utilization,
            mean_delay,
            drop_prob,
        }
    }
}

/// Solves every sector and assembles utilization and delay.
pub fn analytical_report(params: &ModelParams, opts: &SolverOptions) -> Result<PerformanceReport> {
    let timings = derive_timings(params)?;
    let sectors = derive_sector_models(params, &timings)?;
    let windows = params.windows();
    let rows = sectors
        .iter()
        .map(|sector| {
            let sol = solve_fixed_point(sector.n_k, &sector.transitions, &windows, opts)?;
            let sp = SlotProbabilities::new(sol.tau, sector.n_k);
            Ok(SectorReport {
                sector: sector.sector,
                n_k: sector.n_k,
                cbap_k_slots: sector.cbap_k_slots,
                utilization: sector_utilization(&sp, &timings, params.slot_time),
                mean_delay: Some(expected_delay(&sol, &sp, &timings, sector, params, &windows)?),
                drop_prob: drop_probability(sol.p, windows.m),
                solution: Some(sol),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PerformanceReport::from_sectors(rows))
}
