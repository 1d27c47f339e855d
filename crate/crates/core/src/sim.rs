//! Slot-level simulator of saturated CSMA/CA inside round-robin sector CBAPs.
//!
//! Backoff runs on the slot grid; successful exchanges and collisions occupy the channel
//! for their exact durations on an integer picosecond clock, so per-window time
//! accounting is exact. Outside its sector's CBAP a station's counter is frozen.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{PerformanceReport, SectorReport};
use crate::params::{BackoffWindows, ModelParams};
use crate::timing::TimingDurations;

const PS_PER_SECOND: f64 = 1e12;

fn to_ps(seconds: f64) -> u64 {
    (seconds * PS_PER_SECOND).round() as u64
}

/// Durations on the simulator clock, in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    pub slot: u64,
    pub success: u64,
    pub collision: u64,
    pub payload: u64,
    /// `N^F` slots: the shortest remaining window in which a station may still start.
    pub guard: u64,
}

impl SimClock {
    pub fn new(params: &ModelParams, timings: &TimingDurations) -> Result<Self> {
        let slot = to_ps(params.slot_time);
        if slot == 0 {
            return Err(Error::InvalidParameter("slot time is below the clock resolution".into()));
        }
        let guard = timings.n_frame_slots * slot;
        Ok(SimClock {
            slot,
            success: to_ps(timings.t_suc).min(guard),
            collision: to_ps(timings.t_col),
            payload: to_ps(timings.e_payload),
            guard,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CbapWindow {
    pub sector: usize,
    pub start_slot: u64,
    pub len_slots: u64,
}

/// Sector CBAPs laid out back to back at the start of every beacon interval; the rest
/// of the interval is one opaque non-contention gap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorSchedule {
    pub windows: Vec<CbapWindow>,
    pub bi_slots: u64,
}

impl SectorSchedule {
    pub fn round_robin(params: &ModelParams) -> Self {
        let mut start = 0;
        let windows = params
            .cbap_split
            .iter()
            .enumerate()
            .map(|(sector, &len_slots)| {
                let window = CbapWindow {
                    sector,
                    start_slot: start,
                    len_slots,
                };
                start += len_slots;
                window
            })
            .collect();
        SectorSchedule {
            windows,
            bi_slots: params.bi_slots,
        }
    }
}

#[derive(Debug, Clone)]
struct Station {
    stage: u32,
    counter: u64,
    /// When the current packet reached the head of the queue.
    hol_since: u64,
    drawn: u64,
    decremented: u64,
    rng: ChaCha8Rng,
}

impl Station {
    fn new(id: usize, seed: u64, windows: &BackoffWindows) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64);
        let mut station = Station {
            stage: 0,
            counter: 0,
            hol_since: 0,
            drawn: 0,
            decremented: 0,
            rng,
        };
        station.draw(windows);
        station
    }

    fn draw(&mut self, windows: &BackoffWindows) {
        self.counter = self.rng.gen_range(0..windows.width(self.stage));
        self.drawn = self.counter;
        self.decremented = 0;
    }

    fn decrement(&mut self, slots: u64) {
        self.counter -= slots;
        self.decremented += slots;
    }
}

/// Counters for one sector over a whole run. Times are in picoseconds.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SectorStats {
    pub sector: usize,
    pub n_k: usize,
    pub cbap_slots: u64,
    /// Length of the sector's window in one beacon interval.
    pub window_ps: u64,
    pub successes: u64,
    pub collisions: u64,
    pub idle_slots: u64,
    /// Idle channel time, including a final partial slot at a window's end.
    pub idle_ps: u64,
    pub busy_ps: u64,
    pub payload_ps: u64,
    pub attempts: u64,
    /// Contention steps: idle slots plus busy periods.
    pub steps: u64,
    pub dropped: u64,
    pub delays_ps: Vec<u64>,
    /// Transmissions whose preceding decrements did not add up to the drawn counter.
    pub backoff_mismatches: u64,
}

impl SectorStats {
    pub fn cbap_time_ps(&self, num_bi: u64) -> u64 {
        self.window_ps * num_bi
    }

    pub fn utilization(&self, num_bi: u64) -> f64 {
        self.payload_ps as f64 / self.cbap_time_ps(num_bi) as f64
    }

    pub fn mean_delay(&self) -> Option<f64> {
        if self.delays_ps.is_empty() {
            return None;
        }
        let total: u128 = self.delays_ps.iter().map(|&d| d as u128).sum();
        Some(total as f64 / self.delays_ps.len() as f64 / PS_PER_SECOND)
    }

    /// Attempts per station per contention step.
    pub fn empirical_tau(&self) -> f64 {
        self.attempts as f64 / (self.n_k as f64 * self.steps as f64)
    }

    pub fn drop_prob(&self) -> f64 {
        let finished = self.successes + self.dropped;
        if finished == 0 {
            0.0
        } else {
            self.dropped as f64 / finished as f64
        }
    }

    /// Idle, success and collision time add up to the CBAP time.
    pub fn conserves_time(&self, clock: &SimClock, num_bi: u64) -> bool {
        self.idle_ps + self.successes * clock.success + self.collisions * clock.collision
            == self.cbap_time_ps(num_bi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimStats {
    pub seed: u64,
    pub num_bi: u64,
    pub clock: SimClock,
    pub sectors: Vec<SectorStats>,
}

impl SimStats {
    pub fn conserves_time(&self) -> bool {
        self.sectors.iter().all(|s| s.conserves_time(&self.clock, self.num_bi))
    }
}

pub const DEFAULT_NUM_BI: u64 = 200;

pub fn run_simulation(params: &ModelParams, timings: &TimingDurations, seed: u64, num_bi: u64) -> Result<SimStats> {
    params.validate()?;
    if num_bi == 0 {
        return Err(Error::InvalidParameter("num_bi must be at least 1".into()));
    }
    let clock = SimClock::new(params, timings)?;
    let windows = params.windows();
    let schedule = SectorSchedule::round_robin(params);
    for w in &schedule.windows {
        if w.len_slots <= timings.n_frame_slots {
            return Err(Error::InfeasibleCbap {
                sector: w.sector,
                cbap_slots: w.len_slots,
                frame_slots: timings.n_frame_slots,
            });
        }
    }

    // Station ids are contiguous per sector; each id owns one random stream.
    let mut sectors: Vec<Vec<Station>> = Vec::with_capacity(params.q);
    let mut next_id = 0;
    for &n_k in &params.sector_populations {
        sectors.push((next_id..next_id + n_k).map(|id| Station::new(id, seed, &windows)).collect());
        next_id += n_k;
    }

    let mut stats: Vec<SectorStats> = params
        .sector_populations
        .iter()
        .zip(&params.cbap_split)
        .enumerate()
        .map(|(sector, (&n_k, &cbap_slots))| SectorStats {
            sector,
            n_k,
            cbap_slots,
            window_ps: cbap_slots * clock.slot,
            ..SectorStats::default()
        })
        .collect();

    let bi_ps = schedule.bi_slots * clock.slot;
    for bi in 0..num_bi {
        for w in &schedule.windows {
            let start = bi * bi_ps + w.start_slot * clock.slot;
            let end = start + w.len_slots * clock.slot;
            run_window(&mut sectors[w.sector], &mut stats[w.sector], &clock, &windows, start, end)?;
        }
    }

    Ok(SimStats {
        seed,
        num_bi,
        clock,
        sectors: stats,
    })
}

fn run_window(
    stations: &mut [Station],
    stats: &mut SectorStats,
    clock: &SimClock,
    windows: &BackoffWindows,
    start: u64,
    end: u64,
) -> Result<()> {
    let mut now = start;
    let (idle_before, busy_before) = (stats.idle_ps, stats.busy_ps);
    let mut transmitters = Vec::with_capacity(stations.len());
    while now < end {
        let remaining = end - now;
        transmitters.clear();
        if remaining >= clock.guard {
            transmitters.extend(stations.iter().enumerate().filter(|(_, s)| s.counter == 0).map(|(i, _)| i));
        }

        if !transmitters.is_empty() {
            let success = transmitters.len() == 1;
            let duration = if success { clock.success } else { clock.collision };
            let finish = now + duration;
            stats.attempts += transmitters.len() as u64;
            stats.steps += 1;
            stats.busy_ps += duration;
            for &i in &transmitters {
                let station = &mut stations[i];
                if station.decremented != station.drawn {
                    stats.backoff_mismatches += 1;
                }
                if success {
                    stats.delays_ps.push(finish - station.hol_since);
                    station.hol_since = finish;
                    station.stage = 0;
                } else if station.stage == windows.m {
                    stats.dropped += 1;
                    station.hol_since = finish;
                    station.stage = 0;
                } else {
                    station.stage += 1;
                }
                station.draw(windows);
            }
            if success {
                stats.successes += 1;
                stats.payload_ps += clock.payload;
            } else {
                stats.collisions += 1;
            }
            now = finish;
            continue;
        }

        if remaining < clock.slot {
            stats.idle_ps += remaining;
            now = end;
            break;
        }

        // Idle slots. Counters at 1 (and waiting counters at 0) need the tail rule, so
        // they are stepped one slot at a time; otherwise skip to the next decision point.
        let nearest = stations.iter().map(|s| s.counter).min().unwrap_or(0);
        let full_slots = remaining / clock.slot;
        let skip = if nearest >= 2 { (nearest - 1).min(full_slots) } else { 1 };
        let after = remaining - skip * clock.slot;
        for station in stations.iter_mut() {
            if station.counter >= 2 {
                station.decrement(skip);
            } else if station.counter == 1 && after >= clock.guard {
                // Only reached with skip == 1.
                station.decrement(1);
            }
        }
        now += skip * clock.slot;
        stats.idle_slots += skip;
        stats.idle_ps += skip * clock.slot;
        stats.steps += skip;
    }

    let used = (stats.idle_ps - idle_before) + (stats.busy_ps - busy_before);
    if now != end || used != end - start {
        return Err(Error::InternalConsistency(format!(
            "sector {} window [{start}, {end}) accounted {used} ps, ended at {now}",
            stats.sector
        )));
    }
    Ok(())
}

/// Maps raw counters onto utilization, delay and drop statistics.
pub fn empirical_report(stats: &SimStats, _params: &ModelParams) -> PerformanceReport {
    let sectors: Vec<SectorReport> = stats
        .sectors
        .iter()
        .map(|s| SectorReport {
            sector: s.sector,
            n_k: s.n_k,
            cbap_k_slots: s.cbap_slots,
            utilization: s.utilization(stats.num_bi),
            mean_delay: s.mean_delay(),
            drop_prob: s.drop_prob(),
            solution: None,
        })
        .collect();
    let mut report = PerformanceReport::from_sectors(sectors);

    let delivered: u64 = stats.sectors.iter().map(|s| s.delays_ps.len() as u64).sum();
    report.mean_delay = (delivered > 0).then(|| {
        let total: u128 = stats
            .sectors
            .iter()
            .flat_map(|s| s.delays_ps.iter())
            .map(|&d| d as u128)
            .sum();
        total as f64 / delivered as f64 / PS_PER_SECOND
    });
    let dropped: u64 = stats.sectors.iter().map(|s| s.dropped).sum();
    let finished = delivered + dropped;
    report.drop_prob = if finished == 0 { 0.0 } else { dropped as f64 / finished as f64 };
    report
}
