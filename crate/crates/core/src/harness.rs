//! Parameter sweeps, CSV datasets, oracle validation reports and analytic-vs-simulation
//! comparison. Everything here is deterministic for fixed inputs, whatever the thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::ParamOverrides;
use crate::error::{Error, Result};
use crate::markov::SolverOptions;
use crate::metrics::{analytical_report, PerformanceReport};
use crate::oracle::{validate_point, GridPoint, ValidationRow};
use crate::params::ModelParams;
use crate::sim::{empirical_report, run_simulation};
use crate::timing::derive_timings;

/// Largest closed-form vs oracle relative error accepted by [`ValidationReport::passed`].
pub const VALIDATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Analytic,
    Sim,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Analytic => "analytic",
            Mode::Sim => "sim",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Mode::Analytic),
            "sim" => Ok(Mode::Sim),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Parses `analytic`, `sim` or `both`.
pub fn parse_modes(s: &str) -> Result<Vec<Mode>> {
    match s {
        "both" => Ok(vec![Mode::Analytic, Mode::Sim]),
        other => Ok(vec![other.parse()?]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptParam {
    N,
    W0,
    Q,
    CbapFraction,
}

impl fmt::Display for SweptParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweptParam::N => "n",
            SweptParam::W0 => "w0",
            SweptParam::Q => "q",
            SweptParam::CbapFraction => "cbap_fraction",
        })
    }
}

impl FromStr for SweptParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweptParam::N),
            "w0" => Ok(SweptParam::W0),
            "q" | "Q" => Ok(SweptParam::Q),
            "cbap_fraction" | "cbap-fraction" => Ok(SweptParam::CbapFraction),
            other => Err(Error::Config(format!(
                "cannot sweep {other:?}; expected one of n, w0, q, cbap_fraction"
            ))),
        }
    }
}

impl SweptParam {
    /// Sets the swept parameter on top of `base`.
    pub fn apply(&self, base: &ParamOverrides, value: f64) -> Result<ParamOverrides> {
        let integer = || {
            if value.fract() == 0.0 && value >= 0.0 && value <= u32::MAX as f64 {
                Ok(value as u32)
            } else {
                Err(Error::Config(format!("{self} must be a non-negative integer, got {value}")))
            }
        };
        let mut layer = ParamOverrides::default();
        match self {
            SweptParam::N => layer.n = Some(integer()? as usize),
            SweptParam::W0 => layer.w0 = Some(integer()?),
            SweptParam::Q => layer.q = Some(integer()? as usize),
            SweptParam::CbapFraction => layer.cbap_fraction = Some(value),
        }
        Ok(base.clone().overlay(&layer))
    }
}

/// Parses a value list such as `10,20,30` or the inclusive range `5:50:5`.
pub fn parse_values(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("malformed value list {s:?}"));
    let number = |t: &str| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else { return Err(bad()) };
        let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
        if step <= 0.0 || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=count).map(|i| start + i as f64 * step).collect()
    } else {
        s.split(',').map(number).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(Error::Config("empty value list".into()));
    }
    Ok(values)
}

/// Parses seeds as a list `0,3,7` or a half-open range `0..10`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("malformed seed list {s:?}"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (a.trim().parse::<u64>().map_err(|_| bad())?, b.trim().parse::<u64>().map_err(|_| bad())?);
        (a..b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweptParam,
    pub values: Vec<f64>,
    pub base: ParamOverrides,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub num_bi: u64,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("sweep needs at least one mode".into()));
        }
        if self.modes.contains(&Mode::Sim) && (self.seeds.is_empty() || self.num_bi == 0) {
            return Err(Error::Config("simulation needs at least one seed and one beacon interval".into()));
        }
        self.base.resolve()?;
        Ok(())
    }
}

/// One CSV row: an analytic solve or one simulation seed at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mode: Mode,
    pub swept: String,
    pub value: f64,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub n: usize,
    pub q: usize,
    pub w0: u32,
    pub m: u32,
    pub cbap_fraction: f64,
    pub u_sectors: Vec<f64>,
    pub u: Option<f64>,
    pub mean_delay_s: Option<f64>,
    pub drop_prob: Option<f64>,
    pub num_bi: Option<u64>,
    /// `ok`, or `error: ...` for an infeasible point.
    pub status: String,
}

pub const CSV_COLUMNS: [&str; 16] = [
    "mode",
    "swept",
    "value",
    "config_hash",
    "seed",
    "n",
    "q",
    "w0",
    "m",
    "cbap_fraction",
    "u_sectors",
    "u",
    "mean_delay_s",
    "drop_prob",
    "num_bi",
    "status",
];

impl SweepRow {
    fn new(mode: Mode, swept: &str, value: f64, params: &ModelParams, seed: Option<u64>, num_bi: Option<u64>) -> Self {
        SweepRow {
            mode,
            swept: swept.to_string(),
            value,
            config_hash: params.config_hash(),
            seed,
            n: params.n,
            q: params.q,
            w0: params.w0,
            m: params.m,
            cbap_fraction: params.cbap_fraction(),
            u_sectors: Vec::new(),
            u: None,
            mean_delay_s: None,
            drop_prob: None,
            num_bi,
            status: "ok".into(),
        }
    }

    fn fill(mut self, outcome: Result<PerformanceReport>) -> Self {
        match outcome {
            Ok(report) => {
                self.u_sectors = report.sectors.iter().map(|s| s.utilization).collect();
                self.u = Some(report.utilization);
                self.mean_delay_s = report.mean_delay;
                self.drop_prob = Some(report.drop_prob);
            }
            Err(e) => self.status = format!("error: {e}"),
        }
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn record(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            self.mode.to_string(),
            self.swept.clone(),
            self.value.to_string(),
            self.config_hash.clone(),
            opt(self.seed.map(|s| s.to_string())),
            self.n.to_string(),
            self.q.to_string(),
            self.w0.to_string(),
            self.m.to_string(),
            self.cbap_fraction.to_string(),
            self.u_sectors.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            opt(self.u.map(|v| v.to_string())),
            opt(self.mean_delay_s.map(|v| v.to_string())),
            opt(self.drop_prob.map(|v| v.to_string())),
            opt(self.num_bi.map(|v| v.to_string())),
            self.status.clone(),
        ]
    }

    fn from_record(record: &csv::StringRecord) -> Result<Self> {
        if record.len() != CSV_COLUMNS.len() {
            return Err(Error::Config(format!(
                "expected {} columns, found {}",
                CSV_COLUMNS.len(),
                record.len()
            )));
        }
        let field = |i: usize| &record[i];
        fn num<T: FromStr>(name: &str, s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Config(format!("bad {name} value {s:?}")))
        }
        fn opt<T: FromStr>(name: &str, s: &str) -> Result<Option<T>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(name, s).map(Some)
            }
        }
        let u_sectors = if field(10).is_empty() {
            Vec::new()
        } else {
            field(10).split(';').map(|s| num("u_sectors", s)).collect::<Result<_>>()?
        };
        Ok(SweepRow {
            mode: field(0).parse()?,
            swept: field(1).to_string(),
            value: num("value", field(2))?,
            config_hash: field(3).to_string(),
            seed: opt("seed", field(4))?,
            n: num("n", field(5))?,
            q: num("q", field(6))?,
            w0: num("w0", field(7))?,
            m: num("m", field(8))?,
            cbap_fraction: num("cbap_fraction", field(9))?,
            u_sectors,
            u: opt("u", field(11))?,
            mean_delay_s: opt("mean_delay_s", field(12))?,
            drop_prob: opt("drop_prob", field(13))?,
            num_bi: opt("num_bi", field(14))?,
            status: field(15).to_string(),
        })
    }
}

pub fn analytic_row(params: &ModelParams, swept: &str, value: f64) -> SweepRow {
    SweepRow::new(Mode::Analytic, swept, value, params, None, None)
        .fill(analytical_report(params, &SolverOptions::default()))
}

pub fn sim_row(params: &ModelParams, swept: &str, value: f64, seed: u64, num_bi: u64) -> SweepRow {
    let outcome = derive_timings(params)
        .and_then(|t| run_simulation(params, &t, seed, num_bi))
        .map(|stats| empirical_report(&stats, params));
    SweepRow::new(Mode::Sim, swept, value, params, Some(seed), Some(num_bi)).fill(outcome)
}

/// Runs every (value, mode, seed) task, concurrently up to `spec.jobs` threads.
///
/// Rows come back sorted by swept value, then mode, then seed. Invalid parameter values
/// abort the sweep; infeasible model points produce rows with an error status instead.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let swept = spec.param.to_string();
    let mut points = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let params = spec
            .param
            .apply(&spec.base, value)?
            .resolve()
            .map_err(|e| Error::at(format!("{swept} = {value}"), e))?;
        points.push((value, params));
    }

    execute(&points, &swept, &spec.modes, &spec.seeds, spec.num_bi, spec.jobs)
}

/// Swept-parameter label of rows from [`run_point`].
pub const SINGLE_POINT: &str = "none";

/// Runs one configuration; rows carry [`SINGLE_POINT`] as the swept parameter and value 0.
pub fn run_point(
    params: &ModelParams,
    modes: &[Mode],
    seeds: &[u64],
    num_bi: u64,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    let spec = SweepSpec {
        param: SweptParam::N,
        values: vec![0.0],
        base: ParamOverrides::default(),
        modes: modes.to_vec(),
        seeds: seeds.to_vec(),
        num_bi,
        jobs,
    };
    spec.validate()?;
    params.validate()?;
    execute(&[(0.0, params.clone())], SINGLE_POINT, modes, seeds, num_bi, jobs)
}

fn execute(
    points: &[(f64, ModelParams)],
    swept: &str,
    modes: &[Mode],
    seeds: &[u64],
    num_bi: u64,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    let mut tasks: Vec<(usize, Option<u64>)> = Vec::new();
    for i in 0..points.len() {
        for &mode in modes {
            match mode {
                Mode::Analytic => tasks.push((i, None)),
                Mode::Sim => tasks.extend(seeds.iter().map(|&s| (i, Some(s)))),
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, seed)| {
                let (value, params) = &points[i];
                match seed {
                    None => analytic_row(params, swept, *value),
                    Some(seed) => sim_row(params, swept, *value, seed, num_bi),
                }
            })
            .collect()
    });
    rows.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.mode.cmp(&b.mode))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

/// Writes `# key = value` comment lines for the effective configuration, then the rows.
pub fn write_csv<W: Write>(mut out: W, header: &[(String, String)], rows: &[SweepRow]) -> Result<()> {
    for (key, value) in header {
        writeln!(out, "# {key} = {value}")?;
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_COLUMNS)?;
    for row in rows {
        writer.write_record(row.record())?;
    }
    writer.flush()?;
    Ok(())
}

/// Header comments for a run: the resolved base configuration plus run settings.
pub fn config_header(params: &ModelParams, extra: &[(&str, String)]) -> Vec<(String, String)> {
    params
        .to_key_values()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .chain(extra.iter().map(|(k, v)| (k.to_string(), v.clone())))
        .collect()
}

pub fn sweep_header(spec: &SweepSpec) -> Result<Vec<(String, String)>> {
    let seeds = spec.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
    let values = spec.values.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let modes = spec.modes.iter().map(Mode::to_string).collect::<Vec<_>>().join(",");
    Ok(config_header(
        &spec.base.resolve()?,
        &[
            ("swept", spec.param.to_string()),
            ("values", values),
            ("modes", modes),
            ("seeds", seeds),
            ("num_bi", spec.num_bi.to_string()),
        ],
    ))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Config(format!("unexpected CSV header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    reader
        .records()
        .map(|r| SweepRow::from_record(&r?))
        .collect()
}

/// Closed form against the explicit-chain oracle over a grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn worst_rel_err(&self) -> f64 {
        self.rows.iter().map(ValidationRow::worst_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst_rel_err() <= VALIDATION_TOL
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:>3} {:>2} {:>5} {:>6} {:>6} {:>4} {:>20} {:>20} {:>10} {:>10}\n",
            "w0", "m", "p", "p_H", "p'_H", "p_f", "closed b000", "oracle b000", "b000 err", "tau err"
        );
        for r in &self.rows {
            let g = &r.point;
            out += &format!(
                "{:>3} {:>2} {:>5} {:>6} {:>6} {:>4} {:>20.15e} {:>20.15e} {:>10.3e} {:>10.3e}\n",
                g.w0, g.m, g.p, g.p_h, g.p_h_prime, g.p_f, r.closed_b000, r.oracle_b000, r.b000_rel_err, r.tau_rel_err
            );
        }
        out += &format!(
            "{} points, worst relative error {:.3e} (limit {:.0e}): {}\n",
            self.rows.len(),
            self.worst_rel_err(),
            VALIDATION_TOL,
            if self.passed() { "ok" } else { "FAILED" }
        );
        out
    }
}

pub fn validate(grid: &[GridPoint]) -> Result<ValidationReport> {
    let rows = grid
        .par_iter()
        .map(|point| validate_point(point).map_err(|e| Error::at(format!("{point:?}"), e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport { rows })
}

/// Analytic and averaged simulated results at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub swept: String,
    pub value: f64,
    pub config_hash: String,
    pub u_analytic: f64,
    pub u_sim: f64,
    /// Standard error of the simulated mean over seeds; zero for a single seed.
    pub u_sim_se: f64,
    pub delay_analytic_s: Option<f64>,
    pub delay_sim_s: Option<f64>,
    pub seeds: usize,
}

impl Comparison {
    pub fn u_rel_err(&self) -> f64 {
        (self.u_sim - self.u_analytic) / self.u_analytic
    }

    pub fn delay_rel_err(&self) -> Option<f64> {
        Some((self.delay_sim_s? - self.delay_analytic_s?) / self.delay_analytic_s?)
    }
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Joins analytic rows with simulated rows of the same point. Points lacking either side,
/// or with only failed rows, are skipped.
pub fn compare(rows: &[SweepRow]) -> Vec<Comparison> {
    type Key = (String, u64, String);
    let mut groups: BTreeMap<Key, (Option<&SweepRow>, Vec<&SweepRow>)> = BTreeMap::new();
    let mut order: Vec<Key> = Vec::new();
    for row in rows.iter().filter(|r| r.is_ok()) {
        let key = (row.swept.clone(), row.value.to_bits(), row.config_hash.clone());
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (None, Vec::new())
        });
        match row.mode {
            Mode::Analytic => entry.0 = Some(row),
            Mode::Sim => entry.1.push(row),
        }
    }
    order.sort_by(|a, b| a.0.cmp(&b.0).then(f64::from_bits(a.1).total_cmp(&f64::from_bits(b.1))));
    order
        .into_iter()
        .filter_map(|key| {
            let (analytic, sims) = &groups[&key];
            let analytic = (*analytic)?;
            if sims.is_empty() {
                return None;
            }
            let us: Vec<f64> = sims.iter().filter_map(|r| r.u).collect();
            let (u_sim, u_sim_se) = mean_and_se(&us);
            let delays: Vec<f64> = sims.iter().filter_map(|r| r.mean_delay_s).collect();
            Some(Comparison {
                swept: key.0,
                value: f64::from_bits(key.1),
                config_hash: key.2,
                u_analytic: analytic.u?,
                u_sim,
                u_sim_se,
                delay_analytic_s: analytic.mean_delay_s,
                delay_sim_s: (!delays.is_empty()).then(|| mean_and_se(&delays).0),
                seeds: sims.len(),
            })
        })
        .collect()
}

pub fn write_comparison<W: Write>(out: W, rows: &[Comparison]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "swept",
        "value",
        "config_hash",
        "seeds",
        "u_analytic",
        "u_sim",
        "u_sim_se",
        "u_rel_err",
        "delay_analytic_s",
        "delay_sim_s",
        "delay_rel_err",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in rows {
        writer.write_record([
            c.swept.clone(),
            c.value.to_string(),
            c.config_hash.clone(),
            c.seeds.to_string(),
            c.u_analytic.to_string(),
            c.u_sim.to_string(),
            c.u_sim_se.to_string(),
            c.u_rel_err().to_string(),
            opt(c.delay_analytic_s),
            opt(c.delay_sim_s),
            opt(c.delay_rel_err()),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::WindowConvention;

    fn spec(param: SweptParam, values: Vec<f64>, modes: Vec<Mode>) -> SweepSpec {
        SweepSpec {
            param,
            values,
            base: ParamOverrides::default(),
            modes,
            seeds: vec![0, 1],
            num_bi: 3,
            jobs: 2,
        }
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("10,20, 30").unwrap(), vec![10.0, 20.0, 30.0]);
        assert_eq!(parse_values("5:20:5").unwrap(), vec![5.0, 10.0, 15.0, 20.0]);
        assert_eq!(parse_values("0.4").unwrap(), vec![0.4]);
        assert!(parse_values("").is_err());
        assert!(parse_values("5:1:1").is_err());
        assert!(parse_values("a,b").is_err());
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4,2").unwrap(), vec![4, 2]);
        assert!(parse_seeds("3..3").is_err());
    }

    #[test]
    fn modes_and_params_parse() {
        assert_eq!(parse_modes("both").unwrap(), vec![Mode::Analytic, Mode::Sim]);
        assert_eq!(parse_modes("sim").unwrap(), vec![Mode::Sim]);
        assert!(parse_modes("plot").is_err());
        assert_eq!("Q".parse::<SweptParam>().unwrap(), SweptParam::Q);
        assert!("m".parse::<SweptParam>().is_err());
        assert!(SweptParam::N.apply(&ParamOverrides::default(), 2.5).is_err());
    }

    #[test]
    fn empty_mode_list_is_config_error() {
        let err = run_sweep(&spec(SweptParam::N, vec![10.0], vec![])).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn rows_sorted_by_value_mode_seed() {
        let rows = run_sweep(&spec(SweptParam::N, vec![20.0, 5.0], vec![Mode::Sim, Mode::Analytic])).unwrap();
        let keys: Vec<(f64, Mode, Option<u64>)> = rows.iter().map(|r| (r.value, r.mode, r.seed)).collect();
        assert_eq!(
            keys,
            vec![
                (5.0, Mode::Analytic, None),
                (5.0, Mode::Sim, Some(0)),
                (5.0, Mode::Sim, Some(1)),
                (20.0, Mode::Analytic, None),
                (20.0, Mode::Sim, Some(0)),
                (20.0, Mode::Sim, Some(1)),
            ]
        );
        assert!(rows.iter().all(SweepRow::is_ok));
        assert_eq!(rows[0].config_hash, rows[1].config_hash);
        assert_ne!(rows[0].config_hash, rows[3].config_hash);
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let mut s = spec(SweptParam::W0, vec![7.0, 15.0], vec![Mode::Analytic, Mode::Sim]);
        let render = |s: &SweepSpec| {
            let mut buf = Vec::new();
            write_csv(&mut buf, &sweep_header(s).unwrap(), &run_sweep(s).unwrap()).unwrap();
            buf
        };
        let a = render(&s);
        s.jobs = 1;
        assert_eq!(a, render(&s));
    }

    #[test]
    fn infeasible_point_becomes_error_row() {
        // 0.0006 of 20000 slots is 12 slots, shorter than a frame exchange.
        let rows = run_sweep(&spec(SweptParam::CbapFraction, vec![0.0006, 0.4], vec![Mode::Analytic, Mode::Sim])).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows[..3].iter().all(|r| r.status.starts_with("error: infeasible CBAP") && r.u.is_none()));
        assert!(rows[3..].iter().all(SweepRow::is_ok));
    }

    #[test]
    fn invalid_value_aborts_with_config_error() {
        let err = run_sweep(&spec(SweptParam::N, vec![10.0, 0.0], vec![Mode::Analytic])).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("n = 0"));
    }

    #[test]
    fn csv_round_trip() {
        let s = spec(SweptParam::CbapFraction, vec![0.0006, 0.4], vec![Mode::Analytic, Mode::Sim]);
        let rows = run_sweep(&s).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &sweep_header(&s).unwrap(), &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# n = 10\n"));
        assert!(text.contains("# swept = cbap_fraction\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn sector_sweep_favours_more_sectors() {
        let mut s = spec(SweptParam::Q, vec![1.0, 2.0, 3.0, 4.0], vec![Mode::Analytic]);
        s.base.n = Some(40);
        let rows = run_sweep(&s).unwrap();
        let u: Vec<f64> = rows.iter().map(|r| r.u.unwrap()).collect();
        assert!(u[2] > u[0] && u[3] > u[0], "{u:?}");
        assert_eq!(rows[3].u_sectors.len(), 4);
    }

    #[test]
    fn analytic_sweep_orders_windows_at_fifty_stations() {
        let mut s = spec(SweptParam::W0, vec![7.0, 15.0, 31.0], vec![Mode::Analytic]);
        s.base.n = Some(50);
        let u: Vec<f64> = run_sweep(&s).unwrap().iter().map(|r| r.u.unwrap()).collect();
        assert!(u[2] > u[1] && u[1] > u[0], "{u:?}");
    }

    #[test]
    fn validation_reports() {
        let empty = validate(&[]).unwrap();
        assert!(empty.rows.is_empty() && empty.passed());
        assert!(empty.render().contains("0 points"));

        let grid = crate::oracle::default_grid();
        let report = validate(&grid[..6]).unwrap();
        assert_eq!(report.rows.len(), 6);
        assert!(report.passed());

        let huge = GridPoint {
            w0: 1024,
            m: 8,
            p: 0.3,
            p_h: 0.0,
            p_h_prime: 0.0,
            p_f: 0.0,
            convention: WindowConvention::Doubling,
        };
        let err = validate(&[huge]).unwrap_err();
        assert!(err.to_string().contains("w0: 1024"), "{err}");
        assert!(matches!(err, Error::AtPoint { ref source, .. } if matches!(**source, Error::ChainTooLarge { .. })));
    }

    #[test]
    fn comparison_joins_by_point() {
        let rows = run_sweep(&spec(SweptParam::N, vec![5.0, 10.0], vec![Mode::Analytic, Mode::Sim])).unwrap();
        let cmp = compare(&rows);
        assert_eq!(cmp.len(), 2);
        assert_eq!(cmp[0].value, 5.0);
        assert_eq!(cmp[0].seeds, 2);
        assert!(cmp[0].u_rel_err().is_finite());
        let only_analytic: Vec<SweepRow> = rows.into_iter().filter(|r| r.mode == Mode::Analytic).collect();
        assert!(compare(&only_analytic).is_empty());
    }

    #[test]
    fn single_point_keeps_explicit_populations() {
        let params = ParamOverrides {
            sector_populations: Some(vec![3, 7]),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let rows = run_point(&params, &[Mode::Analytic, Mode::Sim], &[5], 2, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.swept == SINGLE_POINT && r.q == 2 && r.is_ok()));
        assert_eq!(rows[0].config_hash, params.config_hash());
        assert_eq!(rows[1].seed, Some(5));
    }

    #[test]
    fn standard_error() {
        let (m, se) = mean_and_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
        assert_eq!(mean_and_se(&[4.0]), (4.0, 0.0));
    }
}
