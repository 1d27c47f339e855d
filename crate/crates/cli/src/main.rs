use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cbap_core::config::ParamOverrides;
use cbap_core::harness::{self, Mode, SweepSpec};
use cbap_core::oracle;
use cbap_core::params::{ModelParams, WindowConvention};
use cbap_core::sim::DEFAULT_NUM_BI;
use cbap_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Analytical model and simulator of sectored CSMA/CA contention periods in IEEE 802.11ad.
#[derive(Debug, Parser)]
#[command(name = "cbap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the analytical model at one configuration.
    Solve {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Simulate one configuration for each seed.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sweep one parameter, analytically, by simulation, or both.
    Sweep {
        /// Parameter to sweep: n, w0, q or cbap_fraction.
        #[arg(long)]
        param: String,
        /// Values as a list `10,20,30` or an inclusive range `start:stop:step`.
        #[arg(long)]
        values: String,
        /// analytic, sim or both.
        #[arg(long, default_value = "both")]
        mode: String,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check the closed form against the explicit Markov chain on a grid.
    Validate {
        #[arg(long, value_delimiter = ',', default_values_t = [4u32, 8])]
        grid_w0: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 3])]
        grid_m: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5])]
        grid_p: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.01])]
        grid_p_h: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.6])]
        grid_p_f: Vec<f64>,
        #[arg(long, default_value = "doubling")]
        convention: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Join analytic and simulated rows from sweep CSV files and report relative errors.
    Compare {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
struct ParamArgs {
    /// `key = value` configuration file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    w0: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    cbap_fraction: Option<f64>,
    #[arg(long)]
    bi_ms: Option<f64>,
    /// Any configuration key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ParamArgs {
    fn overrides(&self) -> Result<ParamOverrides> {
        let file = match &self.config {
            Some(path) => ParamOverrides::from_file(path)?,
            None => ParamOverrides::default(),
        };
        let mut flags = ParamOverrides::default();
        for item in &self.set {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
            flags.set(key.trim(), value.trim())?;
        }
        let named = ParamOverrides {
            n: self.n,
            q: self.q,
            w0: self.w0,
            m: self.m,
            cbap_fraction: self.cbap_fraction,
            bi_ms: self.bi_ms,
            ..ParamOverrides::default()
        };
        Ok(file.overlay(&flags).overlay(&named))
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Seeds as a list `0,3,7` or a half-open range `0..10`.
    #[arg(long, default_value = "0..10")]
    seeds: String,
    #[arg(long, default_value_t = DEFAULT_NUM_BI)]
    num_bi: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutputArgs {
    fn open(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn emit(output: &OutputArgs, header: &[(String, String)], rows: &[harness::SweepRow]) -> Result<()> {
    let mut out = output.open()?;
    harness::write_csv(&mut out, header, rows)?;
    out.flush()?;
    Ok(())
}

/// Single-point commands fail with the model's own error instead of writing an error row.
fn check_feasible(params: &ModelParams, analytic: bool) -> Result<()> {
    let timings = cbap_core::timing::derive_timings(params)?;
    cbap_core::sector::derive_sector_models(params, &timings)?;
    if analytic {
        cbap_core::metrics::analytical_report(params, &Default::default())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve { params, output } => {
            let resolved = params.overrides()?.resolve()?;
            check_feasible(&resolved, true)?;
            let rows = harness::run_point(&resolved, &[Mode::Analytic], &[], 0, 1)?;
            emit(&output, &harness::config_header(&resolved, &[("mode", "analytic".into())]), &rows)?;
            eprintln!("U = {}, E[D] = {} s", rows[0].u.unwrap_or(f64::NAN), rows[0].mean_delay_s.unwrap_or(f64::NAN));
        }
        Command::Simulate { params, run, output } => {
            let resolved = params.overrides()?.resolve()?;
            check_feasible(&resolved, false)?;
            let seeds = harness::parse_seeds(&run.seeds)?;
            let rows = harness::run_point(&resolved, &[Mode::Sim], &seeds, run.num_bi, run.jobs)?;
            let seed_list = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
            let header = harness::config_header(
                &resolved,
                &[("mode", "sim".into()), ("seeds", seed_list), ("num_bi", run.num_bi.to_string())],
            );
            emit(&output, &header, &rows)?;
        }
        Command::Sweep {
            param,
            values,
            mode,
            params,
            run,
            output,
        } => {
            let spec = SweepSpec {
                param: param.parse()?,
                values: harness::parse_values(&values)?,
                base: params.overrides()?,
                modes: harness::parse_modes(&mode)?,
                seeds: harness::parse_seeds(&run.seeds)?,
                num_bi: run.num_bi,
                jobs: run.jobs,
            };
            let rows = harness::run_sweep(&spec)?;
            emit(&output, &harness::sweep_header(&spec)?, &rows)?;
            let failed = rows.iter().filter(|r| !r.is_ok()).count();
            if failed > 0 {
                eprintln!("{failed} of {} rows are infeasible", rows.len());
            }
        }
        Command::Validate {
            grid_w0,
            grid_m,
            grid_p,
            grid_p_h,
            grid_p_f,
            convention,
            output,
        } => {
            let convention: WindowConvention = convention.parse()?;
            let grid = oracle::grid(&grid_w0, &grid_m, &grid_p, &grid_p_h, &grid_p_f, convention);
            let report = harness::validate(&grid)?;
            let mut out = output.open()?;
            out.write_all(report.render().as_bytes())?;
            out.flush()?;
            if !report.passed() {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Compare { inputs, output } => {
            let mut rows = Vec::new();
            for path in &inputs {
                rows.extend(read_rows(path)?);
            }
            let comparisons = harness::compare(&rows);
            if comparisons.is_empty() {
                return Err(Error::Config("no point has both analytic and simulated rows".into()));
            }
            let mut out = output.open()?;
            harness::write_comparison(&mut out, &comparisons)?;
            out.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_rows(path: &Path) -> Result<Vec<harness::SweepRow>> {
    harness::read_csv(File::open(path)?).map_err(|e| Error::at(path.display().to_string(), e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
