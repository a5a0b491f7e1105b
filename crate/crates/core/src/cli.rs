//! Command-line front end: solve one QDIMACS file with a portfolio.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::formula::read_qdimacs;
use crate::portfolio::{run_portfolio, InstanceReport, PortfolioOptions, QbceChoice};
use crate::qcdcl::{QbceMode, Statistics, Status};
use crate::sharing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QbceArg {
    Off,
    Pre,
    Inproc,
    Random,
}

#[derive(Debug, Parser)]
#[command(name = "qbf-portfolio", version, about = "Parallel portfolio QBF solver for QDIMACS input")]
pub struct Args {
    /// QDIMACS file; `-` reads standard input.
    pub input: PathBuf,
    /// Number of solver instances [default: available cores].
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 900.0)]
    pub time_limit: f64,
    #[arg(long, default_value_t = sharing::DEFAULT_PERIOD_MS)]
    pub share_period_ms: u64,
    #[arg(long, default_value_t = sharing::DEFAULT_BUFFER_LITS)]
    pub share_buffer_lits: usize,
    #[arg(long)]
    pub no_sharing: bool,
    /// Every instance uses the reference configuration.
    #[arg(long)]
    pub no_diversification: bool,
    /// Override the blocked clause elimination mode of every instance.
    #[arg(long, value_enum)]
    pub qbce: Option<QbceArg>,
    /// Write statistics as JSON to this path.
    #[arg(long)]
    pub stats_json: Option<PathBuf>,
}

impl Args {
    pub fn options(&self) -> PortfolioOptions {
        let threads = self
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        PortfolioOptions {
            threads,
            seed: self.seed,
            time_limit: Some(Duration::from_secs_f64(self.time_limit.max(0.0))),
            sharing: !self.no_sharing,
            diversify: !self.no_diversification,
            qbce: match self.qbce {
                None => QbceChoice::Config,
                Some(QbceArg::Off) => QbceChoice::Fixed(QbceMode::Off),
                Some(QbceArg::Pre) => QbceChoice::Fixed(QbceMode::Preprocess),
                Some(QbceArg::Inproc) => QbceChoice::Fixed(QbceMode::InprocessAtRestart),
                Some(QbceArg::Random) => QbceChoice::Random,
            },
            share_period: Duration::from_millis(self.share_period_ms.max(1)),
            share_buffer_lits: self.share_buffer_lits,
            observer: None,
        }
    }
}

/// Statistics file layout: run summary and summed counters at top level,
/// then one entry per instance.
#[derive(Debug, Serialize)]
pub struct StatsReport {
    pub status: Status,
    pub threads: usize,
    pub seed: u64,
    pub winner: Option<usize>,
    pub timed_out: bool,
    pub exchange_rounds: u64,
    #[serde(flatten)]
    pub totals: Statistics,
    pub instances: Vec<InstanceReport>,
}

pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Sat => 10,
        Status::Unsat => 20,
        Status::Unknown => 0,
    }
}

/// Runs the command line; returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 1;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    let input: Box<dyn Read> = if args.input.as_os_str() == "-" {
        Box::new(io::stdin())
    } else {
        match File::open(&args.input) {
            Ok(f) => Box::new(BufReader::new(f)),
            Err(e) => {
                let _ = writeln!(err, "c cannot open {}: {e}", args.input.display());
                return 1;
            }
        }
    };
    let pcnf = match read_qdimacs(input) {
        Ok(p) => Arc::new(p),
        Err(e) => {
            let _ = writeln!(err, "c parse error: {e}");
            return 1;
        }
    };
    let opts = args.options();
    let threads = opts.threads;
    let result = match run_portfolio(pcnf, opts) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "c {e}");
            return 1;
        }
    };
    let _ = writeln!(out, "c wall time {:.3} s", result.wall_time.as_secs_f64());
    let _ = writeln!(out, "s {}", result.status.as_str());
    if let Some(path) = &args.stats_json {
        let report = StatsReport {
            status: result.status,
            threads,
            seed: args.seed,
            winner: result.winner,
            timed_out: result.timed_out,
            exchange_rounds: result.exchange_rounds,
            totals: result.stats.clone(),
            instances: result.instances.clone(),
        };
        let written = serde_json::to_string_pretty(&report)
            .map_err(io::Error::other)
            .and_then(|s| std::fs::write(path, s + "\n"));
        if let Err(e) = written {
            let _ = writeln!(err, "c cannot write {}: {e}", path.display());
            return 1;
        }
    }
    exit_code(result.status)
}
