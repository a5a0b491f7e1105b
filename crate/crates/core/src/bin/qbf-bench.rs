//! Benchmark driver: generate instance sets, run sequential and portfolio
//! solves over a manifest, and write cactus/speedup data.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use qbf_portfolio::bench::{cactus_data, compute_speedups, write_cactus_csv, write_speedups_csv, RunRecord};
use qbf_portfolio::formula::{read_qdimacs, Quantifier};
use qbf_portfolio::generate::{random_layered, LayeredParams};
use qbf_portfolio::portfolio::{run_portfolio, PortfolioOptions};

#[derive(Debug, Parser)]
#[command(name = "qbf-bench", version, about = "Speedup measurements for the QBF portfolio")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write random layered instances and a manifest listing them.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Quantifier blocks, outermost first, e.g. `a25,e50`.
        #[arg(long, default_value = "a25,e50")]
        shape: String,
        #[arg(long, default_value_t = 260)]
        clauses: usize,
        #[arg(long, default_value_t = 1)]
        univ_per_clause: usize,
        #[arg(long, default_value_t = 3)]
        exist_per_clause: usize,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 10)]
        count: u64,
    },
    /// Solve every manifest entry with one instance and with a K-instance
    /// portfolio, one run at a time.
    Run {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        threads: usize,
        #[arg(long, default_value_t = 900.0)]
        time_limit: f64,
        /// Runtime charged to sequentially unsolved instances.
        #[arg(long, default_value_t = 50_000.0)]
        seq_limit: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_sharing: bool,
    },
}

fn parse_shape(s: &str) -> Result<Vec<(Quantifier, u32)>, String> {
    s.split(',')
        .map(|b| {
            let (q, n) = b.split_at(1);
            let q = match q {
                "a" | "A" => Quantifier::Universal,
                "e" | "E" => Quantifier::Existential,
                _ => return Err(format!("bad block `{b}`")),
            };
            n.parse().map(|n| (q, n)).map_err(|_| format!("bad block `{b}`"))
        })
        .collect()
}

fn gen(out: &Path, params: &LayeredParams, first_seed: u64, count: u64) -> Result<(), String> {
    fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let mut manifest = String::new();
    for seed in first_seed..first_seed + count {
        let name = format!("layered_{seed}.qdimacs");
        let f = random_layered(params, seed);
        fs::write(out.join(&name), f.to_qdimacs()).map_err(|e| e.to_string())?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    fs::write(out.join("manifest.txt"), manifest).map_err(|e| e.to_string())
}

/// Manifest lines are paths, relative to the manifest's directory unless
/// absolute; blank lines and `#` comments are skipped.
fn read_manifest(path: &Path) -> Result<Vec<PathBuf>, String> {
    let base = path.parent().unwrap_or(Path::new("."));
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| e.to_string())?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(base.join(line));
    }
    Ok(out)
}

fn solve_once(path: &Path, opts: PortfolioOptions, limit: f64) -> Result<RunRecord, String> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let pcnf = read_qdimacs(BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))?;
    let r = run_portfolio(Arc::new(pcnf), opts).map_err(|e| e.to_string())?;
    let solved = r.status.is_decisive();
    Ok(RunRecord {
        id: path.display().to_string(),
        solved,
        wall_time: if solved { r.wall_time.as_secs_f64() } else { limit },
        status: r.status,
    })
}

#[allow(clippy::too_many_arguments)]
fn run(
    manifest: &Path,
    out: &Path,
    threads: usize,
    time_limit: f64,
    seq_limit: f64,
    seed: u64,
    sharing: bool,
) -> Result<(), String> {
    let paths = read_manifest(manifest)?;
    fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let base = PortfolioOptions {
        seed,
        time_limit: Some(Duration::from_secs_f64(time_limit)),
        sharing,
        ..PortfolioOptions::with_threads(1)
    };
    let (mut seq, mut par) = (Vec::new(), Vec::new());
    for p in &paths {
        let s = solve_once(p, base.clone(), time_limit)?;
        let k = solve_once(p, PortfolioOptions { threads, ..base.clone() }, time_limit)?;
        eprintln!(
            "{}: K=1 {} {:.2}s, K={threads} {} {:.2}s",
            s.id,
            s.status.as_str(),
            s.wall_time,
            k.status.as_str(),
            k.wall_time
        );
        seq.push(s);
        par.push(k);
    }
    let report = compute_speedups(&seq, &par, threads, seq_limit).map_err(|e| e.to_string())?;
    let create = |name: &str| File::create(out.join(name)).map(BufWriter::new).map_err(|e| e.to_string());
    write_cactus_csv(create("cactus_seq.csv")?, &cactus_data(&seq)).map_err(|e| e.to_string())?;
    write_cactus_csv(create("cactus.csv")?, &cactus_data(&par)).map_err(|e| e.to_string())?;
    write_speedups_csv(create("speedups.csv")?, &report.rows).map_err(|e| e.to_string())?;
    let mut w = create("report.json")?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| e.to_string())?;
    writeln!(w).map_err(|e| e.to_string())?;
    println!(
        "solved K=1 {}/{n}, K={threads} {}/{n}, median speedup {}",
        seq.iter().filter(|r| r.solved).count(),
        report.solved_parallel,
        report.med_all.map_or("n/a".to_string(), |m| format!("{m:.2}")),
        n = paths.len(),
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Gen { out, shape, clauses, univ_per_clause, exist_per_clause, first_seed, count } => {
            parse_shape(&shape).and_then(|blocks| {
                let params = LayeredParams { blocks, clauses, univ_per_clause, exist_per_clause };
                gen(&out, &params, first_seed, count)
            })
        }
        Cmd::Run { manifest, out, threads, time_limit, seq_limit, seed, no_sharing } => {
            run(&manifest, &out, threads, time_limit, seq_limit, seed, !no_sharing)
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qbf-bench: {e}");
            ExitCode::FAILURE
        }
    }
}
