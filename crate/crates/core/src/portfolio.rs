//! Runs K diversified solver instances on one formula, exchanges learned
//! constraints between them and returns the first decisive answer.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::formula::Pcnf;
use crate::qcdcl::{Budget, ImportHandle, QbceMode, SolveResult, Solver, SolverConfig, Statistics, Status};
use crate::sharing::{self, Exchange, ExportBuffer};

/// How the QBCE mode of each instance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QbceChoice {
    /// Whatever the instance configuration says.
    Config,
    Fixed(QbceMode),
    /// Uniform per rank, drawn from the global seed.
    Random,
}

/// Called with (rank, encoded constraint) for every learned constraint.
pub type LearnObserver = Arc<dyn Fn(usize, &[i32]) + Send + Sync>;

#[derive(Clone)]
pub struct PortfolioOptions {
    pub threads: usize,
    pub seed: u64,
    pub time_limit: Option<Duration>,
    pub sharing: bool,
    pub diversify: bool,
    pub qbce: QbceChoice,
    pub share_period: Duration,
    pub share_buffer_lits: usize,
    pub observer: Option<LearnObserver>,
}

impl Default for PortfolioOptions {
    fn default() -> Self {
        PortfolioOptions {
            threads: 1,
            seed: 0,
            time_limit: None,
            sharing: true,
            diversify: true,
            qbce: QbceChoice::Config,
            share_period: Duration::from_millis(sharing::DEFAULT_PERIOD_MS),
            share_buffer_lits: sharing::DEFAULT_BUFFER_LITS,
            observer: None,
        }
    }
}

impl PortfolioOptions {
    pub fn with_threads(threads: usize) -> PortfolioOptions {
        PortfolioOptions {
            threads,
            ..PortfolioOptions::default()
        }
    }

    /// Configuration of every rank, which depends only on the thread count,
    /// seed, diversification switch and QBCE choice.
    pub fn configs(&self) -> Vec<SolverConfig> {
        let k = self.threads.max(1);
        (0..k)
            .map(|rank| {
                let mut cfg = if self.diversify {
                    SolverConfig::diversify(rank, k, self.seed).expect("rank < size")
                } else {
                    SolverConfig::reference()
                };
                match self.qbce {
                    QbceChoice::Config => {}
                    QbceChoice::Fixed(m) => cfg.qbce = m,
                    QbceChoice::Random => {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (rank as u64).rotate_left(32));
                        cfg.qbce = QbceMode::ALL[rng.gen_range(0..QbceMode::ALL.len())];
                    }
                }
                cfg
            })
            .collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PortfolioError {
    #[error("portfolio needs at least one thread")]
    NoThreads,
    #[error("all {} solver instances failed: {}", .0.len(), .0.join("; "))]
    AllFailed(Vec<String>),
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceReport {
    pub rank: usize,
    pub config: SolverConfig,
    pub status: Status,
    pub stats: Statistics,
    pub failure: Option<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Serialize)]
pub struct PortfolioResult {
    pub status: Status,
    /// Rank whose answer was returned.
    pub winner: Option<usize>,
    pub timed_out: bool,
    /// False if two instances returned contradicting answers.
    pub agreement: bool,
    /// Sum over all instances.
    pub stats: Statistics,
    pub exchange_rounds: u64,
    pub instances: Vec<InstanceReport>,
    #[serde(skip)]
    pub wall_time: Duration,
    /// From the first decisive answer until every instance has returned.
    #[serde(skip)]
    pub teardown: Option<Duration>,
}

type Outcome = (usize, Result<SolveResult, String>);

/// A running portfolio.
pub struct PortfolioHandle {
    stop: Arc<AtomicBool>,
    coordinator: JoinHandle<Result<PortfolioResult, PortfolioError>>,
}

impl PortfolioHandle {
    /// Spawns K solver threads and a coordinator thread.
    pub fn start(pcnf: Arc<Pcnf>, opts: PortfolioOptions) -> Result<PortfolioHandle, PortfolioError> {
        if opts.threads == 0 {
            return Err(PortfolioError::NoThreads);
        }
        let stop = Arc::new(AtomicBool::new(false));
        let stop_c = Arc::clone(&stop);
        let coordinator = thread::Builder::new()
            .name("portfolio-coordinator".into())
            .spawn(move || coordinate(pcnf, opts, stop_c))
            .expect("spawn coordinator");
        Ok(PortfolioHandle { stop, coordinator })
    }

    /// Asks every instance to return as soon as possible. Idempotent.
    pub fn stop_all(&self) {
        self.stop.store(true, Ordering::Relaxed);
    }

    pub fn wait(self) -> Result<PortfolioResult, PortfolioError> {
        self.coordinator
            .join()
            .unwrap_or_else(|_| Err(PortfolioError::AllFailed(vec!["coordinator panicked".into()])))
    }
}

/// Runs the portfolio to completion.
pub fn run_portfolio(pcnf: Arc<Pcnf>, opts: PortfolioOptions) -> Result<PortfolioResult, PortfolioError> {
    PortfolioHandle::start(pcnf, opts)?.wait()
}

fn coordinate(
    pcnf: Arc<Pcnf>,
    opts: PortfolioOptions,
    stop: Arc<AtomicBool>,
) -> Result<PortfolioResult, PortfolioError> {
    let start = Instant::now();
    let k = opts.threads;
    let num_vars = pcnf.num_vars();
    let configs = opts.configs();
    let (tx, rx) = mpsc::channel::<Outcome>();

    let mut outboxes: Vec<Arc<Mutex<Vec<Vec<i32>>>>> = Vec::with_capacity(k);
    let mut inboxes: Vec<ImportHandle> = Vec::with_capacity(k);
    let mut threads = Vec::with_capacity(k);
    for (rank, cfg) in configs.iter().enumerate() {
        let mut solver = Solver::new(Arc::clone(&pcnf), cfg.clone());
        let outbox: Arc<Mutex<Vec<Vec<i32>>>> = Arc::default();
        let share = opts.sharing && k > 1;
        if share || opts.observer.is_some() {
            let ob = Arc::clone(&outbox);
            let observer = opts.observer.clone();
            solver.set_export_callback(Box::new(move |msg: &[i32]| {
                if let Some(f) = &observer {
                    f(rank, msg);
                }
                if share {
                    ob.lock().unwrap_or_else(|e| e.into_inner()).push(msg.to_vec());
                }
            }));
        }
        inboxes.push(solver.import_handle());
        outboxes.push(outbox);
        let budget = Budget {
            time_limit: opts.time_limit,
            max_conflicts: None,
            stop: Some(Arc::clone(&stop)),
        };
        let tx = tx.clone();
        let handle = thread::Builder::new()
            .name(format!("solver-{rank}"))
            .spawn(move || {
                let r = catch_unwind(AssertUnwindSafe(|| solver.solve(&budget)))
                    .map_err(|e| panic_message(&e));
                let _ = tx.send((rank, r));
            })
            .expect("spawn solver thread");
        threads.push(handle);
    }
    drop(tx);

    let mut exchange = Exchange::new(k, num_vars);
    let mut buffers = vec![ExportBuffer::new(opts.share_buffer_lits); k];
    let mut results: Vec<Option<Result<SolveResult, String>>> = (0..k).map(|_| None).collect();
    let mut winner: Option<(usize, Status)> = None;
    let mut agreement = true;
    let mut first_answer: Option<Instant> = None;
    let mut timed_out = false;
    let mut rounds = 0u64;
    let deadline = opts.time_limit.map(|t| start + t);
    let mut next_round = start + opts.share_period;
    let mut pending = k;

    while pending > 0 {
        let now = Instant::now();
        let mut wake = next_round;
        if let Some(d) = deadline {
            wake = wake.min(d);
        }
        match rx.recv_timeout(wake.saturating_duration_since(now)) {
            Ok((rank, r)) => {
                pending -= 1;
                if let Ok(res) = &r {
                    if res.status.is_decisive() {
                        match winner {
                            None => {
                                winner = Some((rank, res.status));
                                first_answer = Some(Instant::now());
                                stop.store(true, Ordering::Relaxed);
                            }
                            Some((_, s)) if s != res.status => agreement = false,
                            _ => {}
                        }
                    }
                }
                results[rank] = Some(r);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        let now = Instant::now();
        if deadline.is_some_and(|d| now >= d) && winner.is_none() && !timed_out {
            timed_out = true;
            stop.store(true, Ordering::Relaxed);
        }
        if now >= next_round {
            next_round = now + opts.share_period;
            if opts.sharing && k > 1 && !stop.load(Ordering::Relaxed) {
                rounds += 1;
                let exports: Vec<Vec<i32>> = (0..k)
                    .map(|i| {
                        let msgs = std::mem::take(&mut *outboxes[i].lock().unwrap_or_else(|e| e.into_inner()));
                        for m in msgs {
                            buffers[i].push(m);
                        }
                        buffers[i].take_round()
                    })
                    .collect();
                let (imports, _) = exchange.exchange_round(&exports);
                for (i, ints) in imports.iter().enumerate() {
                    if results[i].is_none() {
                        inboxes[i].push(ints);
                    }
                }
            }
        }
    }
    for t in threads {
        let _ = t.join();
    }
    let teardown = first_answer.map(|t| t.elapsed());

    let mut instances = Vec::with_capacity(k);
    let mut failures = Vec::new();
    let mut stats = Statistics::default();
    for (rank, r) in results.into_iter().enumerate() {
        let config = configs[rank].clone();
        match r {
            Some(Ok(res)) => {
                stats.add(&res.stats);
                instances.push(InstanceReport {
                    rank,
                    config,
                    status: res.status,
                    stats: res.stats,
                    failure: None,
                    wall_time: res.wall_time,
                });
            }
            other => {
                let msg = match other {
                    Some(Err(m)) => m,
                    _ => "no result".to_string(),
                };
                failures.push(format!("rank {rank}: {msg}"));
                instances.push(InstanceReport {
                    rank,
                    config,
                    status: Status::Unknown,
                    stats: Statistics::default(),
                    failure: Some(msg),
                    wall_time: Duration::ZERO,
                });
            }
        }
    }
    if failures.len() == k {
        return Err(PortfolioError::AllFailed(failures));
    }
    Ok(PortfolioResult {
        status: winner.map_or(Status::Unknown, |(_, s)| s),
        winner: winner.map(|(r, _)| r),
        timed_out: timed_out && winner.is_none(),
        agreement,
        stats,
        exchange_rounds: rounds,
        instances,
        wall_time: start.elapsed(),
        teardown,
    })
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = e.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = e.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_string()
    }
}
