//! One PASS/FAIL line per acceptance criterion, written straight to the
//! process stdout so the lines survive libtest's output capture.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::process::Command;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qbf_portfolio::bench::{brute_force_eval, brute_force_eval_with, compute_speedups, median, RunRecord};
use qbf_portfolio::formula::Quantifier::{Existential as E, Universal as A};
use qbf_portfolio::formula::{Constraint, ConstraintKind, Pcnf, Var};
use qbf_portfolio::generate::{random_layered, LayeredParams};
use qbf_portfolio::portfolio::{run_portfolio, PortfolioOptions};
use qbf_portfolio::qbce::qbce_fixpoint;
use qbf_portfolio::qcdcl::{Budget, Solver, SolverConfig, Status};
use qbf_portfolio::sharing::{decode, encode, Exchange};

// Criteria run one at a time; several of them measure wall-clock time.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, name: &str, ok: bool, detail: &str) {
    let line = format!(
        "criterion {n} ({name}): {} {detail}\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(ok, "{}", line.trim_end());
}

const CORPUS_FIRST: u64 = 100_000;
const CORPUS_SIZE: u64 = 500;
const PORTFOLIO_SIZES: [usize; 4] = [1, 2, 4, 8];

// Learned constraints are collected per instance as encoded messages.
struct CorpusRuns {
    corpus: Vec<Arc<Pcnf>>,
    verdicts: Vec<Status>,
    disagreements: Vec<String>,
    learned: Vec<BTreeSet<Vec<i32>>>,
    runs: usize,
    elapsed: Duration,
}

fn corpus_runs() -> &'static CorpusRuns {
    static RUNS: OnceLock<CorpusRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let t = Instant::now();
        let corpus = common::small_corpus(CORPUS_FIRST, CORPUS_SIZE);
        let mut verdicts = Vec::new();
        let mut disagreements = Vec::new();
        let mut learned = Vec::new();
        let mut runs = 0;
        for (i, f) in corpus.iter().enumerate() {
            let want = brute_force_eval(f).unwrap();
            let msgs = Arc::new(Mutex::new(BTreeSet::new()));
            for rank in 0..16 {
                let mut s = Solver::new(Arc::clone(f), SolverConfig::diversify(rank, 16, i as u64).unwrap());
                let sink = Arc::clone(&msgs);
                s.set_export_callback(Box::new(move |m| {
                    sink.lock().unwrap().insert(m.to_vec());
                }));
                let got = s.solve(&Budget::unlimited()).status;
                runs += 1;
                if got != want {
                    disagreements.push(format!("instance {i} rank {rank}: {got:?} vs {want:?}"));
                }
            }
            for k in PORTFOLIO_SIZES {
                let sink = Arc::clone(&msgs);
                let o = PortfolioOptions {
                    seed: i as u64,
                    time_limit: Some(Duration::from_secs(60)),
                    observer: Some(Arc::new(move |_, m: &[i32]| {
                        sink.lock().unwrap().insert(m.to_vec());
                    })),
                    ..PortfolioOptions::with_threads(k)
                };
                let r = run_portfolio(Arc::clone(f), o).unwrap();
                runs += 1;
                if r.status != want || !r.agreement {
                    disagreements.push(format!("instance {i} K={k}: {:?} vs {want:?}", r.status));
                }
            }
            verdicts.push(want);
            learned.push(std::mem::take(&mut *msgs.lock().unwrap()));
        }
        CorpusRuns { corpus, verdicts, disagreements, learned, runs, elapsed: t.elapsed() }
    })
}

#[test]
fn criterion_1_oracle_equivalence() {
    let _g = serial();
    let c = corpus_runs();
    let sat = c.verdicts.iter().filter(|s| **s == Status::Sat).count();
    let ok = c.corpus.len() >= 500 && c.disagreements.is_empty();
    let detail = format!(
        "{} instances ({sat} SAT), {} runs, {} disagreements, {:.1}s {:?}",
        c.corpus.len(),
        c.runs,
        c.disagreements.len(),
        c.elapsed.as_secs_f64(),
        c.disagreements.iter().take(3).collect::<Vec<_>>()
    );
    report(1, "oracle equivalence", ok, &detail);
}

#[test]
fn criterion_2_learning_soundness() {
    let _g = serial();
    let c = corpus_runs();
    let (mut checked, mut clauses, mut cubes) = (0, 0, 0);
    let mut violations = Vec::new();
    for (i, f) in c.corpus.iter().enumerate() {
        for m in &c.learned[i] {
            for con in decode(m, f.num_vars()).unwrap() {
                let got = match con.kind() {
                    ConstraintKind::Clause => {
                        clauses += 1;
                        brute_force_eval_with(f, std::slice::from_ref(&con), &[])
                    }
                    ConstraintKind::Cube => {
                        cubes += 1;
                        brute_force_eval_with(f, &[], std::slice::from_ref(&con))
                    }
                }
                .unwrap();
                checked += 1;
                if got != c.verdicts[i] {
                    violations.push(format!("instance {i}: {:?}", con.to_dimacs()));
                }
            }
        }
    }
    let ok = checked > 0 && violations.is_empty();
    let detail = format!(
        "{checked} distinct learned constraints ({clauses} clauses, {cubes} cubes), {} violations {:?}",
        violations.len(),
        violations.iter().take(3).collect::<Vec<_>>()
    );
    report(2, "learning soundness", ok, &detail);
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn criterion_3_qbce_safety() {
    let _g = serial();
    let corpus = common::small_corpus(CORPUS_FIRST, CORPUS_SIZE);
    let (mut eliminated, mut changed, mut small, mut order_failures) = (0, 0, 0, 0);
    for f in &corpus {
        let refs: Vec<&Constraint> = f.clauses().iter().collect();
        let gone: BTreeSet<usize> = qbce_fixpoint(f.prefix(), &refs).into_iter().collect();
        eliminated += gone.len();
        let kept: Vec<Constraint> = (0..refs.len())
            .filter(|i| !gone.contains(i))
            .map(|i| refs[i].clone())
            .collect();
        let g = Pcnf::new(f.prefix().clone(), kept).unwrap();
        if brute_force_eval(&g).unwrap() != brute_force_eval(f).unwrap() {
            changed += 1;
        }
        if refs.len() > 6 {
            continue;
        }
        small += 1;
        for perm in permutations(refs.len()) {
            let shuffled: Vec<&Constraint> = perm.iter().map(|&i| refs[i]).collect();
            let got: BTreeSet<usize> = qbce_fixpoint(f.prefix(), &shuffled)
                .into_iter()
                .map(|i| perm[i])
                .collect();
            if got != gone {
                order_failures += 1;
            }
        }
    }
    let ok = changed == 0 && order_failures == 0 && small > 0;
    let detail = format!(
        "{} instances, {eliminated} clauses eliminated, {changed} verdict changes; \
         {small} instances with <= 6 clauses, {order_failures} order-dependent results",
        corpus.len()
    );
    report(3, "QBCE safety", ok, &detail);
}

fn layered(clauses: usize, seed: u64) -> Arc<Pcnf> {
    let p = LayeredParams {
        blocks: vec![(A, 30), (E, 50)],
        clauses,
        univ_per_clause: 1,
        exist_per_clause: 3,
    };
    Arc::new(random_layered(&p, seed))
}

// ∀30∃50 with 300 clauses; the reference solver needs 0.1 to 6 s on these.
const HARDISH: [u64; 20] = [1, 2, 3, 6, 7, 9, 11, 12, 13, 16, 17, 18, 24, 25, 29, 34, 35, 40, 41, 43];

fn random_constraint(rng: &mut impl Rng, n: u32, len: usize) -> Constraint {
    let kind = if rng.gen_bool(0.5) { ConstraintKind::Clause } else { ConstraintKind::Cube };
    let mut vars: Vec<u32> = (1..=n).collect();
    vars.shuffle(rng);
    let lits = vars[..len].iter().map(|&v| Var(v).lit(rng.gen_bool(0.5))).collect();
    Constraint::new(kind, lits).unwrap()
}

fn tagged(c: &Constraint) -> (bool, Vec<i32>) {
    (c.kind() == ConstraintKind::Clause, c.to_dimacs())
}

#[test]
fn criterion_4_sharing_integrity() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    let (mut round_trip_errors, mut empties) = (0, 0);
    let mut stream: Vec<i32> = Vec::new();
    let mut sent = Vec::new();
    for i in 0..10_000 {
        let n = rng.gen_range(1..=500);
        // every 25th constraint is empty
        let len = if i % 25 == 0 { 0 } else { rng.gen_range(0..=n.min(40) as usize) };
        let c = random_constraint(&mut rng, n, len);
        empties += c.is_empty() as usize;
        let m = encode(&c, 500).unwrap();
        if decode(&m, 500).ok().as_deref() != Some(std::slice::from_ref(&c)) {
            round_trip_errors += 1;
        }
        stream.extend(m);
        sent.push(c);
    }
    if decode(&stream, 500).ok() != Some(sent) {
        round_trip_errors += 1;
    }

    let mut self_imports = 0;
    for k in 2..=8 {
        let n = 6;
        let mut ex = Exchange::new(k, n);
        for _ in 0..50 {
            let mut exports = Vec::new();
            let mut own: Vec<BTreeSet<(bool, Vec<i32>)>> = Vec::new();
            for _ in 0..k {
                let mut out = Vec::new();
                let mut mine = BTreeSet::new();
                for _ in 0..rng.gen_range(0..5) {
                    let len = rng.gen_range(0..=3);
                    let c = random_constraint(&mut rng, n, len);
                    mine.insert(tagged(&c));
                    out.extend(encode(&c, n).unwrap());
                }
                exports.push(out);
                own.push(mine);
            }
            let (imports, _) = ex.exchange_round(&exports);
            for (j, ints) in imports.iter().enumerate() {
                for c in decode(ints, n).unwrap() {
                    self_imports += own[j].contains(&tagged(&c)) as usize;
                }
            }
        }
    }

    let (mut imported, mut mismatches) = (0, Vec::new());
    for &seed in &HARDISH {
        let f = layered(300, seed);
        let o = |k| PortfolioOptions {
            time_limit: Some(Duration::from_secs(120)),
            ..PortfolioOptions::with_threads(k)
        };
        let one = run_portfolio(Arc::clone(&f), o(1)).unwrap();
        let four = run_portfolio(f, o(4)).unwrap();
        imported += four.stats.imported;
        if one.status != four.status || !one.status.is_decisive() {
            mismatches.push(format!("seed {seed}: K=1 {:?}, K=4 {:?}", one.status, four.status));
        }
    }

    let ok = round_trip_errors == 0 && self_imports == 0 && imported > 0 && mismatches.is_empty();
    let detail = format!(
        "10000 constraints ({empties} empty), {round_trip_errors} round-trip errors, \
         {self_imports} self-imports; K=4 on {} instances imported {imported}, {} status mismatches {:?}",
        HARDISH.len(),
        mismatches.len(),
        mismatches
    );
    report(4, "sharing integrity", ok, &detail);
}

#[test]
fn criterion_5_efficiency_table() {
    let _g = serial();
    let rows: [(f64, usize, f64); 6] = [
        (303.26, 32, 9.48),
        (458.34, 64, 7.16),
        (553.53, 128, 4.32),
        (1449.28, 256, 5.66),
        (2461.84, 512, 4.81),
        (2557.54, 1024, 2.49),
    ];
    let rec = |id: &str, t: f64| RunRecord { id: id.into(), solved: true, wall_time: t, status: Status::Unsat };
    let mut got = Vec::new();
    let mut ok = true;
    for (med, cores, want) in rows {
        // three big instances whose middle speedup is `med`, plus a small one
        let par = 100.0;
        let seq = [med / 2.0, med, med * 3.0].map(|s| s * par);
        let seq_runs = vec![rec("a", seq[0]), rec("b", seq[1]), rec("c", seq[2]), rec("small", 1.0)];
        let par_runs = vec![rec("a", par), rec("b", par), rec("c", par), rec("small", 0.01)];
        let r = compute_speedups(&seq_runs, &par_runs, cores, 50_000.0).unwrap();
        let e = r.efficiency.unwrap_or(f64::NAN);
        ok &= (e - want).abs() <= 0.01 && r.rows.iter().filter(|x| x.is_big).count() == 3;
        got.push(format!("{e:.2}"));
    }
    report(5, "efficiency table", ok, &format!("efficiencies {}", got.join(" ")));
}

// ∀30∃50 with 300 clauses: the first 14 seeds (of 0..400) whose K=1 run
// solved in 10 to 45 s in an offline scan on one core. Eligibility is
// re-checked below since timings drift between machines.
const SCALING: [u64; 14] = [0, 15, 46, 94, 96, 97, 113, 136, 177, 184, 185, 213, 245, 299];
// Same limit for both sides, the CLI default. On one core the reference
// instance inside a K=4 portfolio gets about a quarter of the CPU.
const SCALING_LIMIT: Duration = Duration::from_secs(900);

#[test]
fn criterion_6_scaling_sanity() {
    let _g = serial();
    let mut speedups = Vec::new();
    let mut lost = Vec::new();
    let mut rows = Vec::new();
    for &seed in &SCALING {
        let f = layered(300, seed);
        let o = |k| PortfolioOptions { time_limit: Some(SCALING_LIMIT), ..PortfolioOptions::with_threads(k) };
        let one = run_portfolio(Arc::clone(&f), o(1)).unwrap();
        let t1 = one.wall_time.as_secs_f64();
        if !one.status.is_decisive() || t1 < 10.0 {
            rows.push(format!("{seed}:skip({t1:.1}s)"));
            continue;
        }
        let four = run_portfolio(f, o(4)).unwrap();
        let t4 = four.wall_time.as_secs_f64();
        if four.status != one.status {
            lost.push(seed);
        }
        speedups.push(t1 / t4);
        rows.push(format!("{seed}:{t1:.1}/{t4:.1}"));
    }
    let med = median(&speedups);
    let ok = speedups.len() >= 10 && med.is_some_and(|m| m > 1.0) && lost.is_empty();
    let detail = format!(
        "{} eligible instances, median K=4 speedup {:.2}, {} lost [{}]",
        speedups.len(),
        med.unwrap_or(f64::NAN),
        lost.len(),
        rows.join(" ")
    );
    report(6, "scaling sanity", ok, &detail);
}

#[test]
fn criterion_7_termination_latency() {
    let _g = serial();
    let mut worst = Duration::ZERO;
    let mut failures = 0;
    for run in 0..50u64 {
        let f = layered(300, HARDISH[run as usize % HARDISH.len()]);
        let o = PortfolioOptions {
            seed: run,
            time_limit: Some(Duration::from_secs(120)),
            ..PortfolioOptions::with_threads(8)
        };
        let r = run_portfolio(f, o).unwrap();
        match r.teardown {
            Some(t) if r.status.is_decisive() => worst = worst.max(t),
            _ => failures += 1,
        }
    }
    let ok = failures == 0 && worst < Duration::from_millis(500);
    let detail = format!("50 runs with K=8, worst teardown {:.1} ms, {failures} undecided", worst.as_secs_f64() * 1e3);
    report(7, "termination latency", ok, &detail);
}

#[test]
fn criterion_8_determinism() {
    let _g = serial();
    let dir = tempfile::TempDir::new().unwrap();
    let file = dir.path().join("f.qdimacs");
    let p = LayeredParams {
        blocks: vec![(A, 20), (E, 40)],
        clauses: 220,
        univ_per_clause: 1,
        exist_per_clause: 3,
    };
    std::fs::write(&file, random_layered(&p, 3).to_qdimacs()).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let st = Command::new(env!("CARGO_BIN_EXE_qbf-portfolio"))
            .arg(&file)
            .args(["--threads", "1", "--no-sharing", "--seed", "7", "--stats-json"])
            .arg(&out)
            .output()
            .unwrap();
        (st.status.code(), std::fs::read_to_string(out).unwrap_or_default())
    };
    let (c1, a) = run("a.json");
    let (c2, b) = run("b.json");
    let ok = c1 == c2 && matches!(c1, Some(10 | 20)) && !a.is_empty() && a == b;
    report(8, "determinism", ok, &format!("exit codes {c1:?}/{c2:?}, {} byte statistics JSON, identical: {}", a.len(), a == b));
}
