//! Brute-force QBF evaluation and runtime/speedup analysis.

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Constraint, Lit, Pcnf, Quantifier, Var};
use crate::qcdcl::Status;

/// Largest variable count accepted by [`brute_force_eval`].
pub const BRUTE_FORCE_MAX_VARS: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("formula has {0} variables; brute force is limited to {BRUTE_FORCE_MAX_VARS}")]
    TooLarge(u32),
    #[error("instance {0} has a parallel run but no sequential run")]
    MissingSequential(String),
}

/// Evaluates a closed formula by expanding every quantifier in prefix order.
/// Free variables are treated as outermost existentials.
pub fn brute_force_eval(pcnf: &Pcnf) -> Result<Status, BenchError> {
    brute_force_eval_with(pcnf, &[], &[])
}

/// Evaluates `Q. (matrix ∧ extra_clauses) ∨ extra_cubes`.
pub fn brute_force_eval_with(
    pcnf: &Pcnf,
    extra_clauses: &[Constraint],
    extra_cubes: &[Constraint],
) -> Result<Status, BenchError> {
    let n = pcnf.num_vars();
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(BenchError::TooLarge(n));
    }
    let order: Vec<(Var, Quantifier)> = pcnf
        .prefix()
        .decision_groups()
        .into_iter()
        .flat_map(|(q, vs)| vs.into_iter().map(move |v| (v, q)))
        .collect();
    let clauses: Vec<&Constraint> = pcnf.clauses().iter().chain(extra_clauses).collect();
    let ev = Eval {
        order,
        clauses,
        cubes: extra_cubes.iter().collect(),
    };
    let mut vals = vec![0i8; n as usize + 1];
    Ok(if ev.eval(0, &mut vals) {
        Status::Sat
    } else {
        Status::Unsat
    })
}

struct Eval<'a> {
    order: Vec<(Var, Quantifier)>,
    clauses: Vec<&'a Constraint>,
    cubes: Vec<&'a Constraint>,
}

impl Eval<'_> {
    fn lit_val(vals: &[i8], l: Lit) -> i8 {
        let v = vals[l.var().index()];
        if l.is_positive() {
            v
        } else {
            -v
        }
    }

    // Some(result) once the partial assignment already fixes the value.
    fn settled(&self, vals: &[i8]) -> Option<bool> {
        let cube_true = self
            .cubes
            .iter()
            .any(|c| c.lits().iter().all(|&l| Self::lit_val(vals, l) > 0));
        if cube_true {
            return Some(true);
        }
        let mut all_sat = true;
        let mut falsified = false;
        for c in &self.clauses {
            let mut sat = false;
            let mut open = false;
            for &l in c.lits() {
                match Self::lit_val(vals, l) {
                    1 => sat = true,
                    0 => open = true,
                    _ => {}
                }
            }
            if !sat {
                all_sat = false;
                if !open {
                    falsified = true;
                }
            }
        }
        if all_sat {
            return Some(true);
        }
        let cubes_dead = self
            .cubes
            .iter()
            .all(|c| c.lits().iter().any(|&l| Self::lit_val(vals, l) < 0));
        if falsified && cubes_dead {
            return Some(false);
        }
        None
    }

    fn eval(&self, depth: usize, vals: &mut Vec<i8>) -> bool {
        if let Some(r) = self.settled(vals) {
            return r;
        }
        let Some(&(v, q)) = self.order.get(depth) else {
            // unreachable in practice: a full assignment always settles
            return false;
        };
        let branch = |val: i8, vals: &mut Vec<i8>| {
            vals[v.index()] = val;
            let r = self.eval(depth + 1, vals);
            vals[v.index()] = 0;
            r
        };
        match q {
            Quantifier::Existential => branch(-1, vals) || branch(1, vals),
            Quantifier::Universal => branch(-1, vals) && branch(1, vals),
        }
    }
}

/// One solver run on one instance. Unsolved runs record the time limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub solved: bool,
    pub wall_time: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub instance: String,
    pub seq: f64,
    pub par: f64,
    pub speedup: f64,
    pub is_big: bool,
}

/// Speedup statistics over instances solved by the parallel run. Empty
/// subsets give `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub cores: usize,
    pub solved_parallel: usize,
    pub solved_both: usize,
    pub avg_all: Option<f64>,
    pub tot_all: Option<f64>,
    pub med_all: Option<f64>,
    pub avg_big: Option<f64>,
    pub tot_big: Option<f64>,
    pub med_big: Option<f64>,
    pub efficiency: Option<f64>,
    pub rows: Vec<SpeedupRow>,
}

/// Parallel efficiency: median big-instance speedup per core.
pub fn efficiency(median_big: f64, cores: usize) -> f64 {
    median_big / cores as f64
}

/// Median; the mean of the two central values for even-sized input.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

pub fn compute_speedups(
    seq_runs: &[RunRecord],
    par_runs: &[RunRecord],
    cores: usize,
    seq_limit: f64,
) -> Result<SpeedupReport, BenchError> {
    let cores = cores.max(1);
    let seq: HashMap<&str, &RunRecord> = seq_runs.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut rows = Vec::new();
    let mut solved_both = 0;
    for p in par_runs {
        let s = seq
            .get(p.id.as_str())
            .ok_or_else(|| BenchError::MissingSequential(p.id.clone()))?;
        if !p.solved {
            continue;
        }
        if s.solved {
            solved_both += 1;
        }
        let seq_time = if s.solved { s.wall_time } else { seq_limit };
        let par_time = p.wall_time.max(1e-9);
        rows.push(SpeedupRow {
            instance: p.id.clone(),
            seq: seq_time,
            par: par_time,
            speedup: seq_time / par_time,
            is_big: seq_time >= 10.0 * cores as f64,
        });
    }
    let stats = |big_only: bool| {
        let sel: Vec<&SpeedupRow> = rows.iter().filter(|r| !big_only || r.is_big).collect();
        if sel.is_empty() {
            return (None, None, None);
        }
        let sp: Vec<f64> = sel.iter().map(|r| r.speedup).collect();
        let avg = sp.iter().sum::<f64>() / sp.len() as f64;
        let tot = sel.iter().map(|r| r.seq).sum::<f64>() / sel.iter().map(|r| r.par).sum::<f64>();
        (Some(avg), Some(tot), median(&sp))
    };
    let (avg_all, tot_all, med_all) = stats(false);
    let (avg_big, tot_big, med_big) = stats(true);
    Ok(SpeedupReport {
        cores,
        solved_parallel: rows.len(),
        solved_both,
        avg_all,
        tot_all,
        med_all,
        avg_big,
        tot_big,
        med_big,
        efficiency: med_big.map(|m| efficiency(m, cores)),
        rows,
    })
}

/// Solved runs' times in ascending order, paired with 1-based rank.
pub fn cactus_data(runs: &[RunRecord]) -> Vec<(usize, f64)> {
    let mut times: Vec<f64> = runs
        .iter()
        .filter(|r| r.solved && r.wall_time.is_finite())
        .map(|r| r.wall_time)
        .collect();
    times.sort_by(f64::total_cmp);
    times.into_iter().enumerate().map(|(i, t)| (i + 1, t)).collect()
}

pub fn write_cactus_csv(mut w: impl Write, series: &[(usize, f64)]) -> io::Result<()> {
    writeln!(w, "rank,time")?;
    for (rank, t) in series {
        writeln!(w, "{rank},{t:.6}")?;
    }
    Ok(())
}

pub fn write_speedups_csv(mut w: impl Write, rows: &[SpeedupRow]) -> io::Result<()> {
    writeln!(w, "instance,seq,par,speedup,is_big")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{}",
            r.instance, r.seq, r.par, r.speedup, r.is_big
        )?;
    }
    Ok(())
}
