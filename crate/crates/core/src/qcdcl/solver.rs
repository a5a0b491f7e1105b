use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{PhaseInit, QbceMode, SolverConfig};
use super::db::{CRef, ConstraintDb};
use super::restart::RestartScheduler;
use crate::formula::{
    existential_reduce, universal_reduce, Constraint, ConstraintKind, Lit, Pcnf, Var,
};
use crate::qbce::qbce_fixpoint;
use crate::resolution::{q_resolve, term_resolve};
use crate::sharing::{self, DedupFilter};

/// Outcome of a solver run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Sat,
    Unsat,
    Unknown,
}

impl Status {
    pub fn is_decisive(self) -> bool {
        self != Status::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Sat => "SAT",
            Status::Unsat => "UNSAT",
            Status::Unknown => "UNKNOWN",
        }
    }
}

/// Search counters. Wall time is kept out of this struct so that two runs with
/// the same configuration produce identical statistics.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statistics {
    pub conflicts: u64,
    pub solutions: u64,
    pub decisions: u64,
    pub propagations: u64,
    pub pure_literals: u64,
    pub restarts: u64,
    pub learned_clauses: u64,
    pub learned_cubes: u64,
    pub deleted_clauses: u64,
    pub deleted_cubes: u64,
    pub exported: u64,
    pub imported: u64,
    pub import_duplicates: u64,
    pub import_rejected: u64,
    pub qbce_eliminated: u64,
    /// Analyses that found no asserting constraint and fell back to
    /// chronological backtracking.
    pub stuck: u64,
}

impl Statistics {
    pub fn add(&mut self, o: &Statistics) {
        self.conflicts += o.conflicts;
        self.solutions += o.solutions;
        self.decisions += o.decisions;
        self.propagations += o.propagations;
        self.pure_literals += o.pure_literals;
        self.restarts += o.restarts;
        self.learned_clauses += o.learned_clauses;
        self.learned_cubes += o.learned_cubes;
        self.deleted_clauses += o.deleted_clauses;
        self.deleted_cubes += o.deleted_cubes;
        self.exported += o.exported;
        self.imported += o.imported;
        self.import_duplicates += o.import_duplicates;
        self.import_rejected += o.import_rejected;
        self.qbce_eliminated += o.qbce_eliminated;
        self.stuck += o.stuck;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: Status,
    pub stats: Statistics,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Limits for one run. `max_conflicts` counts conflicts plus solutions.
#[derive(Debug, Clone, Default)]
pub struct Budget {
    pub time_limit: Option<Duration>,
    pub max_conflicts: Option<u64>,
    pub stop: Option<Arc<AtomicBool>>,
}

impl Budget {
    pub fn unlimited() -> Budget {
        Budget::default()
    }

    pub fn time(limit: Duration) -> Budget {
        Budget {
            time_limit: Some(limit),
            ..Budget::default()
        }
    }

    pub fn conflicts(n: u64) -> Budget {
        Budget {
            max_conflicts: Some(n),
            ..Budget::default()
        }
    }
}

/// Receives every learned constraint in its shared encoding.
pub type ExportSink = Box<dyn FnMut(&[i32]) + Send>;

/// Cloneable, thread-safe handle for queuing constraints into a solver. Queued
/// constraints are attached at the solver's next restart.
#[derive(Debug, Clone, Default)]
pub struct ImportHandle {
    queue: Arc<Mutex<Vec<i32>>>,
    pushed: Arc<AtomicU64>,
}

impl ImportHandle {
    pub fn push(&self, encoded: &[i32]) {
        if encoded.is_empty() {
            return;
        }
        let mut q = self.queue.lock().unwrap_or_else(|e| e.into_inner());
        q.extend_from_slice(encoded);
        self.pushed.fetch_add(1, Ordering::Relaxed);
    }

    fn drain(&self) -> Vec<i32> {
        let mut q = self.queue.lock().unwrap_or_else(|e| e.into_inner());
        std::mem::take(&mut *q)
    }
}

/// Why a variable is assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    Decision,
    Clause(CRef),
    Cube(CRef),
    Pure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Conflict(CRef),
    Solution(Option<CRef>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Satisfied,
    Conflict,
    Unit(Lit),
    Open,
}

enum Analysis {
    Proved(Constraint),
    Learn(Constraint, u32),
    Stuck(Constraint),
}

/// One sequential QCDCL solver instance.
pub struct Solver {
    pcnf: Arc<Pcnf>,
    config: SolverConfig,
    n: usize,
    groups: Vec<Vec<Var>>,
    group_of: Vec<usize>,
    qlevel: Vec<u32>,
    exist: Vec<bool>,

    vals: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<Reason>,
    trail_pos: Vec<usize>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,

    db: ConstraintDb,
    clause_occ: Vec<Vec<CRef>>,
    cube_occ: Vec<Vec<CRef>>,
    /// Per clause: true literals. Per cube: false literals.
    sat_count: Vec<u32>,
    open_occ: Vec<u32>,
    unsat_clauses: usize,
    pure_queue: Vec<Var>,
    in_pure_queue: Vec<bool>,

    cache: Vec<bool>,
    activity: Vec<f64>,
    var_inc: f64,
    cons_inc: f64,
    restarts: RestartScheduler,
    stats: Statistics,

    export: Option<ExportSink>,
    imports: ImportHandle,
    seen: DedupFilter,
    check_invariants: bool,
    started: bool,
}

impl Solver {
    pub fn new(pcnf: Arc<Pcnf>, config: SolverConfig) -> Solver {
        let prefix = pcnf.prefix();
        let n = pcnf.num_vars() as usize;
        let groups: Vec<Vec<Var>> = prefix.decision_groups().into_iter().map(|(_, vs)| vs).collect();
        let mut group_of = vec![0; n + 1];
        for (g, vs) in groups.iter().enumerate() {
            for v in vs {
                group_of[v.index()] = g;
            }
        }
        let qlevel = (0..=n as u32).map(|v| if v == 0 { 0 } else { prefix.level(Var(v)) }).collect();
        let exist = (0..=n as u32)
            .map(|v| v == 0 || prefix.is_existential(Var(v)))
            .collect();
        let originals = pcnf
            .clauses()
            .iter()
            .map(|c| universal_reduce(prefix, c))
            .collect();
        let cache = match config.phase_init {
            PhaseInit::AllFalse => vec![false; n + 1],
            PhaseInit::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..=n).map(|_| rng.gen_bool(0.5)).collect()
            }
        };
        let db = ConstraintDb::new(originals, config.clause_capacity, config.cube_capacity);
        let restarts = RestartScheduler::new(config.restart_inner, config.restart_outer, config.restart_growth);
        Solver {
            n,
            groups,
            group_of,
            qlevel,
            exist,
            vals: vec![0; n + 1],
            level: vec![0; n + 1],
            reason: vec![Reason::Decision; n + 1],
            trail_pos: vec![0; n + 1],
            trail: Vec::with_capacity(n),
            trail_lim: Vec::new(),
            qhead: 0,
            db,
            clause_occ: vec![Vec::new(); 2 * (n + 1)],
            cube_occ: vec![Vec::new(); 2 * (n + 1)],
            sat_count: Vec::new(),
            open_occ: vec![0; 2 * (n + 1)],
            unsat_clauses: 0,
            pure_queue: Vec::new(),
            in_pure_queue: vec![false; n + 1],
            cache,
            activity: vec![0.0; n + 1],
            var_inc: config.activity_bump,
            cons_inc: 1.0,
            restarts,
            stats: Statistics::default(),
            export: None,
            imports: ImportHandle::default(),
            seen: DedupFilter::default(),
            check_invariants: false,
            started: false,
            pcnf,
            config,
        }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn stats(&self) -> &Statistics {
        &self.stats
    }

    pub fn db(&self) -> &ConstraintDb {
        &self.db
    }

    /// Handle that other threads may use to queue constraints for import.
    pub fn import_handle(&self) -> ImportHandle {
        self.imports.clone()
    }

    /// Queues an encoded constraint; it is attached at the next restart.
    pub fn add_learned_constraint(&self, encoded: &[i32]) {
        self.imports.push(encoded);
    }

    pub fn set_export_callback(&mut self, sink: ExportSink) {
        self.export = Some(sink);
    }

    /// Replays the trail after every propagation and panics on a violated
    /// prefix-ordering or reason-validity invariant. Slow; for tests.
    pub fn set_check_invariants(&mut self, on: bool) {
        self.check_invariants = on;
    }

    pub fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    pub fn trail(&self) -> &[Lit] {
        &self.trail
    }

    pub fn solve(&mut self, budget: &Budget) -> SolveResult {
        let start = Instant::now();
        let status = self.run(budget, start);
        SolveResult {
            status,
            stats: self.stats.clone(),
            wall_time: start.elapsed(),
        }
    }

    fn run(&mut self, budget: &Budget, start: Instant) -> Status {
        let deadline = budget.time_limit.map(|t| start + t);
        let stopped = || budget.stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed));
        let out_of_time = || deadline.is_some_and(|d| Instant::now() >= d);
        if stopped() || out_of_time() {
            return Status::Unknown;
        }

        let mut pending = if self.started {
            match self.restart() {
                Err(s) => return s,
                Ok(ev) => ev,
            }
        } else {
            self.started = true;
            if self.config.qbce != QbceMode::Off {
                self.run_qbce(false);
            }
            match self.reset() {
                Err(s) => return s,
                Ok(ev) => ev,
            }
        };

        loop {
            if stopped() || out_of_time() {
                return Status::Unknown;
            }
            let event = match pending.take() {
                Some(ev) => Some(ev),
                None => self.propagate(),
            };
            if self.check_invariants {
                if let Err(msg) = self.verify_trail() {
                    panic!("trail invariant violated: {msg}");
                }
            }
            let Some(event) = event else {
                self.decide();
                continue;
            };
            if budget
                .max_conflicts
                .is_some_and(|m| self.stats.conflicts + self.stats.solutions >= m)
            {
                return Status::Unknown;
            }
            let analysis = match event {
                Event::Conflict(r) => {
                    self.stats.conflicts += 1;
                    self.analyze_conflict(r)
                }
                Event::Solution(src) => {
                    self.stats.solutions += 1;
                    self.analyze_solution(src)
                }
            };
            pending = match analysis {
                Analysis::Proved(c) => {
                    self.record(&c);
                    return match c.kind() {
                        ConstraintKind::Clause => Status::Unsat,
                        ConstraintKind::Cube => Status::Sat,
                    };
                }
                Analysis::Learn(c, b) => self.learn(c, b),
                Analysis::Stuck(c) => {
                    self.stats.stuck += 1;
                    self.fallback(c)
                }
            };
            if self.restarts.on_learn() {
                pending = match self.restart() {
                    Err(s) => return s,
                    Ok(ev) => ev,
                };
            }
        }
    }

    // ---- assignment ----

    #[inline]
    fn value(&self, l: Lit) -> i8 {
        let v = self.vals[l.var().index()];
        if l.is_positive() {
            v
        } else {
            -v
        }
    }

    fn assign(&mut self, lit: Lit, reason: Reason) {
        let v = lit.var().index();
        debug_assert_eq!(self.vals[v], 0);
        self.vals[v] = if lit.is_positive() { 1 } else { -1 };
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail_pos[v] = self.trail.len();
        self.trail.push(lit);
        self.cache[v] = lit.is_positive();
        match reason {
            Reason::Decision => {}
            Reason::Pure => self.stats.pure_literals += 1,
            _ => self.stats.propagations += 1,
        }
        for i in 0..self.clause_occ[lit.code()].len() {
            let r = self.clause_occ[lit.code()][i] as usize;
            if self.sat_count[r] == 0 {
                self.unsat_clauses -= 1;
                for j in 0..self.db.entries[r].c.len() {
                    let m = self.db.entries[r].c.lits()[j];
                    self.open_occ[m.code()] -= 1;
                    if self.open_occ[m.code()] == 0 {
                        self.enqueue_pure(m.var());
                    }
                }
            }
            self.sat_count[r] += 1;
        }
        for i in 0..self.cube_occ[(!lit).code()].len() {
            let r = self.cube_occ[(!lit).code()][i] as usize;
            self.sat_count[r] += 1;
        }
    }

    fn unassign(&mut self, lit: Lit) {
        let v = lit.var();
        self.vals[v.index()] = 0;
        for i in 0..self.clause_occ[lit.code()].len() {
            let r = self.clause_occ[lit.code()][i] as usize;
            self.sat_count[r] -= 1;
            if self.sat_count[r] == 0 {
                self.unsat_clauses += 1;
                for m in self.db.entries[r].c.lits() {
                    self.open_occ[m.code()] += 1;
                }
            }
        }
        for i in 0..self.cube_occ[(!lit).code()].len() {
            let r = self.cube_occ[(!lit).code()][i] as usize;
            self.sat_count[r] -= 1;
        }
        let (p, q) = (v.lit(true).code(), v.lit(false).code());
        if self.open_occ[p] == 0 || self.open_occ[q] == 0 {
            self.enqueue_pure(v);
        }
    }

    #[inline]
    fn enqueue_pure(&mut self, v: Var) {
        if self.config.pure_literals && !self.in_pure_queue[v.index()] && self.vals[v.index()] == 0 {
            self.in_pure_queue[v.index()] = true;
            self.pure_queue.push(v);
        }
    }

    fn backtrack(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level as usize];
        while self.trail.len() > lim {
            let lit = self.trail.pop().unwrap();
            self.unassign(lit);
        }
        self.trail_lim.truncate(level as usize);
        self.qhead = self.qhead.min(lim);
    }

    fn clear_trail(&mut self) {
        while let Some(lit) = self.trail.pop() {
            self.unassign(lit);
        }
        self.trail_lim.clear();
        self.qhead = 0;
    }

    // ---- constraint states ----

    fn clause_state(&self, c: &Constraint, vals: &[i8]) -> State {
        let mut unit = None;
        let mut open_e = 0;
        let mut min_u = u32::MAX;
        for &l in c.lits() {
            let v = l.var().index();
            let val = if l.is_positive() { vals[v] } else { -vals[v] };
            if val > 0 {
                return State::Satisfied;
            }
            if val == 0 {
                if self.exist[v] {
                    open_e += 1;
                    unit = Some(l);
                } else {
                    min_u = min_u.min(self.qlevel[v]);
                }
            }
        }
        match (open_e, unit) {
            (0, _) => State::Conflict,
            (1, Some(e)) if min_u > self.qlevel[e.var().index()] => State::Unit(e),
            _ => State::Open,
        }
    }

    // `Satisfied` means the cube holds once its unassigned existentials are
    // reduced; `Unit(u)` means u must be made false.
    fn cube_state(&self, c: &Constraint, vals: &[i8]) -> State {
        let mut unit = None;
        let mut open_u = 0;
        let mut min_e = u32::MAX;
        for &l in c.lits() {
            let v = l.var().index();
            let val = if l.is_positive() { vals[v] } else { -vals[v] };
            if val < 0 {
                return State::Open;
            }
            if val == 0 {
                if self.exist[v] {
                    min_e = min_e.min(self.qlevel[v]);
                } else {
                    open_u += 1;
                    unit = Some(l);
                }
            }
        }
        match (open_u, unit) {
            (0, _) => State::Satisfied,
            (1, Some(u)) if min_e > self.qlevel[u.var().index()] => State::Unit(u),
            _ => State::Open,
        }
    }

    fn check_clause(&mut self, r: CRef) -> Option<Event> {
        match self.clause_state(self.db.get(r), &self.vals) {
            State::Conflict => Some(Event::Conflict(r)),
            State::Unit(l) => {
                self.assign(l, Reason::Clause(r));
                None
            }
            _ => None,
        }
    }

    fn check_cube(&mut self, r: CRef) -> Option<Event> {
        match self.cube_state(self.db.get(r), &self.vals) {
            State::Satisfied => Some(Event::Solution(Some(r))),
            State::Unit(u) => {
                self.assign(!u, Reason::Cube(r));
                None
            }
            _ => None,
        }
    }

    // ---- propagation ----

    fn propagate(&mut self) -> Option<Event> {
        loop {
            while self.qhead < self.trail.len() {
                let lit = self.trail[self.qhead];
                self.qhead += 1;
                let falsified = (!lit).code();
                let mut i = 0;
                while i < self.clause_occ[falsified].len() {
                    let r = self.clause_occ[falsified][i];
                    i += 1;
                    if self.sat_count[r as usize] > 0 {
                        continue;
                    }
                    if let Some(ev) = self.check_clause(r) {
                        return Some(ev);
                    }
                }
                let mut i = 0;
                while i < self.cube_occ[lit.code()].len() {
                    let r = self.cube_occ[lit.code()][i];
                    i += 1;
                    if self.sat_count[r as usize] > 0 {
                        continue;
                    }
                    if let Some(ev) = self.check_cube(r) {
                        return Some(ev);
                    }
                }
            }
            if self.unsat_clauses == 0 {
                return Some(Event::Solution(None));
            }
            if !self.assign_pure() {
                return None;
            }
        }
    }

    // Assigns the first pure variable found in the candidate queue.
    fn assign_pure(&mut self) -> bool {
        while let Some(v) = self.pure_queue.pop() {
            self.in_pure_queue[v.index()] = false;
            if self.vals[v.index()] != 0 {
                continue;
            }
            let pos = self.open_occ[v.lit(true).code()];
            let neg = self.open_occ[v.lit(false).code()];
            if pos > 0 && neg > 0 {
                continue;
            }
            let cached = v.lit(self.cache[v.index()]);
            if self.exist[v.index()] {
                let lit = match (pos, neg) {
                    (0, 0) => cached,
                    (_, 0) => v.lit(true),
                    _ => v.lit(false),
                };
                self.assign(lit, Reason::Pure);
                return true;
            }
            // A universal is set to falsify its open occurrences. The literal
            // made true must not occur in a learned cube: the assignment would
            // have no cube reason to resolve on during solution analysis.
            let options = match (pos, neg) {
                (0, 0) => [Some(cached), Some(!cached)],
                (_, 0) => [Some(v.lit(false)), None],
                _ => [Some(v.lit(true)), None],
            };
            if let Some(lit) = options
                .into_iter()
                .flatten()
                .find(|l| self.cube_occ[l.code()].is_empty())
            {
                self.assign(lit, Reason::Pure);
                return true;
            }
        }
        false
    }

    fn decide(&mut self) {
        let mut best: Option<Var> = None;
        for g in &self.groups {
            for &v in g {
                if self.vals[v.index()] == 0
                    && best.is_none_or(|b| self.activity[v.index()] > self.activity[b.index()])
                {
                    best = Some(v);
                }
            }
            if best.is_some() {
                break;
            }
        }
        let v = best.expect("decide called with every variable assigned");
        self.stats.decisions += 1;
        self.trail_lim.push(self.trail.len());
        self.assign(v.lit(self.cache[v.index()]), Reason::Decision);
    }

    // ---- analysis ----

    fn analyze_conflict(&mut self, conflict: CRef) -> Analysis {
        let pcnf = Arc::clone(&self.pcnf);
        let prefix = pcnf.prefix();
        self.bump_constraint(conflict);
        let mut c = universal_reduce(prefix, self.db.get(conflict));
        loop {
            if c.is_empty() {
                return Analysis::Proved(c);
            }
            if let Some(b) = self.asserting_level(&c) {
                return Analysis::Learn(c, b);
            }
            let mut cands: Vec<(usize, Var, CRef)> = c
                .lits()
                .iter()
                .filter_map(|l| match self.reason[l.var().index()] {
                    Reason::Clause(r) if self.exist[l.var().index()] => {
                        Some((self.trail_pos[l.var().index()], l.var(), r))
                    }
                    _ => None,
                })
                .collect();
            cands.sort_unstable_by_key(|c| std::cmp::Reverse(c.0));
            let step = cands.into_iter().find_map(|(_, v, r)| {
                q_resolve(prefix, &c, self.db.get(r), v).ok().map(|res| (res, r))
            });
            match step {
                Some((res, r)) => {
                    self.bump_constraint(r);
                    c = res;
                }
                None => return Analysis::Stuck(c),
            }
        }
    }

    fn analyze_solution(&mut self, source: Option<CRef>) -> Analysis {
        let pcnf = Arc::clone(&self.pcnf);
        let prefix = pcnf.prefix();
        let mut t = match source {
            Some(r) => {
                self.bump_constraint(r);
                existential_reduce(prefix, self.db.get(r))
            }
            None => existential_reduce(prefix, &self.cover_cube()),
        };
        loop {
            if t.is_empty() {
                return Analysis::Proved(t);
            }
            if let Some(b) = self.asserting_level(&t) {
                return Analysis::Learn(t, b);
            }
            let mut cands: Vec<(usize, Var, CRef)> = t
                .lits()
                .iter()
                .filter_map(|l| match self.reason[l.var().index()] {
                    Reason::Cube(r) if !self.exist[l.var().index()] => {
                        Some((self.trail_pos[l.var().index()], l.var(), r))
                    }
                    _ => None,
                })
                .collect();
            cands.sort_unstable_by_key(|c| std::cmp::Reverse(c.0));
            let step = cands.into_iter().find_map(|(_, v, r)| {
                term_resolve(prefix, &t, self.db.get(r), v).ok().map(|res| (res, r))
            });
            match step {
                Some((res, r)) => {
                    self.bump_constraint(r);
                    t = res;
                }
                None => return Analysis::Stuck(t),
            }
        }
    }

    // A cube of true literals that satisfies every active clause. Existential
    // literals are preferred since they vanish under reduction more often;
    // universal literals set as pure are never needed and never chosen.
    fn cover_cube(&self) -> Constraint {
        let mut chosen = vec![false; 2 * (self.n + 1)];
        let mut lits = Vec::new();
        for r in self.db.active_clauses() {
            let c = self.db.get(r);
            if c.lits().iter().any(|l| chosen[l.code()]) {
                continue;
            }
            let mut pick: Option<Lit> = None;
            for &l in c.lits() {
                if self.value(l) <= 0 {
                    continue;
                }
                let v = l.var().index();
                if !self.exist[v] && self.reason[v] == Reason::Pure {
                    continue;
                }
                let better = match pick {
                    None => true,
                    Some(p) => {
                        let pv = p.var().index();
                        match (self.exist[v], self.exist[pv]) {
                            (true, false) => true,
                            (false, true) => false,
                            _ => self.qlevel[v] < self.qlevel[pv],
                        }
                    }
                };
                if better {
                    pick = Some(l);
                }
            }
            let l = pick.expect("solution with an active clause not covered");
            chosen[l.code()] = true;
            lits.push(l);
        }
        Constraint::new(ConstraintKind::Cube, lits).expect("assignment is consistent")
    }

    // Backjump level if `c` becomes unit after backtracking: a unique primary
    // literal at the highest decision level, and every secondary literal
    // quantified left of it assigned below that level.
    fn asserting_level(&self, c: &Constraint) -> Option<u32> {
        let primary_exist = c.kind() == ConstraintKind::Clause;
        let mut top: Option<Lit> = None;
        let mut top_level = 0;
        let mut ties = 0;
        for &l in c.lits() {
            let v = l.var().index();
            if self.exist[v] != primary_exist {
                continue;
            }
            if self.vals[v] == 0 {
                return None;
            }
            let lv = self.level[v];
            if top.is_none() || lv > top_level {
                top = Some(l);
                top_level = lv;
                ties = 1;
            } else if lv == top_level {
                ties += 1;
            }
        }
        let top = top?;
        // nothing below level 0 to jump back to
        if ties != 1 || top_level == 0 {
            return None;
        }
        let top_q = self.qlevel[top.var().index()];
        let mut b = 0;
        for &l in c.lits() {
            let v = l.var().index();
            if l == top {
                continue;
            }
            if self.exist[v] == primary_exist {
                b = b.max(self.level[v]);
            } else if self.qlevel[v] < top_q {
                if self.vals[v] == 0 || self.level[v] >= top_level {
                    return None;
                }
                b = b.max(self.level[v]);
            }
        }
        Some(b)
    }

    // ---- learning ----

    fn bump_constraint(&mut self, r: CRef) {
        if self.db.is_learned(r) && self.db.bump(r, self.cons_inc) {
            self.db.rescale_activities();
            self.cons_inc *= 1e-100;
        }
    }

    fn record(&mut self, c: &Constraint) {
        self.seen.insert(c.kind(), c.lits());
        for l in c.lits() {
            let a = &mut self.activity[l.var().index()];
            *a += self.var_inc;
            if *a > 1e100 {
                for a in &mut self.activity {
                    *a *= 1e-100;
                }
                self.var_inc *= 1e-100;
            }
        }
        self.var_inc *= self.config.activity_decay_inv;
        self.cons_inc *= self.config.activity_decay_inv;
        match c.kind() {
            ConstraintKind::Clause => self.stats.learned_clauses += 1,
            ConstraintKind::Cube => self.stats.learned_cubes += 1,
        }
        if let Some(sink) = self.export.as_mut() {
            if let Ok(msg) = sharing::encode(c, self.n as u32) {
                sink(&msg);
                self.stats.exported += 1;
            }
        }
    }

    fn learn(&mut self, c: Constraint, b: u32) -> Option<Event> {
        self.record(&c);
        self.backtrack(b);
        let r = self.add_constraint(c);
        self.check_new(r)
    }

    // Analysis found no asserting constraint: keep what was derived, undo the
    // last decision and flip its cached phase.
    fn fallback(&mut self, c: Constraint) -> Option<Event> {
        self.record(&c);
        let dl = self.decision_level();
        if dl > 0 {
            let d = self.trail[self.trail_lim[dl as usize - 1]].var();
            self.backtrack(dl - 1);
            self.cache[d.index()] = !self.cache[d.index()];
        }
        let r = self.add_constraint(c);
        self.check_new(r)
    }

    fn check_new(&mut self, r: CRef) -> Option<Event> {
        match self.db.get(r).kind() {
            ConstraintKind::Clause => self.check_clause(r),
            ConstraintKind::Cube => self.check_cube(r),
        }
    }

    fn add_constraint(&mut self, c: Constraint) -> CRef {
        let kind = c.kind();
        if self.db.is_full(kind) {
            self.reduce_db(kind, true);
        }
        let r = self.db.add_learned(c, self.cons_inc);
        self.attach(r);
        r
    }

    fn attach(&mut self, r: CRef) {
        let ri = r as usize;
        if self.sat_count.len() <= ri {
            self.sat_count.resize(ri + 1, 0);
        }
        let c = &self.db.entries[ri].c;
        match c.kind() {
            ConstraintKind::Clause => {
                let mut sat = 0;
                for &l in c.lits() {
                    self.clause_occ[l.code()].push(r);
                    if self.value(l) > 0 {
                        sat += 1;
                    }
                }
                self.sat_count[ri] = sat;
                if sat == 0 {
                    self.unsat_clauses += 1;
                    for l in self.db.entries[ri].c.lits() {
                        self.open_occ[l.code()] += 1;
                    }
                }
            }
            ConstraintKind::Cube => {
                let mut falsified = 0;
                for &l in c.lits() {
                    self.cube_occ[l.code()].push(r);
                    if self.value(l) < 0 {
                        falsified += 1;
                    }
                }
                self.sat_count[ri] = falsified;
            }
        }
    }

    /// Rebuilds occurrence lists and purity counters for the current database
    /// and assignment.
    fn rebuild(&mut self) {
        for o in self.clause_occ.iter_mut().chain(self.cube_occ.iter_mut()) {
            o.clear();
        }
        self.open_occ.iter_mut().for_each(|x| *x = 0);
        self.unsat_clauses = 0;
        self.sat_count.clear();
        self.sat_count.resize(self.db.entries.len(), 0);
        let clauses: Vec<CRef> = self.db.active_clauses().collect();
        for r in clauses {
            self.attach(r);
        }
        let cubes: Vec<CRef> = self.db.cubes().collect();
        for r in cubes {
            self.attach(r);
        }
        self.pure_queue.clear();
        self.in_pure_queue.iter_mut().for_each(|x| *x = false);
        for v in (1..=self.n as u32).rev() {
            self.enqueue_pure(Var(v));
        }
    }

    // Callers that rebuild anyway pass `rebuild = false`.
    fn reduce_db(&mut self, kind: ConstraintKind, rebuild: bool) {
        let mut is_reason = vec![false; self.db.entries.len()];
        for l in &self.trail {
            if let Reason::Clause(r) | Reason::Cube(r) = self.reason[l.var().index()] {
                is_reason[r as usize] = true;
            }
        }
        let removed = self.db.reduce(
            kind,
            self.config.db_reduce_fraction,
            self.config.db_capacity_growth,
            |r| is_reason[r as usize],
        );
        match kind {
            ConstraintKind::Clause => self.stats.deleted_clauses += removed as u64,
            ConstraintKind::Cube => self.stats.deleted_cubes += removed as u64,
        }
        if removed > 0 && rebuild {
            self.rebuild();
        }
    }

    // ---- restarts, imports, QBCE ----

    fn restart(&mut self) -> Result<Option<Event>, Status> {
        self.stats.restarts += 1;
        self.restarts.on_restart();
        self.clear_trail();
        if self.config.qbce == QbceMode::InprocessAtRestart {
            self.run_qbce(true);
        }
        self.reset()
    }

    // Clears the whole trail (level 0 included), attaches queued imports and
    // rescans every constraint.
    fn reset(&mut self) -> Result<Option<Event>, Status> {
        self.clear_trail();
        self.drain_imports()?;
        self.rebuild();
        let clauses: Vec<CRef> = self.db.active_clauses().collect();
        for r in clauses {
            if let Some(ev) = self.check_clause(r) {
                return Ok(Some(ev));
            }
        }
        let cubes: Vec<CRef> = self.db.cubes().collect();
        for r in cubes {
            if let Some(ev) = self.check_cube(r) {
                return Ok(Some(ev));
            }
        }
        Ok(None)
    }

    fn drain_imports(&mut self) -> Result<(), Status> {
        let ints = self.imports.drain();
        if ints.is_empty() {
            return Ok(());
        }
        let (cs, err) = sharing::decode_lossy(&ints, self.n as u32);
        if err.is_some() {
            self.stats.import_rejected += 1;
        }
        let pcnf = Arc::clone(&self.pcnf);
        let prefix = pcnf.prefix();
        for c in cs {
            let c = match c.kind() {
                ConstraintKind::Clause => universal_reduce(prefix, &c),
                ConstraintKind::Cube => existential_reduce(prefix, &c),
            };
            if !self.seen.insert(c.kind(), c.lits()) {
                self.stats.import_duplicates += 1;
                continue;
            }
            self.stats.imported += 1;
            if c.is_empty() {
                return Err(match c.kind() {
                    ConstraintKind::Clause => Status::Unsat,
                    ConstraintKind::Cube => Status::Sat,
                });
            }
            let kind = c.kind();
            if self.db.is_full(kind) {
                self.reduce_db(kind, false);
            }
            self.db.add_learned(c, self.cons_inc);
        }
        Ok(())
    }

    fn run_qbce(&mut self, with_learned: bool) {
        let mut refs: Vec<CRef> = self.db.originals().to_vec();
        if with_learned {
            refs.extend_from_slice(self.db.learned(ConstraintKind::Clause));
        }
        for &r in &refs {
            self.db.set_eliminated(r, false);
        }
        let cs: Vec<&Constraint> = refs.iter().map(|&r| self.db.get(r)).collect();
        let gone = qbce_fixpoint(self.pcnf.prefix(), &cs);
        self.stats.qbce_eliminated += gone.len() as u64;
        for i in gone {
            self.db.set_eliminated(refs[i], true);
        }
    }

    // ---- invariant replay ----

    fn verify_trail(&self) -> Result<(), String> {
        let mut vals = vec![0i8; self.n + 1];
        let mut last_level = 0;
        for (i, &lit) in self.trail.iter().enumerate() {
            let v = lit.var().index();
            if vals[v] != 0 {
                return Err(format!("variable {v} assigned twice"));
            }
            if self.level[v] < last_level {
                return Err(format!("decision level decreases at trail position {i}"));
            }
            last_level = self.level[v];
            match self.reason[v] {
                Reason::Decision => {
                    let g = self.group_of[v];
                    if let Some(w) = (1..=self.n).find(|&w| vals[w] == 0 && w != v && self.group_of[w] < g) {
                        return Err(format!("decision on {v} while outer variable {w} is open"));
                    }
                }
                Reason::Clause(r) => {
                    if self.clause_state(self.db.get(r), &vals) != State::Unit(lit) {
                        return Err(format!("clause {r} is not unit for {lit}"));
                    }
                }
                Reason::Cube(r) => {
                    if self.cube_state(self.db.get(r), &vals) != State::Unit(!lit) {
                        return Err(format!("cube {r} is not unit for {}", !lit));
                    }
                }
                Reason::Pure => {}
            }
            vals[v] = if lit.is_positive() { 1 } else { -1 };
        }
        Ok(())
    }
}

/// Runs one solver on `pcnf` with the given configuration and budget.
pub fn solve(pcnf: Arc<Pcnf>, config: SolverConfig, budget: &Budget) -> SolveResult {
    Solver::new(pcnf, config).solve(budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Quantifier::{Existential as E, Universal as A};
    use crate::formula::Quantifier;

    fn pcnf(n: u32, blocks: Vec<(Quantifier, Vec<u32>)>, clauses: &[&[i32]]) -> Arc<Pcnf> {
        let cs: Vec<Vec<i32>> = clauses.iter().map(|c| c.to_vec()).collect();
        Arc::new(Pcnf::from_parts(n, blocks, &cs).unwrap())
    }

    fn plain() -> SolverConfig {
        SolverConfig {
            qbce: QbceMode::Off,
            pure_literals: false,
            ..SolverConfig::reference()
        }
    }

    fn lit(x: i32) -> Lit {
        Lit::from_dimacs(x)
    }

    #[test]
    fn decision_follows_prefix() {
        let f = pcnf(3, vec![(E, vec![1]), (A, vec![2]), (E, vec![3])], &[&[1, 2, 3], &[-1, -2, -3]]);
        let mut s = Solver::new(f, plain());
        s.rebuild();
        s.activity[2] = 10.0;
        s.activity[3] = 20.0;
        s.decide();
        assert_eq!(s.trail, vec![lit(-1)]);
    }

    #[test]
    fn decision_stays_in_open_block() {
        let f = pcnf(3, vec![(E, vec![1, 2]), (A, vec![3])], &[&[1, 2, 3], &[-1, -2, -3]]);
        let mut s = Solver::new(f, plain());
        s.rebuild();
        s.activity = vec![0.0, 5.0, 1.0, 10.0];
        s.cache[2] = true;
        s.decide();
        s.decide();
        assert_eq!(s.trail, vec![lit(-1), lit(2)]);
        assert_eq!(s.decision_level(), 2);
    }

    #[test]
    fn unit_after_reduction() {
        let f = pcnf(2, vec![(E, vec![1]), (A, vec![2])], &[&[1, 2]]);
        let mut s = Solver::new(f, plain());
        assert_eq!(s.reset().unwrap(), None);
        assert_eq!(s.trail, vec![lit(1)]);
        assert_eq!(s.level[1], 0);
        assert_eq!(s.reason[1], Reason::Clause(0));
    }

    #[test]
    fn universal_decision_then_solution() {
        let f = pcnf(2, vec![(A, vec![1]), (E, vec![2])], &[&[1, 2], &[-1, 2]]);
        let mut s = Solver::new(f, plain());
        assert_eq!(s.reset().unwrap(), None);
        assert_eq!(s.propagate(), None);
        s.decide();
        assert_eq!(s.propagate(), Some(Event::Solution(None)));
        assert_eq!(s.trail, vec![lit(-1), lit(2)]);
        assert_eq!(s.reason[2], Reason::Clause(0));
    }

    #[test]
    fn contradictory_units_conflict() {
        let f = pcnf(1, vec![(E, vec![1])], &[&[1], &[-1]]);
        let mut s = Solver::new(f, plain());
        assert_eq!(s.reset().unwrap(), Some(Event::Conflict(1)));
    }

    #[test]
    fn pure_universal_falsifies() {
        let f = pcnf(2, vec![(A, vec![1]), (E, vec![2])], &[&[1, 2], &[1, -2]]);
        let mut s = Solver::new(f, SolverConfig { pure_literals: true, ..plain() });
        assert_eq!(s.reset().unwrap(), None);
        // u only occurs positively, so it is set false; then the clauses conflict
        assert!(matches!(s.propagate(), Some(Event::Conflict(_))));
        assert_eq!(s.trail[0], lit(-1));
        assert_eq!(s.reason[1], Reason::Pure);
    }

    #[test]
    fn backtrack_keeps_phases() {
        let f = pcnf(3, vec![(E, vec![1, 2, 3])], &[&[1, 2, 3]]);
        let mut s = Solver::new(f, plain());
        s.reset().unwrap();
        s.cache[1] = true;
        s.decide();
        s.decide();
        let before = s.trail.clone();
        s.backtrack(2);
        assert_eq!(s.trail, before);
        s.backtrack(0);
        assert!(s.trail.is_empty());
        assert!(s.cache[1]);
        assert!(!s.cache[2]);
    }

    #[test]
    fn learned_cube_asserts_at_level_zero() {
        // after the branch u=false is solved, the cube (¬u) forces u=true
        let f = pcnf(2, vec![(A, vec![1]), (E, vec![2])], &[&[1, 2], &[-1, -2]]);
        let mut s = Solver::new(f, plain());
        s.reset().unwrap();
        s.decide();
        let ev = s.propagate();
        let Analysis::Learn(t, b) = s.analyze_solution(match ev {
            Some(Event::Solution(src)) => src,
            other => panic!("expected a solution, got {other:?}"),
        }) else {
            panic!("expected an asserting cube");
        };
        assert_eq!(t.to_dimacs(), vec![-1]);
        assert_eq!(b, 0);
        assert_eq!(s.learn(t, b), None);
        assert_eq!(s.trail, vec![lit(1)]);
        assert_eq!(s.propagate(), Some(Event::Solution(None)));
        assert!(matches!(s.reason[1], Reason::Cube(_)));
    }

    #[test]
    fn conflict_learns_falsified_clause() {
        // the falsified clause has a single existential at the decision level
        let f = pcnf(3, vec![(E, vec![1]), (A, vec![2]), (E, vec![3])], &[&[1, 2, 3], &[1, 2, -3]]);
        let mut s = Solver::new(f, plain());
        s.reset().unwrap();
        s.decide(); // ¬x
        s.decide(); // ¬u
        let Some(Event::Conflict(r)) = s.propagate() else {
            panic!("expected a conflict");
        };
        let Analysis::Learn(c, b) = s.analyze_conflict(r) else {
            panic!("expected an asserting clause");
        };
        // (x ∨ u) reduces to (x), asserting at level 0
        assert_eq!(c.to_dimacs(), vec![1]);
        assert_eq!(b, 0);
    }

    #[test]
    fn imports_attach_at_restart() {
        let f = pcnf(5, vec![(E, vec![1, 2, 3, 4, 5])], &[&[1, 2, 3, 4, 5]]);
        let mut s = Solver::new(f, plain());
        let c = Constraint::from_dimacs(ConstraintKind::Clause, &[3, -5]).unwrap();
        let x = Constraint::from_dimacs(ConstraintKind::Clause, &[2]).unwrap();
        s.add_learned_constraint(&sharing::encode(&c, 5).unwrap());
        s.add_learned_constraint(&sharing::encode(&x, 5).unwrap());
        s.add_learned_constraint(&sharing::encode(&c, 5).unwrap());
        assert!(s.db.learned(ConstraintKind::Clause).is_empty());
        s.reset().unwrap();
        let learned: Vec<Vec<i32>> = s
            .db
            .learned(ConstraintKind::Clause)
            .iter()
            .map(|&r| s.db.get(r).to_dimacs())
            .collect();
        assert_eq!(learned, vec![vec![3, -5], vec![2]]);
        assert_eq!(s.stats.imported, 2);
        assert_eq!(s.stats.import_duplicates, 1);
        assert_eq!(s.vals[2], 1);
        assert_eq!(s.level[2], 0);
    }

    #[test]
    fn malformed_import_is_counted() {
        let f = pcnf(2, vec![(E, vec![1, 2])], &[&[1, 2]]);
        let mut s = Solver::new(f, plain());
        s.add_learned_constraint(&[3, 1, 0, 9, 9]);
        s.add_learned_constraint(&[7, 7, 0]);
        assert_eq!(s.solve(&Budget::unlimited()).status, Status::Sat);
        assert_eq!(s.stats.import_rejected, 1);
    }

    #[test]
    fn empty_imports_decide() {
        let f = pcnf(2, vec![(E, vec![1]), (A, vec![2])], &[&[1, 2], &[-1, -2]]);
        let mut s = Solver::new(Arc::clone(&f), plain());
        s.add_learned_constraint(&[-3, 0]);
        assert_eq!(s.solve(&Budget::unlimited()).status, Status::Sat);
        let mut s = Solver::new(f, plain());
        s.add_learned_constraint(&[3, 0]);
        assert_eq!(s.solve(&Budget::unlimited()).status, Status::Unsat);
    }
}
