use crate::formula::{Constraint, ConstraintKind};

/// Index of a constraint slot in the database.
pub type CRef = u32;

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub(crate) c: Constraint,
    pub(crate) learned: bool,
    pub(crate) deleted: bool,
    pub(crate) eliminated: bool,
    pub(crate) activity: f64,
    pub(crate) uses: u32,
}

/// Original clauses plus separate learned-clause and learned-cube lists, each
/// with its own capacity.
#[derive(Debug, Clone)]
pub struct ConstraintDb {
    pub(crate) entries: Vec<Entry>,
    free: Vec<CRef>,
    originals: Vec<CRef>,
    learned_clauses: Vec<CRef>,
    learned_cubes: Vec<CRef>,
    clause_capacity: usize,
    cube_capacity: usize,
}

impl ConstraintDb {
    pub fn new(originals: Vec<Constraint>, clause_capacity: usize, cube_capacity: usize) -> Self {
        let entries: Vec<Entry> = originals
            .into_iter()
            .map(|c| Entry {
                c,
                learned: false,
                deleted: false,
                eliminated: false,
                activity: 0.0,
                uses: 0,
            })
            .collect();
        let originals = (0..entries.len() as CRef).collect();
        ConstraintDb {
            entries,
            free: Vec::new(),
            originals,
            learned_clauses: Vec::new(),
            learned_cubes: Vec::new(),
            clause_capacity: clause_capacity.max(1),
            cube_capacity: cube_capacity.max(1),
        }
    }

    #[inline]
    pub fn get(&self, r: CRef) -> &Constraint {
        &self.entries[r as usize].c
    }

    #[inline]
    pub fn is_active(&self, r: CRef) -> bool {
        let e = &self.entries[r as usize];
        !e.deleted && !e.eliminated
    }

    pub fn is_learned(&self, r: CRef) -> bool {
        self.entries[r as usize].learned
    }

    pub fn activity(&self, r: CRef) -> f64 {
        self.entries[r as usize].activity
    }

    pub fn add_learned(&mut self, c: Constraint, activity: f64) -> CRef {
        let kind = c.kind();
        let entry = Entry {
            c,
            learned: true,
            deleted: false,
            eliminated: false,
            activity,
            uses: 0,
        };
        let r = match self.free.pop() {
            Some(r) => {
                self.entries[r as usize] = entry;
                r
            }
            None => {
                self.entries.push(entry);
                (self.entries.len() - 1) as CRef
            }
        };
        match kind {
            ConstraintKind::Clause => self.learned_clauses.push(r),
            ConstraintKind::Cube => self.learned_cubes.push(r),
        }
        r
    }

    pub fn originals(&self) -> &[CRef] {
        &self.originals
    }

    pub fn learned(&self, kind: ConstraintKind) -> &[CRef] {
        match kind {
            ConstraintKind::Clause => &self.learned_clauses,
            ConstraintKind::Cube => &self.learned_cubes,
        }
    }

    pub fn capacity(&self, kind: ConstraintKind) -> usize {
        match kind {
            ConstraintKind::Clause => self.clause_capacity,
            ConstraintKind::Cube => self.cube_capacity,
        }
    }

    pub fn is_full(&self, kind: ConstraintKind) -> bool {
        self.learned(kind).len() >= self.capacity(kind)
    }

    /// All clauses that are neither deleted nor eliminated.
    pub fn active_clauses(&self) -> impl Iterator<Item = CRef> + '_ {
        self.originals
            .iter()
            .chain(self.learned_clauses.iter())
            .copied()
            .filter(|&r| self.is_active(r))
    }

    pub fn cubes(&self) -> impl Iterator<Item = CRef> + '_ {
        self.learned_cubes.iter().copied()
    }

    pub(crate) fn bump(&mut self, r: CRef, inc: f64) -> bool {
        let e = &mut self.entries[r as usize];
        e.activity += inc;
        e.uses = e.uses.saturating_add(1);
        e.activity > 1e100
    }

    pub(crate) fn rescale_activities(&mut self) {
        for e in &mut self.entries {
            e.activity *= 1e-100;
        }
    }

    pub(crate) fn set_eliminated(&mut self, r: CRef, eliminated: bool) {
        self.entries[r as usize].eliminated = eliminated;
    }

    /// Removes `ceil(fraction * len)` lowest-activity constraints of the given
    /// learned list, skipping those for which `is_reason` holds, then grows
    /// the capacity by `growth`. Returns the number removed.
    pub fn reduce(
        &mut self,
        kind: ConstraintKind,
        fraction: f64,
        growth: f64,
        is_reason: impl Fn(CRef) -> bool,
    ) -> usize {
        let list = match kind {
            ConstraintKind::Clause => std::mem::take(&mut self.learned_clauses),
            ConstraintKind::Cube => std::mem::take(&mut self.learned_cubes),
        };
        let target = (fraction.clamp(0.0, 1.0) * list.len() as f64).ceil() as usize;
        let mut candidates: Vec<CRef> = list.iter().copied().filter(|&r| !is_reason(r)).collect();
        candidates.sort_by(|&a, &b| {
            let (ea, eb) = (&self.entries[a as usize], &self.entries[b as usize]);
            ea.activity
                .total_cmp(&eb.activity)
                .then(ea.c.len().cmp(&eb.c.len()).reverse())
                .then(a.cmp(&b))
        });
        candidates.truncate(target);
        let mut doomed = vec![false; self.entries.len()];
        for &r in &candidates {
            doomed[r as usize] = true;
            let e = &mut self.entries[r as usize];
            e.deleted = true;
            e.c = Constraint::from_sorted_unchecked(kind, Vec::new());
            self.free.push(r);
        }
        let kept: Vec<CRef> = list.into_iter().filter(|&r| !doomed[r as usize]).collect();
        let cap = match kind {
            ConstraintKind::Clause => {
                self.learned_clauses = kept;
                &mut self.clause_capacity
            }
            ConstraintKind::Cube => {
                self.learned_cubes = kept;
                &mut self.cube_capacity
            }
        };
        *cap = ((*cap as f64) * growth.max(1.0)).ceil() as usize;
        candidates.len()
    }
}
