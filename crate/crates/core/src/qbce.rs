//! Blocked clause elimination for prenex CNF.
//!
//! A clause `C` is blocked on an existential literal `l ∈ C` if every clause
//! `D` containing `¬l` has a literal `¬k` with `k ∈ C`, `k ≠ l` and
//! `level(k) ≤ level(l)`, i.e. every outer resolvent on `l` is tautological.
//! Removing blocked clauses preserves the truth value of the formula.

use crate::formula::{Constraint, Lit, Prefix};

/// Checks whether `clause` is blocked on `lit` with respect to `others`.
///
/// `others` is the set of active clauses; `clause` itself may be among them.
pub fn is_blocked<'a>(
    prefix: &Prefix,
    clause: &Constraint,
    lit: Lit,
    others: impl IntoIterator<Item = &'a Constraint>,
) -> bool {
    debug_assert!(clause.contains(lit));
    if !prefix.is_existential(lit.var()) {
        return false;
    }
    others
        .into_iter()
        .filter(|d| d.contains(!lit))
        .all(|d| outer_resolvent_is_tautology(prefix, clause, lit, d))
}

fn outer_resolvent_is_tautology(prefix: &Prefix, c: &Constraint, lit: Lit, d: &Constraint) -> bool {
    let lvl = prefix.level(lit.var());
    c.lits()
        .iter()
        .any(|&k| k != lit && prefix.level(k.var()) <= lvl && d.contains(!k))
}

/// Computes the set of clauses removed by blocked clause elimination run to
/// fixpoint over `clauses`. Returns indices into `clauses`, ascending.
///
/// The result does not depend on the order in which blocked clauses are found.
pub fn qbce_fixpoint(prefix: &Prefix, clauses: &[&Constraint]) -> Vec<usize> {
    let n_codes = 2 * (prefix.num_vars() as usize + 1);
    let mut occ: Vec<Vec<usize>> = vec![Vec::new(); n_codes];
    for (i, c) in clauses.iter().enumerate() {
        for l in c.lits() {
            occ[l.code()].push(i);
        }
    }
    let mut active = vec![true; clauses.len()];
    let mut queued = vec![true; clauses.len()];
    let mut queue: Vec<usize> = (0..clauses.len()).rev().collect();

    while let Some(i) = queue.pop() {
        queued[i] = false;
        if !active[i] {
            continue;
        }
        let c = clauses[i];
        let blocked = c.lits().iter().any(|&l| {
            prefix.is_existential(l.var())
                && occ[(!l).code()]
                    .iter()
                    .filter(|&&j| active[j])
                    .all(|&j| outer_resolvent_is_tautology(prefix, c, l, clauses[j]))
        });
        if !blocked {
            continue;
        }
        active[i] = false;
        // clauses that had `c` as a resolution partner may now be blocked
        for &k in c.lits() {
            for &j in &occ[(!k).code()] {
                if active[j] && !queued[j] {
                    queued[j] = true;
                    queue.push(j);
                }
            }
        }
    }
    (0..clauses.len()).filter(|&i| !active[i]).collect()
}
