//! Q-resolution on clauses, term resolution on cubes, and initial cubes.

use thiserror::Error;

use crate::formula::{
    existential_reduce, universal_reduce, Constraint, ConstraintKind, Lit, Prefix, Quantifier,
    Var,
};

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
pub enum ResolutionError {
    #[error("resolvent is tautological in variable {0}")]
    Tautology(Var),
    #[error("resolvent cube is contradictory in variable {0}")]
    Contradiction(Var),
    #[error("invalid pivot {0}")]
    Pivot(Var),
    #[error("operands have the wrong constraint kind")]
    Kind,
    #[error("assignment does not satisfy clause {0}")]
    Precondition(usize),
}

/// Resolves two clauses on an existential pivot. Both operands are reduced
/// before resolving and the resolvent is reduced afterwards.
pub fn q_resolve(
    prefix: &Prefix,
    c1: &Constraint,
    c2: &Constraint,
    pivot: Var,
) -> Result<Constraint, ResolutionError> {
    if c1.kind() != ConstraintKind::Clause || c2.kind() != ConstraintKind::Clause {
        return Err(ResolutionError::Kind);
    }
    if !prefix.contains(pivot) || !prefix.is_existential(pivot) {
        return Err(ResolutionError::Pivot(pivot));
    }
    let r1 = universal_reduce(prefix, c1);
    let r2 = universal_reduce(prefix, c2);
    if !has_opposite_pivot(&r1, &r2, pivot) {
        return Err(ResolutionError::Pivot(pivot));
    }
    let lits = merge(&r1, &r2, pivot).map_err(ResolutionError::Tautology)?;
    let resolvent = Constraint::from_sorted_unchecked(ConstraintKind::Clause, lits);
    Ok(universal_reduce(prefix, &resolvent))
}

/// Resolves two cubes on a universal pivot (dual of [`q_resolve`]).
pub fn term_resolve(
    prefix: &Prefix,
    t1: &Constraint,
    t2: &Constraint,
    pivot: Var,
) -> Result<Constraint, ResolutionError> {
    if t1.kind() != ConstraintKind::Cube || t2.kind() != ConstraintKind::Cube {
        return Err(ResolutionError::Kind);
    }
    if !prefix.contains(pivot) || prefix.quantifier(pivot) != Quantifier::Universal {
        return Err(ResolutionError::Pivot(pivot));
    }
    let r1 = existential_reduce(prefix, t1);
    let r2 = existential_reduce(prefix, t2);
    if !has_opposite_pivot(&r1, &r2, pivot) {
        return Err(ResolutionError::Pivot(pivot));
    }
    let lits = merge(&r1, &r2, pivot).map_err(ResolutionError::Contradiction)?;
    let resolvent = Constraint::from_sorted_unchecked(ConstraintKind::Cube, lits);
    Ok(existential_reduce(prefix, &resolvent))
}

fn has_opposite_pivot(a: &Constraint, b: &Constraint, pivot: Var) -> bool {
    matches!((a.lit_of(pivot), b.lit_of(pivot)), (Some(x), Some(y)) if x == !y)
}

// Sorted merge of two constraints without the pivot; a clash on any other
// variable is reported as `Err(var)`.
fn merge(a: &Constraint, b: &Constraint, pivot: Var) -> Result<Vec<Lit>, Var> {
    let (xs, ys) = (a.lits(), b.lits());
    let mut out = Vec::with_capacity(xs.len() + ys.len());
    let (mut i, mut j) = (0, 0);
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) if x.var() == y.var() => {
                i += 1;
                j += 1;
                if x.var() == pivot {
                    continue;
                }
                if x != y {
                    return Err(x.var());
                }
                x
            }
            (Some(&x), Some(&y)) if x.var() < y.var() => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    Ok(out)
}

/// Builds the cube of all literals in `assignment`, existentially reduced.
/// Every clause of `matrix` must contain a literal of the assignment.
pub fn initial_cube<'a>(
    prefix: &Prefix,
    assignment: &[Lit],
    matrix: impl IntoIterator<Item = &'a Constraint>,
) -> Result<Constraint, ResolutionError> {
    let cube = Constraint::cube(assignment.to_vec()).ok_or(ResolutionError::Contradiction(
        contradicting_var(assignment),
    ))?;
    for (i, clause) in matrix.into_iter().enumerate() {
        if !clause.lits().iter().any(|&l| cube.contains(l)) {
            return Err(ResolutionError::Precondition(i));
        }
    }
    Ok(existential_reduce(prefix, &cube))
}

fn contradicting_var(assignment: &[Lit]) -> Var {
    let mut seen = std::collections::HashMap::new();
    for &l in assignment {
        if let Some(&prev) = seen.get(&l.var()) {
            if prev != l {
                return l.var();
            }
        }
        seen.insert(l.var(), l);
    }
    Var(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Quantifier::{Existential as E, Universal as A};

    fn prefix(n: u32, blocks: &[(Quantifier, &[u32])]) -> Prefix {
        Prefix::new(
            n,
            blocks
                .iter()
                .map(|(q, vs)| (*q, vs.iter().map(|&v| Var(v)).collect()))
                .collect(),
        )
        .unwrap()
    }
    fn clause(xs: &[i32]) -> Constraint {
        Constraint::from_dimacs(ConstraintKind::Clause, xs).unwrap()
    }
    fn cube(xs: &[i32]) -> Constraint {
        Constraint::from_dimacs(ConstraintKind::Cube, xs).unwrap()
    }
    fn lits(xs: &[i32]) -> Vec<Lit> {
        xs.iter().map(|&x| Lit::from_dimacs(x)).collect()
    }

    #[test]
    fn q_resolve_examples() {
        // ∃x(1) ∀u(2) ∃y(3)
        let p = prefix(3, &[(E, &[1]), (A, &[2]), (E, &[3])]);
        let r = q_resolve(&p, &clause(&[1, 2, 3]), &clause(&[1, -3]), Var(3)).unwrap();
        assert_eq!(r.to_dimacs(), vec![1]);

        let p = prefix(2, &[(E, &[1]), (A, &[2])]);
        // u has nothing existential to its right, so both operands lose it first
        let r = q_resolve(&p, &clause(&[1, 2]), &clause(&[-1, -2]), Var(1)).unwrap();
        assert!(r.is_empty());

        let r = q_resolve(&p, &clause(&[1]), &clause(&[-1]), Var(1)).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn q_resolve_tautology() {
        // ∃x(1) ∀u(2) ∃y(3): u survives reduction in both operands
        let p = prefix(3, &[(E, &[1]), (A, &[2]), (E, &[3])]);
        let err = q_resolve(&p, &clause(&[1, 2, 3]), &clause(&[-1, -2, 3]), Var(1)).unwrap_err();
        assert_eq!(err, ResolutionError::Tautology(Var(2)));
    }

    #[test]
    fn q_resolve_pivot_errors() {
        let p = prefix(2, &[(E, &[1]), (A, &[2])]);
        assert_eq!(
            q_resolve(&p, &clause(&[1, 2]), &clause(&[-2]), Var(2)),
            Err(ResolutionError::Pivot(Var(2)))
        );
        assert_eq!(
            q_resolve(&p, &clause(&[1]), &clause(&[1]), Var(1)),
            Err(ResolutionError::Pivot(Var(1)))
        );
        assert_eq!(
            q_resolve(&p, &clause(&[1]), &cube(&[-1]), Var(1)),
            Err(ResolutionError::Kind)
        );
    }

    #[test]
    fn term_resolve_examples() {
        // ∀u(1) ∃e(2)
        let p = prefix(2, &[(A, &[1]), (E, &[2])]);
        assert!(term_resolve(&p, &cube(&[1]), &cube(&[-1]), Var(1)).unwrap().is_empty());
        assert!(term_resolve(&p, &cube(&[1, 2]), &cube(&[-1]), Var(1)).unwrap().is_empty());
        // ∃x(1) ∀u(2): x is reduced once u is gone
        let p = prefix(2, &[(E, &[1]), (A, &[2])]);
        assert!(term_resolve(&p, &cube(&[1, 2]), &cube(&[1, -2]), Var(2)).unwrap().is_empty());
        assert_eq!(
            term_resolve(&p, &cube(&[1, 2]), &cube(&[-1, -2]), Var(2)),
            Err(ResolutionError::Contradiction(Var(1)))
        );
        assert_eq!(
            term_resolve(&p, &cube(&[1, 2]), &cube(&[-1, -2]), Var(1)),
            Err(ResolutionError::Pivot(Var(1)))
        );
    }

    #[test]
    fn initial_cube_examples() {
        let p = prefix(2, &[(A, &[1]), (E, &[2])]);
        let m = [clause(&[1, 2]), clause(&[-1, 2])];
        let t = initial_cube(&p, &lits(&[-1, 2]), &m).unwrap();
        assert_eq!(t.to_dimacs(), vec![-1]);

        let p = prefix(1, &[(E, &[1])]);
        let m = [clause(&[1])];
        assert!(initial_cube(&p, &lits(&[1]), &m).unwrap().is_empty());

        let p = prefix(1, &[(A, &[1])]);
        assert!(initial_cube(&p, &[], &[]).unwrap().is_empty());

        let p = prefix(2, &[(A, &[1]), (E, &[2])]);
        let m = [clause(&[1, 2])];
        assert_eq!(
            initial_cube(&p, &lits(&[-1, -2]), &m),
            Err(ResolutionError::Precondition(0))
        );
    }

    #[test]
    fn resolution_is_symmetric() {
        let p = prefix(4, &[(E, &[1]), (A, &[2]), (E, &[3, 4])]);
        let a = clause(&[1, 2, 3]);
        let b = clause(&[-3, 4, -1]);
        assert_eq!(
            q_resolve(&p, &a, &b, Var(3)),
            q_resolve(&p, &b, &a, Var(3))
        );
    }
}
