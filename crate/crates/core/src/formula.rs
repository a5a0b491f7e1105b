//! Prenex CNF data model, QDIMACS input/output and the two reduction rules.

use std::fmt;
use std::io::Read;

use thiserror::Error;

/// A propositional variable, numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

impl Var {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn lit(self, positive: bool) -> Lit {
        let v = self.0 as i32;
        Lit(if positive { v } else { -v })
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A literal in DIMACS convention: a nonzero signed integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(i32);

impl Lit {
    /// Returns `None` for zero.
    pub fn new(value: i32) -> Option<Lit> {
        (value != 0 && value != i32::MIN).then_some(Lit(value))
    }

    /// # Panics
    /// Panics if `value` is zero.
    pub fn from_dimacs(value: i32) -> Lit {
        Lit::new(value).expect("literal must be nonzero")
    }

    #[inline]
    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    #[inline]
    pub fn var(self) -> Var {
        Var(self.0.unsigned_abs())
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    /// Dense index usable for per-literal tables: `2*var + (negative as usize)`.
    #[inline]
    pub fn code(self) -> usize {
        2 * self.var().index() + usize::from(self.0 < 0)
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    #[inline]
    fn not(self) -> Lit {
        Lit(-self.0)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantifier {
    Existential,
    Universal,
}

impl Quantifier {
    pub fn symbol(self) -> char {
        match self {
            Quantifier::Existential => 'e',
            Quantifier::Universal => 'a',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantBlock {
    pub quantifier: Quantifier,
    pub vars: Vec<Var>,
    /// 1-based position in the prefix; level 0 is reserved for free variables.
    pub level: u32,
}

/// The quantifier prefix with per-variable lookup tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prefix {
    num_vars: u32,
    blocks: Vec<QuantBlock>,
    free_vars: Vec<Var>,
    // indexed by variable; entry 0 unused
    quant: Vec<Quantifier>,
    level: Vec<u32>,
}

impl Prefix {
    /// Builds a normalized prefix: empty blocks are skipped, adjacent blocks of
    /// the same quantifier are merged, unbound variables become free.
    pub fn new(
        num_vars: u32,
        raw_blocks: Vec<(Quantifier, Vec<Var>)>,
    ) -> Result<Prefix, FormulaError> {
        let n = num_vars as usize;
        let mut seen = vec![false; n + 1];
        let mut blocks: Vec<QuantBlock> = Vec::new();
        for (q, vars) in raw_blocks {
            for &v in &vars {
                if v.0 == 0 || v.0 > num_vars {
                    return Err(FormulaError::VarOutOfRange {
                        var: v.0 as i64,
                        num_vars,
                    });
                }
                if std::mem::replace(&mut seen[v.index()], true) {
                    return Err(FormulaError::QuantifiedTwice(v.0));
                }
            }
            if vars.is_empty() {
                continue;
            }
            match blocks.last_mut() {
                Some(last) if last.quantifier == q => last.vars.extend(vars),
                _ => {
                    let level = blocks.len() as u32 + 1;
                    blocks.push(QuantBlock {
                        quantifier: q,
                        vars,
                        level,
                    });
                }
            }
        }
        let mut quant = vec![Quantifier::Existential; n + 1];
        let mut level = vec![0; n + 1];
        for b in &blocks {
            for &v in &b.vars {
                quant[v.index()] = b.quantifier;
                level[v.index()] = b.level;
            }
        }
        let free_vars = (1..=num_vars).map(Var).filter(|v| !seen[v.index()]).collect();
        Ok(Prefix {
            num_vars,
            blocks,
            free_vars,
            quant,
            level,
        })
    }

    #[inline]
    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn blocks(&self) -> &[QuantBlock] {
        &self.blocks
    }

    pub fn free_vars(&self) -> &[Var] {
        &self.free_vars
    }

    /// Quantifier of a declared variable. Free variables are existential.
    #[inline]
    pub fn quantifier(&self, v: Var) -> Quantifier {
        self.quant[v.index()]
    }

    #[inline]
    pub fn level(&self, v: Var) -> u32 {
        self.level[v.index()]
    }

    #[inline]
    pub fn is_existential(&self, v: Var) -> bool {
        self.quant[v.index()] == Quantifier::Existential
    }

    #[inline]
    pub fn contains(&self, v: Var) -> bool {
        v.0 >= 1 && v.0 <= self.num_vars
    }

    /// Variables grouped by level, outermost first. The free-variable group
    /// (level 0) is present only when non-empty.
    pub fn decision_groups(&self) -> Vec<(Quantifier, Vec<Var>)> {
        let mut groups = Vec::with_capacity(self.blocks.len() + 1);
        if !self.free_vars.is_empty() {
            groups.push((Quantifier::Existential, self.free_vars.clone()));
        }
        groups.extend(self.blocks.iter().map(|b| (b.quantifier, b.vars.clone())));
        groups
    }

    /// Quantifier and level of `v`, or an error if `v` is not declared.
    pub fn quant_info(&self, v: Var) -> Result<(Quantifier, u32), FormulaError> {
        if !self.contains(v) {
            return Err(FormulaError::UndeclaredVar(v.0));
        }
        Ok((self.quantifier(v), self.level(v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Clause,
    Cube,
}

/// A clause or cube with literals sorted by variable and no repeated variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    kind: ConstraintKind,
    lits: Vec<Lit>,
}

impl Constraint {
    /// Sorts and deduplicates `lits`. Returns `None` if some variable occurs
    /// in both polarities.
    pub fn new(kind: ConstraintKind, mut lits: Vec<Lit>) -> Option<Constraint> {
        lits.sort_unstable_by_key(|l| (l.var(), l.to_dimacs()));
        lits.dedup();
        if lits.windows(2).any(|w| w[0].var() == w[1].var()) {
            return None;
        }
        Some(Constraint { kind, lits })
    }

    pub fn clause(lits: Vec<Lit>) -> Option<Constraint> {
        Constraint::new(ConstraintKind::Clause, lits)
    }

    pub fn cube(lits: Vec<Lit>) -> Option<Constraint> {
        Constraint::new(ConstraintKind::Cube, lits)
    }

    pub fn from_dimacs(kind: ConstraintKind, lits: &[i32]) -> Option<Constraint> {
        let lits = lits.iter().map(|&l| Lit::new(l)).collect::<Option<Vec<_>>>()?;
        Constraint::new(kind, lits)
    }

    pub(crate) fn from_sorted_unchecked(kind: ConstraintKind, lits: Vec<Lit>) -> Constraint {
        debug_assert!(lits.windows(2).all(|w| w[0].var() < w[1].var()));
        Constraint { kind, lits }
    }

    #[inline]
    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    #[inline]
    pub fn lits(&self) -> &[Lit] {
        &self.lits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.lits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn contains(&self, lit: Lit) -> bool {
        self.lits
            .binary_search_by_key(&lit.var(), |l| l.var())
            .is_ok_and(|i| self.lits[i] == lit)
    }

    /// The literal of `v` in this constraint, if any.
    pub fn lit_of(&self, v: Var) -> Option<Lit> {
        self.lits
            .binary_search_by_key(&v, |l| l.var())
            .ok()
            .map(|i| self.lits[i])
    }

    pub fn to_dimacs(&self) -> Vec<i32> {
        self.lits.iter().map(|l| l.to_dimacs()).collect()
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (open, sep, close) = match self.kind {
            ConstraintKind::Clause => ('(', " | ", ')'),
            ConstraintKind::Cube => ('[', " & ", ']'),
        };
        write!(f, "{open}")?;
        for (i, l) in self.lits.iter().enumerate() {
            if i > 0 {
                write!(f, "{sep}")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "{close}")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormulaError {
    #[error("empty input")]
    EmptyInput,
    #[error("line {line}: malformed header: {msg}")]
    MalformedHeader { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("variable {var} out of range 1..={num_vars}")]
    VarOutOfRange { var: i64, num_vars: u32 },
    #[error("variable {0} is quantified twice")]
    QuantifiedTwice(u32),
    #[error("line {line}: missing 0 terminator")]
    MissingTerminator { line: usize },
    #[error("variable {0} is not declared")]
    UndeclaredVar(u32),
    #[error("i/o error: {0}")]
    Io(String),
}

/// A closed QBF in prenex CNF.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pcnf {
    prefix: Prefix,
    clauses: Vec<Constraint>,
}

impl Pcnf {
    /// Every clause literal must reference a variable of `prefix`.
    pub fn new(prefix: Prefix, clauses: Vec<Constraint>) -> Result<Pcnf, FormulaError> {
        for c in &clauses {
            for l in c.lits() {
                if !prefix.contains(l.var()) {
                    return Err(FormulaError::VarOutOfRange {
                        var: l.to_dimacs() as i64,
                        num_vars: prefix.num_vars(),
                    });
                }
            }
        }
        Ok(Pcnf { prefix, clauses })
    }

    /// Builds a formula from DIMACS integers; tautological clauses are dropped.
    pub fn from_parts(
        num_vars: u32,
        blocks: Vec<(Quantifier, Vec<u32>)>,
        clauses: &[Vec<i32>],
    ) -> Result<Pcnf, FormulaError> {
        let prefix = Prefix::new(
            num_vars,
            blocks
                .into_iter()
                .map(|(q, vs)| (q, vs.into_iter().map(Var).collect()))
                .collect(),
        )?;
        let mut out = Vec::with_capacity(clauses.len());
        for c in clauses {
            for &l in c {
                if l == 0 || l.unsigned_abs() > num_vars {
                    return Err(FormulaError::VarOutOfRange {
                        var: l as i64,
                        num_vars,
                    });
                }
            }
            if let Some(c) = Constraint::from_dimacs(ConstraintKind::Clause, c) {
                out.push(c);
            }
        }
        Pcnf::new(prefix, out)
    }

    pub fn prefix(&self) -> &Prefix {
        &self.prefix
    }

    pub fn clauses(&self) -> &[Constraint] {
        &self.clauses
    }

    pub fn num_vars(&self) -> u32 {
        self.prefix.num_vars()
    }

    pub fn quant_info(&self, v: Var) -> Result<(Quantifier, u32), FormulaError> {
        self.prefix.quant_info(v)
    }

    /// QDIMACS text of the normalized formula. Free variables are left implicit.
    pub fn to_qdimacs(&self) -> String {
        let mut s = format!("p cnf {} {}\n", self.num_vars(), self.clauses.len());
        for b in self.prefix.blocks() {
            s.push(b.quantifier.symbol());
            for v in &b.vars {
                s.push_str(&format!(" {v}"));
            }
            s.push_str(" 0\n");
        }
        for c in &self.clauses {
            for l in c.lits() {
                s.push_str(&format!("{l} "));
            }
            s.push_str("0\n");
        }
        s
    }
}

/// Parses QDIMACS from a reader.
pub fn read_qdimacs<R: Read>(mut reader: R) -> Result<Pcnf, FormulaError> {
    let mut buf = String::new();
    reader
        .read_to_string(&mut buf)
        .map_err(|e| FormulaError::Io(e.to_string()))?;
    parse_qdimacs(&buf)
}

/// Parses QDIMACS text: `c` comments, a `p cnf V C` header, `e`/`a`
/// quantifier lines and 0-terminated clauses.
pub fn parse_qdimacs(text: &str) -> Result<Pcnf, FormulaError> {
    let mut num_vars: Option<u32> = None;
    let mut blocks: Vec<(Quantifier, Vec<Var>)> = Vec::new();
    let mut clauses: Vec<Vec<i32>> = Vec::new();
    let mut pending: Vec<i32> = Vec::new();
    let mut pending_line = 0;
    let mut saw_content = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        saw_content = true;
        if line.starts_with('c') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('p') {
            if num_vars.is_some() {
                return Err(FormulaError::MalformedHeader {
                    line: line_no,
                    msg: "duplicate header".into(),
                });
            }
            let toks: Vec<&str> = rest.split_whitespace().collect();
            let bad = |msg: &str| FormulaError::MalformedHeader {
                line: line_no,
                msg: msg.to_string(),
            };
            if toks.len() != 3 || toks[0] != "cnf" {
                return Err(bad("expected `p cnf <vars> <clauses>`"));
            }
            let v: u32 = toks[1].parse().map_err(|_| bad("invalid variable count"))?;
            let _: u64 = toks[2].parse().map_err(|_| bad("invalid clause count"))?;
            if v > (i32::MAX as u32) / 2 {
                return Err(bad("variable count too large"));
            }
            num_vars = Some(v);
            continue;
        }
        let Some(nv) = num_vars else {
            return Err(FormulaError::MalformedHeader {
                line: line_no,
                msg: "content before `p cnf` header".into(),
            });
        };
        let first = line.as_bytes()[0];
        if first == b'e' || first == b'a' {
            if !clauses.is_empty() || !pending.is_empty() {
                return Err(FormulaError::Malformed {
                    line: line_no,
                    msg: "quantifier line after clauses".into(),
                });
            }
            let q = if first == b'e' {
                Quantifier::Existential
            } else {
                Quantifier::Universal
            };
            let mut vars = Vec::new();
            let mut terminated = false;
            for tok in line[1..].split_whitespace() {
                if terminated {
                    return Err(FormulaError::Malformed {
                        line: line_no,
                        msg: "tokens after 0 terminator".into(),
                    });
                }
                let x: i64 = tok.parse().map_err(|_| FormulaError::Malformed {
                    line: line_no,
                    msg: format!("invalid token `{tok}`"),
                })?;
                if x == 0 {
                    terminated = true;
                } else if x < 0 || x > nv as i64 {
                    return Err(FormulaError::VarOutOfRange {
                        var: x,
                        num_vars: nv,
                    });
                } else {
                    vars.push(Var(x as u32));
                }
            }
            if !terminated {
                return Err(FormulaError::MissingTerminator { line: line_no });
            }
            blocks.push((q, vars));
            continue;
        }
        for tok in line.split_whitespace() {
            let x: i64 = tok.parse().map_err(|_| FormulaError::Malformed {
                line: line_no,
                msg: format!("invalid token `{tok}`"),
            })?;
            if x == 0 {
                clauses.push(std::mem::take(&mut pending));
            } else {
                if x.unsigned_abs() > nv as u64 {
                    return Err(FormulaError::VarOutOfRange {
                        var: x,
                        num_vars: nv,
                    });
                }
                if pending.is_empty() {
                    pending_line = line_no;
                }
                pending.push(x as i32);
            }
        }
    }
    if !saw_content {
        return Err(FormulaError::EmptyInput);
    }
    let Some(nv) = num_vars else {
        return Err(FormulaError::MalformedHeader {
            line: 0,
            msg: "missing `p cnf` header".into(),
        });
    };
    if !pending.is_empty() {
        return Err(FormulaError::MissingTerminator { line: pending_line });
    }
    let prefix = Prefix::new(nv, blocks)?;
    let clauses = clauses
        .iter()
        .filter_map(|c| Constraint::from_dimacs(ConstraintKind::Clause, c))
        .collect();
    Pcnf::new(prefix, clauses)
}

/// Universal reduction: drops every universal literal with no existential
/// literal of the clause at a strictly greater level.
pub fn universal_reduce(prefix: &Prefix, clause: &Constraint) -> Constraint {
    debug_assert_eq!(clause.kind(), ConstraintKind::Clause);
    reduce(prefix, clause, Quantifier::Existential)
}

/// Existential reduction: the dual of [`universal_reduce`] for cubes.
pub fn existential_reduce(prefix: &Prefix, cube: &Constraint) -> Constraint {
    debug_assert_eq!(cube.kind(), ConstraintKind::Cube);
    reduce(prefix, cube, Quantifier::Universal)
}

// `keep` is the quantifier whose literals are never removed; a literal of the
// other quantifier survives only if some `keep` literal sits at a higher level.
fn reduce(prefix: &Prefix, c: &Constraint, keep: Quantifier) -> Constraint {
    let max_keep = c
        .lits()
        .iter()
        .filter(|l| prefix.quantifier(l.var()) == keep)
        .map(|l| prefix.level(l.var()) as i64)
        .max()
        .unwrap_or(-1);
    let lits = c
        .lits()
        .iter()
        .copied()
        .filter(|l| {
            prefix.quantifier(l.var()) == keep || (prefix.level(l.var()) as i64) < max_keep
        })
        .collect();
    Constraint::from_sorted_unchecked(c.kind(), lits)
}
