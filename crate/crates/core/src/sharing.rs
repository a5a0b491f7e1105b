//! Encoding, deduplication and exchange of learned clauses and cubes.
//!
//! Both kinds travel through one integer channel. Each message is a marker
//! literal, the sorted payload literals and a terminating 0. The marker is
//! `+(num_vars + 1)` for a clause and `-(num_vars + 1)` for a cube; it lies
//! outside the variable range so it can never be confused with a payload
//! literal.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::formula::{Constraint, ConstraintKind, Lit};

pub const DEFAULT_BUFFER_LITS: usize = 1500;
pub const DEFAULT_PERIOD_MS: u64 = 200;
pub const DEFAULT_FILTER_CLEAR: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SharingError {
    #[error("literal {lit} out of range for {num_vars} variables")]
    LitOutOfRange { lit: i32, num_vars: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeErrorKind {
    MissingMarker,
    LitOutOfRange,
    MissingTerminator,
    /// Repeated or complementary variable, or unsorted payload.
    NotCanonical,
}

/// A malformed suffix. Messages before `offset` were decoded.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed constraint stream at offset {offset}: {kind:?}")]
pub struct DecodeError {
    pub kind: DecodeErrorKind,
    pub offset: usize,
}

#[inline]
pub fn marker(kind: ConstraintKind, num_vars: u32) -> i32 {
    let m = num_vars as i32 + 1;
    match kind {
        ConstraintKind::Clause => m,
        ConstraintKind::Cube => -m,
    }
}

/// Appends the message for `c` to `out`.
pub fn encode_into(c: &Constraint, num_vars: u32, out: &mut Vec<i32>) -> Result<(), SharingError> {
    if let Some(l) = c.lits().iter().find(|l| l.var().0 > num_vars) {
        return Err(SharingError::LitOutOfRange {
            lit: l.to_dimacs(),
            num_vars,
        });
    }
    out.reserve(c.len() + 2);
    out.push(marker(c.kind(), num_vars));
    out.extend(c.lits().iter().map(|l| l.to_dimacs()));
    out.push(0);
    Ok(())
}

pub fn encode(c: &Constraint, num_vars: u32) -> Result<Vec<i32>, SharingError> {
    let mut out = Vec::with_capacity(c.len() + 2);
    encode_into(c, num_vars, &mut out)?;
    Ok(out)
}

/// Decodes a concatenation of messages.
pub fn decode(ints: &[i32], num_vars: u32) -> Result<Vec<Constraint>, DecodeError> {
    match decode_lossy(ints, num_vars) {
        (out, None) => Ok(out),
        (_, Some(e)) => Err(e),
    }
}

/// Decodes as many well-formed messages as possible; the malformed suffix, if
/// any, is dropped and described by the returned error.
pub fn decode_lossy(ints: &[i32], num_vars: u32) -> (Vec<Constraint>, Option<DecodeError>) {
    let mut out = Vec::new();
    let mut pos = 0;
    let clause_marker = marker(ConstraintKind::Clause, num_vars);
    while pos < ints.len() {
        let kind = match ints[pos] {
            m if m == clause_marker => ConstraintKind::Clause,
            m if m == -clause_marker => ConstraintKind::Cube,
            _ => {
                return (
                    out,
                    Some(DecodeError {
                        kind: DecodeErrorKind::MissingMarker,
                        offset: pos,
                    }),
                )
            }
        };
        let start = pos;
        pos += 1;
        let mut lits = Vec::new();
        loop {
            let Some(&x) = ints.get(pos) else {
                let kind = DecodeErrorKind::MissingTerminator;
                return (out, Some(DecodeError { kind, offset: start }));
            };
            pos += 1;
            if x == 0 {
                break;
            }
            if x.unsigned_abs() > num_vars {
                let kind = DecodeErrorKind::LitOutOfRange;
                return (out, Some(DecodeError { kind, offset: start }));
            }
            lits.push(Lit::from_dimacs(x));
        }
        let sorted = lits.windows(2).all(|w| w[0].var() < w[1].var());
        match Constraint::new(kind, lits) {
            Some(c) if sorted => out.push(c),
            _ => {
                let kind = DecodeErrorKind::NotCanonical;
                return (out, Some(DecodeError { kind, offset: start }));
            }
        }
    }
    (out, None)
}

pub fn to_le_bytes(ints: &[i32]) -> Vec<u8> {
    ints.iter().flat_map(|x| x.to_le_bytes()).collect()
}

/// Returns `None` if the length is not a multiple of 4.
pub fn from_le_bytes(bytes: &[u8]) -> Option<Vec<i32>> {
    if !bytes.len().is_multiple_of(4) {
        return None;
    }
    Some(
        bytes
            .chunks_exact(4)
            .map(|b| i32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect(),
    )
}

/// Debug text form: one `k <ints...>` line per message.
pub fn to_debug_text(ints: &[i32]) -> String {
    let mut s = String::new();
    let mut line_open = false;
    for &x in ints {
        if !line_open {
            s.push('k');
            line_open = true;
        }
        let _ = write!(s, " {x}");
        if x == 0 {
            s.push('\n');
            line_open = false;
        }
    }
    if line_open {
        s.push('\n');
    }
    s
}

/// 64-bit FNV-1a over the kind byte and the literal sequence.
pub fn constraint_hash(kind: ConstraintKind, lits: &[Lit]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    };
    feed(match kind {
        ConstraintKind::Clause => 0,
        ConstraintKind::Cube => 1,
    });
    for l in lits {
        for b in l.to_dimacs().to_le_bytes() {
            feed(b);
        }
    }
    h
}

/// Set of constraint hashes, cleared once it grows past a threshold.
#[derive(Debug, Clone)]
pub struct DedupFilter {
    seen: HashSet<u64>,
    clear_threshold: usize,
    insertions: u64,
    clears: u64,
}

impl Default for DedupFilter {
    fn default() -> Self {
        DedupFilter::new(DEFAULT_FILTER_CLEAR)
    }
}

impl DedupFilter {
    pub fn new(clear_threshold: usize) -> DedupFilter {
        DedupFilter {
            seen: HashSet::new(),
            clear_threshold: clear_threshold.max(1),
            insertions: 0,
            clears: 0,
        }
    }

    /// Returns `true` if the constraint had not been seen.
    pub fn insert(&mut self, kind: ConstraintKind, lits: &[Lit]) -> bool {
        self.insert_hash(constraint_hash(kind, lits))
    }

    pub fn insert_hash(&mut self, h: u64) -> bool {
        if self.seen.contains(&h) {
            return false;
        }
        if self.seen.len() >= self.clear_threshold {
            self.seen.clear();
            self.clears += 1;
        }
        self.seen.insert(h);
        self.insertions += 1;
        true
    }

    pub fn contains(&self, kind: ConstraintKind, lits: &[Lit]) -> bool {
        self.seen.contains(&constraint_hash(kind, lits))
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn insertions(&self) -> u64 {
        self.insertions
    }

    pub fn clears(&self) -> u64 {
        self.clears
    }
}

/// Per-solver outgoing buffer. Messages are kept whole; what does not fit
/// into a round's literal capacity stays queued for the next round.
#[derive(Debug, Clone)]
pub struct ExportBuffer {
    capacity: usize,
    pending: VecDeque<Vec<i32>>,
    pending_ints: usize,
    dropped: u64,
}

impl ExportBuffer {
    pub fn new(capacity: usize) -> ExportBuffer {
        ExportBuffer {
            capacity,
            pending: VecDeque::new(),
            pending_ints: 0,
            dropped: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Queues one encoded message. Messages larger than the round capacity can
    /// never be sent and are dropped, as are messages arriving while the
    /// backlog exceeds 16 rounds.
    pub fn push(&mut self, message: Vec<i32>) -> bool {
        let payload = payload_len(&message);
        if payload > self.capacity || self.pending_ints > 16 * self.capacity.max(1) {
            self.dropped += 1;
            return false;
        }
        self.pending_ints += message.len();
        self.pending.push_back(message);
        true
    }

    /// Takes the messages for one round: whole messages, shortest first and
    /// FIFO among equal lengths, while their total payload fits the capacity.
    pub fn take_round(&mut self) -> Vec<i32> {
        self.pending.make_contiguous().sort_by_key(|m| m.len());
        let mut out = Vec::new();
        let mut used = 0;
        while let Some(front) = self.pending.front() {
            let p = payload_len(front);
            if used + p > self.capacity {
                break;
            }
            used += p;
            let m = self.pending.pop_front().unwrap();
            self.pending_ints -= m.len();
            out.extend(m);
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

// payload literals of one message, excluding marker and terminator
fn payload_len(message: &[i32]) -> usize {
    message.len().saturating_sub(2)
}

/// Per-round counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundStats {
    pub exported: usize,
    pub export_duplicates: usize,
    pub imported: usize,
    pub import_duplicates: usize,
    pub malformed: usize,
}

/// All-to-all exchange among K solvers with per-solver duplicate filters.
#[derive(Debug, Clone)]
pub struct Exchange {
    num_vars: u32,
    export_filters: Vec<DedupFilter>,
    import_filters: Vec<DedupFilter>,
}

impl Exchange {
    pub fn new(k: usize, num_vars: u32) -> Exchange {
        Exchange::with_filter_threshold(k, num_vars, DEFAULT_FILTER_CLEAR)
    }

    pub fn with_filter_threshold(k: usize, num_vars: u32, threshold: usize) -> Exchange {
        Exchange {
            num_vars,
            export_filters: vec![DedupFilter::new(threshold); k],
            import_filters: vec![DedupFilter::new(threshold); k],
        }
    }

    pub fn solvers(&self) -> usize {
        self.export_filters.len()
    }

    /// Runs one round. `exports[i]` is solver i's outgoing stream; the result's
    /// entry i is what solver i must import. A solver never receives its own
    /// messages, and no solver receives or sends the same constraint twice
    /// until its filter is cleared.
    pub fn exchange_round(&mut self, exports: &[Vec<i32>]) -> (Vec<Vec<i32>>, RoundStats) {
        let k = self.solvers();
        assert_eq!(exports.len(), k, "one export buffer per solver");
        let mut stats = RoundStats::default();
        // accepted messages per source: (hash, constraint)
        let mut accepted: Vec<Vec<(u64, Constraint)>> = Vec::with_capacity(k);
        for (i, buf) in exports.iter().enumerate() {
            let (msgs, err) = decode_lossy(buf, self.num_vars);
            if err.is_some() {
                stats.malformed += 1;
            }
            let mut mine = Vec::with_capacity(msgs.len());
            for c in msgs {
                let h = constraint_hash(c.kind(), c.lits());
                if self.export_filters[i].insert_hash(h) {
                    // a solver never needs back what it already has
                    self.import_filters[i].insert_hash(h);
                    mine.push((h, c));
                    stats.exported += 1;
                } else {
                    stats.export_duplicates += 1;
                }
            }
            accepted.push(mine);
        }
        let mut imports = vec![Vec::new(); k];
        for (j, out) in imports.iter_mut().enumerate() {
            for (i, msgs) in accepted.iter().enumerate() {
                if i == j {
                    continue;
                }
                for (h, c) in msgs {
                    if self.import_filters[j].insert_hash(*h) {
                        self.export_filters[j].insert_hash(*h);
                        encode_into(c, self.num_vars, out).expect("decoded within range");
                        stats.imported += 1;
                    } else {
                        stats.import_duplicates += 1;
                    }
                }
            }
        }
        (imports, stats)
    }
}
