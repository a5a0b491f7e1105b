//! Random prenex CNF instances for testing and benchmarking.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::formula::{Pcnf, Quantifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub vars: u32,
    pub clauses: usize,
    /// Number of alternating quantifier blocks (at least 1).
    pub blocks: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Quantifier of the outermost block.
    pub first: Quantifier,
}

impl GenParams {
    /// Parameters of the small differential-testing corpus: up to 12
    /// variables, up to 24 clauses, 2 to 4 blocks.
    pub fn small(rng: &mut impl Rng) -> GenParams {
        let vars = rng.gen_range(4..=12);
        GenParams {
            vars,
            clauses: rng.gen_range(vars as usize / 2..=(2 * vars as usize).min(24)),
            blocks: rng.gen_range(2..=4usize),
            min_len: 2,
            max_len: rng.gen_range(3..=5),
            first: if rng.gen_bool(0.5) {
                Quantifier::Existential
            } else {
                Quantifier::Universal
            },
        }
    }
}

/// Draws an instance. Variables are shuffled into `blocks` non-empty blocks
/// of alternating quantifiers; clause literals are drawn without repeated
/// variables.
pub fn random_pcnf(params: &GenParams, seed: u64) -> Pcnf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_pcnf_with(params, &mut rng)
}

pub fn random_pcnf_with(params: &GenParams, rng: &mut impl Rng) -> Pcnf {
    let n = params.vars.max(1);
    let blocks = params.blocks.clamp(1, n as usize);
    let mut vars: Vec<u32> = (1..=n).collect();
    vars.shuffle(rng);
    // cut points give every block at least one variable
    let mut cuts: Vec<usize> = (1..n as usize).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(blocks - 1).collect();
    cuts.sort_unstable();
    cuts.push(n as usize);
    let mut prefix = Vec::with_capacity(blocks);
    let mut q = params.first;
    let mut start = 0;
    for end in cuts {
        let mut block = vars[start..end].to_vec();
        block.sort_unstable();
        prefix.push((q, block));
        q = match q {
            Quantifier::Existential => Quantifier::Universal,
            Quantifier::Universal => Quantifier::Existential,
        };
        start = end;
    }
    let max_len = params.max_len.clamp(1, n as usize);
    let min_len = params.min_len.clamp(1, max_len);
    let clauses: Vec<Vec<i32>> = (0..params.clauses)
        .map(|_| {
            let len = rng.gen_range(min_len..=max_len);
            let mut pick: Vec<u32> = (1..=n).collect();
            pick.shuffle(rng);
            pick.truncate(len);
            pick.into_iter()
                .map(|v| if rng.gen_bool(0.5) { v as i32 } else { -(v as i32) })
                .collect()
        })
        .collect();
    Pcnf::from_parts(n, prefix, &clauses).expect("generated formula is well formed")
}

/// Fixed-shape random model: every clause has `univ_per_clause` universal
/// and `exist_per_clause` existential literals, drawn uniformly from the
/// variables of that quantifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredParams {
    /// Block quantifiers and sizes, outermost first.
    pub blocks: Vec<(Quantifier, u32)>,
    pub clauses: usize,
    pub univ_per_clause: usize,
    pub exist_per_clause: usize,
}

pub fn random_layered(params: &LayeredParams, seed: u64) -> Pcnf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = 1u32;
    let mut prefix = Vec::new();
    let (mut univ, mut exist) = (Vec::new(), Vec::new());
    for &(q, size) in &params.blocks {
        let vars: Vec<u32> = (next..next + size).collect();
        next += size;
        match q {
            Quantifier::Universal => univ.extend(&vars),
            Quantifier::Existential => exist.extend(&vars),
        }
        prefix.push((q, vars));
    }
    let n = next - 1;
    let draw = |pool: &[u32], k: usize, rng: &mut ChaCha8Rng| -> Vec<i32> {
        pool.choose_multiple(rng, k.min(pool.len()))
            .map(|&v| if rng.gen_bool(0.5) { v as i32 } else { -(v as i32) })
            .collect()
    };
    let clauses: Vec<Vec<i32>> = (0..params.clauses)
        .map(|_| {
            let mut c = draw(&univ, params.univ_per_clause, &mut rng);
            c.extend(draw(&exist, params.exist_per_clause, &mut rng));
            c
        })
        .collect();
    Pcnf::from_parts(n, prefix, &clauses).expect("generated formula is well formed")
}
