#![allow(dead_code)]

use std::sync::Arc;

use qbf_portfolio::formula::Pcnf;
use qbf_portfolio::generate::{random_pcnf_with, GenParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The small differential corpus: instance `i` is drawn from seed `first + i`.
pub fn small_corpus(first: u64, n: u64) -> Vec<Arc<Pcnf>> {
    (first..first + n).map(small_instance).collect()
}

pub fn small_instance(seed: u64) -> Arc<Pcnf> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = GenParams::small(&mut rng);
    Arc::new(random_pcnf_with(&p, &mut rng))
}
