use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// When blocked clause elimination runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QbceMode {
    Off,
    Preprocess,
    /// Recomputed from scratch at every restart over original and learned clauses.
    InprocessAtRestart,
}

impl QbceMode {
    pub const ALL: [QbceMode; 3] = [
        QbceMode::Off,
        QbceMode::Preprocess,
        QbceMode::InprocessAtRestart,
    ];
}

/// Initial content of the assignment cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseInit {
    AllFalse,
    Random(u64),
}

/// Diversification knobs of one solver instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub seed: u64,
    pub phase_init: PhaseInit,
    /// Additive variable activity bump.
    pub activity_bump: f64,
    /// The bump grows by this factor per learned constraint (inverse decay).
    pub activity_decay_inv: f64,
    /// Fraction of a full learned list removed by a reduction.
    pub db_reduce_fraction: f64,
    pub db_capacity_growth: f64,
    pub clause_capacity: usize,
    pub cube_capacity: usize,
    pub restart_inner: u64,
    pub restart_outer: u64,
    pub restart_growth: f64,
    pub qbce: QbceMode,
    pub pure_literals: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rank {rank} out of range for portfolio of size {size}")]
pub struct RankError {
    pub rank: usize,
    pub size: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::reference()
    }
}

impl SolverConfig {
    /// Fixed baseline settings used by rank 0.
    pub fn reference() -> SolverConfig {
        SolverConfig {
            seed: 0,
            phase_init: PhaseInit::AllFalse,
            activity_bump: 1.0,
            activity_decay_inv: 1.05,
            db_reduce_fraction: 0.5,
            db_capacity_growth: 1.1,
            clause_capacity: 1000,
            cube_capacity: 1000,
            restart_inner: 100,
            restart_outer: 100,
            restart_growth: 1.1,
            qbce: QbceMode::Preprocess,
            pure_literals: true,
        }
    }

    /// Settings for instance `rank` of a portfolio of `size`, drawn from a
    /// generator seeded by `(global_seed, rank)`. Rank 0 gets
    /// [`SolverConfig::reference`] regardless of the seed.
    pub fn diversify(rank: usize, size: usize, global_seed: u64) -> Result<SolverConfig, RankError> {
        if rank >= size {
            return Err(RankError { rank, size });
        }
        if rank == 0 {
            return Ok(SolverConfig::reference());
        }
        let seed = mix(global_seed, rank as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let restart_inner = rng.gen_range(20..=300);
        Ok(SolverConfig {
            seed,
            phase_init: PhaseInit::Random(rng.gen()),
            activity_bump: 1.0,
            activity_decay_inv: rng.gen_range(1.01..=1.2),
            db_reduce_fraction: rng.gen_range(0.25..=0.75),
            db_capacity_growth: rng.gen_range(1.05..=1.5),
            clause_capacity: rng.gen_range(300..=3000),
            cube_capacity: rng.gen_range(300..=3000),
            restart_inner,
            restart_outer: restart_inner * rng.gen_range(1..=4),
            restart_growth: rng.gen_range(1.05..=1.5),
            qbce: QbceMode::ALL[rng.gen_range(0..QbceMode::ALL.len())],
            pure_literals: rng.gen_bool(0.5),
        })
    }
}

// splitmix64 finalizer over the pair
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
