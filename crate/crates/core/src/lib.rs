//! Collaborative-filtering experimentation engine.
//!
//! Rating data handling ([`data`]), latent-factor models ([`factor`]),
//! Bayesian factorization machines ([`fm`]), neighborhood models
//! ([`similarity`]), stochastic similarity reinforcement ([`scsr`]),
//! linear blending ([`blend`]) and the experiment driver behind the `cfkit`
//! binary ([`experiment`], [`presets`]).

pub mod blend;
pub mod data;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod fm;
pub mod presets;
pub mod scsr;
pub mod similarity;
pub mod synthetic;

pub use error::{CfError, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide deterministic RNG.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub(crate) fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
