//! Reproducible random-number streams.
//!
//! Every path and every coupled run draws from its own counter-based stream
//! keyed by `(master seed, index)`, so ensembles are bit-identical no matter
//! how the work is scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Separates coupled-run streams from plain path streams under one master
/// seed.
const COUPLING_SEED_SALT: u64 = 0x7f4a_7c15_9e37_79b9;

/// The independent randomness channels inside one coupled run.
#[derive(Debug, Clone, Copy)]
pub enum CouplingChannel {
    /// Candidate epochs of the shared dominating clock.
    Clock = 0,
    /// Accept/select uniforms of the first process.
    AcceptPrimary = 1,
    /// Accept/select uniforms of the second process.
    AcceptSecondary = 2,
    /// Maximal-coupling draws at attempt instants.
    Draws = 3,
}

/// Stream for simulation path `path_index` under `master_seed`.
pub fn path_stream(master_seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// Stream for one randomness channel of coupled run `run_index`.
pub fn coupling_stream(master_seed: u64, run_index: u64, channel: CouplingChannel) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ COUPLING_SEED_SALT);
    rng.set_stream(run_index * 4 + channel as u64);
    rng
}

/// Uniform draw in `[0, 1)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen::<f64>()
}

/// Exponential draw with the given rate by inversion (one uniform per draw).
pub fn exp_sample<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    let u = uniform(rng);
    -(-u).ln_1p() / rate // -ln(1 - u) / rate
}
