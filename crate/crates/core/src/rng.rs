//! Counter-based random streams.
//!
//! Every stochastic routine derives one ChaCha8 stream per replica from
//! `(seed, stream id)`. The keystream position is a pure function of those
//! two numbers, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Default seed used by the CLI when none is given.
pub const DEFAULT_SEED: u64 = 20_240_601;

pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream id for replica `replica` of a named sub-task.
///
/// Sub-tasks occupy disjoint ranges of the 64-bit stream space.
pub fn substream(task: u32, replica: u64) -> u64 {
    ((task as u64) << 40) | (replica & ((1 << 40) - 1))
}
