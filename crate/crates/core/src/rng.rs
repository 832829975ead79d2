//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 keyed by the run seed
//! (expanded with `SeedableRng::seed_from_u64`). Independent consumers use
//! distinct 64-bit ChaCha stream ids: the top 16 bits name the purpose, the
//! low 48 bits an optional row index. Draws for row `i` therefore never depend
//! on how many rows were generated before it, on which thread, or in which
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag occupying the high bits of the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Purpose {
    IntervalWidth = 1,
    IntervalLocation = 2,
    Init = 3,
    Shuffle = 4,
    AdversaryInit = 5,
    Split = 6,
    PairSampling = 7,
    PowerIteration = 8,
}

const ROW_BITS: u32 = 48;

pub fn stream(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    row_stream(seed, purpose, 0)
}

pub fn row_stream(seed: u64, purpose: Purpose, row: u64) -> ChaCha8Rng {
    debug_assert!(row < (1 << ROW_BITS));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << ROW_BITS) | row);
    rng
}
