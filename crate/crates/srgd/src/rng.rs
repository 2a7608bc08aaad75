//! Deterministic random streams for stochastic rounding.
//!
//! Every stochastic decision in this crate draws from a [`RandomStream`], a
//! counter-based generator: output `i` is a bijective mix of `(key, i)`, so a
//! stream is fully described by its key and position.  Identical seeds produce
//! identical draws on every platform, and child streams can be split off by
//! index without touching the parent's state, which keeps parallel and
//! sequential execution bit-identical.
//!
//! The mixer is the SplitMix64 finalizer; `next_u64` walks the standard
//! SplitMix64 sequence for the stream's key.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const FORK_C: u64 = 0xD1B5_4A32_D192_ED03;
const DERIVE_C: u64 = 0x8CB9_2BA7_2F3D_8DD7;

#[inline(always)]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded, splittable stream of uniform random numbers.
#[derive(Clone, Debug)]
pub struct RandomStream {
    key: u64,
    counter: u64,
}

impl RandomStream {
    /// Creates the root stream for a master seed.
    pub fn new(seed: u64) -> Self {
        RandomStream { key: seed, counter: 0 }
    }

    /// Child stream for `(self, id)`.  Pure: does not advance `self`, so the
    /// same `id` always yields the same child.  Used to give independent
    /// work items (ensemble runs, matrix rows) their own streams regardless
    /// of execution order.
    pub fn fork(&self, id: u64) -> Self {
        let k = mix(self.key ^ FORK_C).wrapping_add(id.wrapping_mul(GOLDEN));
        RandomStream { key: mix(k), counter: 0 }
    }

    /// Next child stream in sequence.  Advances `self`, so consecutive calls
    /// yield distinct children.
    pub fn derive(&mut self) -> Self {
        self.counter = self.counter.wrapping_add(1);
        let k = mix(self.key ^ DERIVE_C).wrapping_add(self.counter.wrapping_mul(GOLDEN));
        RandomStream { key: mix(k), counter: 0 }
    }

    /// Next raw 64-bit output.
    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    #[inline(always)]
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }
}

impl rand::RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        RandomStream::next_u64(self)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = RandomStream::next_u64(self).to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
