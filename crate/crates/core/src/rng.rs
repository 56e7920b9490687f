//! Deterministic pseudo-random numbers.
//!
//! Every random choice in the pipeline (holdout selection in particular) is
//! driven by SplitMix64 so that a seed reproduces the same selection on any
//! platform and in any language that implements the same recipe.

/// SplitMix64 generator state. Passed by value; never shared mutably.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prng {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// Returns the next output together with the advanced generator.
    pub fn step(self) -> (u64, Prng) {
        let state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        (z ^ (z >> 31), Prng { state })
    }

    pub fn next_u64(&mut self) -> u64 {
        let (out, next) = self.step();
        *self = next;
        out
    }

    /// Fisher-Yates shuffle, walking from the last index down to 1 and
    /// picking `j = next_u64() % (i + 1)` at each step.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
