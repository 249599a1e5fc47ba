//! Seeded random streams.
//!
//! Every stochastic routine in the crate draws from a [`Stream`] obtained
//! from a [`SeedKey`]. Keys form a tree: a replicate's key is derived from
//! its parent's key and its index, so the numbers a replicate sees depend
//! only on the root seed and its position in the tree, never on the order
//! in which worker threads happen to run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream used throughout the crate.
pub type Stream = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Node in the substream tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedKey(u64);

impl SeedKey {
    pub fn new(seed: u64) -> Self {
        SeedKey(splitmix64(seed))
    }

    /// Key of the `index`-th child of this node.
    pub fn child(self, index: u64) -> Self {
        SeedKey(splitmix64(self.0 ^ splitmix64(index.wrapping_add(GOLDEN_GAMMA))))
    }

    /// Key reached by following `path` from this node.
    pub fn descend(self, path: &[u64]) -> Self {
        path.iter().fold(self, |k, &i| k.child(i))
    }

    /// Fresh stream positioned at the start of this node's sequence.
    pub fn stream(self) -> Stream {
        let mut seed = [0u8; 32];
        let mut state = self.0;
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
