use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide generator: ChaCha with 8 rounds, seeded through
/// `SeedableRng::seed_from_u64` (PCG32 key expansion). Its output stream is
/// specified independently of platform and word size.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives child seeds from a master seed and a sequence of labels.
///
/// Each component is folded in with the SplitMix64 finalizer; strings are
/// first reduced with 64-bit FNV-1a. The result depends only on the values
/// mixed in and their order.
#[derive(Debug, Clone, Copy)]
pub struct SeedHasher {
    state: u64,
}

impl SeedHasher {
    pub fn new(master: u64) -> Self {
        Self {
            state: splitmix64(master ^ 0x6a09_e667_f3bc_c908),
        }
    }

    pub fn mix_u64(mut self, value: u64) -> Self {
        self.state = splitmix64(self.state ^ splitmix64(value));
        self
    }

    pub fn mix_str(self, value: &str) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in value.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.mix_u64(h)
    }

    pub fn finish(self) -> u64 {
        self.state
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
