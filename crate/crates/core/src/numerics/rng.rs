use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by the ChaCha counter-mode generator, whose stream parameter
/// selects one of 2^64 non-overlapping keystreams for the same key. Child
/// streams for chains, replicates or states are obtained with
/// [`RngStream::substream`], which depends only on the identifiers and never
/// on how many values the parent has produced.
#[derive(Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u32,
    inner: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u32) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream_id as u64);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u32 {
        self.stream_id
    }

    /// Deterministic child stream keyed by `key`.
    pub fn substream(&self, key: u64) -> Self {
        let child_seed = splitmix64(self.seed ^ splitmix64(key.wrapping_add(self.stream_id as u64)));
        Self::new(child_seed, self.stream_id)
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            let u = (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Derive a 64-bit seed from a parent seed and an index (replicates, chains).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}
