//! Counter-based random streams.
//!
//! Every stream is a ChaCha20 keystream. The 256-bit key is
//! `SHA-256(master_seed_le || stream_index_le)`, the 64-bit ChaCha stream id
//! selects a [`Purpose`], and the 68-bit word position is the counter. Paths
//! therefore never depend on each other, and a keyed draw (for example the
//! bridge sample attached to one time point) can be produced in O(1)
//! without replaying the sequence before it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identity of one noise realisation: `(master_seed, stream_index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        StreamKey { master_seed, stream_index }
    }

    fn key_bytes(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(self.stream_index.to_le_bytes());
        hasher.finalize().into()
    }

    /// Sequential generator for one purpose.
    pub fn stream(&self, purpose: Purpose) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::from_seed(self.key_bytes());
        rng.set_stream(purpose as u64);
        rng
    }

    /// Random-access generator for keyed draws of one purpose.
    pub fn keyed(&self, purpose: Purpose) -> KeyedNormals {
        KeyedNormals { rng: self.stream(purpose) }
    }
}

/// ChaCha stream ids. Changing these values changes every sampled path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Sampling = 0,
    BrownianBridge = 1,
    SmallJumpBridge = 2,
    EventBridgeBrownian = 3,
    EventBridgeSmallJump = 4,
    Stable = 5,
    BrownianBase = 6,
    SmallJumpBase = 7,
    Driver0Jumps = 8,
    Driver1Jumps = 9,
}

/// Standard normal draws addressed by a 64-bit counter.
#[derive(Clone)]
pub struct KeyedNormals {
    rng: ChaCha20Rng,
}

impl KeyedNormals {
    /// The standard normal attached to `counter`. Each counter owns one
    /// 64-byte ChaCha block, so distinct counters never share words.
    pub fn normal(&mut self, counter: u64) -> f64 {
        self.rng.set_word_pos((counter as u128) << 4);
        let u1 = open_unit(self.rng.next_u64());
        let u2 = open_unit(self.rng.next_u64());
        box_muller(u1, u2)
    }
}

/// Uniform on the open interval `(0, 1)` from 52 random bits.
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

fn box_muller(u1: f64, u2: f64) -> f64 {
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A standard normal drawn from a sequential stream with the same transform
/// as keyed draws.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = open_unit(rng.next_u64());
    let u2 = open_unit(rng.next_u64());
    box_muller(u1, u2)
}

/// Uniform on `(0, 1)` from a sequential stream.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    open_unit(rng.next_u64())
}

/// Exponential with unit mean.
pub fn standard_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -uniform(rng).ln()
}
