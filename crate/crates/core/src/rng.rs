//! Keyed, counter-based random streams.
//!
//! A stream is identified by a [`StreamKey`] `(seed, level, replication)` plus
//! a [`Namespace`]. The ChaCha key is derived from `(seed, namespace)` and the
//! ChaCha stream id from `(level, replication)`, so any cell of an experiment
//! can be regenerated on its own and evaluation order never matters.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bits of the ChaCha stream id given to the replication index.
const REPLICATION_BITS: u32 = 40;
const MAX_REPLICATION: u64 = (1 << REPLICATION_BITS) - 1;
const MAX_LEVEL: u32 = (1 << (64 - REPLICATION_BITS)) - 1;

/// Disjoint families of streams. Simulation, bootstrap and design draws never
/// share a ChaCha key, so adding bootstrap work cannot perturb simulation
/// outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Namespace {
    Simulation,
    Bootstrap,
    DesignShift,
    PredictionShift,
    OuterSample,
    Pilot,
}

impl Namespace {
    fn tag(self) -> u64 {
        match self {
            Namespace::Simulation => 0x5349_4d55_4c41_5445,
            Namespace::Bootstrap => 0x424f_4f54_5354_5250,
            Namespace::DesignShift => 0x4445_5349_474e_5348,
            Namespace::PredictionShift => 0x5052_4544_4943_5448,
            Namespace::OuterSample => 0x4f55_5445_5253_4d50,
            Namespace::Pilot => 0x5049_4c4f_5452_554e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub level: u32,
    pub replication: u64,
}

impl StreamKey {
    pub fn new(seed: u64, level: usize, replication: usize) -> Self {
        StreamKey {
            seed,
            level: level as u32,
            replication: replication as u64,
        }
    }

    /// Opens the stream in the simulation namespace.
    pub fn rng(&self) -> ChaCha8Rng {
        self.rng_in(Namespace::Simulation)
    }

    pub fn rng_in(&self, namespace: Namespace) -> ChaCha8Rng {
        assert!(self.level <= MAX_LEVEL, "level index out of range");
        assert!(
            self.replication <= MAX_REPLICATION,
            "replication index out of range"
        );
        let mut rng = ChaCha8Rng::from_seed(chacha_key(self.seed, namespace));
        rng.set_stream((u64::from(self.level) << REPLICATION_BITS) | self.replication);
        rng
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn chacha_key(seed: u64, namespace: Namespace) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = mix64(seed ^ namespace.tag());
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Seed of macro-replication `index` under `master`:
/// `mix64(master ^ mix64(index))`. External tools can replay one
/// macro-replication with this formula.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index))
}

/// Uniform in the open interval (0, 1): the top 52 bits, offset by half a
/// step so neither endpoint is reachable.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

pub fn fill_uniforms(rng: &mut impl RngCore, out: &mut [f64]) {
    for u in out.iter_mut() {
        *u = open_unit(rng.next_u64());
    }
}

/// The random element of replication `key.replication` at level `key.level`:
/// `n_uniforms` independent uniforms in (0, 1).
pub fn draw_random_element(key: StreamKey, n_uniforms: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_uniforms];
    fill_uniforms(&mut key.rng(), &mut out);
    out
}

/// A uniform shift vector in [0, 1)^dim derived from `seed`.
pub fn shift_vector(seed: u64, namespace: Namespace, dim: usize) -> Vec<f64> {
    let mut rng = StreamKey::new(seed, 0, 0).rng_in(namespace);
    (0..dim).map(|_| rng.gen::<f64>()).collect()
}
