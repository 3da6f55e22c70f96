//! Seed derivation and counter-style random streams.
//!
//! Every random quantity in the crate is drawn from a [`Stream`] whose seed is
//! a pure function of the master seed and a purpose tag. Inside a tree each
//! particle carries a 64-bit genealogical label (a hash of its parent's label
//! and its birth rank) and draws its offspring and its perturbation from
//! streams keyed by that label. Results therefore do not depend on how work is
//! split across threads, and an exact and a pruned run with the same seed share
//! every retained particle.

use rand_core::{impls, RngCore, SeedableRng};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const CHILD_STEP: u64 = 0xD1B5_4A32_D192_ED03;
const REPRODUCE_KEY: u64 = 0xA076_1D64_78BD_642F;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Murmur3 finaliser, used for labels so they never coincide with stream outputs.
#[inline]
fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    k ^= k >> 33;
    k = k.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    k ^ (k >> 33)
}

/// FNV-1a over the tag bytes.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xCBF2_9CE4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Stream seed for `(master, purpose tag, index)`:
/// `mix64(mix64(master ^ fnv1a(tag)) + (index + 1)·φ64)`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let base = mix64(master ^ tag_hash(tag));
    mix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Label of the root particle of a tree.
#[inline]
pub fn root_label(tree_seed: u64) -> u64 {
    fmix64(tree_seed ^ 0x5851_F42D_4C95_7F2D)
}

/// Label of the `rank`-th child of the particle labelled `parent`.
#[inline]
pub fn child_label(parent: u64, rank: u32) -> u64 {
    fmix64(parent.wrapping_add(u64::from(rank).wrapping_add(1).wrapping_mul(CHILD_STEP)))
}

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream { state: mix64(seed) }
    }

    /// Stream used by a particle to draw its offspring.
    #[inline]
    pub fn reproduction(label: u64) -> Self {
        Stream {
            state: mix64(label ^ REPRODUCE_KEY),
        }
    }

    /// Stream used to draw the perturbation of a final-generation particle.
    #[inline]
    pub fn perturbation(label: u64, snapshot_seed: u64) -> Self {
        Stream {
            state: mix64(label ^ mix64(snapshot_seed)),
        }
    }

    /// Uniform draw in `(0, 1]`.
    #[inline]
    pub fn open_unit(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for Stream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}

impl SeedableRng for Stream {
    type Seed = [u8; 8];

    fn from_seed(seed: Self::Seed) -> Self {
        Stream::new(u64::from_le_bytes(seed))
    }

    fn seed_from_u64(state: u64) -> Self {
        Stream::new(state)
    }
}
