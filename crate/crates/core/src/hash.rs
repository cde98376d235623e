//! 64-bit mixing and checksum helpers shared across modules.

use std::hash::Hasher;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer. A bijection on `u64`.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Inverse of [`mix64`].
#[inline]
pub(crate) fn unmix64(mut z: u64) -> u64 {
    z ^= (z >> 31) ^ (z >> 62);
    z = z.wrapping_mul(0x3196_42b2_d24d_8ec3);
    z ^= (z >> 27) ^ (z >> 54);
    z = z.wrapping_mul(0x96de_1b17_3f11_9089);
    z ^ (z >> 30) ^ (z >> 60)
}

#[inline]
pub(crate) fn scramble_index(index: u64) -> u64 {
    mix64(index.wrapping_add(GOLDEN_GAMMA))
}

#[inline]
pub(crate) fn unscramble_index(hashed: u64) -> u64 {
    unmix64(hashed).wrapping_sub(GOLDEN_GAMMA)
}

/// Derives an independent sub-seed from a root seed and a path of labels.
pub(crate) fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(root ^ GOLDEN_GAMMA), |acc, &p| {
        mix64(acc.wrapping_add(GOLDEN_GAMMA) ^ mix64(p.wrapping_add(0x632b_e59b_d9b4_e019)))
    })
}

/// FNV-1a 64 of a byte slice.
pub(crate) fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Incremental FNV-1a 64 for operation traces and state digests.
#[derive(Default)]
pub(crate) struct TraceHasher(fnv::FnvHasher);

impl TraceHasher {
    pub(crate) fn word(&mut self, v: u64) {
        self.0.write(&v.to_le_bytes());
    }

    pub(crate) fn bytes(&mut self, b: &[u8]) {
        self.word(b.len() as u64);
        self.0.write(b);
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0.finish()
    }
}
