//! Seed derivation.

/// SplitMix64 finalizer.
#[inline]
pub const fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes two words into a well-spread 64-bit seed. Used for per-step seeds
/// `s_t = mix(master, t)` so that `s_t + l` layer offsets of neighbouring
/// steps do not overlap.
#[inline]
pub const fn mix(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b.rotate_left(32) ^ 0xD6E8_FEB8_6659_FD93)
}

// Domain tags keep independent uses of one master seed apart.
pub(crate) const TAG_STEP: u64 = 0x5354_4550;
pub(crate) const TAG_SAMPLER: u64 = 0x5341_4D50;
pub(crate) const TAG_BATCH: u64 = 0x4241_5443;
pub(crate) const TAG_DATA: u64 = 0x4441_5441;
pub(crate) const TAG_INIT: u64 = 0x494E_4954;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_separates_neighbours() {
        let a = mix(42, 0);
        let b = mix(42, 1);
        assert_ne!(a, b);
        assert!(a.abs_diff(b) > 1 << 20);
        assert_eq!(mix(42, 7), mix(42, 7));
    }
}
