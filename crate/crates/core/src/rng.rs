//! Counter-based random numbers (Philox4x32-10).
//!
//! Every random quantity in the crate is a pure function of a 64-bit key and
//! a 128-bit counter, so values can be regenerated anywhere in any order.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(W0);
            key[1] = key[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, ctr[0]);
        let (hi1, lo1) = mulhilo(M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

#[inline]
fn split(x: u64) -> (u32, u32) {
    (x as u32, (x >> 32) as u32)
}

/// 64 random bits keyed by `seed` at counter `(a, b)`.
#[inline]
pub fn random_u64(seed: u64, a: u64, b: u64) -> u64 {
    let (k0, k1) = split(seed);
    let (a0, a1) = split(a);
    let (b0, b1) = split(b);
    let out = philox4x32([a0, a1, b0, b1], [k0, k1]);
    out[0] as u64 | (out[1] as u64) << 32
}

/// Maps 64 random bits to a uniform in the open interval `(0, 1)`.
#[inline]
pub fn bits_to_open_uniform(x: u64) -> f64 {
    // 52 bits keep `top + 0.5` exactly representable, so the result is < 1
    const SCALE: f64 = 1.0 / (1u64 << 52) as f64;
    let r = ((x >> 12) as f64 + 0.5) * SCALE;
    r.max(f64::from_bits(0x3BF0_0000_0000_0000)) // 2^-64
}

#[inline]
pub fn random_uniform(seed: u64, a: u64, b: u64) -> f64 {
    bits_to_open_uniform(random_u64(seed, a, b))
}

/// Counter values with the top bit set are reserved for seed derivation so
/// they never collide with exponential-process lookups.
const DERIVE_BIT: u64 = 1 << 63;

/// Child seed for stream `tag`, item `index`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    random_u64(seed, index, tag | DERIVE_BIT)
}

/// Stream tags used with [`derive_seed`].
pub mod tag {
    pub const TRIAL: u64 = 1;
    pub const CODEBOOK: u64 = 2;
    pub const CHANNEL: u64 = 3;
    pub const OUTPUT: u64 = 4;
    pub const VERIFY: u64 = 5;
    pub const BOUND_SAMPLE: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(philox4x32([0; 4], [0; 2]), [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]);
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32([0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344], [0xa4093822, 0x299f31d0]),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn uniform_stays_open() {
        assert!(bits_to_open_uniform(0) > 0.0);
        assert!(bits_to_open_uniform(u64::MAX) < 1.0);
        let mean: f64 = (0..100_000).map(|i| random_uniform(7, i, 0)).sum::<f64>() / 100_000.0;
        assert!((mean - 0.5).abs() < 0.005);
    }

    #[test]
    fn derived_seeds_differ_by_tag_and_index() {
        let a = derive_seed(1, tag::TRIAL, 0);
        assert_ne!(a, derive_seed(1, tag::TRIAL, 1));
        assert_ne!(a, derive_seed(1, tag::CODEBOOK, 0));
        assert_ne!(a, derive_seed(2, tag::TRIAL, 0));
        assert_eq!(a, derive_seed(1, tag::TRIAL, 0));
    }
}
