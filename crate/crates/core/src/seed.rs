/// Deterministically derives a sub-seed from a base seed and a salt.
///
/// SplitMix64 finalizer over the combined words; used wherever one
/// configured seed has to fan out into independent random streams
/// (per-patient generation, per-iteration shuffles, per-cell runs).
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
