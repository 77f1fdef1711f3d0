//! Seed derivation for independent, scheduling-free random streams.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for search number `search_index` of UAV `uav_id` under `master_seed`.
/// Depends only on the three inputs, never on evaluation order.
pub fn stream_seed(master_seed: u64, uav_id: u32, search_index: u32) -> u64 {
    mix64(mix64(mix64(master_seed) ^ u64::from(uav_id)) ^ (u64::from(search_index) << 1 | 1))
}
