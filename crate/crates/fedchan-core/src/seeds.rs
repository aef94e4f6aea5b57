//! Deterministic seed derivation.
//!
//! Every stochastic stage of the pipeline owns a seed derived from the
//! experiment seed plus a purpose tag, so stages can run in any order (or
//! be sharded) without perturbing each other's streams.

/// SplitMix64 finalizer; good avalanche, cheap, stable.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mix a salt into a base seed.
pub fn mix(base: u64, salt: u64) -> u64 {
    splitmix(base ^ splitmix(salt))
}

/// Seed for the RNG stream that owns record `index` of a dataset.
///
/// Per-record streams make generation a pure function of (seed, index), so
/// shards produce output identical to a serial pass.
pub fn record_seed(dataset_seed: u64, index: usize) -> u64 {
    mix(dataset_seed, 0x5265_636f_7264 ^ index as u64)
}

/// Seed used by client `client_index` during federated round `round`.
///
/// Standalone training that wants to be trajectory-comparable to a
/// single-client federation derives its per-segment seeds the same way.
pub fn client_round_seed(base: u64, client_index: usize, round: usize) -> u64 {
    mix(mix(base, 0x436c_6965_6e74 ^ client_index as u64), round as u64)
}

/// Purpose salts for the experiment pipeline.
pub mod purpose {
    pub const CITY_PROFILE: u64 = 0x01;
    pub const SPLIT: u64 = 0x02;
    pub const LINK_TRAIN: u64 = 0x03;
    pub const MODEL_INIT: u64 = 0x04;
    pub const STANDALONE_TRAIN: u64 = 0x05;
    pub const FEDERATION: u64 = 0x06;
    pub const EVALUATION: u64 = 0x07;
}
