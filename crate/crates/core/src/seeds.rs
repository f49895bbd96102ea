//! Deterministic seed derivation.
//!
//! Every randomized component in the crate draws its randomness from a
//! single base seed through splitmix64 mixing with a fixed role tag. Trial
//! `t` of an experiment uses `base_seed + t`, and each substructure of a
//! trial (sketch hash family, oracle noise, stream sampling) derives its own
//! sub-seed from that with a distinct role. This keeps components
//! statistically decoupled while making every run reproducible from one
//! number, and it guarantees that changing, say, the oracle noise seed never
//! perturbs the hash family.

/// Role tag for the hash family backing a sketch.
pub const ROLE_SKETCH: u64 = 0x5348_4153_4B45_5443;
/// Role tag for heavy-hitter oracle randomness (noise flips, lookup sample).
pub const ROLE_ORACLE: u64 = 0x4F52_4143_4C45_5F5F;
/// Role tag for stream sampling.
pub const ROLE_STREAM: u64 = 0x5354_5245_414D_5F5F;
/// Role tag for re-seeding families inside the independence audit.
pub const ROLE_AUDIT: u64 = 0x4155_4449_545F_5F5F;

pub(crate) const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One step of the splitmix64 generator. Advances `state` and returns the
/// next output word.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from `seed` for the given role or index tag.
///
/// Two splitmix64 rounds give full avalanche, so related tags (for example
/// consecutive trial indices) produce unrelated sub-seeds.
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut state = seed ^ tag.wrapping_mul(GOLDEN_GAMMA);
    splitmix64(&mut state);
    splitmix64(&mut state)
}

/// Seed of trial `trial` in an experiment with the given base seed.
pub fn trial_seed(base_seed: u64, trial: u64) -> u64 {
    base_seed.wrapping_add(trial)
}
