//! Seeded hash families mapping items to buckets and signs.
//!
//! Two constructions are provided. `TrulyRandom` realizes an idealized fully
//! random function: the value for item `x` is word `x` of a counter-mode
//! ChaCha8 stream keyed by (seed, row, role), so distinct items get
//! independent uniform values and the same item always gets the same value.
//! `KIndependent` draws `k` random coefficients over the Mersenne prime
//! field GF(2^61 - 1) and evaluates the resulting polynomial, giving exact
//! k-wise independence.
//!
//! Bucket choices and sign bits for the same row come from disjoint
//! sub-streams (distinct role tags), so signs carry no information about
//! buckets. Row sub-seeds depend only on (seed, row index), never on the
//! total row count, so extending a family by one row leaves the existing
//! rows untouched.

use std::sync::OnceLock;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::seeds::{mix, splitmix64, ROLE_AUDIT};

/// The Mersenne prime 2^61 - 1 underlying the polynomial family.
pub const MERSENNE_PRIME_61: u64 = (1 << 61) - 1;

/// Significance level used by `independence_audit`.
pub const AUDIT_SIGNIFICANCE: f64 = 0.01;

/// Largest joint-distribution table the audit will allocate.
const AUDIT_MAX_CELLS: u64 = 1 << 16;

const ROLE_BUCKET: u64 = 0x4255_434B_4554_5F5F;
const ROLE_SIGN: u64 = 0x5349_474E_5F5F_5F5F;

/// Which hash construction a family uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HashKind {
    /// Idealized fully random function (counter-mode ChaCha8).
    TrulyRandom,
    /// Polynomial over GF(2^61 - 1) with `k` random coefficients,
    /// i.e. exactly k-wise independent.
    KIndependent { k: u32 },
}

impl std::fmt::Display for HashKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HashKind::TrulyRandom => write!(f, "random"),
            HashKind::KIndependent { k } => write!(f, "kindep:{k}"),
        }
    }
}

impl std::str::FromStr for HashKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            return Ok(HashKind::TrulyRandom);
        }
        if let Some(rest) = s.strip_prefix("kindep:") {
            let k = rest.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad independence level in hash kind '{s}'"))
            })?;
            return Ok(HashKind::KIndependent { k });
        }
        Err(Error::InvalidArgument(format!(
            "unknown hash kind '{s}' (expected 'random' or 'kindep:<k>')"
        )))
    }
}

// Serialized as the same compact token the CLI accepts.
impl Serialize for HashKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for HashKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Complete description of a hash family; two equal configs always produce
/// identical hash values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashFamilyConfig {
    pub kind: HashKind,
    pub seed: u64,
    pub rows: u32,
    pub width: u32,
}

impl HashFamilyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::InvalidConfig("hash family needs at least one row".into()));
        }
        if self.width == 0 {
            return Err(Error::InvalidConfig("hash family needs width >= 1".into()));
        }
        if let HashKind::KIndependent { k } = self.kind {
            if k == 0 {
                return Err(Error::InvalidConfig(
                    "k-independent family needs at least one coefficient".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Word `index` of the ChaCha8 stream keyed by (seed, row, role).
///
/// Sequentially reading the stream from position 0 yields exactly the values
/// at indices 0, 1, 2, ..., which is what the memoized fill relies on.
fn stream_key(seed: u64, row: u64, role: u64) -> [u8; 32] {
    let mut state = mix(mix(seed, row), role);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

pub(crate) fn stream_value(seed: u64, row: u64, role: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::from_seed(stream_key(seed, row, role));
    // next_u64 consumes two 32-bit words.
    rng.set_word_pos((index as u128) << 1);
    rng.next_u64()
}

fn poly_coefficients(seed: u64, row: u64, role: u64, count: u32) -> Vec<u64> {
    // Reduction mod p of a uniform u64 has bias below 2^-58; negligible for
    // every statistical purpose of this crate.
    (0..count as u64)
        .map(|j| stream_value(seed, row, role, j) % MERSENNE_PRIME_61)
        .collect()
}

/// Horner evaluation of the coefficient vector at `x` over GF(2^61 - 1).
fn poly_eval(coeffs: &[u64], x: u64) -> u64 {
    let x = (x % MERSENNE_PRIME_61) as u128;
    let p = MERSENNE_PRIME_61 as u128;
    let mut acc: u128 = 0;
    for &c in coeffs.iter().rev() {
        acc = (acc * x + c as u128) % p;
    }
    acc as u64
}

fn bucket_from_config(config: &HashFamilyConfig, row: u32, item: u64) -> u32 {
    match config.kind {
        HashKind::TrulyRandom => {
            (stream_value(config.seed, row as u64, ROLE_BUCKET, item) % config.width as u64) as u32
        }
        HashKind::KIndependent { k } => {
            let coeffs = poly_coefficients(config.seed, row as u64, ROLE_BUCKET, k);
            (poly_eval(&coeffs, item) % config.width as u64) as u32
        }
    }
}

fn sign_from_config(config: &HashFamilyConfig, row: u32, item: u64) -> i8 {
    let bit = match config.kind {
        HashKind::TrulyRandom => stream_value(config.seed, row as u64, ROLE_SIGN, item) & 1,
        HashKind::KIndependent { k } => {
            let coeffs = poly_coefficients(config.seed, row as u64, ROLE_SIGN, k);
            // Parity of a uniform value in [0, p) with odd p; bias 1/p.
            poly_eval(&coeffs, item) & 1
        }
    };
    if bit == 0 {
        1
    } else {
        -1
    }
}

/// Bucket of `item` in row `row`, in `0..width`.
pub fn row_bucket(config: &HashFamilyConfig, row: u32, item: u64) -> Result<u32> {
    config.validate()?;
    if row >= config.rows {
        return Err(Error::InvalidArgument(format!(
            "row {row} out of range for a family with {} rows",
            config.rows
        )));
    }
    Ok(bucket_from_config(config, row, item))
}

/// Sign of `item` in row `row`, either -1 or +1.
pub fn row_sign(config: &HashFamilyConfig, row: u32, item: u64) -> Result<i8> {
    config.validate()?;
    if row >= config.rows {
        return Err(Error::InvalidArgument(format!(
            "row {row} out of range for a family with {} rows",
            config.rows
        )));
    }
    Ok(sign_from_config(config, row, item))
}

enum RowTable {
    /// Pre-filled bucket table for items 0..=universe; the sign table is
    /// built on first use since Count-Min never asks for signs. OnceLock
    /// makes that first touch safe under concurrent readers.
    Random { buckets: Vec<u32>, signs: OnceLock<Vec<i8>> },
    Poly { bucket_coeffs: Vec<u64>, sign_coeffs: Vec<u64> },
}

/// A realized hash family with per-row memoization for the truly random
/// construction.
///
/// Items up to the declared universe are answered from pre-filled tables;
/// anything beyond falls back to the direct stream computation, which is
/// the same function, just slower.
pub struct HashFamily {
    config: HashFamilyConfig,
    universe: u64,
    tables: Vec<RowTable>,
}

impl HashFamily {
    pub fn new(config: HashFamilyConfig, universe: u64) -> Result<Self> {
        config.validate()?;
        let tables = (0..config.rows)
            .map(|row| match config.kind {
                HashKind::TrulyRandom => RowTable::Random {
                    buckets: fill_buckets(&config, row as u64, universe),
                    signs: OnceLock::new(),
                },
                HashKind::KIndependent { k } => RowTable::Poly {
                    bucket_coeffs: poly_coefficients(config.seed, row as u64, ROLE_BUCKET, k),
                    sign_coeffs: poly_coefficients(config.seed, row as u64, ROLE_SIGN, k),
                },
            })
            .collect();
        Ok(Self { config, universe, tables })
    }

    pub fn config(&self) -> &HashFamilyConfig {
        &self.config
    }

    pub fn rows(&self) -> u32 {
        self.config.rows
    }

    pub fn width(&self) -> u32 {
        self.config.width
    }

    /// Bucket of `item` in row `row`. The row index must be in range; the
    /// sketches uphold this by construction.
    pub fn bucket(&self, row: u32, item: u64) -> u32 {
        match &self.tables[row as usize] {
            RowTable::Random { buckets, .. } => {
                if item <= self.universe {
                    buckets[item as usize]
                } else {
                    bucket_from_config(&self.config, row, item)
                }
            }
            RowTable::Poly { bucket_coeffs, .. } => {
                (poly_eval(bucket_coeffs, item) % self.config.width as u64) as u32
            }
        }
    }

    /// Sign of `item` in row `row`, either -1 or +1.
    pub fn sign(&self, row: u32, item: u64) -> i8 {
        match &self.tables[row as usize] {
            RowTable::Random { signs, .. } => {
                let table = signs.get_or_init(|| {
                    fill_signs(&self.config, row as u64, self.universe)
                });
                if item <= self.universe {
                    table[item as usize]
                } else {
                    sign_from_config(&self.config, row, item)
                }
            }
            RowTable::Poly { sign_coeffs, .. } => {
                if poly_eval(sign_coeffs, item) & 1 == 0 {
                    1
                } else {
                    -1
                }
            }
        }
    }
}

fn fill_buckets(config: &HashFamilyConfig, row: u64, universe: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::from_seed(stream_key(config.seed, row, ROLE_BUCKET));
    let width = config.width as u64;
    (0..=universe).map(|_| (rng.next_u64() % width) as u32).collect()
}

fn fill_signs(config: &HashFamilyConfig, row: u64, universe: u64) -> Vec<i8> {
    let mut rng = ChaCha8Rng::from_seed(stream_key(config.seed, row, ROLE_SIGN));
    (0..=universe)
        .map(|_| if rng.next_u64() & 1 == 0 { 1 } else { -1 })
        .collect()
}

/// Outcome of a joint-uniformity audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Number of cells in the joint table, width^d.
    pub cells: u64,
    pub trials: u64,
    /// Pearson chi-square statistic against the uniform joint distribution.
    pub statistic: f64,
    /// Critical value of chi-square(cells - 1) at the audit significance.
    pub critical_value: f64,
    pub pass: bool,
}

/// Chi-square audit of d-wise joint bucket uniformity for up to four items.
///
/// For each trial the family is re-seeded (trial `t` uses a sub-seed mixed
/// from `config.seed` and `t`) and the joint bucket tuple of the items in
/// row 0 is tallied; the histogram is then tested against the uniform
/// distribution on width^d cells at significance 0.01. A truly random
/// family passes for any d; a k-independent family is only guaranteed to
/// pass for d <= k.
pub fn independence_audit(
    config: &HashFamilyConfig,
    items: &[u64],
    trials: u64,
) -> Result<AuditReport> {
    config.validate()?;
    let d = items.len();
    if d == 0 || d > 4 {
        return Err(Error::InvalidArgument(format!(
            "audit supports 1 to 4 items, got {d}"
        )));
    }
    for (i, a) in items.iter().enumerate() {
        for b in items.iter().skip(i + 1) {
            if a == b {
                return Err(Error::InvalidArgument("audit items must be distinct".into()));
            }
        }
    }
    let cells = (config.width as u64).pow(d as u32);
    if cells > AUDIT_MAX_CELLS {
        return Err(Error::GuardExceeded(format!(
            "audit table of {cells} cells exceeds the {AUDIT_MAX_CELLS} cell limit"
        )));
    }
    if trials < 5 * cells {
        return Err(Error::InvalidArgument(format!(
            "chi-square needs at least {} trials for {cells} cells",
            5 * cells
        )));
    }

    let mut counts = vec![0u64; cells as usize];
    for t in 0..trials {
        let seeded = HashFamilyConfig { seed: mix(config.seed, ROLE_AUDIT ^ t), ..*config };
        let mut cell = 0u64;
        for &item in items {
            cell = cell * config.width as u64
                + bucket_from_config(&seeded, 0, item) as u64;
        }
        counts[cell as usize] += 1;
    }

    let expected = trials as f64 / cells as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&c| {
            let diff = c as f64 - expected;
            diff * diff / expected
        })
        .sum();
    let dof = (cells - 1) as f64;
    let critical_value = ChiSquared::new(dof)
        .map_err(|e| Error::InvalidArgument(format!("chi-square dof: {e}")))?
        .inverse_cdf(1.0 - AUDIT_SIGNIFICANCE);
    Ok(AuditReport {
        cells,
        trials,
        statistic,
        critical_value,
        pass: statistic < critical_value,
    })
}
