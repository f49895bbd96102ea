//! Learning-augmented sketches.
//!
//! A heavy-hitter oracle classifies each arriving item. Predicted heavy
//! items get exact per-item buckets (a hash map charged at a fixed budget
//! cost per slot, two by default: value plus key); everything else flows
//! into a smaller inner sketch. With a decent oracle the inner sketch never
//! sees the dominant items, which removes the largest collision terms.
//!
//! Three oracles are provided: `Perfect` knows the true top items, `Noisy`
//! flips each perfect decision independently with a fixed probability, and
//! `Lookup` builds its own top-T table from a finite sample of the stream.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq_model::{sample_stream, FrequencyVector};
use crate::hashing::stream_value;
use crate::sketches::{CountMinSketch, CountSketch};

const ROLE_FLIP: u64 = 0x464C_4950_5F5F_5F5F;

/// Budget charged per heavy slot: one bucket for the value, one for the key.
pub const DEFAULT_HEAVY_BUCKET_COST: u32 = 2;

/// Default heavy-slot count for a total budget: round(B / 10).
pub fn default_heavy_count(budget: u32) -> u32 {
    (budget + 5) / 10
}

/// Declarative description of a heavy-hitter oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OracleSpec {
    /// Heavy exactly for items 1..=heavy_count (the true top items of a
    /// frequency-sorted universe).
    Perfect { heavy_count: u32 },
    /// Perfect decision flipped independently per item with probability
    /// `flip_probability`; a pure function of (seed, item).
    Noisy { heavy_count: u32, flip_probability: f64, seed: u64 },
    /// Top-`table_size` items of a sampled stream prefix of length
    /// `sample_len`.
    Lookup { sample_len: u64, table_size: u32, seed: u64 },
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        if let OracleSpec::Noisy { flip_probability, .. } = self {
            if !(0.0..=1.0).contains(flip_probability) {
                return Err(Error::InvalidArgument(format!(
                    "flip probability must lie in [0, 1], got {flip_probability}"
                )));
            }
        }
        Ok(())
    }

    /// Number of heavy slots a learned sketch must reserve for this oracle.
    pub fn heavy_capacity(&self) -> u32 {
        match self {
            OracleSpec::Perfect { heavy_count } => *heavy_count,
            OracleSpec::Noisy { heavy_count, .. } => *heavy_count,
            OracleSpec::Lookup { table_size, .. } => *table_size,
        }
    }
}

/// Oracle verdict for one item.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Heavy,
    Light,
}

/// Frequency table learned from a sample prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    /// Predicted heavy items, ascending by id.
    pub heavy_set: Vec<u64>,
    /// Raw occurrence counts of every item seen in the sample.
    pub sample_counts: BTreeMap<u64, u64>,
}

impl LookupTable {
    pub fn contains(&self, item: u64) -> bool {
        self.heavy_set.binary_search(&item).is_ok()
    }
}

/// Top-`table_size` selection under (count descending, id ascending).
fn select_top(mut ranked: Vec<(u64, u64)>, table_size: u32) -> Vec<u64> {
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(table_size as usize);
    let mut heavy: Vec<u64> = ranked.into_iter().map(|(item, _)| item).collect();
    heavy.sort_unstable();
    heavy
}

/// Samples `sample_len` stream items and keeps the `table_size` most
/// frequent, ties broken toward the smaller item id. Items that never
/// appear in the sample are never admitted, so the table holds
/// `min(table_size, distinct sampled items)` entries.
pub fn build_lookup_table(
    truth: &FrequencyVector,
    sample_len: u64,
    table_size: u32,
    seed: u64,
) -> LookupTable {
    let mut sample_counts: BTreeMap<u64, u64> = BTreeMap::new();
    for item in sample_stream(truth, sample_len, seed) {
        *sample_counts.entry(item).or_insert(0) += 1;
    }
    let ranked: Vec<(u64, u64)> = sample_counts.iter().map(|(&i, &c)| (i, c)).collect();
    let heavy_set = select_top(ranked, table_size);
    LookupTable { heavy_set, sample_counts }
}

/// A ready-to-query heavy-hitter oracle.
#[derive(Clone, Debug)]
pub struct HeavyHitterOracle {
    spec: OracleSpec,
    table: Option<LookupTable>,
}

impl HeavyHitterOracle {
    /// Wraps a spec without building anything; a `Lookup` oracle still needs
    /// `build_lookup` before it can classify.
    pub fn new(spec: OracleSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, table: None })
    }

    /// Builds the oracle and, for `Lookup`, its sample table, in one step.
    pub fn ready(spec: OracleSpec, truth: &FrequencyVector) -> Result<Self> {
        let mut oracle = Self::new(spec)?;
        if matches!(oracle.spec, OracleSpec::Lookup { .. }) {
            oracle.build_lookup(truth)?;
        }
        Ok(oracle)
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    pub fn table(&self) -> Option<&LookupTable> {
        self.table.as_ref()
    }

    pub fn build_lookup(&mut self, truth: &FrequencyVector) -> Result<()> {
        match self.spec {
            OracleSpec::Lookup { sample_len, table_size, seed } => {
                self.table = Some(build_lookup_table(truth, sample_len, table_size, seed));
                Ok(())
            }
            _ => Err(Error::InvalidState(
                "build_lookup only applies to a lookup oracle".into(),
            )),
        }
    }

    pub fn is_ready(&self) -> bool {
        !matches!(self.spec, OracleSpec::Lookup { .. }) || self.table.is_some()
    }

    pub fn classify(&self, item: u64) -> Result<Classification> {
        match &self.spec {
            OracleSpec::Perfect { heavy_count } => {
                Ok(heavy_of(item >= 1 && item <= *heavy_count as u64))
            }
            OracleSpec::Noisy { heavy_count, flip_probability, seed } => {
                let perfect = item >= 1 && item <= *heavy_count as u64;
                Ok(heavy_of(perfect ^ noise_flip(*seed, item, *flip_probability)))
            }
            OracleSpec::Lookup { .. } => {
                let table = self.table.as_ref().ok_or_else(|| {
                    Error::InvalidState("lookup oracle queried before its table was built".into())
                })?;
                Ok(heavy_of(table.contains(item)))
            }
        }
    }
}

fn heavy_of(heavy: bool) -> Classification {
    if heavy {
        Classification::Heavy
    } else {
        Classification::Light
    }
}

/// Bernoulli(flip_probability) decision, a pure function of (seed, item).
fn noise_flip(seed: u64, item: u64, flip_probability: f64) -> bool {
    // Compare a uniform 64-bit draw against the probability scaled to
    // [0, 2^64]; the u128 comparison makes probability 1 flip everything.
    let threshold = (flip_probability * 2f64.powi(64)) as u128;
    (stream_value(seed, 0, ROLE_FLIP, item) as u128) < threshold
}

/// Width of the inner sketch after reserving heavy slots:
/// `floor((budget - cost * heavy_count) / rows)`. Any remainder stays
/// unspent; it is visible to callers as `budget - cost*heavy - width*rows`.
pub fn budget_split(
    budget: u32,
    heavy_count: u32,
    heavy_bucket_cost: u32,
    rows: u32,
) -> Result<u32> {
    if rows == 0 {
        return Err(Error::InvalidArgument("budget split needs at least one row".into()));
    }
    let reserved = heavy_bucket_cost as u64 * heavy_count as u64;
    let remaining = (budget as u64).saturating_sub(reserved);
    let width = remaining / rows as u64;
    if reserved >= budget as u64 || width == 0 {
        return Err(Error::InvalidConfig(format!(
            "budget {budget} cannot fund {heavy_count} heavy slots at cost \
             {heavy_bucket_cost} plus {rows} sketch rows"
        )));
    }
    Ok(width as u32)
}

/// The inner estimator of a learned sketch.
pub enum InnerSketch {
    CountMin(CountMinSketch),
    CountSketch(CountSketch),
}

impl InnerSketch {
    fn insert(&mut self, item: u64, weight: f64) -> Result<()> {
        match self {
            InnerSketch::CountMin(s) => s.insert(item, weight),
            InnerSketch::CountSketch(s) => s.insert(item, weight),
        }
    }

    fn estimate(&self, item: u64) -> f64 {
        match self {
            InnerSketch::CountMin(s) => s.estimate(item),
            InnerSketch::CountSketch(s) => s.estimate(item),
        }
    }

    pub fn width(&self) -> u32 {
        match self {
            InnerSketch::CountMin(s) => s.width(),
            InnerSketch::CountSketch(s) => s.width(),
        }
    }
}

/// Oracle-routed sketch: exact buckets for predicted heavy items, an inner
/// sketch for the rest.
pub struct LearnedSketch {
    oracle: HeavyHitterOracle,
    heavy_values: HashMap<u64, f64>,
    capacity: usize,
    inner: InnerSketch,
    overflow_events: u64,
}

impl LearnedSketch {
    /// The oracle must be ready (a lookup oracle with its table built);
    /// heavy-slot capacity is taken from the oracle spec.
    pub fn new(oracle: HeavyHitterOracle, inner: InnerSketch) -> Result<Self> {
        if !oracle.is_ready() {
            return Err(Error::InvalidState(
                "learned sketch needs a built lookup table".into(),
            ));
        }
        let capacity = oracle.spec().heavy_capacity() as usize;
        Ok(Self {
            oracle,
            heavy_values: HashMap::with_capacity(capacity),
            capacity,
            inner,
            overflow_events: 0,
        })
    }

    pub fn oracle(&self) -> &HeavyHitterOracle {
        &self.oracle
    }

    pub fn overflow_events(&self) -> u64 {
        self.overflow_events
    }

    pub fn heavy_len(&self) -> usize {
        self.heavy_values.len()
    }

    /// Routes one update. Heavy-classified items occupy exact slots first
    /// come, first served; once the slots are full, later heavy items spill
    /// into the inner sketch and the spill is counted.
    pub fn insert(&mut self, item: u64, weight: f64) -> Result<()> {
        if !(weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sketch weights must be nonnegative, got {weight}"
            )));
        }
        match self.oracle.classify(item)? {
            Classification::Heavy => {
                if let Some(slot) = self.heavy_values.get_mut(&item) {
                    *slot += weight;
                } else if self.heavy_values.len() < self.capacity {
                    self.heavy_values.insert(item, weight);
                } else {
                    self.overflow_events += 1;
                    self.inner.insert(item, weight)?;
                }
            }
            Classification::Light => self.inner.insert(item, weight)?,
        }
        Ok(())
    }

    /// Heavy-classified items answer from their exact slot, or 0 when they
    /// never got one (the overflow case); light items answer from the inner
    /// sketch.
    pub fn estimate(&self, item: u64) -> f64 {
        let class = self
            .oracle
            .classify(item)
            .expect("oracle readiness was checked at construction");
        match class {
            Classification::Heavy => self.heavy_values.get(&item).copied().unwrap_or(0.0),
            Classification::Light => self.inner.estimate(item),
        }
    }

    /// Inserts the whole ground truth in ascending item order, which is also
    /// the arrival order for the first-come-first-served heavy slots.
    pub fn load_frequencies(&mut self, truth: &FrequencyVector) -> Result<()> {
        for (idx, &f) in truth.weights().iter().enumerate() {
            self.insert(idx as u64 + 1, f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::{HashFamilyConfig, HashKind};

    fn cm_inner(seed: u64, width: u32, universe: u64) -> InnerSketch {
        let config =
            HashFamilyConfig { kind: HashKind::TrulyRandom, seed, rows: 1, width };
        InnerSketch::CountMin(CountMinSketch::new(config, universe).unwrap())
    }

    #[test]
    fn perfect_oracle_splits_at_heavy_count() {
        let oracle = HeavyHitterOracle::new(OracleSpec::Perfect { heavy_count: 3 }).unwrap();
        assert_eq!(oracle.classify(1).unwrap(), Classification::Heavy);
        assert_eq!(oracle.classify(3).unwrap(), Classification::Heavy);
        assert_eq!(oracle.classify(4).unwrap(), Classification::Light);
        assert_eq!(oracle.classify(1_000).unwrap(), Classification::Light);
    }

    #[test]
    fn noisy_zero_matches_perfect_exactly() {
        let perfect = HeavyHitterOracle::new(OracleSpec::Perfect { heavy_count: 10 }).unwrap();
        let noisy = HeavyHitterOracle::new(OracleSpec::Noisy {
            heavy_count: 10,
            flip_probability: 0.0,
            seed: 77,
        })
        .unwrap();
        for item in 1..=500 {
            assert_eq!(perfect.classify(item).unwrap(), noisy.classify(item).unwrap());
        }
    }

    #[test]
    fn noisy_one_inverts_perfect() {
        let noisy = HeavyHitterOracle::new(OracleSpec::Noisy {
            heavy_count: 10,
            flip_probability: 1.0,
            seed: 77,
        })
        .unwrap();
        for item in 1..=50 {
            let expected =
                if item <= 10 { Classification::Light } else { Classification::Heavy };
            assert_eq!(noisy.classify(item).unwrap(), expected, "item {item}");
        }
    }

    #[test]
    fn noisy_flip_rate_is_calibrated() {
        let delta = 0.3;
        let noisy = HeavyHitterOracle::new(OracleSpec::Noisy {
            heavy_count: 0,
            flip_probability: delta,
            seed: 5,
        })
        .unwrap();
        // With heavy_count 0, an item is heavy exactly when its decision
        // flipped. 4 sigma tolerance on the empirical rate.
        let trials = 40_000u64;
        let flips = (1..=trials)
            .filter(|&i| noisy.classify(i).unwrap() == Classification::Heavy)
            .count() as f64;
        let sigma = (trials as f64 * delta * (1.0 - delta)).sqrt();
        assert!((flips - trials as f64 * delta).abs() < 4.0 * sigma);
    }

    #[test]
    fn noisy_is_a_pure_function_of_seed_and_item() {
        let build = |seed| {
            HeavyHitterOracle::new(OracleSpec::Noisy {
                heavy_count: 5,
                flip_probability: 0.5,
                seed,
            })
            .unwrap()
        };
        let a = build(9);
        let b = build(9);
        let c = build(10);
        let verdicts =
            |o: &HeavyHitterOracle| (1..=200).map(|i| o.classify(i).unwrap()).collect::<Vec<_>>();
        assert_eq!(verdicts(&a), verdicts(&b));
        assert_ne!(verdicts(&a), verdicts(&c));
    }

    #[test]
    fn invalid_flip_probability_is_rejected() {
        for p in [-0.1, 1.1, f64::NAN] {
            assert!(HeavyHitterOracle::new(OracleSpec::Noisy {
                heavy_count: 1,
                flip_probability: p,
                seed: 0,
            })
            .is_err());
        }
    }

    #[test]
    fn lookup_before_build_is_a_state_error() {
        let spec = OracleSpec::Lookup { sample_len: 100, table_size: 5, seed: 3 };
        let oracle = HeavyHitterOracle::new(spec).unwrap();
        assert!(matches!(oracle.classify(1), Err(Error::InvalidState(_))));
        let inner = cm_inner(0, 8, 10);
        assert!(matches!(LearnedSketch::new(oracle, inner), Err(Error::InvalidState(_))));
    }

    #[test]
    fn lookup_table_shape() {
        let truth = FrequencyVector::zipf(50, 1.0).unwrap();
        let empty = build_lookup_table(&truth, 0, 5, 1);
        assert!(empty.heavy_set.is_empty());
        assert!(empty.sample_counts.is_empty());

        let table = build_lookup_table(&truth, 2_000, 5, 1);
        assert_eq!(table.heavy_set.len(), 5);
        // A 2000-draw sample of a 50-item Zipf makes item 1 heavy with
        // overwhelming probability.
        assert!(table.contains(1));

        // Tiny sample: table can hold fewer than table_size entries.
        let sparse = build_lookup_table(&truth, 2, 5, 1);
        assert!(sparse.heavy_set.len() <= 2);
        let distinct = sparse.sample_counts.len();
        assert_eq!(sparse.heavy_set.len(), distinct.min(5));
    }

    #[test]
    fn top_selection_breaks_ties_toward_smaller_id() {
        let ranked = vec![(7u64, 3u64), (2, 5), (9, 3), (4, 3), (11, 1)];
        // Counts: 2 -> 5, then a three-way tie at 3 among {4, 7, 9}.
        assert_eq!(select_top(ranked.clone(), 2), vec![2, 4]);
        assert_eq!(select_top(ranked.clone(), 4), vec![2, 4, 7, 9]);
        assert_eq!(select_top(ranked, 99), vec![2, 4, 7, 9, 11]);
    }

    #[test]
    fn budget_split_cases() {
        assert_eq!(budget_split(1_000, 100, 2, 1).unwrap(), 800);
        assert_eq!(budget_split(1_000, 100, 2, 2).unwrap(), 400);
        assert_eq!(budget_split(1_001, 100, 2, 2).unwrap(), 400);
        assert!(budget_split(200, 100, 2, 1).is_err());
        assert!(budget_split(100, 100, 2, 1).is_err());
        assert!(budget_split(1_000, 100, 2, 0).is_err());
    }

    #[test]
    fn perfect_learned_sketch_is_exact_on_heavy_items() {
        let truth = FrequencyVector::zipf(200, 1.0).unwrap();
        let oracle = HeavyHitterOracle::ready(
            OracleSpec::Perfect { heavy_count: 20 },
            &truth,
        )
        .unwrap();
        let mut ls = LearnedSketch::new(oracle, cm_inner(1, 40, 200)).unwrap();
        ls.load_frequencies(&truth).unwrap();
        for item in 1..=20u64 {
            assert_eq!(ls.estimate(item), truth.weight(item));
        }
        assert_eq!(ls.overflow_events(), 0);
        assert_eq!(ls.heavy_len(), 20);
        // Light items answer from the inner count-min: never underestimated.
        for item in 21..=200u64 {
            assert!(ls.estimate(item) >= truth.weight(item) - 1e-12);
        }
    }

    #[test]
    fn heavy_overflow_spills_to_inner_and_reads_zero() {
        // A fully inverted oracle classifies items 11..=200 heavy; only the
        // first 10 of them get slots, the rest spill and later read 0.
        let truth = FrequencyVector::zipf(200, 1.0).unwrap();
        let oracle = HeavyHitterOracle::new(OracleSpec::Noisy {
            heavy_count: 10,
            flip_probability: 1.0,
            seed: 0,
        })
        .unwrap();
        let mut ls = LearnedSketch::new(oracle, cm_inner(1, 40, 200)).unwrap();
        ls.load_frequencies(&truth).unwrap();
        assert_eq!(ls.heavy_len(), 10);
        assert_eq!(ls.overflow_events(), 180);
        for item in 11..=20u64 {
            assert_eq!(ls.estimate(item), truth.weight(item));
        }
        for item in 21..=200u64 {
            assert_eq!(ls.estimate(item), 0.0, "spilled item {item} must read 0");
        }
    }

    #[test]
    fn repeated_inserts_accumulate_in_heavy_slots() {
        let truth = FrequencyVector::zipf(10, 1.0).unwrap();
        let oracle =
            HeavyHitterOracle::ready(OracleSpec::Perfect { heavy_count: 2 }, &truth).unwrap();
        let mut ls = LearnedSketch::new(oracle, cm_inner(1, 4, 10)).unwrap();
        ls.insert(1, 0.25).unwrap();
        ls.insert(1, 0.5).unwrap();
        assert_eq!(ls.estimate(1), 0.75);
        assert!(ls.insert(1, -1.0).is_err());
    }
}
