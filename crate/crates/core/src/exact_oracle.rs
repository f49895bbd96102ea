//! Brute-force exact expectations on tiny instances.
//!
//! These enumerators compute expected estimator errors and detection
//! probabilities by summing over every possible hash assignment, sign
//! pattern, or sample sequence, working straight from the estimator
//! definitions. They share no code with the sketch implementations, which is
//! the point: Monte Carlo runs of the real sketches are anchored against
//! these values in the cross-module tests, so a bug in either side shows up
//! as a mismatch.
//!
//! Everything here is exponential and guarded; instances beyond the
//! enumeration limits are rejected at construction.

use crate::error::{Error, Result};
use crate::freq_model::{FrequencyVector, Kahan};

/// Upper limit on `width^(rows*n) * 2^(rows*n)`, the worst-case enumeration
/// size (bucket assignments times sign patterns).
const MAX_ENUMERATION: u128 = 100_000_000;

/// Upper limit on `n^sample_len` for detection enumeration.
const MAX_SEQUENCES: u128 = 10_000_000;

/// A sketch configuration small enough to enumerate exhaustively.
pub struct TinyInstance {
    truth: FrequencyVector,
    rows: u32,
    width: u32,
}

impl TinyInstance {
    pub fn new(truth: FrequencyVector, rows: u32, width: u32) -> Result<Self> {
        let n = truth.n();
        if n > 6 {
            return Err(Error::GuardExceeded(format!(
                "exact enumeration supports at most 6 items, got {n}"
            )));
        }
        if rows == 0 || rows > 2 {
            return Err(Error::InvalidArgument(format!(
                "exact enumeration supports 1 or 2 rows, got {rows}"
            )));
        }
        if width < 2 || width > 3 {
            return Err(Error::InvalidArgument(format!(
                "exact enumeration supports widths 2 and 3, got {width}"
            )));
        }
        let positions = (rows as u32 * n as u32) as u128;
        let size = (width as u128).pow(positions as u32) * (2u128).pow(positions as u32);
        if size > MAX_ENUMERATION {
            return Err(Error::GuardExceeded(format!(
                "enumeration of {size} states exceeds the {MAX_ENUMERATION} limit"
            )));
        }
        Ok(Self { truth, rows, width })
    }

    pub fn truth(&self) -> &FrequencyVector {
        &self.truth
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    fn check_item(&self, item: u64) -> Result<()> {
        if item < 1 || item > self.truth.n() {
            return Err(Error::InvalidArgument(format!(
                "item {item} outside universe 1..={}",
                self.truth.n()
            )));
        }
        Ok(())
    }
}

/// Advances a base-`base` odometer; returns false once it wraps to zero.
fn advance(digits: &mut [u8], base: u8) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Exact `E[estimate_i - f_i]` of Count-Min, averaging the min-over-rows
/// collision mass over all `width^(rows*n)` equally likely hash assignments.
/// Since Count-Min never underestimates, this equals `E|estimate_i - f_i|`.
pub fn exact_cm_error(instance: &TinyInstance, item: u64) -> Result<f64> {
    instance.check_item(item)?;
    let n = instance.truth.n() as usize;
    let weights = instance.truth.weights();
    let rows = instance.rows as usize;
    let item_idx = (item - 1) as usize;

    let mut digits = vec![0u8; rows * n];
    let mut acc = Kahan::default();
    let mut count = 0u64;
    loop {
        let mut best = f64::INFINITY;
        for row in 0..rows {
            let assignment = &digits[row * n..(row + 1) * n];
            let own = assignment[item_idx];
            let mut mass = 0.0;
            for (j, &bucket) in assignment.iter().enumerate() {
                if j != item_idx && bucket == own {
                    mass += weights[j];
                }
            }
            if mass < best {
                best = mass;
            }
        }
        acc.add(best);
        count += 1;
        if !advance(&mut digits, instance.width as u8) {
            break;
        }
    }
    Ok(acc.value() / count as f64)
}

/// Exact `E|estimate_i - f_i|` of Count-Sketch, averaging over all hash
/// assignments and all sign patterns. The row count must be odd so the
/// median is defined.
pub fn exact_cs_error(instance: &TinyInstance, item: u64) -> Result<f64> {
    exact_cs_error_inner(instance, item, false)
}

fn exact_cs_error_inner(instance: &TinyInstance, item: u64, force_positive: bool) -> Result<f64> {
    instance.check_item(item)?;
    if instance.rows % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "count-sketch needs an odd number of rows, got {}",
            instance.rows
        )));
    }
    let n = instance.truth.n() as usize;
    let weights = instance.truth.weights();
    let rows = instance.rows as usize;
    let item_idx = (item - 1) as usize;
    let positions = rows * n;
    let f_item = weights[item_idx];

    let mut digits = vec![0u8; positions];
    let mut acc = Kahan::default();
    let mut count = 0u64;
    let mut row_values = vec![0.0f64; rows];
    let sign_patterns: u64 = if force_positive { 1 } else { 1 << positions };
    loop {
        for pattern in 0..sign_patterns {
            for row in 0..rows {
                let assignment = &digits[row * n..(row + 1) * n];
                let own = assignment[item_idx];
                let sign = |j: usize| -> f64 {
                    if pattern >> (row * n + j) & 1 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                };
                let mut counter = 0.0;
                for (j, &bucket) in assignment.iter().enumerate() {
                    if bucket == own {
                        counter += sign(j) * weights[j];
                    }
                }
                row_values[row] = sign(item_idx) * counter;
            }
            row_values.sort_unstable_by(f64::total_cmp);
            acc.add((row_values[rows / 2] - f_item).abs());
            count += 1;
        }
        if !advance(&mut digits, instance.width as u8) {
            break;
        }
    }
    Ok(acc.value() / count as f64)
}

/// Exact probability that `item` ranks in the top `table_size` of sample
/// counts over a length-`sample_len` i.i.d. sample, under the
/// (count descending, id ascending) order.
///
/// Every universe item participates in the ranking, including ones that
/// never appear in the sample; this is the idealized detection event. Note
/// that `build_lookup_table` is stricter in one corner: it never admits an
/// unsampled item, so the two agree whenever the top `table_size` ranks are
/// occupied by sampled items (always true for `table_size = 1` and any
/// nonempty sample).
pub fn exact_detection_probability(
    truth: &FrequencyVector,
    sample_len: u32,
    table_size: u32,
    item: u64,
) -> Result<f64> {
    let n = truth.n();
    if item < 1 || item > n {
        return Err(Error::InvalidArgument(format!(
            "item {item} outside universe 1..={n}"
        )));
    }
    let sequences = (n as u128)
        .checked_pow(sample_len)
        .filter(|&s| s <= MAX_SEQUENCES)
        .ok_or_else(|| {
            Error::GuardExceeded(format!(
                "{n}^{sample_len} sample sequences exceed the {MAX_SEQUENCES} limit"
            ))
        })?;
    let _ = sequences;

    let probs: Vec<f64> = truth.weights().iter().map(|&w| w / truth.total()).collect();
    let mut counts = vec![0u32; n as usize];
    let mut acc = Kahan::default();
    walk_sequences(&probs, sample_len, 1.0, &mut counts, &mut |counts, prob| {
        let own = counts[(item - 1) as usize];
        let mut preceding = 0u32;
        for (j, &c) in counts.iter().enumerate() {
            let j_item = j as u64 + 1;
            if j_item == item {
                continue;
            }
            if c > own || (c == own && j_item < item) {
                preceding += 1;
            }
        }
        if preceding < table_size {
            acc.add(prob);
        }
    });
    Ok(acc.value())
}

fn walk_sequences(
    probs: &[f64],
    remaining: u32,
    prob: f64,
    counts: &mut Vec<u32>,
    visit: &mut impl FnMut(&[u32], f64),
) {
    if remaining == 0 {
        visit(counts, prob);
        return;
    }
    for j in 0..probs.len() {
        counts[j] += 1;
        walk_sequences(probs, remaining - 1, prob * probs[j], counts, visit);
        counts[j] -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zipf_instance(n: u64, alpha: f64, rows: u32, width: u32) -> TinyInstance {
        TinyInstance::new(FrequencyVector::zipf(n, alpha).unwrap(), rows, width).unwrap()
    }

    #[test]
    fn construction_guards() {
        let truth = FrequencyVector::zipf(7, 1.0).unwrap();
        assert!(matches!(TinyInstance::new(truth, 1, 2), Err(Error::GuardExceeded(_))));
        let truth = FrequencyVector::zipf(6, 1.0).unwrap();
        assert!(TinyInstance::new(truth.clone(), 3, 2).is_err());
        assert!(TinyInstance::new(truth.clone(), 1, 4).is_err());
        assert!(TinyInstance::new(truth.clone(), 0, 2).is_err());
        // 3^12 * 2^12 states is past the enumeration limit.
        assert!(matches!(TinyInstance::new(truth, 2, 3), Err(Error::GuardExceeded(_))));
    }

    #[test]
    fn count_min_two_items_by_hand() {
        // f = (1, 1/2). Item 1 errs by f_2 exactly when item 2 lands in its
        // bucket: probability 1/w per row, min over independent rows.
        let inst = zipf_instance(2, 1.0, 1, 2);
        assert!((exact_cm_error(&inst, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!((exact_cm_error(&inst, 2).unwrap() - 0.5).abs() < 1e-15);

        let inst = zipf_instance(2, 1.0, 2, 2);
        assert!((exact_cm_error(&inst, 1).unwrap() - 0.125).abs() < 1e-15);

        let inst = zipf_instance(2, 1.0, 1, 3);
        assert!((exact_cm_error(&inst, 1).unwrap() - 0.5 / 3.0).abs() < 1e-15);

        // alpha = 2: f_2 = 1/4.
        let inst = zipf_instance(2, 2.0, 1, 2);
        assert!((exact_cm_error(&inst, 1).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn count_min_three_items_by_hand() {
        // Independent collisions: E = (f_2 + f_3) / w for item 1.
        let inst = zipf_instance(3, 1.0, 1, 2);
        let expected = (0.5 + 1.0 / 3.0) / 2.0;
        assert!((exact_cm_error(&inst, 1).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn count_sketch_two_items_matches_count_min() {
        // With a single colliding item the sign cannot cancel anything, so
        // the absolute error distribution is the same as Count-Min's.
        let inst = zipf_instance(2, 1.0, 1, 2);
        assert!((exact_cs_error(&inst, 1).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn count_sketch_three_items_by_hand() {
        // f = (1, 1/2, 1/3), one row, width 2, item 1. Conditioning on which
        // of items 2 and 3 collide: none -> 0, only 2 -> f_2, only 3 -> f_3,
        // both -> E|±f_2 ± f_3| = f_2. Total: f_2/2 + f_3/4.
        let inst = zipf_instance(3, 1.0, 1, 2);
        let expected = 0.5 / 2.0 + (1.0 / 3.0) / 4.0;
        assert!((exact_cs_error(&inst, 1).unwrap() - expected).abs() < 1e-15);
        // Cancellation makes Count-Sketch strictly better than Count-Min
        // on this instance.
        assert!(exact_cs_error(&inst, 1).unwrap() < exact_cm_error(&inst, 1).unwrap());
    }

    #[test]
    fn count_sketch_rejects_even_rows() {
        let inst = zipf_instance(2, 1.0, 2, 2);
        assert!(matches!(exact_cs_error(&inst, 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn forced_positive_signs_reduce_to_count_min() {
        for n in 2..=5u64 {
            for width in 2..=3u32 {
                let inst = zipf_instance(n, 1.0, 1, width);
                for item in 1..=n {
                    let cm = exact_cm_error(&inst, item).unwrap();
                    let cs = exact_cs_error_inner(&inst, item, true).unwrap();
                    assert!(
                        (cm - cs).abs() < 1e-14,
                        "n={n} w={width} item={item}: cm={cm} cs+={cs}"
                    );
                }
            }
        }
    }

    #[test]
    fn item_out_of_range() {
        let inst = zipf_instance(3, 1.0, 1, 2);
        assert!(exact_cm_error(&inst, 0).is_err());
        assert!(exact_cm_error(&inst, 4).is_err());
    }

    #[test]
    fn detection_two_items_by_hand() {
        // n=2, alpha=1: p = (2/3, 1/3). S=2, T=1. Item 1 wins unless the
        // sample is (2,2): 1 - 1/9 = 8/9.
        let truth = FrequencyVector::zipf(2, 1.0).unwrap();
        let p1 = exact_detection_probability(&truth, 2, 1, 1).unwrap();
        assert!((p1 - 8.0 / 9.0).abs() < 1e-12, "got {p1}");
        let p2 = exact_detection_probability(&truth, 2, 1, 2).unwrap();
        assert!((p2 - 1.0 / 9.0).abs() < 1e-12, "got {p2}");
        // With T=1 exactly one item is detected.
        assert!((p1 + p2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detection_degenerate_cases() {
        let truth = FrequencyVector::zipf(4, 1.0).unwrap();
        // Empty sample: all counts zero, ranking is pure id order.
        for item in 1..=4u64 {
            let p = exact_detection_probability(&truth, 0, 2, item).unwrap();
            assert_eq!(p, if item <= 2 { 1.0 } else { 0.0 }, "item {item}");
        }
        // Table at least as large as the universe detects everything.
        for item in 1..=4u64 {
            let p = exact_detection_probability(&truth, 3, 4, item).unwrap();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn detection_probability_sums_to_table_size() {
        // Exactly T items are detected in every outcome, so probabilities
        // sum to T.
        let truth = FrequencyVector::zipf(3, 0.5).unwrap();
        let total: f64 = (1..=3)
            .map(|i| exact_detection_probability(&truth, 4, 2, i).unwrap())
            .sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detection_guards() {
        let truth = FrequencyVector::zipf(4, 1.0).unwrap();
        assert!(matches!(
            exact_detection_probability(&truth, 30, 1, 1),
            Err(Error::GuardExceeded(_))
        ));
        assert!(exact_detection_probability(&truth, 2, 1, 9).is_err());
    }

    #[test]
    fn enumeration_is_deterministic() {
        let inst = zipf_instance(4, 0.5, 2, 3);
        assert_eq!(exact_cm_error(&inst, 2).unwrap(), exact_cm_error(&inst, 2).unwrap());
    }
}
