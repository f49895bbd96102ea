//! Zipfian ground truth and the weighted estimation error.
//!
//! Item `i` of a Zipfian universe of size `n` has frequency `i^-alpha`, so
//! the top item always has frequency 1 and the total mass is the
//! generalized harmonic number. Estimation quality is scored as
//! `sum_i f_i * |est_i - f_i|`, either raw or divided by the total mass;
//! both conventions appear in the literature, so the mode is explicit
//! everywhere instead of a buried constant.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the weighted error is scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorMetricMode {
    /// Plain `sum f_i |est_i - f_i|`.
    Unnormalized,
    /// The same sum divided by `sum f_i`.
    NormalizedByTotal,
}

impl std::fmt::Display for ErrorMetricMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ErrorMetricMode::Unnormalized => write!(f, "raw"),
            ErrorMetricMode::NormalizedByTotal => write!(f, "normalized"),
        }
    }
}

impl std::str::FromStr for ErrorMetricMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(ErrorMetricMode::Unnormalized),
            "normalized" => Ok(ErrorMetricMode::NormalizedByTotal),
            _ => Err(Error::InvalidArgument(format!(
                "unknown metric mode '{s}' (expected 'raw' or 'normalized')"
            ))),
        }
    }
}

impl Serialize for ErrorMetricMode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ErrorMetricMode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ground-truth frequencies for items `1..=n`, sorted descending by
/// construction.
#[derive(Clone, Debug)]
pub struct FrequencyVector {
    alpha: f64,
    weights: Vec<f64>,
    total: f64,
    cdf: OnceLock<Vec<f64>>,
}

impl FrequencyVector {
    /// Zipfian frequencies `f_i = i^-alpha`.
    pub fn zipf(n: u64, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("universe size must be at least 1".into()));
        }
        if n > (1 << 31) {
            return Err(Error::InvalidArgument(format!("universe size {n} is unreasonably large")));
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "zipf exponent must be finite and nonnegative, got {alpha}"
            )));
        }
        let weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-alpha)).collect();
        let total = kahan_sum(weights.iter().copied());
        Ok(Self { alpha, weights, total, cdf: OnceLock::new() })
    }

    /// Arbitrary positive frequencies; mostly useful for tests and ad hoc
    /// workloads. Items are still 1-based in declaration order.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("frequency vector must be nonempty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "frequencies must be finite and nonnegative".into(),
            ));
        }
        let total = kahan_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::InvalidArgument("total frequency mass must be positive".into()));
        }
        Ok(Self { alpha: f64::NAN, weights, total, cdf: OnceLock::new() })
    }

    pub fn n(&self) -> u64 {
        self.weights.len() as u64
    }

    /// Zipf exponent, or NaN for a vector built from explicit weights.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Frequency of `item`. Panics if `item` is not in `1..=n`.
    pub fn weight(&self, item: u64) -> f64 {
        assert!(
            item >= 1 && item <= self.n(),
            "item {item} outside universe 1..={}",
            self.n()
        );
        self.weights[(item - 1) as usize]
    }

    /// All frequencies, index 0 holding item 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total mass `sum_i f_i` (the generalized harmonic number for a
    /// Zipfian vector).
    pub fn total(&self) -> f64 {
        self.total
    }

    fn cdf(&self) -> &[f64] {
        self.cdf.get_or_init(|| {
            let mut prefix = Vec::with_capacity(self.weights.len());
            let mut sum = 0.0;
            let mut comp = 0.0;
            for &w in &self.weights {
                let y = w - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
                prefix.push(sum);
            }
            prefix
        })
    }
}

/// Generalized harmonic number `sum_{i=1..n} i^-alpha`.
pub fn generalized_harmonic(n: u64, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("harmonic number needs n >= 1".into()));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "harmonic exponent must be finite and nonnegative, got {alpha}"
        )));
    }
    Ok(kahan_sum((1..=n).map(|i| (i as f64).powf(-alpha))))
}

/// Weighted estimation error `sum_i f_i |est_i - f_i|`.
///
/// `estimates[i - 1]` is the estimate for item `i` and must cover the whole
/// universe. Terms are added in a canonical sorted order, so the result is
/// exactly invariant under jointly permuting (truth, estimate) pairs.
pub fn weighted_error(
    truth: &FrequencyVector,
    estimates: &[f64],
    mode: ErrorMetricMode,
) -> Result<f64> {
    if estimates.len() != truth.weights.len() {
        return Err(Error::InvalidArgument(format!(
            "got {} estimates for a universe of {}",
            estimates.len(),
            truth.weights.len()
        )));
    }
    let mut terms: Vec<f64> = truth
        .weights
        .iter()
        .zip(estimates)
        .map(|(&f, &est)| f * (est - f).abs())
        .collect();
    terms.sort_unstable_by(f64::total_cmp);
    let sum = kahan_sum(terms.into_iter());
    Ok(match mode {
        ErrorMetricMode::Unnormalized => sum,
        ErrorMetricMode::NormalizedByTotal => sum / truth.total,
    })
}

/// Draws `sample_len` items i.i.d. from the normalized frequency
/// distribution. Deterministic in (truth, sample_len, seed).
pub fn sample_stream(truth: &FrequencyVector, sample_len: u64, seed: u64) -> Vec<u64> {
    let cdf = truth.cdf();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = truth.weights.len();
    (0..sample_len)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * truth.total;
            let idx = cdf.partition_point(|&c| c <= u).min(n - 1);
            (idx + 1) as u64
        })
        .collect()
}

/// Kahan compensated accumulator; deterministic for a fixed add order.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(self) -> f64 {
        self.sum
    }
}

pub(crate) fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = Kahan::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zipf_small_values() {
        let fv = FrequencyVector::zipf(4, 1.0).unwrap();
        assert_eq!(fv.weights(), &[1.0, 0.5, 1.0 / 3.0, 0.25]);
        assert_eq!(fv.weight(1), 1.0);
        assert_eq!(fv.weight(4), 0.25);
        let sq = FrequencyVector::zipf(3, 2.0).unwrap();
        assert!((sq.weight(3) - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn harmonic_reference_values() {
        // H_10000 to nine digits, checked against independent high-precision
        // computation.
        let h = generalized_harmonic(10_000, 1.0).unwrap();
        assert!((h - 9.787606036).abs() < 1e-6, "H_10000 = {h}");
        // For alpha = 2 the series approaches pi^2 / 6 with an O(1/n) tail.
        let h2 = generalized_harmonic(1_000_000, 2.0).unwrap();
        let basel = std::f64::consts::PI * std::f64::consts::PI / 6.0;
        assert!((h2 - basel).abs() < 2e-6, "H2 = {h2}");
        // alpha = 0 degenerates to counting.
        assert_eq!(generalized_harmonic(123, 0.0).unwrap(), 123.0);
    }

    #[test]
    fn total_matches_harmonic() {
        let fv = FrequencyVector::zipf(10_000, 1.3).unwrap();
        let h = generalized_harmonic(10_000, 1.3).unwrap();
        assert_eq!(fv.total(), h);
    }

    #[test]
    fn constructor_argument_errors() {
        assert!(FrequencyVector::zipf(0, 1.0).is_err());
        assert!(FrequencyVector::zipf(10, -0.5).is_err());
        assert!(FrequencyVector::zipf(10, f64::NAN).is_err());
        assert!(FrequencyVector::from_weights(vec![]).is_err());
        assert!(FrequencyVector::from_weights(vec![1.0, -2.0]).is_err());
        assert!(FrequencyVector::from_weights(vec![0.0, 0.0]).is_err());
    }

    #[test]
    #[should_panic(expected = "outside universe")]
    fn weight_out_of_range_panics() {
        let fv = FrequencyVector::zipf(4, 1.0).unwrap();
        let _ = fv.weight(5);
    }

    #[test]
    fn weighted_error_hand_cases() {
        let fv = FrequencyVector::zipf(4, 1.0).unwrap();
        let exact = vec![1.0, 0.5, 1.0 / 3.0, 0.25];
        assert_eq!(weighted_error(&fv, &exact, ErrorMetricMode::Unnormalized).unwrap(), 0.0);

        // Only item 1 off by 0.1: error = f_1 * 0.1.
        let off = vec![1.1, 0.5, 1.0 / 3.0, 0.25];
        let raw = weighted_error(&fv, &off, ErrorMetricMode::Unnormalized).unwrap();
        assert!((raw - 0.1).abs() < 1e-15);
        let norm = weighted_error(&fv, &off, ErrorMetricMode::NormalizedByTotal).unwrap();
        assert!((norm - 0.1 / fv.total()).abs() < 1e-15);

        assert!(weighted_error(&fv, &[1.0, 2.0], ErrorMetricMode::Unnormalized).is_err());
    }

    #[test]
    fn weighted_error_is_permutation_invariant() {
        let weights = vec![0.9, 0.31, 0.17, 0.05, 0.013];
        let estimates = vec![1.2, 0.3, 0.2, 0.0, 0.5];
        let base = weighted_error(
            &FrequencyVector::from_weights(weights.clone()).unwrap(),
            &estimates,
            ErrorMetricMode::Unnormalized,
        )
        .unwrap();
        // One concrete permutation here; the property test sweeps many.
        let perm = [4usize, 2, 0, 3, 1];
        let pw: Vec<f64> = perm.iter().map(|&i| weights[i]).collect();
        let pe: Vec<f64> = perm.iter().map(|&i| estimates[i]).collect();
        let permuted = weighted_error(
            &FrequencyVector::from_weights(pw).unwrap(),
            &pe,
            ErrorMetricMode::Unnormalized,
        )
        .unwrap();
        assert_eq!(base, permuted);
    }

    #[test]
    fn sample_stream_basics() {
        let fv = FrequencyVector::zipf(100, 1.0).unwrap();
        let s = sample_stream(&fv, 5_000, 7);
        assert_eq!(s.len(), 5_000);
        assert!(s.iter().all(|&i| (1..=100).contains(&i)));
        assert_eq!(s, sample_stream(&fv, 5_000, 7));
        assert_ne!(s, sample_stream(&fv, 5_000, 8));
        assert!(sample_stream(&fv, 0, 7).is_empty());
    }

    #[test]
    fn sample_stream_matches_distribution() {
        // Item 1 carries mass 1/H_100 of the stream; 4 sigma tolerance.
        let fv = FrequencyVector::zipf(100, 1.0).unwrap();
        let draws = 20_000;
        let s = sample_stream(&fv, draws, 123);
        let p = 1.0 / fv.total();
        let hits = s.iter().filter(|&&i| i == 1).count() as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (hits - draws as f64 * p).abs() < 4.0 * sigma,
            "item 1 drawn {hits} times, expected about {}",
            draws as f64 * p
        );
    }

    #[test]
    fn metric_mode_tokens() {
        assert_eq!(ErrorMetricMode::Unnormalized.to_string(), "raw");
        assert_eq!(ErrorMetricMode::NormalizedByTotal.to_string(), "normalized");
        assert_eq!("raw".parse::<ErrorMetricMode>().unwrap(), ErrorMetricMode::Unnormalized);
        assert!("bogus".parse::<ErrorMetricMode>().is_err());
    }
}
