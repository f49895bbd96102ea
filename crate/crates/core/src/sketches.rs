//! Count-Min and Count-Sketch frequency estimators.
//!
//! Both maintain `rows x width` counters over a seeded hash family. Count-Min
//! adds each item's weight to one bucket per row and answers with the minimum
//! bucket value, so it never underestimates a nonnegative stream. Count-Sketch
//! additionally multiplies by a random sign per (row, item) and answers with
//! the median of the sign-corrected bucket values, which makes single-row
//! estimates unbiased; the row count must be odd so the median is an actual
//! sample value.
//!
//! Loading mutates through `&mut self` and estimation borrows `&self`, so the
//! type system already enforces the single-writer-then-concurrent-readers
//! discipline; there is no separate freeze step.

use crate::error::{Error, Result};
use crate::freq_model::FrequencyVector;
use crate::hashing::{HashFamily, HashFamilyConfig};

/// Count-Min sketch with nonnegative weights.
pub struct CountMinSketch {
    family: HashFamily,
    counters: Vec<f64>,
}

impl CountMinSketch {
    /// `universe` is the largest item id expected; it only sizes the hash
    /// memo tables, and larger items still work through the slow path.
    pub fn new(config: HashFamilyConfig, universe: u64) -> Result<Self> {
        let family = HashFamily::new(config, universe)?;
        let counters = vec![0.0; config.rows as usize * config.width as usize];
        Ok(Self { family, counters })
    }

    pub fn rows(&self) -> u32 {
        self.family.rows()
    }

    pub fn width(&self) -> u32 {
        self.family.width()
    }

    pub fn insert(&mut self, item: u64, weight: f64) -> Result<()> {
        if !(weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "count-min weights must be nonnegative, got {weight}"
            )));
        }
        let width = self.family.width() as usize;
        for row in 0..self.family.rows() {
            let bucket = self.family.bucket(row, item) as usize;
            self.counters[row as usize * width + bucket] += weight;
        }
        Ok(())
    }

    /// Minimum over rows of the item's bucket; never below the true total
    /// inserted for the item.
    pub fn estimate(&self, item: u64) -> f64 {
        let width = self.family.width() as usize;
        let mut best = f64::INFINITY;
        for row in 0..self.family.rows() {
            let bucket = self.family.bucket(row, item) as usize;
            let value = self.counters[row as usize * width + bucket];
            if value < best {
                best = value;
            }
        }
        best
    }

    /// Counters of one row, mainly for conservation checks.
    pub fn row(&self, row: u32) -> Result<&[f64]> {
        row_slice(&self.counters, self.family.rows(), self.family.width(), row)
    }

    /// Inserts every item of the ground truth with its frequency as weight.
    pub fn load_frequencies(&mut self, truth: &FrequencyVector) -> Result<()> {
        for (idx, &f) in truth.weights().iter().enumerate() {
            self.insert(idx as u64 + 1, f)?;
        }
        Ok(())
    }
}

/// Count-Sketch with signed updates and median estimation.
pub struct CountSketch {
    family: HashFamily,
    counters: Vec<f64>,
}

impl CountSketch {
    pub fn new(config: HashFamilyConfig, universe: u64) -> Result<Self> {
        if config.rows % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "count-sketch needs an odd number of rows for the median, got {}",
                config.rows
            )));
        }
        let family = HashFamily::new(config, universe)?;
        let counters = vec![0.0; config.rows as usize * config.width as usize];
        Ok(Self { family, counters })
    }

    pub fn rows(&self) -> u32 {
        self.family.rows()
    }

    pub fn width(&self) -> u32 {
        self.family.width()
    }

    pub fn insert(&mut self, item: u64, weight: f64) -> Result<()> {
        if !(weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sketch weights must be nonnegative, got {weight}"
            )));
        }
        let width = self.family.width() as usize;
        for row in 0..self.family.rows() {
            let bucket = self.family.bucket(row, item) as usize;
            let sign = self.family.sign(row, item) as f64;
            self.counters[row as usize * width + bucket] += sign * weight;
        }
        Ok(())
    }

    /// Median over rows of `sign * counter`; unbiased for a single row.
    pub fn estimate(&self, item: u64) -> f64 {
        let width = self.family.width() as usize;
        let rows = self.family.rows() as usize;
        let mut values: Vec<f64> = (0..rows)
            .map(|row| {
                let bucket = self.family.bucket(row as u32, item) as usize;
                let sign = self.family.sign(row as u32, item) as f64;
                sign * self.counters[row * width + bucket]
            })
            .collect();
        values.sort_unstable_by(f64::total_cmp);
        values[rows / 2]
    }

    pub fn row(&self, row: u32) -> Result<&[f64]> {
        row_slice(&self.counters, self.family.rows(), self.family.width(), row)
    }

    pub fn load_frequencies(&mut self, truth: &FrequencyVector) -> Result<()> {
        for (idx, &f) in truth.weights().iter().enumerate() {
            self.insert(idx as u64 + 1, f)?;
        }
        Ok(())
    }
}

fn row_slice(counters: &[f64], rows: u32, width: u32, row: u32) -> Result<&[f64]> {
    if row >= rows {
        return Err(Error::InvalidArgument(format!(
            "row {row} out of range for a sketch with {rows} rows"
        )));
    }
    let width = width as usize;
    let start = row as usize * width;
    Ok(&counters[start..start + width])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::HashKind;
    use crate::seeds::mix;

    fn config(seed: u64, rows: u32, width: u32) -> HashFamilyConfig {
        HashFamilyConfig { kind: HashKind::TrulyRandom, seed, rows, width }
    }

    #[test]
    fn count_min_never_underestimates() {
        let truth = FrequencyVector::zipf(200, 1.0).unwrap();
        for seed in 0..20 {
            let mut cm = CountMinSketch::new(config(seed, 2, 16), 200).unwrap();
            cm.load_frequencies(&truth).unwrap();
            for item in 1..=200u64 {
                assert!(
                    cm.estimate(item) >= truth.weight(item) - 1e-12,
                    "underestimate at seed {seed} item {item}"
                );
            }
        }
    }

    #[test]
    fn count_min_empty_estimates_zero() {
        let cm = CountMinSketch::new(config(3, 2, 8), 100).unwrap();
        assert_eq!(cm.estimate(42), 0.0);
    }

    #[test]
    fn count_min_row_conservation() {
        let truth = FrequencyVector::zipf(50, 0.7).unwrap();
        let mut cm = CountMinSketch::new(config(9, 3, 4), 50).unwrap();
        cm.load_frequencies(&truth).unwrap();
        for row in 0..3 {
            let sum: f64 = cm.row(row).unwrap().iter().sum();
            assert!((sum - truth.total()).abs() < 1e-9, "row {row} mass drifted");
        }
        assert!(cm.row(3).is_err());
    }

    #[test]
    fn count_min_extra_row_never_raises_estimates() {
        // Rows derive their seeds independently of the row count, so a
        // (k+1)-row sketch shares its first k rows with the k-row one and
        // the min can only go down.
        let truth = FrequencyVector::zipf(300, 1.0).unwrap();
        for seed in 0..10 {
            let mut small = CountMinSketch::new(config(seed, 2, 10), 300).unwrap();
            let mut big = CountMinSketch::new(config(seed, 3, 10), 300).unwrap();
            small.load_frequencies(&truth).unwrap();
            big.load_frequencies(&truth).unwrap();
            for item in 1..=300u64 {
                assert!(big.estimate(item) <= small.estimate(item) + 1e-12);
            }
        }
    }

    #[test]
    fn negative_weight_is_rejected() {
        let mut cm = CountMinSketch::new(config(0, 1, 4), 10).unwrap();
        assert!(cm.insert(1, -0.5).is_err());
        assert!(cm.insert(1, f64::NAN).is_err());
        let mut cs = CountSketch::new(config(0, 1, 4), 10).unwrap();
        assert!(cs.insert(1, -0.5).is_err());
    }

    #[test]
    fn count_sketch_rejects_even_rows() {
        assert!(matches!(
            CountSketch::new(config(0, 2, 8), 10),
            Err(Error::InvalidConfig(_))
        ));
        assert!(CountSketch::new(config(0, 3, 8), 10).is_ok());
    }

    #[test]
    fn count_sketch_alone_in_bucket_is_exact() {
        // One item in the sketch: its estimate is exact, sign canceled.
        let truth = FrequencyVector::zipf(1, 1.0).unwrap();
        for seed in 0..20 {
            let mut cs = CountSketch::new(config(seed, 3, 4), 1).unwrap();
            cs.load_frequencies(&truth).unwrap();
            assert_eq!(cs.estimate(1), 1.0);
        }
    }

    #[test]
    fn count_sketch_single_row_is_unbiased() {
        // Mean estimate of item 1 over many seeds should match its true
        // frequency within 4 standard errors.
        let truth = FrequencyVector::zipf(64, 1.0).unwrap();
        let trials = 10_000u64;
        let mut values = Vec::with_capacity(trials as usize);
        for t in 0..trials {
            let mut cs = CountSketch::new(config(mix(2024, t), 1, 8), 64).unwrap();
            cs.load_frequencies(&truth).unwrap();
            values.push(cs.estimate(1));
        }
        let mean: f64 = values.iter().sum::<f64>() / trials as f64;
        let var: f64 =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!(
            (mean - 1.0).abs() < 4.0 * se,
            "single-row count-sketch biased: mean {mean}, se {se}"
        );
    }

    #[test]
    fn count_sketch_row_mass_bound() {
        let truth = FrequencyVector::zipf(50, 0.7).unwrap();
        let mut cs = CountSketch::new(config(5, 3, 4), 50).unwrap();
        cs.load_frequencies(&truth).unwrap();
        for row in 0..3 {
            let abs_sum: f64 = cs.row(row).unwrap().iter().map(|c| c.abs()).sum();
            assert!(abs_sum <= truth.total() + 1e-9);
        }
    }

    #[test]
    fn estimates_are_deterministic() {
        let truth = FrequencyVector::zipf(100, 1.0).unwrap();
        let run = |seed| {
            let mut cm = CountMinSketch::new(config(seed, 2, 16), 100).unwrap();
            cm.load_frequencies(&truth).unwrap();
            (1..=100).map(|i| cm.estimate(i)).collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }
}
