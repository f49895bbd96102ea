//! Monte Carlo experiment harness.
//!
//! A sweep runs `trials` independent trials per budget, each trial building
//! fresh sketches from a per-trial seed (`base_seed + trial`); the sketch
//! hash family and the oracle randomness derive distinct role-tagged
//! sub-seeds from it, so a noisy oracle with flip probability 0 reproduces a
//! perfect-oracle run bit for bit. Trials run in parallel, but means are
//! accumulated in a canonical sorted order, so reports are byte-identical
//! across thread counts and permutations of trial completion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_oracle::{exact_cm_error, exact_cs_error, TinyInstance};
use crate::freq_model::{kahan_sum, weighted_error, ErrorMetricMode, FrequencyVector};
use crate::hashing::{HashFamilyConfig, HashKind};
use crate::learned::{
    budget_split, build_lookup_table, default_heavy_count, HeavyHitterOracle, InnerSketch,
    LearnedSketch, OracleSpec, DEFAULT_HEAVY_BUCKET_COST,
};
use crate::seeds::{mix, trial_seed, ROLE_ORACLE, ROLE_SKETCH};
use crate::sketches::{CountMinSketch, CountSketch};

/// Estimators the harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    CountMin,
    CountSketch,
    LearnedCountMin,
    LearnedCountSketch,
}

impl Algorithm {
    pub fn is_learned(&self) -> bool {
        matches!(self, Algorithm::LearnedCountMin | Algorithm::LearnedCountSketch)
    }

    fn uses_signs(&self) -> bool {
        matches!(self, Algorithm::CountSketch | Algorithm::LearnedCountSketch)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let token = match self {
            Algorithm::CountMin => "cm",
            Algorithm::CountSketch => "cs",
            Algorithm::LearnedCountMin => "lcm",
            Algorithm::LearnedCountSketch => "lcs",
        };
        write!(f, "{token}")
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cm" => Ok(Algorithm::CountMin),
            "cs" => Ok(Algorithm::CountSketch),
            "lcm" => Ok(Algorithm::LearnedCountMin),
            "lcs" => Ok(Algorithm::LearnedCountSketch),
            _ => Err(Error::InvalidArgument(format!(
                "unknown algorithm '{s}' (expected cm, cs, lcm or lcs)"
            ))),
        }
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Which oracle a learned sweep instantiates per trial. Concrete seeds and
/// heavy counts are filled in per (budget, trial).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleKind {
    Perfect,
    Noisy { flip_probability: f64 },
    Lookup { sample_len: u64, table_size: u32 },
}

impl std::fmt::Display for OracleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleKind::Perfect => write!(f, "perfect"),
            OracleKind::Noisy { flip_probability } => write!(f, "noisy:{flip_probability}"),
            OracleKind::Lookup { sample_len, table_size } => {
                write!(f, "lookup:{sample_len}:{table_size}")
            }
        }
    }
}

impl std::str::FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "perfect" {
            return Ok(OracleKind::Perfect);
        }
        if let Some(rest) = s.strip_prefix("noisy:") {
            let flip_probability: f64 = rest
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad flip probability in '{s}'")))?;
            return Ok(OracleKind::Noisy { flip_probability });
        }
        if let Some(rest) = s.strip_prefix("lookup:") {
            let mut parts = rest.split(':');
            let sample_len = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("bad sample length in '{s}'")))?;
            let table_size = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("bad table size in '{s}'")))?;
            if parts.next().is_some() {
                return Err(Error::InvalidArgument(format!("trailing fields in '{s}'")));
            }
            return Ok(OracleKind::Lookup { sample_len, table_size });
        }
        Err(Error::InvalidArgument(format!(
            "unknown oracle '{s}' (expected perfect, noisy:<delta> or lookup:<S>:<T>)"
        )))
    }
}

impl Serialize for OracleKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for OracleKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Fully resolved description of a sweep. Serialized field names match the
/// CLI flags and the CSV metadata keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: u64,
    pub alpha: f64,
    pub algorithm: Algorithm,
    #[serde(rename = "k")]
    pub rows: u32,
    pub budgets: Vec<u32>,
    pub trials: u32,
    #[serde(rename = "seed")]
    pub base_seed: u64,
    pub metric: ErrorMetricMode,
    /// Ignored by the classical algorithms.
    pub oracle: OracleKind,
    /// Heavy slots per budget; `None` means round(B/10). A lookup oracle
    /// always uses its table size instead.
    #[serde(rename = "bh")]
    pub heavy_count_override: Option<u32>,
    #[serde(rename = "heavy_cost")]
    pub heavy_bucket_cost: u32,
    pub hash: HashKind,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            alpha: 1.0,
            algorithm: Algorithm::CountMin,
            rows: 1,
            budgets: vec![1_000],
            trials: 20,
            base_seed: 42,
            metric: ErrorMetricMode::Unnormalized,
            oracle: OracleKind::Perfect,
            heavy_count_override: None,
            heavy_bucket_cost: DEFAULT_HEAVY_BUCKET_COST,
            hash: HashKind::TrulyRandom,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("universe size must be at least 1".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "zipf exponent must be finite and nonnegative, got {}",
                self.alpha
            )));
        }
        if self.budgets.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one budget".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("sweep needs at least one trial".into()));
        }
        if self.rows == 0 {
            return Err(Error::InvalidArgument("sweep needs at least one row".into()));
        }
        if self.algorithm.uses_signs() && self.rows % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "count-sketch variants need an odd number of rows, got {}",
                self.rows
            )));
        }
        if self.heavy_bucket_cost == 0 {
            return Err(Error::InvalidArgument("heavy bucket cost must be positive".into()));
        }
        if let OracleKind::Noisy { flip_probability } = self.oracle {
            if !(0.0..=1.0).contains(&flip_probability) {
                return Err(Error::InvalidArgument(format!(
                    "flip probability must lie in [0, 1], got {flip_probability}"
                )));
            }
        }
        Ok(())
    }

    /// Heavy slots reserved at a given budget: the lookup table size for a
    /// lookup oracle, otherwise the override or the round(B/10) default.
    pub fn heavy_count_for(&self, budget: u32) -> u32 {
        match self.oracle {
            OracleKind::Lookup { table_size, .. } => table_size,
            _ => self.heavy_count_override.unwrap_or_else(|| default_heavy_count(budget)),
        }
    }

    /// Inner or plain sketch width at a given budget.
    pub fn width_for(&self, budget: u32) -> Result<u32> {
        if self.algorithm.is_learned() {
            budget_split(budget, self.heavy_count_for(budget), self.heavy_bucket_cost, self.rows)
        } else {
            let width = budget / self.rows;
            if width == 0 {
                return Err(Error::InvalidConfig(format!(
                    "budget {budget} is too small for {} rows",
                    self.rows
                )));
            }
            Ok(width)
        }
    }
}

/// Result of one trial.
#[derive(Clone, Copy, Debug)]
pub struct TrialOutcome {
    pub error: f64,
    pub overflow_events: u64,
}

/// Runs one trial at one budget and scores the weighted error across the
/// whole universe.
pub fn run_single_trial(
    config: &ExperimentConfig,
    truth: &FrequencyVector,
    budget: u32,
    trial: u32,
) -> Result<TrialOutcome> {
    let tseed = trial_seed(config.base_seed, trial as u64);
    let sketch_seed = mix(tseed, ROLE_SKETCH);
    let width = config.width_for(budget)?;
    let n = truth.n();
    let hash_config = HashFamilyConfig {
        kind: config.hash,
        seed: sketch_seed,
        rows: config.rows,
        width,
    };

    let mut estimates = Vec::with_capacity(n as usize);
    let mut overflow_events = 0;
    match config.algorithm {
        Algorithm::CountMin => {
            let mut sketch = CountMinSketch::new(hash_config, n)?;
            sketch.load_frequencies(truth)?;
            estimates.extend((1..=n).map(|i| sketch.estimate(i)));
        }
        Algorithm::CountSketch => {
            let mut sketch = CountSketch::new(hash_config, n)?;
            sketch.load_frequencies(truth)?;
            estimates.extend((1..=n).map(|i| sketch.estimate(i)));
        }
        Algorithm::LearnedCountMin | Algorithm::LearnedCountSketch => {
            let heavy_count = config.heavy_count_for(budget);
            let oracle_seed = mix(tseed, ROLE_ORACLE);
            let spec = match config.oracle {
                OracleKind::Perfect => OracleSpec::Perfect { heavy_count },
                OracleKind::Noisy { flip_probability } => OracleSpec::Noisy {
                    heavy_count,
                    flip_probability,
                    seed: oracle_seed,
                },
                OracleKind::Lookup { sample_len, table_size } => OracleSpec::Lookup {
                    sample_len,
                    table_size,
                    seed: oracle_seed,
                },
            };
            let oracle = HeavyHitterOracle::ready(spec, truth)?;
            let inner = if config.algorithm == Algorithm::LearnedCountMin {
                InnerSketch::CountMin(CountMinSketch::new(hash_config, n)?)
            } else {
                InnerSketch::CountSketch(CountSketch::new(hash_config, n)?)
            };
            let mut sketch = LearnedSketch::new(oracle, inner)?;
            sketch.load_frequencies(truth)?;
            estimates.extend((1..=n).map(|i| sketch.estimate(i)));
            overflow_events = sketch.overflow_events();
        }
    }
    let error = weighted_error(truth, &estimates, config.metric)?;
    Ok(TrialOutcome { error, overflow_events })
}

/// One (algorithm, budget) summary. Field names in serialized form follow
/// the CSV header: algorithm,k,B,B_h,width,alpha,metric_mode,trials,
/// mean_err,std_err,ci95,overflow_events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: Algorithm,
    #[serde(rename = "k")]
    pub rows: u32,
    #[serde(rename = "B")]
    pub budget: u32,
    /// Heavy slots reserved; 0 for the classical algorithms.
    #[serde(rename = "B_h")]
    pub heavy_count: u32,
    pub width: u32,
    pub alpha: f64,
    #[serde(rename = "metric_mode")]
    pub metric: ErrorMetricMode,
    pub trials: u32,
    pub mean_err: f64,
    pub std_err: f64,
    pub ci95: f64,
    pub overflow_events: u64,
}

impl ReportRow {
    /// With a single trial the sample deviation does not exist; it is
    /// reported as 0 and this returns false.
    pub fn std_is_defined(&self) -> bool {
        self.trials > 1
    }
}

/// Sweep output: the fully resolved config plus one row per budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
}

/// Mean with the summands sorted first, so the value is exactly invariant
/// under permuting the inputs (and therefore under trial scheduling).
pub fn canonical_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    kahan_sum(sorted.into_iter()) / values.len() as f64
}

/// Sample standard deviation over the canonical order; 0 for fewer than two
/// values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = canonical_mean(values);
    let mut devs: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    devs.sort_unstable_by(f64::total_cmp);
    (kahan_sum(devs.into_iter()) / (values.len() - 1) as f64).sqrt()
}

fn summarize(
    config: &ExperimentConfig,
    budget: u32,
    outcomes: &[TrialOutcome],
) -> Result<ReportRow> {
    let errors: Vec<f64> = outcomes.iter().map(|o| o.error).collect();
    let mean_err = canonical_mean(&errors);
    let std_err = sample_std(&errors);
    let ci95 = if errors.len() > 1 {
        1.96 * std_err / (errors.len() as f64).sqrt()
    } else {
        0.0
    };
    Ok(ReportRow {
        algorithm: config.algorithm,
        rows: config.rows,
        budget,
        heavy_count: if config.algorithm.is_learned() { config.heavy_count_for(budget) } else { 0 },
        width: config.width_for(budget)?,
        alpha: config.alpha,
        metric: config.metric,
        trials: config.trials,
        mean_err,
        std_err,
        ci95,
        overflow_events: outcomes.iter().map(|o| o.overflow_events).sum(),
    })
}

/// Runs the full sweep described by `config`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<ErrorReport> {
    config.validate()?;
    let truth = FrequencyVector::zipf(config.n, config.alpha)?;
    let mut rows = Vec::with_capacity(config.budgets.len());
    for &budget in &config.budgets {
        // Surface width/split errors before paying for trials.
        config.width_for(budget)?;
        let outcomes = (0..config.trials)
            .into_par_iter()
            .map(|t| run_single_trial(config, &truth, budget, t))
            .collect::<Result<Vec<_>>>()?;
        rows.push(summarize(config, budget, &outcomes)?);
    }
    Ok(ErrorReport { config: config.clone(), rows })
}

/// The six-column learned-versus-standard comparison: CM (k=1, k=2),
/// perfect-oracle L-CM, CS (k=1, k=3) and perfect-oracle L-CS, sharing one
/// base seed and trial count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub sweeps: Vec<ErrorReport>,
}

impl TableReport {
    pub fn sweep(&self, algorithm: Algorithm, rows: u32) -> Option<&ErrorReport> {
        self.sweeps
            .iter()
            .find(|s| s.config.algorithm == algorithm && s.config.rows == rows)
    }
}

pub fn reproduce_table(
    n: u64,
    alpha: f64,
    budgets: &[u32],
    trials: u32,
    base_seed: u64,
    metric: ErrorMetricMode,
) -> Result<TableReport> {
    let columns = [
        (Algorithm::CountMin, 1),
        (Algorithm::CountMin, 2),
        (Algorithm::LearnedCountMin, 1),
        (Algorithm::CountSketch, 1),
        (Algorithm::CountSketch, 3),
        (Algorithm::LearnedCountSketch, 1),
    ];
    let sweeps = columns
        .iter()
        .map(|&(algorithm, rows)| {
            run_sweep(&ExperimentConfig {
                n,
                alpha,
                algorithm,
                rows,
                budgets: budgets.to_vec(),
                trials,
                base_seed,
                metric,
                ..ExperimentConfig::default()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TableReport { sweeps })
}

/// Scaling-law fit over (budget, mean error) points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    /// err ~ c * B^slope, fitted by least squares in log-log space.
    #[serde(rename = "powerlaw")]
    PowerLaw,
    /// err / predictor(B), summarized by its min/max ratio band.
    #[serde(rename = "theory-ratio")]
    TheoryRatio,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub model: FitModel,
    /// Power-law exponent from the log-log regression.
    pub slope: f64,
    /// Natural-log intercept: err ~ exp(intercept) * B^slope.
    pub intercept: f64,
    #[serde(rename = "r2")]
    pub r_squared: f64,
    /// Extremes of err / predictor across the points. For a pure power-law
    /// fit the predictor is the fitted curve itself, making this a residual
    /// band around 1.
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub predictor: String,
}

/// Fits a power law to the points and, when a theory predictor is supplied
/// (a description plus its value at each point), reports the err/predictor
/// stability band.
pub fn fit_scaling(
    points: &[(f64, f64)],
    predictor: Option<(&str, &[f64])>,
) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "scaling fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0 || !x.is_finite() || !y.is_finite()) {
        return Err(Error::Data(
            "scaling fit needs positive finite budgets and errors for the log transform".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::Data("scaling fit needs at least two distinct budgets".into()));
    }
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;

    let mean_y = sy / m;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let (model, description, ratios) = match predictor {
        Some((description, values)) => {
            if values.len() != points.len() {
                return Err(Error::InvalidArgument(format!(
                    "predictor has {} values for {} points",
                    values.len(),
                    points.len()
                )));
            }
            if values.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                return Err(Error::Data("predictor values must be positive and finite".into()));
            }
            let ratios: Vec<f64> =
                points.iter().zip(values).map(|(&(_, y), &v)| y / v).collect();
            (FitModel::TheoryRatio, description.to_string(), ratios)
        }
        None => {
            let ratios: Vec<f64> = logs
                .iter()
                .zip(points)
                .map(|(&(lx, _), &(_, y))| y / (intercept + slope * lx).exp())
                .collect();
            (FitModel::PowerLaw, "fitted power law".to_string(), ratios)
        }
    };
    let ratio_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingFit {
        model,
        slope,
        intercept,
        r_squared,
        ratio_min,
        ratio_max,
        predictor: description,
    })
}

/// Detection rate of one rank at one sample-size multiplier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRate {
    pub rank: u64,
    pub rate: f64,
}

/// Results for one sample-size multiplier C (sample length C * T * ln n).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEntry {
    pub c: f64,
    pub sample_len: u64,
    pub rates: Vec<RankRate>,
    /// End-to-end lookup-oracle learned Count-Min at the report's budget.
    pub sketch_row: ReportRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub n: u64,
    pub alpha: f64,
    pub table_size: u32,
    pub trials: u32,
    pub seed: u64,
    pub budget: u32,
    pub entries: Vec<DetectionEntry>,
}

/// Measures how reliably a sampled top-T table detects items of selected
/// ranks (1, T/4, T/2, T, 2T), for each sample-size multiplier in
/// `c_values`, plus the end-to-end error of a lookup-oracle learned
/// Count-Min sharing the same per-trial tables.
pub fn lookup_detection_experiment(
    n: u64,
    alpha: f64,
    table_size: u32,
    c_values: &[f64],
    trials: u32,
    base_seed: u64,
    budget: u32,
    metric: ErrorMetricMode,
) -> Result<DetectionReport> {
    if table_size == 0 {
        return Err(Error::InvalidArgument("lookup table size must be positive".into()));
    }
    if c_values.is_empty() {
        return Err(Error::InvalidArgument("need at least one sample-size multiplier".into()));
    }
    if c_values.iter().any(|&c| !c.is_finite() || c <= 0.0) {
        return Err(Error::InvalidArgument("sample-size multipliers must be positive".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let truth = FrequencyVector::zipf(n, alpha)?;
    let t = table_size as u64;
    let mut ranks: Vec<u64> = [1, t / 4, t / 2, t, 2 * t]
        .into_iter()
        .map(|r| r.clamp(1, n))
        .collect();
    ranks.dedup();

    let mut entries = Vec::with_capacity(c_values.len());
    for &c in c_values {
        let sample_len = (c * table_size as f64 * (n as f64).ln()).ceil() as u64;
        let hit_counts: Vec<u64> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let oracle_seed = mix(trial_seed(base_seed, trial as u64), ROLE_ORACLE);
                let table = build_lookup_table(&truth, sample_len, table_size, oracle_seed);
                ranksperm_hits(&ranks, &table)
            })
            .reduce(|| vec![0u64; ranks.len()], |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            });
        let rates = ranks
            .iter()
            .zip(&hit_counts)
            .map(|(&rank, &hits)| RankRate { rank, rate: hits as f64 / trials as f64 })
            .collect();

        let sweep = run_sweep(&ExperimentConfig {
            n,
            alpha,
            algorithm: Algorithm::LearnedCountMin,
            budgets: vec![budget],
            trials,
            base_seed,
            metric,
            oracle: OracleKind::Lookup { sample_len, table_size },
            ..ExperimentConfig::default()
        })?;
        entries.push(DetectionEntry {
            c,
            sample_len,
            rates,
            sketch_row: sweep.rows[0].clone(),
        });
    }
    Ok(DetectionReport {
        n,
        alpha,
        table_size,
        trials,
        seed: base_seed,
        budget,
        entries,
    })
}

fn ranksperm_hits(ranks: &[u64], table: &crate::learned::LookupTable) -> Vec<u64> {
    ranks.iter().map(|&r| table.contains(r) as u64).collect()
}

/// Noisy-oracle interpolation: learned CM and CS at each flip probability,
/// next to the plain k=1 baselines at the same budget and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyReport {
    pub n: u64,
    pub alpha: f64,
    pub budget: u32,
    pub trials: u32,
    pub seed: u64,
    pub metric: ErrorMetricMode,
    pub deltas: Vec<f64>,
    pub learned_count_min: Vec<ReportRow>,
    pub learned_count_sketch: Vec<ReportRow>,
    pub count_min_baseline: ReportRow,
    pub count_sketch_baseline: ReportRow,
}

pub fn noisy_oracle_sweep(
    n: u64,
    alpha: f64,
    budget: u32,
    deltas: &[f64],
    trials: u32,
    base_seed: u64,
    metric: ErrorMetricMode,
) -> Result<NoisyReport> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("need at least one flip probability".into()));
    }
    let base = ExperimentConfig {
        n,
        alpha,
        budgets: vec![budget],
        trials,
        base_seed,
        metric,
        ..ExperimentConfig::default()
    };
    let one_row = |algorithm, oracle| -> Result<ReportRow> {
        let report = run_sweep(&ExperimentConfig { algorithm, oracle, ..base.clone() })?;
        Ok(report.rows[0].clone())
    };
    let mut learned_count_min = Vec::with_capacity(deltas.len());
    let mut learned_count_sketch = Vec::with_capacity(deltas.len());
    for &flip_probability in deltas {
        let oracle = OracleKind::Noisy { flip_probability };
        learned_count_min.push(one_row(Algorithm::LearnedCountMin, oracle)?);
        learned_count_sketch.push(one_row(Algorithm::LearnedCountSketch, oracle)?);
    }
    let count_min_baseline = one_row(Algorithm::CountMin, OracleKind::Perfect)?;
    let count_sketch_baseline = one_row(Algorithm::CountSketch, OracleKind::Perfect)?;
    Ok(NoisyReport {
        n,
        alpha,
        budget,
        trials,
        seed: base_seed,
        metric,
        deltas: deltas.to_vec(),
        learned_count_min,
        learned_count_sketch,
        count_min_baseline,
        count_sketch_baseline,
    })
}

/// One exact-versus-Monte-Carlo comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorOutcome {
    pub label: String,
    pub exact: f64,
    pub mc_mean: f64,
    pub std_err: f64,
    /// |mc_mean - exact| in standard-error units.
    pub z: f64,
    pub pass: bool,
}

/// Cross-module anchor suite: for every enumerable tiny instance
/// (n in 2..=5, width in {2, 3}, rows in {1, 2} for Count-Min and 1 for
/// Count-Sketch, alpha in {0.5, 1, 2}), runs `trials` seeded Monte Carlo
/// trials of the real sketches and compares each item's mean absolute error
/// against the exact enumeration, passing within 3 standard errors.
pub fn anchor_suite(trials: u32, base_seed: u64) -> Result<Vec<AnchorOutcome>> {
    if trials < 2 {
        return Err(Error::InvalidArgument("anchor suite needs at least 2 trials".into()));
    }
    let mut outcomes = Vec::new();
    let mut instance_tag = 0u64;
    for n in 2..=5u64 {
        for alpha in [0.5, 1.0, 2.0] {
            let truth = FrequencyVector::zipf(n, alpha)?;
            for width in 2..=3u32 {
                for rows in 1..=2u32 {
                    instance_tag += 1;
                    let instance = TinyInstance::new(truth.clone(), rows, width)?;
                    let instance_seed = mix(base_seed, instance_tag);
                    let signed = rows % 2 == 1;

                    let cm_means = mc_item_errors(&truth, rows, width, trials, instance_seed, false)?;
                    push_anchor_outcomes(
                        &mut outcomes,
                        &instance,
                        &cm_means,
                        |inst, item| exact_cm_error(inst, item),
                        format!("cm n={n} alpha={alpha} w={width} k={rows}"),
                    )?;

                    // Count-Sketch needs an odd row count for its median, so
                    // the two-row grid point only exists for Count-Min.
                    if signed {
                        let cs_means =
                            mc_item_errors(&truth, rows, width, trials, mix(instance_seed, 1), true)?;
                        push_anchor_outcomes(
                            &mut outcomes,
                            &instance,
                            &cs_means,
                            |inst, item| exact_cs_error(inst, item),
                            format!("cs n={n} alpha={alpha} w={width} k={rows}"),
                        )?;
                    }
                }
            }
        }
    }
    Ok(outcomes)
}

/// Per-item (mean, standard error) of the absolute estimation error over
/// seeded trials of a real sketch.
fn mc_item_errors(
    truth: &FrequencyVector,
    rows: u32,
    width: u32,
    trials: u32,
    instance_seed: u64,
    use_count_sketch: bool,
) -> Result<Vec<(f64, f64)>> {
    let n = truth.n() as usize;
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<f64>> {
            let sketch_seed = mix(trial_seed(instance_seed, trial as u64), ROLE_SKETCH);
            let config = HashFamilyConfig {
                kind: HashKind::TrulyRandom,
                seed: sketch_seed,
                rows,
                width,
            };
            let mut errors = Vec::with_capacity(n);
            if use_count_sketch {
                let mut sketch = CountSketch::new(config, truth.n())?;
                sketch.load_frequencies(truth)?;
                errors.extend(
                    (1..=truth.n()).map(|i| (sketch.estimate(i) - truth.weight(i)).abs()),
                );
            } else {
                let mut sketch = CountMinSketch::new(config, truth.n())?;
                sketch.load_frequencies(truth)?;
                errors.extend(
                    (1..=truth.n()).map(|i| (sketch.estimate(i) - truth.weight(i)).abs()),
                );
            }
            Ok(errors)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stats = Vec::with_capacity(n);
    let mut column = vec![0.0f64; trials as usize];
    for item in 0..n {
        for (t, trial_errors) in per_trial.iter().enumerate() {
            column[t] = trial_errors[item];
        }
        let mean = canonical_mean(&column);
        let se = sample_std(&column) / (trials as f64).sqrt();
        stats.push((mean, se));
    }
    Ok(stats)
}

fn push_anchor_outcomes(
    outcomes: &mut Vec<AnchorOutcome>,
    instance: &TinyInstance,
    mc: &[(f64, f64)],
    exact_fn: impl Fn(&TinyInstance, u64) -> Result<f64>,
    label_prefix: String,
) -> Result<()> {
    for (idx, &(mc_mean, std_err)) in mc.iter().enumerate() {
        let item = idx as u64 + 1;
        let exact = exact_fn(instance, item)?;
        let diff = (mc_mean - exact).abs();
        let z = if std_err > 0.0 { diff / std_err } else { f64::INFINITY };
        let pass = diff <= 3.0 * std_err + 1e-12;
        outcomes.push(AnchorOutcome {
            label: format!("{label_prefix} item={item}"),
            exact,
            mc_mean,
            std_err,
            z,
            pass,
        });
    }
    Ok(())
}
