//! Normal quantiles, Wald intervals for binomial differences, Bonferroni
//! correction, percentile bootstrap, and Monte Carlo coverage checks.
//!
//! All randomness comes from explicit seeds. Replicate `i` of a resampling
//! run draws from ChaCha stream `i` of the seed, so results do not depend on
//! how replicates are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Record};
use crate::metrics::{self, MetricError, MetricId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("significance level {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("proportion {0} outside [0, 1]")]
    InvalidProportion(f64),
    #[error("Bonferroni correction needs at least one test")]
    NoTests,
    #[error("{what} must be at least {min}, got {got}")]
    TooFew {
        what: &'static str,
        min: usize,
        got: usize,
    },
    #[error("not estimable: {0}")]
    NotEstimable(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Multiple-comparison adjustment applied to a nominal alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Correction {
    None,
    Bonferroni { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Wald,
    Bootstrap,
}

/// A nominal significance level together with its correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub alpha: f64,
    pub correction: Correction,
}

impl Level {
    pub fn uncorrected(alpha: f64) -> Self {
        Self {
            alpha,
            correction: Correction::None,
        }
    }

    pub fn bonferroni(alpha: f64, m: usize) -> Self {
        Self {
            alpha,
            correction: Correction::Bonferroni { m },
        }
    }

    /// The level actually used for the quantile.
    pub fn effective(&self) -> Result<f64, StatsError> {
        check_alpha(self.alpha)?;
        match self.correction {
            Correction::None => Ok(self.alpha),
            Correction::Bonferroni { m } => bonferroni(self.alpha, m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    /// Nominal (family) level before correction.
    pub alpha: f64,
    pub effective_alpha: f64,
    pub correction: Correction,
    pub method: IntervalMethod,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// The significance verdict used throughout: 0 lies outside the interval.
    pub fn excludes_zero(&self) -> bool {
        !self.contains(0.0)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.width()
    }

    pub fn level(&self) -> Level {
        Level {
            alpha: self.alpha,
            correction: self.correction,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), StatsError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidAlpha(alpha))
    }
}

/// Inverse standard-normal CDF.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// one Halley step against `erfc`, which brings the error to machine level.
pub fn normal_quantile(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::InvalidProbability(p));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };

    // Work in the smaller tail so the residual keeps its precision.
    let (target, sign) = if p > 0.5 { (1.0 - p, -1.0) } else { (p, 1.0) };
    let xs = sign * x;
    let residual = 0.5 * libm::erfc(-xs / std::f64::consts::SQRT_2) - target;
    let u = residual * (2.0 * std::f64::consts::PI).sqrt() * (xs * xs / 2.0).exp();
    x = sign * (xs - u / (1.0 + xs * u / 2.0));
    Ok(x)
}

/// `1 - alpha/2` standard-normal quantile.
pub fn z_critical(alpha: f64) -> Result<f64, StatsError> {
    check_alpha(alpha)?;
    normal_quantile(1.0 - alpha / 2.0)
}

pub fn bonferroni(alpha: f64, m: usize) -> Result<f64, StatsError> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(StatsError::NoTests);
    }
    Ok(alpha / m as f64)
}

fn check_sample(p: f64, n: u64) -> Result<(), StatsError> {
    if n == 0 {
        return Err(StatsError::ZeroSampleSize);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::InvalidProportion(p));
    }
    Ok(())
}

fn binomial_variance(p: f64, n: u64) -> f64 {
    p * (1.0 - p) / n as f64
}

/// Wald interval for `p1 - p2` at an uncorrected level.
pub fn wald_interval(
    p1: f64,
    n1: u64,
    p2: f64,
    n2: u64,
    alpha: f64,
) -> Result<ConfidenceInterval, StatsError> {
    wald_interval_at(p1, n1, p2, n2, Level::uncorrected(alpha))
}

/// `(p1 - p2) +/- z * sqrt(p1(1-p1)/n1 + p2(1-p2)/n2)`, unclipped.
pub fn wald_interval_at(
    p1: f64,
    n1: u64,
    p2: f64,
    n2: u64,
    level: Level,
) -> Result<ConfidenceInterval, StatsError> {
    check_sample(p1, n1)?;
    check_sample(p2, n2)?;
    let variance = binomial_variance(p1, n1) + binomial_variance(p2, n2);
    symmetric(p1 - p2, variance, level)
}

fn symmetric(center: f64, variance: f64, level: Level) -> Result<ConfidenceInterval, StatsError> {
    let effective_alpha = level.effective()?;
    let half = z_critical(effective_alpha)? * variance.sqrt();
    Ok(ConfidenceInterval {
        lower: center - half,
        upper: center + half,
        alpha: level.alpha,
        effective_alpha,
        correction: level.correction,
        method: IntervalMethod::Wald,
    })
}

/// Group rates entering the average-odds interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageOddsInput {
    pub tpr0: f64,
    pub n_pos0: u64,
    pub tpr1: f64,
    pub n_pos1: u64,
    pub fpr0: f64,
    pub n_neg0: u64,
    pub fpr1: f64,
    pub n_neg1: u64,
}

/// Interval for `(dTPR + dFPR) / 2`. The TPR and FPR differences come from
/// disjoint records (actual positives vs. negatives) and are treated as
/// independent, so the variance is a quarter of the sum.
pub fn average_odds_interval(
    input: &AverageOddsInput,
    level: Level,
) -> Result<ConfidenceInterval, StatsError> {
    let AverageOddsInput {
        tpr0,
        n_pos0,
        tpr1,
        n_pos1,
        fpr0,
        n_neg0,
        fpr1,
        n_neg1,
    } = *input;
    for (p, n) in [(tpr0, n_pos0), (tpr1, n_pos1), (fpr0, n_neg0), (fpr1, n_neg1)] {
        check_sample(p, n).map_err(|e| match e {
            StatsError::ZeroSampleSize => {
                StatsError::NotEstimable("zero denominator in average odds".into())
            }
            other => other,
        })?;
    }
    let var_tpr = binomial_variance(tpr0, n_pos0) + binomial_variance(tpr1, n_pos1);
    let var_fpr = binomial_variance(fpr0, n_neg0) + binomial_variance(fpr1, n_neg1);
    symmetric(
        0.5 * ((tpr0 - tpr1) + (fpr0 - fpr1)),
        0.25 * (var_tpr + var_fpr),
        level,
    )
}

/// Wald interval for any estimable group metric.
pub fn estimate_interval(
    estimate: &metrics::MetricEstimate,
    level: Level,
) -> Result<ConfidenceInterval, StatsError> {
    if !estimate.estimable {
        return Err(StatsError::NotEstimable(
            estimate.reason.clone().unwrap_or_default(),
        ));
    }
    match estimate.components.as_slice() {
        [p] => wald_interval_at(p.p0, p.n0, p.p1, p.n1, level),
        [t, f] => average_odds_interval(
            &AverageOddsInput {
                tpr0: t.p0,
                n_pos0: t.n0,
                tpr1: t.p1,
                n_pos1: t.n1,
                fpr0: f.p0,
                n_neg0: f.n0,
                fpr1: f.p1,
                n_neg1: f.n1,
            },
            level,
        ),
        _ => Err(StatsError::NotEstimable(format!(
            "{} has no binomial components",
            estimate.metric
        ))),
    }
}

pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 2000;
pub const MIN_BOOTSTRAP_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Neighbour count when the statistic is `consistency`.
    pub neighbors: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_BOOTSTRAP_REPLICATES,
            seed: 0,
            neighbors: metrics::DEFAULT_NEIGHBORS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub point: f64,
    pub interval: ConfidenceInterval,
    pub replicates: usize,
    /// Replicates on which the statistic was not estimable.
    pub dropped: usize,
}

/// Evaluates one metric on a (re)sample of records.
fn statistic(
    records: &[&Record],
    sources: Option<&[usize]>,
    attribute: Option<usize>,
    metric: MetricId,
    neighbors: usize,
) -> Result<f64, String> {
    match metric {
        MetricId::Theil => metrics::theil_of(records.iter().copied()).map_err(|e| e.to_string()),
        MetricId::Consistency => {
            metrics::consistency_of(records, sources, neighbors).map_err(|e| e.to_string())
        }
        m => {
            let idx = attribute.ok_or_else(|| format!("{m} needs an attribute"))?;
            let gc = metrics::confusion_of(records.iter().copied(), idx, "");
            let e = metrics::group_metric(&gc, m);
            e.point.ok_or_else(|| e.reason.unwrap_or_default())
        }
    }
}

/// Percentile bootstrap: resample records with replacement and take the
/// `alpha/2` and `1 - alpha/2` quantiles (linear interpolation) of the
/// replicate distribution. `attribute` is ignored for dataset-level metrics.
pub fn bootstrap_interval(
    dataset: &Dataset,
    attribute: Option<&str>,
    metric: MetricId,
    level: Level,
    config: &BootstrapConfig,
) -> Result<BootstrapOutcome, StatsError> {
    if config.replicates < MIN_BOOTSTRAP_REPLICATES {
        return Err(StatsError::TooFew {
            what: "bootstrap replicates",
            min: MIN_BOOTSTRAP_REPLICATES,
            got: config.replicates,
        });
    }
    let effective_alpha = level.effective()?;
    let attribute_index = if metric.is_group() {
        let name = attribute.ok_or_else(|| {
            StatsError::NotEstimable(format!("{metric} needs an attribute"))
        })?;
        Some(
            dataset
                .attribute_index(name)
                .ok_or_else(|| MetricError::UnknownAttribute(name.to_string()))?,
        )
    } else {
        None
    };

    let all: Vec<&Record> = dataset.records().iter().collect();
    let point = statistic(&all, None, attribute_index, metric, config.neighbors)
        .map_err(StatsError::NotEstimable)?;

    let n = all.len();
    let replicates: Vec<Option<f64>> = (0..config.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            let drawn: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let sample: Vec<&Record> = drawn.iter().map(|&i| all[i]).collect();
            statistic(&sample, Some(&drawn), attribute_index, metric, config.neighbors).ok()
        })
        .collect();
    let mut values: Vec<f64> = replicates.into_iter().flatten().collect();
    let dropped = config.replicates - values.len();
    if 2 * dropped > config.replicates {
        return Err(StatsError::NotEstimable(format!(
            "{metric} not estimable on {dropped} of {} bootstrap replicates",
            config.replicates
        )));
    }
    values.sort_by(f64::total_cmp);
    Ok(BootstrapOutcome {
        point,
        interval: ConfidenceInterval {
            lower: quantile_sorted(&values, effective_alpha / 2.0),
            upper: quantile_sorted(&values, 1.0 - effective_alpha / 2.0),
            alpha: level.alpha,
            effective_alpha,
            correction: level.correction,
            method: IntervalMethod::Bootstrap,
        },
        replicates: config.replicates,
        dropped,
    })
}

/// Linear-interpolation quantile of sorted, non-empty data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const MIN_COVERAGE_TRIALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub p1: f64,
    pub p2: f64,
    pub n1: u64,
    pub n2: u64,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    /// Nominal coverage `1 - alpha`.
    pub nominal: f64,
    pub empirical: f64,
    pub trials: usize,
    pub config: CoverageConfig,
}

/// Draws `trials` pairs of binomial samples and reports how often the Wald
/// interval covers the true `p1 - p2`.
pub fn coverage_simulation(config: &CoverageConfig) -> Result<CoverageResult, StatsError> {
    let CoverageConfig {
        p1,
        p2,
        n1,
        n2,
        alpha,
        trials,
        seed,
    } = *config;
    if trials < MIN_COVERAGE_TRIALS {
        return Err(StatsError::TooFew {
            what: "coverage trials",
            min: MIN_COVERAGE_TRIALS,
            got: trials,
        });
    }
    check_alpha(alpha)?;
    check_sample(p1, n1)?;
    check_sample(p2, n2)?;
    let z = z_critical(alpha)?;
    let b1 = Binomial::new(n1, p1).map_err(|_| StatsError::InvalidProportion(p1))?;
    let b2 = Binomial::new(n2, p2).map_err(|_| StatsError::InvalidProportion(p2))?;
    let truth = p1 - p2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = 0usize;
    for _ in 0..trials {
        let h1 = b1.sample(&mut rng) as f64 / n1 as f64;
        let h2 = b2.sample(&mut rng) as f64 / n2 as f64;
        let half = z * (binomial_variance(h1, n1) + binomial_variance(h2, n2)).sqrt();
        let center = h1 - h2;
        if center - half <= truth && truth <= center + half {
            covered += 1;
        }
    }
    Ok(CoverageResult {
        nominal: 1.0 - alpha,
        empirical: covered as f64 / trials as f64,
        trials,
        config: *config,
    })
}

/// Probability that at least one of `m` simultaneous true-null Wald tests
/// (equal proportions `p` in both groups) rejects at `alpha` with Bonferroni
/// correction over the family.
pub fn familywise_error_simulation(
    p: f64,
    n1: u64,
    n2: u64,
    alpha: f64,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<f64, StatsError> {
    if trials < MIN_COVERAGE_TRIALS {
        return Err(StatsError::TooFew {
            what: "coverage trials",
            min: MIN_COVERAGE_TRIALS,
            got: trials,
        });
    }
    check_sample(p, n1)?;
    check_sample(p, n2)?;
    let z = z_critical(bonferroni(alpha, m)?)?;
    let b1 = Binomial::new(n1, p).map_err(|_| StatsError::InvalidProportion(p))?;
    let b2 = Binomial::new(n2, p).map_err(|_| StatsError::InvalidProportion(p))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut families_with_error = 0usize;
    for _ in 0..trials {
        let any = (0..m).fold(false, |hit, _| {
            let h1 = b1.sample(&mut rng) as f64 / n1 as f64;
            let h2 = b2.sample(&mut rng) as f64 / n2 as f64;
            let half = z * (binomial_variance(h1, n1) + binomial_variance(h2, n2)).sqrt();
            hit | ((h1 - h2).abs() > half)
        });
        families_with_error += any as usize;
    }
    Ok(families_with_error as f64 / trials as f64)
}
