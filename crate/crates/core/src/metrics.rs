//! Confusion counts and fairness metrics.
//!
//! Group metrics are differences `group0 - group1` of a per-group rate, with
//! group identity taken verbatim from the attribute coding. The sign is
//! therefore arbitrary: recoding the attribute negates every difference.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Record};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("not estimable: {0}")]
    NotEstimable(String),
    #[error("neighbor count {k} invalid for {n} records")]
    InvalidNeighbors { k: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    StatisticalParity,
    BaseRate,
    EqualOpportunity,
    FalsePositiveRate,
    TrueNegativeRate,
    FalseOmissionRate,
    PredictiveParity,
    ErrorRate,
    AverageOdds,
    Theil,
    Consistency,
}

impl MetricId {
    pub const GROUP: [MetricId; 9] = [
        MetricId::StatisticalParity,
        MetricId::BaseRate,
        MetricId::EqualOpportunity,
        MetricId::FalsePositiveRate,
        MetricId::TrueNegativeRate,
        MetricId::FalseOmissionRate,
        MetricId::PredictiveParity,
        MetricId::ErrorRate,
        MetricId::AverageOdds,
    ];

    pub const ALL: [MetricId; 11] = [
        MetricId::StatisticalParity,
        MetricId::BaseRate,
        MetricId::EqualOpportunity,
        MetricId::FalsePositiveRate,
        MetricId::TrueNegativeRate,
        MetricId::FalseOmissionRate,
        MetricId::PredictiveParity,
        MetricId::ErrorRate,
        MetricId::AverageOdds,
        MetricId::Theil,
        MetricId::Consistency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::StatisticalParity => "statistical_parity",
            MetricId::BaseRate => "base_rate",
            MetricId::EqualOpportunity => "equal_opportunity",
            MetricId::FalsePositiveRate => "false_positive_rate",
            MetricId::TrueNegativeRate => "true_negative_rate",
            MetricId::FalseOmissionRate => "false_omission_rate",
            MetricId::PredictiveParity => "predictive_parity",
            MetricId::ErrorRate => "error_rate",
            MetricId::AverageOdds => "average_odds",
            MetricId::Theil => "theil",
            MetricId::Consistency => "consistency",
        }
    }

    /// True for the nine between-group differences.
    pub fn is_group(self) -> bool {
        !matches!(self, MetricId::Theil | MetricId::Consistency)
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| MetricError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn actual_positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn actual_negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn predicted_positives(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn predicted_negatives(&self) -> u64 {
        self.tn + self.fn_
    }

    fn add(&mut self, truth: bool, prediction: bool) {
        match (truth, prediction) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }
}

/// Confusion counts of the two groups of one attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupedConfusion {
    pub attribute: String,
    pub group0: ConfusionCounts,
    pub group1: ConfusionCounts,
}

impl GroupedConfusion {
    pub fn total(&self) -> u64 {
        self.group0.total() + self.group1.total()
    }
}

pub fn confusion_by_group(
    dataset: &Dataset,
    attribute: &str,
) -> Result<GroupedConfusion, MetricError> {
    let idx = dataset
        .attribute_index(attribute)
        .ok_or_else(|| MetricError::UnknownAttribute(attribute.to_string()))?;
    let gc = confusion_of(dataset.records().iter(), idx, attribute);
    debug_assert_eq!(gc.total(), dataset.len() as u64);
    Ok(gc)
}

pub(crate) fn confusion_of<'a>(
    records: impl Iterator<Item = &'a Record>,
    attribute_index: usize,
    attribute: &str,
) -> GroupedConfusion {
    let mut group0 = ConfusionCounts::default();
    let mut group1 = ConfusionCounts::default();
    for r in records {
        let g = if r.attributes[attribute_index] {
            &mut group1
        } else {
            &mut group0
        };
        g.add(r.truth, r.prediction);
    }
    GroupedConfusion {
        attribute: attribute.to_string(),
        group0,
        group1,
    }
}

/// One binomial proportion per group, the input of a Wald interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialPair {
    pub p0: f64,
    pub n0: u64,
    pub p1: f64,
    pub n1: u64,
}

impl BinomialPair {
    pub fn difference(&self) -> f64 {
        self.p0 - self.p1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub metric: MetricId,
    /// `None` when not estimable.
    pub point: Option<f64>,
    /// One pair for plain differences; `[tpr, fpr]` for average odds.
    pub components: Vec<BinomialPair>,
    pub estimable: bool,
    pub reason: Option<String>,
}

impl MetricEstimate {
    fn not_estimable(metric: MetricId, reason: String) -> Self {
        Self {
            metric,
            point: None,
            components: Vec::new(),
            estimable: false,
            reason: Some(reason),
        }
    }
}

type Rate = fn(&ConfusionCounts) -> (u64, u64);

/// `(numerator, denominator, what the denominator counts)` per group metric.
fn rate_of(metric: MetricId) -> Option<(Rate, &'static str)> {
    let r: (Rate, &str) = match metric {
        MetricId::StatisticalParity => (|c| (c.predicted_positives(), c.total()), "records"),
        MetricId::BaseRate => (|c| (c.actual_positives(), c.total()), "records"),
        MetricId::EqualOpportunity => (|c| (c.tp, c.actual_positives()), "actual positives"),
        MetricId::FalsePositiveRate => (|c| (c.fp, c.actual_negatives()), "actual negatives"),
        MetricId::TrueNegativeRate => (|c| (c.tn, c.actual_negatives()), "actual negatives"),
        MetricId::FalseOmissionRate => (|c| (c.fn_, c.predicted_negatives()), "predicted negatives"),
        MetricId::PredictiveParity => (|c| (c.tp, c.predicted_positives()), "predicted positives"),
        MetricId::ErrorRate => (|c| (c.fp + c.fn_, c.total()), "records"),
        MetricId::AverageOdds | MetricId::Theil | MetricId::Consistency => return None,
    };
    Some(r)
}

fn pair(
    gc: &GroupedConfusion,
    rate: Rate,
    what: &str,
) -> Result<BinomialPair, String> {
    let (k0, n0) = rate(&gc.group0);
    let (k1, n1) = rate(&gc.group1);
    for (g, n) in [(0, n0), (1, n1)] {
        if n == 0 {
            return Err(format!("no {what} in group {g}"));
        }
    }
    Ok(BinomialPair {
        p0: k0 as f64 / n0 as f64,
        n0,
        p1: k1 as f64 / n1 as f64,
        n1,
    })
}

/// Difference of one rate between the groups. Dataset-level metrics
/// (`theil`, `consistency`) yield a not-estimable value here.
pub fn group_metric(gc: &GroupedConfusion, metric: MetricId) -> MetricEstimate {
    let result = match metric {
        MetricId::AverageOdds => {
            let (tpr, _) = rate_of(MetricId::EqualOpportunity).unwrap();
            let (fpr, _) = rate_of(MetricId::FalsePositiveRate).unwrap();
            pair(gc, tpr, "actual positives").and_then(|t| {
                pair(gc, fpr, "actual negatives").map(|f| {
                    (0.5 * (f.difference() + t.difference()), vec![t, f])
                })
            })
        }
        m => match rate_of(m) {
            Some((rate, what)) => pair(gc, rate, what).map(|p| (p.difference(), vec![p])),
            None => Err(format!("{m} is a dataset-level metric")),
        },
    };
    match result {
        Ok((point, components)) => MetricEstimate {
            metric,
            point: Some(point),
            components,
            estimable: true,
            reason: None,
        },
        Err(reason) => MetricEstimate::not_estimable(metric, reason),
    }
}

/// Generalized entropy index with alpha = 1 over benefits
/// `b_i = y_pred_i - y_true_i + 1`, using `0 ln 0 = 0`.
pub fn theil_index(dataset: &Dataset) -> Result<f64, MetricError> {
    theil_of(dataset.records().iter())
}

pub(crate) fn theil_of<'a>(
    records: impl Iterator<Item = &'a Record> + Clone,
) -> Result<f64, MetricError> {
    let benefit = |r: &Record| r.prediction as u8 as f64 - r.truth as u8 as f64 + 1.0;
    let (n, sum) = records
        .clone()
        .fold((0usize, 0.0), |(n, s), r| (n + 1, s + benefit(r)));
    if n == 0 {
        return Err(MetricError::NotEstimable("no records".into()));
    }
    let mean = sum / n as f64;
    if mean == 0.0 {
        return Err(MetricError::NotEstimable(
            "mean benefit is zero (every record is a false negative)".into(),
        ));
    }
    let total: f64 = records
        .map(|r| {
            let ratio = benefit(r) / mean;
            if ratio == 0.0 {
                0.0
            } else {
                ratio * ratio.ln()
            }
        })
        .sum();
    Ok((total / n as f64).max(0.0))
}

pub const DEFAULT_NEIGHBORS: usize = 5;

/// `1 - mean_i |y_pred_i - mean(y_pred over the k nearest neighbours of i)|`
/// with Euclidean distance on raw features, excluding `i` itself and
/// breaking distance ties by record index.
pub fn consistency(dataset: &Dataset, k: usize) -> Result<f64, MetricError> {
    let records: Vec<&Record> = dataset.records().iter().collect();
    consistency_of(&records, None, k)
}

/// `sources[i]` identifies the original record behind `records[i]` in a
/// resample; copies of the same record are not each other's neighbours.
pub(crate) fn consistency_of(
    records: &[&Record],
    sources: Option<&[usize]>,
    k: usize,
) -> Result<f64, MetricError> {
    let n = records.len();
    if records.first().is_none_or(|r| r.features.is_empty()) {
        return Err(MetricError::NotEstimable("no features".into()));
    }
    if k == 0 || k >= n {
        return Err(MetricError::InvalidNeighbors { k, n });
    }
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    let mut deviation = 0.0;
    for (i, ri) in records.iter().enumerate() {
        candidates.clear();
        candidates.extend(
            records
                .iter()
                .enumerate()
                .filter(|&(j, _)| match sources {
                    Some(src) => src[j] != src[i],
                    None => j != i,
                })
                .map(|(j, rj)| (squared_distance(&ri.features, &rj.features), j)),
        );
        if candidates.len() < k {
            return Err(MetricError::InvalidNeighbors { k, n: candidates.len() + 1 });
        }
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        candidates.select_nth_unstable_by(k - 1, by_distance);
        let positives = candidates[..k]
            .iter()
            .filter(|&&(_, j)| records[j].prediction)
            .count();
        let own = ri.prediction as u8 as f64;
        deviation += (own - positives as f64 / k as f64).abs();
    }
    Ok(1.0 - deviation / n as f64)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
