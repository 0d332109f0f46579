//! Intra-metric scans (many attributes, one metric), inter-metric sweeps
//! (one attribute, many metrics), hacking flags, effect-size screening and
//! pre-registration manifests.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::metrics::{self, GroupedConfusion, MetricError, MetricEstimate, MetricId};
use crate::report::{AuditParameters, AuditReport, DatasetSummary, IndividualRow, ReportMetadata};
use crate::stats::{self, BootstrapConfig, ConfidenceInterval, Level, StatsError};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("no attributes to audit")]
    NoAttributes,
    #[error("inter-metric audit needs at least 2 group metrics, got {0}")]
    TooFewMetrics(usize),
    #[error("{0} is a dataset-level metric and cannot be scanned across attributes")]
    NotGroupMetric(MetricId),
    #[error("`{0}` requested more than once")]
    Duplicate(String),
    #[error("effect-size threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    /// Significant at the nominal alpha, not after correction over attributes.
    SignificanceLostUnderCorrection,
    /// Significant at the nominal alpha, not after correction over metrics.
    SignificanceGainedWithoutCorrection,
    MetricDisagreement,
    UndeclaredAttribute,
    UndeclaredMetric,
    BelowEffectThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HackingFlag {
    pub kind: FlagKind,
    pub attribute: Option<String>,
    pub metric: Option<MetricId>,
    /// Significance levels the verdict depends on (nominal first).
    pub alphas: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotEstimable {
    pub subject: String,
    pub reason: String,
}

/// Mean Wald half-width over the scanned attributes at one level, for
/// drawing reference markers on a histogram of the differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaMarker {
    pub effective_alpha: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraRow {
    pub attribute: String,
    pub estimate: MetricEstimate,
    pub uncorrected: ConfidenceInterval,
    pub corrected: ConfidenceInterval,
    pub significant_uncorrected: bool,
    pub significant_corrected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraAuditResult {
    pub metric: MetricId,
    pub alpha: f64,
    pub corrected_alpha: f64,
    /// Bonferroni divisor: the number of attributes requested.
    pub tested: usize,
    pub rows: Vec<IntraRow>,
    pub not_estimable: Vec<NotEstimable>,
    pub significant_uncorrected: usize,
    pub significant_corrected: usize,
    pub reference_markers: Vec<AlphaMarker>,
    pub flags: Vec<HackingFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterRow {
    pub metric: MetricId,
    pub estimate: MetricEstimate,
    pub uncorrected: Option<ConfidenceInterval>,
    pub corrected: Option<ConfidenceInterval>,
    pub significant_uncorrected: bool,
    pub significant_corrected: bool,
}

/// Signs of the estimable differences (`group0 - group1`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionTally {
    pub group0_higher: usize,
    pub group1_higher: usize,
    pub tied: usize,
}

impl DirectionTally {
    pub fn total(&self) -> usize {
        self.group0_higher + self.group1_higher + self.tied
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterAuditResult {
    pub attribute: String,
    pub alpha: f64,
    pub corrected_alpha: f64,
    pub family_size: usize,
    pub rows: Vec<InterRow>,
    pub significant_corrected: usize,
    pub tally: DirectionTally,
    pub disagreement: bool,
    pub global_reason: Option<String>,
    pub flags: Vec<HackingFlag>,
}

fn check_unique<T: std::fmt::Display + Eq + std::hash::Hash>(items: &[T]) -> Result<(), AuditError> {
    let mut seen = HashSet::new();
    for i in items {
        if !seen.insert(i) {
            return Err(AuditError::Duplicate(i.to_string()));
        }
    }
    Ok(())
}

fn confusions(dataset: &Dataset, attributes: &[String]) -> Result<Vec<GroupedConfusion>, AuditError> {
    attributes
        .par_iter()
        .map(|a| metrics::confusion_by_group(dataset, a).map_err(AuditError::from))
        .collect()
}

/// Scan one group metric over `attributes`, with Wald intervals at `alpha`
/// and at `alpha / attributes.len()`.
pub fn intra_audit(
    dataset: &Dataset,
    metric: MetricId,
    attributes: &[String],
    alpha: f64,
) -> Result<IntraAuditResult, AuditError> {
    if attributes.is_empty() {
        return Err(AuditError::NoAttributes);
    }
    if !metric.is_group() {
        return Err(AuditError::NotGroupMetric(metric));
    }
    check_unique(attributes)?;
    let gcs = confusions(dataset, attributes)?;
    intra_from(&gcs, metric, alpha)
}

fn intra_from(
    gcs: &[GroupedConfusion],
    metric: MetricId,
    alpha: f64,
) -> Result<IntraAuditResult, AuditError> {
    let m = gcs.len();
    let raw = Level::uncorrected(alpha);
    let corrected_level = Level::bonferroni(alpha, m);
    let corrected_alpha = corrected_level.effective()?;

    let cells: Vec<Result<IntraRow, NotEstimable>> = gcs
        .par_iter()
        .map(|gc| {
            let estimate = metrics::group_metric(gc, metric);
            let intervals = stats::estimate_interval(&estimate, raw)
                .and_then(|u| stats::estimate_interval(&estimate, corrected_level).map(|c| (u, c)));
            match intervals {
                Ok((uncorrected, corrected)) => Ok(IntraRow {
                    attribute: gc.attribute.clone(),
                    significant_uncorrected: uncorrected.excludes_zero(),
                    significant_corrected: corrected.excludes_zero(),
                    estimate,
                    uncorrected,
                    corrected,
                }),
                Err(e) => Err(NotEstimable {
                    subject: gc.attribute.clone(),
                    reason: estimate.reason.clone().unwrap_or_else(|| e.to_string()),
                }),
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut not_estimable = Vec::new();
    for c in cells {
        match c {
            Ok(r) => rows.push(r),
            Err(n) => not_estimable.push(n),
        }
    }

    let flags = rows
        .iter()
        .filter(|r| r.significant_uncorrected && !r.significant_corrected)
        .map(|r| HackingFlag {
            kind: FlagKind::SignificanceLostUnderCorrection,
            attribute: Some(r.attribute.clone()),
            metric: Some(metric),
            alphas: vec![alpha, corrected_alpha],
            detail: format!(
                "0 outside [{:.4}, {:.4}] at alpha {alpha} but inside [{:.4}, {:.4}] at alpha {alpha}/{m}",
                r.uncorrected.lower, r.uncorrected.upper, r.corrected.lower, r.corrected.upper
            ),
        })
        .collect();

    let mean_half = |f: fn(&IntraRow) -> f64| {
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(f).sum::<f64>() / rows.len() as f64
        }
    };
    let reference_markers = vec![
        AlphaMarker {
            effective_alpha: alpha,
            half_width: mean_half(|r| r.uncorrected.half_width()),
        },
        AlphaMarker {
            effective_alpha: corrected_alpha,
            half_width: mean_half(|r| r.corrected.half_width()),
        },
    ];

    Ok(IntraAuditResult {
        metric,
        alpha,
        corrected_alpha,
        tested: m,
        significant_uncorrected: rows.iter().filter(|r| r.significant_uncorrected).count(),
        significant_corrected: rows.iter().filter(|r| r.significant_corrected).count(),
        rows,
        not_estimable,
        reference_markers,
        flags,
    })
}

/// Evaluate several group metrics on one attribute, correcting over the
/// number of group metrics. Dataset-level metrics in `metrics` are ignored
/// here; see [`full_audit`].
pub fn inter_audit(
    dataset: &Dataset,
    attribute: &str,
    metrics: &[MetricId],
    alpha: f64,
) -> Result<InterAuditResult, AuditError> {
    let family = metrics.iter().filter(|m| m.is_group()).count();
    inter_audit_with_family(dataset, attribute, metrics, alpha, family)
}

/// [`inter_audit`] with an explicit Bonferroni family size, which must be
/// at least the number of group metrics.
pub fn inter_audit_with_family(
    dataset: &Dataset,
    attribute: &str,
    metrics: &[MetricId],
    alpha: f64,
    family_size: usize,
) -> Result<InterAuditResult, AuditError> {
    let group: Vec<MetricId> = metrics.iter().copied().filter(|m| m.is_group()).collect();
    if group.len() < 2 {
        return Err(AuditError::TooFewMetrics(group.len()));
    }
    check_unique(&group)?;
    let gc = metrics::confusion_by_group(dataset, attribute)?;
    inter_from(&gc, &group, alpha, family_size.max(group.len()))
}

fn inter_from(
    gc: &GroupedConfusion,
    group: &[MetricId],
    alpha: f64,
    family_size: usize,
) -> Result<InterAuditResult, AuditError> {
    let raw = Level::uncorrected(alpha);
    let corrected_level = Level::bonferroni(alpha, family_size);
    let corrected_alpha = corrected_level.effective()?;

    let global_reason = [(0, &gc.group0), (1, &gc.group1)]
        .into_iter()
        .find(|(_, c)| c.total() == 0)
        .map(|(g, _)| format!("group {g} of `{}` is empty", gc.attribute));

    let rows: Vec<InterRow> = group
        .iter()
        .map(|&metric| {
            let estimate = metrics::group_metric(gc, metric);
            let uncorrected = stats::estimate_interval(&estimate, raw).ok();
            let corrected = stats::estimate_interval(&estimate, corrected_level).ok();
            InterRow {
                metric,
                significant_uncorrected: uncorrected.is_some_and(|c| c.excludes_zero()),
                significant_corrected: corrected.is_some_and(|c| c.excludes_zero()),
                estimate,
                uncorrected,
                corrected,
            }
        })
        .collect();

    let mut tally = DirectionTally::default();
    for p in rows.iter().filter_map(|r| r.estimate.point) {
        match p.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => tally.group0_higher += 1,
            Some(std::cmp::Ordering::Less) => tally.group1_higher += 1,
            _ => tally.tied += 1,
        }
    }

    let estimable: Vec<&InterRow> = rows.iter().filter(|r| r.corrected.is_some()).collect();
    let significant: Vec<&InterRow> = estimable.iter().copied().filter(|r| r.significant_corrected).collect();
    let insignificant: Vec<&InterRow> = estimable.iter().copied().filter(|r| !r.significant_corrected).collect();
    let sig_pos = significant.iter().any(|r| r.estimate.point.unwrap_or(0.0) > 0.0);
    let sig_neg = significant.iter().any(|r| r.estimate.point.unwrap_or(0.0) < 0.0);
    let disagreement = (!significant.is_empty() && !insignificant.is_empty()) || (sig_pos && sig_neg);

    let names = |rs: &[&InterRow]| {
        rs.iter().map(|r| r.metric.as_str()).collect::<Vec<_>>().join(", ")
    };
    let mut flags: Vec<HackingFlag> = rows
        .iter()
        .filter(|r| r.significant_uncorrected && !r.significant_corrected)
        .map(|r| HackingFlag {
            kind: FlagKind::SignificanceGainedWithoutCorrection,
            attribute: Some(gc.attribute.clone()),
            metric: Some(r.metric),
            alphas: vec![alpha, corrected_alpha],
            detail: format!(
                "significant only without correction over {family_size} metrics"
            ),
        })
        .collect();
    if disagreement {
        flags.push(HackingFlag {
            kind: FlagKind::MetricDisagreement,
            attribute: Some(gc.attribute.clone()),
            metric: None,
            alphas: vec![alpha, corrected_alpha],
            detail: format!(
                "significant at alpha {alpha}/{family_size}: [{}]; not significant: [{}]{}",
                names(&significant),
                names(&insignificant),
                if sig_pos && sig_neg { "; significant in both directions" } else { "" }
            ),
        });
    }

    Ok(InterAuditResult {
        attribute: gc.attribute.clone(),
        alpha,
        corrected_alpha,
        family_size,
        significant_corrected: significant.len(),
        rows,
        tally,
        disagreement,
        global_reason,
        flags,
    })
}

/// Which family the headline (combined) table corrects over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionScope {
    /// Number of attributes.
    Intra,
    /// Number of group metrics.
    Inter,
    /// Attributes times group metrics.
    #[default]
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedCell {
    pub attribute: String,
    pub metric: MetricId,
    pub point: f64,
    pub interval: ConfidenceInterval,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedTable {
    pub scope: CorrectionScope,
    pub divisor: usize,
    pub alpha: f64,
    pub effective_alpha: f64,
    pub cells: Vec<CombinedCell>,
    pub significant: usize,
}

/// Significant results smaller than `threshold` in absolute value.
pub fn effect_size_screen(
    cells: &[CombinedCell],
    threshold: f64,
) -> Result<Vec<HackingFlag>, AuditError> {
    if !(threshold >= 0.0) {
        return Err(AuditError::NegativeThreshold(threshold));
    }
    Ok(cells
        .iter()
        .filter(|c| c.significant && c.point.abs() < threshold)
        .map(|c| HackingFlag {
            kind: FlagKind::BelowEffectThreshold,
            attribute: Some(c.attribute.clone()),
            metric: Some(c.metric),
            alphas: vec![c.interval.alpha, c.interval.effective_alpha],
            detail: format!("|{:.6}| below effect-size threshold {threshold}", c.point),
        })
        .collect())
}

/// A priori declaration of what an audit will look at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub attributes: Vec<String>,
    pub metrics: Vec<MetricId>,
    pub alpha: f64,
    pub effect_size_threshold: f64,
    #[serde(default)]
    pub rationale: BTreeMap<String, String>,
    #[serde(default)]
    pub created_at: Option<String>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, AuditError> {
        let m: Manifest =
            serde_json::from_str(text).map_err(|e| AuditError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AuditError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), AuditError> {
        if self.attributes.is_empty() || self.metrics.is_empty() {
            return Err(AuditError::Manifest(
                "attribute and metric lists must be non-empty".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AuditError::Manifest(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.effect_size_threshold >= 0.0) {
            return Err(AuditError::Manifest(format!(
                "negative effect-size threshold {}",
                self.effect_size_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestCheck {
    pub flags: Vec<HackingFlag>,
    /// Declared but not requested: a selective-reporting signal.
    pub omitted_attributes: Vec<String>,
    pub omitted_metrics: Vec<MetricId>,
    pub notes: Vec<String>,
}

pub fn check_manifest(
    manifest: &Manifest,
    requested_attributes: &[String],
    requested_metrics: &[MetricId],
) -> ManifestCheck {
    let alphas = vec![manifest.alpha];
    let mut flags: Vec<HackingFlag> = requested_attributes
        .iter()
        .filter(|a| !manifest.attributes.contains(a))
        .map(|a| HackingFlag {
            kind: FlagKind::UndeclaredAttribute,
            attribute: Some(a.clone()),
            metric: None,
            alphas: alphas.clone(),
            detail: format!("attribute `{a}` is not declared in the manifest"),
        })
        .collect();
    flags.extend(
        requested_metrics
            .iter()
            .filter(|m| !manifest.metrics.contains(m))
            .map(|&m| HackingFlag {
                kind: FlagKind::UndeclaredMetric,
                attribute: None,
                metric: Some(m),
                alphas: alphas.clone(),
                detail: format!("metric `{m}` is not declared in the manifest"),
            }),
    );
    let notes = manifest
        .metrics
        .iter()
        .filter(|m| !manifest.rationale.contains_key(m.as_str()))
        .map(|m| format!("no rationale given for declared metric `{m}`"))
        .collect();
    ManifestCheck {
        flags,
        omitted_attributes: manifest
            .attributes
            .iter()
            .filter(|a| !requested_attributes.contains(a))
            .cloned()
            .collect(),
        omitted_metrics: manifest
            .metrics
            .iter()
            .copied()
            .filter(|m| !requested_metrics.contains(m))
            .collect(),
        notes,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub attributes: Vec<String>,
    pub metrics: Vec<MetricId>,
    pub alpha: f64,
    pub scope: CorrectionScope,
    pub bootstrap: BootstrapConfig,
    /// Overrides the manifest threshold when set.
    pub effect_size_threshold: Option<f64>,
    /// Count theil/consistency in the inter-metric Bonferroni family.
    pub individual_in_family: bool,
}

impl AuditConfig {
    pub fn new(attributes: Vec<String>, metrics: Vec<MetricId>) -> Self {
        Self {
            attributes,
            metrics,
            alpha: 0.05,
            scope: CorrectionScope::default(),
            bootstrap: BootstrapConfig::default(),
            effect_size_threshold: None,
            individual_in_family: false,
        }
    }
}

/// Runs every intra scan and inter sweep, the corrected combined table,
/// dataset-level metrics with bootstrap intervals, effect-size screening,
/// and manifest checks.
pub fn full_audit(
    dataset: &Dataset,
    config: &AuditConfig,
    manifest: Option<&Manifest>,
) -> Result<AuditReport, AuditError> {
    if config.attributes.is_empty() {
        return Err(AuditError::NoAttributes);
    }
    check_unique(&config.attributes)?;
    check_unique(&config.metrics)?;
    let group: Vec<MetricId> = config.metrics.iter().copied().filter(|m| m.is_group()).collect();
    let individual: Vec<MetricId> = config.metrics.iter().copied().filter(|m| !m.is_group()).collect();
    let threshold = config
        .effect_size_threshold
        .or(manifest.map(|m| m.effect_size_threshold))
        .unwrap_or(0.0);
    if !(threshold >= 0.0) {
        return Err(AuditError::NegativeThreshold(threshold));
    }

    let gcs = confusions(dataset, &config.attributes)?;

    let intra: Vec<IntraAuditResult> = group
        .iter()
        .map(|&m| intra_from(&gcs, m, config.alpha))
        .collect::<Result<_, _>>()?;

    let family = group.len() + if config.individual_in_family { individual.len() } else { 0 };
    let inter: Vec<InterAuditResult> = if group.len() >= 2 {
        gcs.par_iter()
            .map(|gc| inter_from(gc, &group, config.alpha, family))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    let combined = if group.is_empty() {
        None
    } else {
        let divisor = match config.scope {
            CorrectionScope::Intra => config.attributes.len(),
            CorrectionScope::Inter => family,
            CorrectionScope::Combined => config.attributes.len() * group.len(),
        };
        let level = Level::bonferroni(config.alpha, divisor);
        let mut cells = Vec::new();
        for gc in &gcs {
            for &metric in &group {
                let estimate = metrics::group_metric(gc, metric);
                if let (Some(point), Ok(interval)) =
                    (estimate.point, stats::estimate_interval(&estimate, level))
                {
                    cells.push(CombinedCell {
                        attribute: gc.attribute.clone(),
                        metric,
                        point,
                        significant: interval.excludes_zero(),
                        interval,
                    });
                }
            }
        }
        Some(CombinedTable {
            scope: config.scope,
            divisor,
            alpha: config.alpha,
            effective_alpha: level.effective()?,
            significant: cells.iter().filter(|c| c.significant).count(),
            cells,
        })
    };

    let individual_rows: Vec<IndividualRow> = individual
        .iter()
        .map(|&m| individual_row(dataset, m, config))
        .collect();

    let mut flags: Vec<HackingFlag> = intra.iter().flat_map(|r| r.flags.iter().cloned()).collect();
    flags.extend(inter.iter().flat_map(|r| r.flags.iter().cloned()));
    if let Some(c) = &combined {
        flags.extend(effect_size_screen(&c.cells, threshold)?);
    }
    let manifest_check = manifest.map(|m| {
        let mut check = check_manifest(m, &config.attributes, &config.metrics);
        if m.alpha != config.alpha {
            check
                .notes
                .push(format!("audit alpha {} differs from declared alpha {}", config.alpha, m.alpha));
        }
        check
    });
    if let Some(check) = &manifest_check {
        flags.extend(check.flags.iter().cloned());
    }

    Ok(AuditReport {
        metadata: ReportMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            dataset: DatasetSummary {
                fingerprint: dataset.fingerprint(),
                records: dataset.len(),
                attributes: dataset.attribute_names().len(),
                features: dataset.feature_names().len(),
            },
            parameters: AuditParameters {
                attributes: config.attributes.clone(),
                metrics: config.metrics.clone(),
                alpha: config.alpha,
                correction_scope: config.scope,
                effect_size_threshold: threshold,
                individual_in_family: config.individual_in_family,
                bootstrap: config.bootstrap,
            },
            invocation: None,
        },
        intra,
        inter,
        combined,
        individual: individual_rows,
        flags,
        manifest: manifest_check,
    })
}

fn individual_row(dataset: &Dataset, metric: MetricId, config: &AuditConfig) -> IndividualRow {
    let value = match metric {
        MetricId::Theil => metrics::theil_index(dataset),
        _ => metrics::consistency(dataset, config.bootstrap.neighbors),
    };
    let value = match value {
        Ok(v) => v,
        Err(e) => return IndividualRow::not_estimable(metric, e.to_string()),
    };
    match stats::bootstrap_interval(
        dataset,
        None,
        metric,
        Level::uncorrected(config.alpha),
        &config.bootstrap,
    ) {
        Ok(b) => IndividualRow {
            metric,
            value: Some(value),
            interval: Some(b.interval),
            replicates: b.replicates,
            dropped: b.dropped,
            reason: None,
        },
        Err(e) => IndividualRow {
            value: Some(value),
            ..IndividualRow::not_estimable(metric, e.to_string())
        },
    }
}
