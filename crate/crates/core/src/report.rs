//! Audit reports: canonical JSON, GitHub-flavoured markdown, and SVG
//! histograms / forest plots.
//!
//! Renderers only format numbers already present in the report; nothing
//! here recomputes a statistic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audit::{
    AlphaMarker, CombinedTable, CorrectionScope, FlagKind, HackingFlag, InterAuditResult,
    IntraAuditResult, ManifestCheck,
};
use crate::metrics::MetricId;
use crate::stats::{BootstrapConfig, ConfidenceInterval, Correction};

/// JSON schema the output of [`to_json`] conforms to.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report-schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub fingerprint: String,
    pub records: usize,
    pub attributes: usize,
    pub features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditParameters {
    pub attributes: Vec<String>,
    pub metrics: Vec<MetricId>,
    pub alpha: f64,
    pub correction_scope: CorrectionScope,
    pub effect_size_threshold: f64,
    pub individual_in_family: bool,
    pub bootstrap: BootstrapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub dataset: DatasetSummary,
    pub parameters: AuditParameters,
    /// Effective command-line configuration, when run from the CLI.
    pub invocation: Option<BTreeMap<String, String>>,
}

/// Dataset-level metric with its percentile-bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRow {
    pub metric: MetricId,
    pub value: Option<f64>,
    pub interval: Option<ConfidenceInterval>,
    pub replicates: usize,
    pub dropped: usize,
    pub reason: Option<String>,
}

impl IndividualRow {
    pub fn not_estimable(metric: MetricId, reason: String) -> Self {
        Self {
            metric,
            value: None,
            interval: None,
            replicates: 0,
            dropped: 0,
            reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub metadata: ReportMetadata,
    pub intra: Vec<IntraAuditResult>,
    pub inter: Vec<InterAuditResult>,
    pub combined: Option<CombinedTable>,
    pub individual: Vec<IndividualRow>,
    pub flags: Vec<HackingFlag>,
    pub manifest: Option<ManifestCheck>,
}

impl AuditReport {
    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    fn is_empty(&self) -> bool {
        self.intra.is_empty()
            && self.inter.is_empty()
            && self.combined.as_ref().is_none_or(|c| c.cells.is_empty())
            && self.individual.is_empty()
    }
}

/// Canonical JSON: keys sorted, floats rounded to 6 significant digits,
/// two-space indentation, trailing newline.
pub fn to_json(report: &AuditReport) -> Vec<u8> {
    let value = serde_json::to_value(report).expect("report serializes");
    let mut out = String::new();
    write_canonical(&value, 0, &mut out);
    out.push('\n');
    out.into_bytes()
}

fn write_canonical(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize, out: &mut String| out.extend(std::iter::repeat_n(' ', 2 * n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => write!(out, "{u}").unwrap(),
            (None, Some(i), _) => write!(out, "{i}").unwrap(),
            (_, _, Some(f)) => out.push_str(&format_float(f)),
            _ => out.push_str("null"),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(indent + 1, out);
                write_canonical(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(indent, out);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            out.push_str("{\n");
            for (i, (k, item)) in entries.iter().enumerate() {
                pad(indent + 1, out);
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push_str(": ");
                write_canonical(item, indent + 1, out);
                out.push_str(if i + 1 < entries.len() { ",\n" } else { "\n" });
            }
            pad(indent, out);
            out.push('}');
        }
    }
}

/// Rounds to 6 significant digits and prints the shortest decimal that
/// reads back to the rounded value.
fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    let rounded: f64 = format!("{x:.5e}").parse().unwrap();
    if rounded == 0.0 {
        "0".into()
    } else {
        format!("{rounded}")
    }
}

fn pct(x: f64) -> String {
    let s = format!("{:.1}%", 100.0 * x);
    if s == "-0.0%" {
        "0.0%".into()
    } else {
        s
    }
}

fn pct_interval(ci: &ConfidenceInterval) -> String {
    format!("[{}, {}]", pct(ci.lower), pct(ci.upper))
}

fn describe_alpha(alpha: f64, correction: Correction) -> String {
    match correction {
        Correction::None => format!("α = {alpha}"),
        Correction::Bonferroni { m } => format!("α = {alpha}/{m}"),
    }
}

fn flag_label(kind: FlagKind) -> &'static str {
    match kind {
        FlagKind::SignificanceLostUnderCorrection => "significance_lost_under_correction",
        FlagKind::SignificanceGainedWithoutCorrection => "significance_gained_without_correction",
        FlagKind::MetricDisagreement => "metric_disagreement",
        FlagKind::UndeclaredAttribute => "undeclared_attribute",
        FlagKind::UndeclaredMetric => "undeclared_metric",
        FlagKind::BelowEffectThreshold => "below_effect_threshold",
    }
}

/// Tables longer than this only list rows significant at some level.
const MARKDOWN_ROW_LIMIT: usize = 50;
const MARKDOWN_FLAG_LIMIT: usize = 200;
const MARKDOWN_INTER_LIMIT: usize = 20;

pub fn to_markdown(report: &AuditReport) -> String {
    let mut md = String::new();
    let meta = &report.metadata;
    let p = &meta.parameters;
    md.push_str("# Fairness audit report\n\n");
    let _ = writeln!(md, "- Tool version: {}", meta.tool_version);
    let _ = writeln!(
        md,
        "- Dataset: {} records, {} attributes, {} features (sha256 `{}`)",
        meta.dataset.records, meta.dataset.attributes, meta.dataset.features, meta.dataset.fingerprint
    );
    let _ = writeln!(md, "- Nominal α = {}; correction scope: {:?}", p.alpha, p.correction_scope);
    let _ = writeln!(
        md,
        "- Metrics: {}",
        p.metrics.iter().map(|m| format!("`{m}`")).collect::<Vec<_>>().join(", ")
    );
    md.push_str(
        "- Differences are group 0 minus group 1. The sign depends on how each attribute is coded.\n\n",
    );

    if report.is_empty() {
        md.push_str("## Results\n\nNo results: the audit evaluated no attributes or metrics.\n");
        return md;
    }

    if !report.intra.is_empty() {
        md.push_str("## Intra-metric scans\n\n");
    }
    for intra in &report.intra {
        let _ = writeln!(
            md,
            "### `{}` over {} attributes\n\n{} of {} attributes significant uncorrected, {} after correction.\n",
            intra.metric,
            intra.tested,
            intra.significant_uncorrected,
            intra.rows.len(),
            intra.significant_corrected
        );
        let Some(first) = intra.rows.first() else {
            md.push_str("No estimable attributes.\n\n");
            write_not_estimable(&mut md, intra);
            continue;
        };
        let _ = writeln!(
            md,
            "| Attribute | Avg. Δ | Uncorrected ({}) | Corrected ({}) | Flag |\n|---|---|---|---|---|",
            describe_alpha(first.uncorrected.alpha, first.uncorrected.correction),
            describe_alpha(first.corrected.alpha, first.corrected.correction)
        );
        let long = intra.rows.len() > MARKDOWN_ROW_LIMIT;
        let mut omitted = 0;
        for row in &intra.rows {
            if long && !row.significant_uncorrected && !row.significant_corrected {
                omitted += 1;
                continue;
            }
            let lost = row.significant_uncorrected && !row.significant_corrected;
            let bold = |s: String| if lost { format!("**{s}**") } else { s };
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                bold(row.attribute.clone()),
                pct(row.estimate.point.unwrap_or(0.0)),
                pct_interval(&row.uncorrected),
                bold(pct_interval(&row.corrected)),
                if lost { flag_label(FlagKind::SignificanceLostUnderCorrection) } else { "" }
            );
        }
        if omitted > 0 {
            let _ = writeln!(md, "\n{omitted} attributes significant at neither level are omitted here; see the JSON report.");
        }
        md.push('\n');
        write_not_estimable(&mut md, intra);
    }

    if !report.inter.is_empty() {
        md.push_str("## Inter-metric sweeps\n\n");
        let many = report.inter.len() > MARKDOWN_INTER_LIMIT;
        let mut omitted = 0;
        for inter in &report.inter {
            if many && inter.significant_corrected == 0 {
                omitted += 1;
                continue;
            }
            let _ = writeln!(
                md,
                "### `{}` ({}/{} metrics significant at α = {}/{})\n",
                inter.attribute,
                inter.significant_corrected,
                inter.rows.len(),
                inter.alpha,
                inter.family_size
            );
            if let Some(reason) = &inter.global_reason {
                let _ = writeln!(md, "Not estimable: {reason}.\n");
                continue;
            }
            md.push_str("| Metric | Δ | Corrected interval | Significant |\n|---|---|---|---|\n");
            for row in &inter.rows {
                match (&row.estimate.point, &row.corrected) {
                    (Some(point), Some(ci)) => {
                        let _ = writeln!(
                            md,
                            "| `{}` | {} | {} | {} |",
                            row.metric,
                            pct(*point),
                            pct_interval(ci),
                            if row.significant_corrected { "yes" } else { "no" }
                        );
                    }
                    _ => {
                        let _ = writeln!(
                            md,
                            "| `{}` | n/a | n/a | not estimable: {} |",
                            row.metric,
                            row.estimate.reason.as_deref().unwrap_or("")
                        );
                    }
                }
            }
            let _ = writeln!(
                md,
                "\nDirection: group 0 higher on {}, group 1 higher on {}, tied on {}.{}\n",
                inter.tally.group0_higher,
                inter.tally.group1_higher,
                inter.tally.tied,
                if inter.disagreement { " **Metrics disagree.**" } else { "" }
            );
        }
        if omitted > 0 {
            let _ = writeln!(md, "{omitted} attributes without any corrected-significant metric are omitted here; see the JSON report.\n");
        }
    }

    if let Some(c) = &report.combined {
        let _ = writeln!(
            md,
            "## Combined table\n\n{} of {} attribute × metric cells significant at α = {}/{} ({:?} scope).\n",
            c.significant,
            c.cells.len(),
            c.alpha,
            c.divisor,
            c.scope
        );
        let sig: Vec<_> = c.cells.iter().filter(|c| c.significant).collect();
        if !sig.is_empty() {
            md.push_str("| Attribute | Metric | Δ | Interval |\n|---|---|---|---|\n");
            for cell in sig.iter().take(MARKDOWN_ROW_LIMIT) {
                let _ = writeln!(
                    md,
                    "| {} | `{}` | {} | {} |",
                    cell.attribute,
                    cell.metric,
                    pct(cell.point),
                    pct_interval(&cell.interval)
                );
            }
            if sig.len() > MARKDOWN_ROW_LIMIT {
                let _ = writeln!(md, "\n{} further significant cells in the JSON report.", sig.len() - MARKDOWN_ROW_LIMIT);
            }
            md.push('\n');
        }
    }

    if !report.individual.is_empty() {
        md.push_str("## Dataset-level metrics\n\n| Metric | Value | Bootstrap interval |\n|---|---|---|\n");
        for row in &report.individual {
            let value = row.value.map_or("n/a".into(), |v| format!("{v:.4}"));
            let interval = match (&row.interval, &row.reason) {
                (Some(ci), _) => format!(
                    "[{:.4}, {:.4}] ({}, {} replicates, {} dropped)",
                    ci.lower,
                    ci.upper,
                    describe_alpha(ci.alpha, ci.correction),
                    row.replicates,
                    row.dropped
                ),
                (None, Some(r)) => format!("not estimable: {r}"),
                (None, None) => "n/a".into(),
            };
            let _ = writeln!(md, "| `{}` | {} | {} |", row.metric, value, interval);
        }
        md.push('\n');
    }

    md.push_str("## Flags\n\n");
    if report.flags.is_empty() {
        md.push_str("No flags raised.\n\n");
    } else {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for f in &report.flags {
            *counts.entry(flag_label(f.kind)).or_default() += 1;
        }
        for (k, n) in &counts {
            let _ = writeln!(md, "- `{k}`: {n}");
        }
        md.push('\n');
        for f in report.flags.iter().take(MARKDOWN_FLAG_LIMIT) {
            let subject = [f.attribute.clone(), f.metric.map(|m| m.to_string())]
                .into_iter()
                .flatten()
                .collect::<Vec<_>>()
                .join(" / ");
            let _ = writeln!(md, "- **{}** ({subject}): {}", flag_label(f.kind), f.detail);
        }
        if report.flags.len() > MARKDOWN_FLAG_LIMIT {
            let _ = writeln!(md, "- … {} more in the JSON report", report.flags.len() - MARKDOWN_FLAG_LIMIT);
        }
        md.push('\n');
    }

    if let Some(m) = &report.manifest {
        md.push_str("## Manifest check\n\n");
        let _ = writeln!(md, "- Undeclared items: {}", m.flags.len());
        let _ = writeln!(
            md,
            "- Declared attributes not audited: {}",
            if m.omitted_attributes.is_empty() { "none".into() } else { m.omitted_attributes.join(", ") }
        );
        let _ = writeln!(
            md,
            "- Declared metrics not audited: {}",
            if m.omitted_metrics.is_empty() {
                "none".into()
            } else {
                m.omitted_metrics.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", ")
            }
        );
        for n in &m.notes {
            let _ = writeln!(md, "- Note: {n}");
        }
        md.push('\n');
    }
    md
}

fn write_not_estimable(md: &mut String, intra: &IntraAuditResult) {
    if intra.not_estimable.is_empty() {
        return;
    }
    let _ = writeln!(md, "Not estimable for {} attributes:\n", intra.not_estimable.len());
    for n in intra.not_estimable.iter().take(MARKDOWN_ROW_LIMIT) {
        let _ = writeln!(md, "- {}: {}", n.subject, n.reason);
    }
    md.push('\n');
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 150.0;
const RIGHT: f64 = 770.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 440.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(title: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text class=\"title\" x=\"{}\" y=\"25\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    )
}

/// Linear map from data range onto the horizontal plot area.
struct Scale {
    lo: f64,
    hi: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64) -> Self {
        if hi > lo {
            let pad = 0.05 * (hi - lo);
            Self { lo: lo - pad, hi: hi + pad }
        } else {
            Self { lo: lo - 0.5, hi: hi + 0.5 }
        }
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.lo) / (self.hi - self.lo) * (RIGHT - LEFT)
    }
}

fn x_axis(svg: &mut String, scale: &Scale, label: &str) {
    let _ = writeln!(
        svg,
        "<line class=\"axis\" x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\" stroke=\"black\"/>"
    );
    for i in 0..=4 {
        let v = scale.lo + (scale.hi - scale.lo) * i as f64 / 4.0;
        let x = scale.x(v);
        let _ = writeln!(
            svg,
            "<text class=\"tick\" x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            BOTTOM + 18.0,
            pct(v)
        );
    }
    let _ = writeln!(
        svg,
        "<text class=\"axis-label\" x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 40.0,
        xml_escape(label)
    );
}

/// Freedman-Diaconis bin count: width `2 IQR n^(-1/3)`. Falls back to 20 bins
/// when the IQR is zero and uses a single bin when all values coincide.
pub fn freedman_diaconis_bins(values: &[f64]) -> usize {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return 1;
    }
    v.sort_by(f64::total_cmp);
    let range = v[v.len() - 1] - v[0];
    if range == 0.0 {
        return 1;
    }
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        v[lo] + (pos - lo as f64) * (v[pos.ceil() as usize] - v[lo])
    };
    let iqr = q(0.75) - q(0.25);
    let width = 2.0 * iqr / (v.len() as f64).cbrt();
    if width > 0.0 && width.is_finite() {
        ((range / width).ceil() as usize).clamp(1, 200)
    } else {
        20
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("nothing to plot")]
    Empty,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Histogram of metric differences with a pair of vertical markers at
/// `+/- half_width` for each alpha level.
pub fn render_histogram_svg(
    values: &[f64],
    markers: &[AlphaMarker],
    title: &str,
) -> Result<String, RenderError> {
    let vals: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if vals.is_empty() {
        return Err(RenderError::Empty);
    }
    let bins = freedman_diaconis_bins(&vals);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if max > min { max - min } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in &vals {
        let b = (((v - min) / span) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let reach = markers.iter().map(|m| m.half_width).fold(0.0, f64::max);
    let scale = Scale::new(min.min(-reach), max.max(reach));
    let peak = *counts.iter().max().unwrap() as f64;

    let mut svg = svg_open(title);
    let bin_width = if max > min { span / bins as f64 } else { 0.0 };
    for (i, &c) in counts.iter().enumerate() {
        let (x0, x1) = if bin_width > 0.0 {
            (scale.x(min + i as f64 * bin_width), scale.x(min + (i + 1) as f64 * bin_width))
        } else {
            (scale.x(min) - 4.0, scale.x(min) + 4.0)
        };
        let h = (BOTTOM - TOP - 30.0) * c as f64 / peak;
        let _ = writeln!(
            svg,
            "<rect class=\"bar\" data-count=\"{c}\" x=\"{x0:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"steelblue\" stroke=\"white\"/>",
            BOTTOM - h,
            (x1 - x0).max(0.5)
        );
    }
    if scale.lo <= 0.0 && 0.0 <= scale.hi {
        let x = scale.x(0.0);
        let _ = writeln!(
            svg,
            "<line class=\"zero-line\" x1=\"{x:.2}\" y1=\"{TOP}\" x2=\"{x:.2}\" y2=\"{BOTTOM}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>"
        );
    }
    let colours = ["darkorange", "crimson", "seagreen", "purple"];
    for (i, m) in markers.iter().enumerate() {
        let colour = colours[i % colours.len()];
        let y = TOP + 4.0 + 12.0 * i as f64;
        for side in [-1.0, 1.0] {
            let x = scale.x(side * m.half_width);
            let _ = writeln!(
                svg,
                "<line class=\"alpha-marker\" data-alpha=\"{}\" data-offset=\"{}\" x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{x:.2}\" y2=\"{BOTTOM}\" stroke=\"{colour}\"/>",
                format_float(m.effective_alpha),
                format_float(side * m.half_width)
            );
        }
        let _ = writeln!(
            svg,
            "<text class=\"legend\" x=\"{}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{colour}\">α = {}: ±{}</text>",
            RIGHT - 140.0,
            y + 4.0,
            format_float(m.effective_alpha),
            pct(m.half_width)
        );
    }
    x_axis(&mut svg, &scale, "difference (group 0 − group 1)");
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_histogram_svg(
    values: &[f64],
    markers: &[AlphaMarker],
    title: &str,
    path: impl AsRef<Path>,
) -> Result<(), RenderError> {
    std::fs::write(path, render_histogram_svg(values, markers, title)?)?;
    Ok(())
}

/// One metric in a forest plot.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestRow {
    pub label: String,
    pub point: Option<f64>,
    pub interval: Option<(f64, f64)>,
    pub note: Option<String>,
}

/// Rows for an inter-metric sweep, using the corrected intervals.
pub fn forest_rows(inter: &InterAuditResult) -> Vec<ForestRow> {
    inter
        .rows
        .iter()
        .map(|r| ForestRow {
            label: r.metric.to_string(),
            point: r.estimate.point,
            interval: r.corrected.map(|c| (c.lower, c.upper)),
            note: r.estimate.reason.clone(),
        })
        .collect()
}

/// Point-and-whisker row per metric around a zero reference line. Rows
/// without an estimate are drawn as text annotations.
pub fn render_forest_svg(rows: &[ForestRow], title: &str) -> Result<String, RenderError> {
    if rows.is_empty() {
        return Err(RenderError::Empty);
    }
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 0.0;
    for r in rows {
        if let Some((l, u)) = r.interval {
            lo = lo.min(l);
            hi = hi.max(u);
        }
        if let Some(p) = r.point {
            lo = lo.min(p);
            hi = hi.max(p);
        }
    }
    let scale = Scale::new(lo, hi);
    let step = (BOTTOM - TOP) / rows.len() as f64;

    let mut svg = svg_open(title);
    let zx = scale.x(0.0);
    let _ = writeln!(
        svg,
        "<line class=\"zero-line\" x1=\"{zx:.2}\" y1=\"{TOP}\" x2=\"{zx:.2}\" y2=\"{BOTTOM}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>"
    );
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + step * (i as f64 + 0.5);
        let _ = writeln!(svg, "<g class=\"forest-row\" data-label=\"{}\">", xml_escape(&r.label));
        let _ = writeln!(
            svg,
            "<text class=\"label\" x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            LEFT - 10.0,
            y + 4.0,
            xml_escape(&r.label)
        );
        match (r.point, r.interval) {
            (Some(p), interval) => {
                if let Some((l, u)) = interval.filter(|(l, u)| u > l) {
                    let (xl, xu) = (scale.x(l), scale.x(u));
                    let _ = writeln!(
                        svg,
                        "<line class=\"whisker\" x1=\"{xl:.2}\" y1=\"{y:.2}\" x2=\"{xu:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>"
                    );
                    for x in [xl, xu] {
                        let _ = writeln!(
                            svg,
                            "<line class=\"cap\" x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
                            y - 5.0,
                            y + 5.0
                        );
                    }
                }
                let significant = interval.is_some_and(|(l, u)| l > 0.0 || u < 0.0);
                let _ = writeln!(
                    svg,
                    "<circle class=\"point\" cx=\"{:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"{}\"/>",
                    scale.x(p),
                    if significant { "crimson" } else { "black" }
                );
            }
            (None, _) => {
                let _ = writeln!(
                    svg,
                    "<text class=\"not-estimable\" x=\"{zx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\"gray\">not estimable{}</text>",
                    y + 4.0,
                    r.note.as_deref().map(|n| format!(": {}", xml_escape(n))).unwrap_or_default()
                );
            }
        }
        svg.push_str("</g>\n");
    }
    x_axis(&mut svg, &scale, "difference (group 0 − group 1)");
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_forest_svg(
    rows: &[ForestRow],
    title: &str,
    path: impl AsRef<Path>,
) -> Result<(), RenderError> {
    std::fs::write(path, render_forest_svg(rows, title)?)?;
    Ok(())
}
