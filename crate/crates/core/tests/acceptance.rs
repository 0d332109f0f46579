//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line; the
//! process exits non-zero when any criterion fails.
//!
//! Run with `cargo test --test acceptance`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use fairaudit::audit::{self, IntraAuditResult, InterAuditResult};
use fairaudit::data::{self, AttributeSelection, CsvSchema};
use fairaudit::metrics;
use fairaudit::model::{self, TrainConfig};
use fairaudit::report;
use fairaudit::stats::{self, BootstrapConfig, CoverageConfig};
use fairaudit::{
    full_audit, AuditConfig, AuditReport, CorrectionScope, Dataset, FlagKind, Level, MetricId,
    Record, SyntheticConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Every audit row inspected by any criterion passes through here.
static ROWS_CHECKED: AtomicUsize = AtomicUsize::new(0);
static MONOTONE_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);

fn record_row(corrected: bool, uncorrected: bool, nested: bool) {
    ROWS_CHECKED.fetch_add(1, Ordering::Relaxed);
    if (corrected && !uncorrected) || !nested {
        MONOTONE_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
}

fn check_intra(r: &IntraAuditResult) {
    for row in &r.rows {
        let nested =
            row.corrected.lower <= row.uncorrected.lower && row.corrected.upper >= row.uncorrected.upper;
        record_row(row.significant_corrected, row.significant_uncorrected, nested);
    }
}

fn check_inter(r: &InterAuditResult) {
    for row in &r.rows {
        let nested = match (&row.corrected, &row.uncorrected) {
            (Some(c), Some(u)) => c.lower <= u.lower && c.upper >= u.upper,
            (None, None) => true,
            _ => false,
        };
        record_row(row.significant_corrected, row.significant_uncorrected, nested);
    }
}

fn check_report(r: &AuditReport) {
    r.intra.iter().for_each(check_intra);
    r.inter.iter().for_each(check_inter);
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 null-model false-positive rate", null_model_false_positive_rate),
        ("2 inverse-impossibility pattern", inverse_impossibility),
        ("3 Wald coverage", wald_coverage),
        ("4 single flag lost under correction", lost_under_correction),
        ("5 oracle equivalence", oracle_equivalence),
        ("6 analytic invariants", analytic_invariants),
        ("7 determinism", determinism),
        ("8 end-to-end pipeline", end_to_end),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::new(false, format!("panicked: {msg}"))
            });
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {name}: {verdict} ({:.1}s) {}",
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (t < limit, format!("runtime {:.1}s < {}s", t.as_secs_f64(), limit.as_secs()))
}

// ---------------------------------------------------------------------------

fn null_model_false_positive_rate() -> Outcome {
    let start = Instant::now();
    let metrics = [MetricId::ErrorRate, MetricId::StatisticalParity];
    // (uncorrected fraction, any corrected) per seed and metric
    let per_seed: Vec<Vec<(f64, bool)>> = (0..500u64)
        .into_par_iter()
        .map(|seed| {
            let d = data::generate_synthetic(&SyntheticConfig { seed, ..SyntheticConfig::default() })
                .unwrap();
            let names = d.attribute_names().to_vec();
            metrics
                .iter()
                .map(|&m| {
                    let r = audit::intra_audit(&d, m, &names, 0.05).unwrap();
                    check_intra(&r);
                    (
                        r.significant_uncorrected as f64 / r.tested as f64,
                        r.significant_corrected > 0,
                    )
                })
                .collect()
        })
        .collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, m) in metrics.iter().enumerate() {
        let fpr = per_seed[..100].iter().map(|s| s[i].0).sum::<f64>() / 100.0;
        let fwer = per_seed.iter().filter(|s| s[i].1).count() as f64 / per_seed.len() as f64;
        let ok = (fpr - 0.05).abs() <= 0.02 && fwer <= 0.07;
        pass &= ok;
        detail.push(format!("{m}: uncorrected rate {fpr:.4} (0.05 ± 0.02), P(any corrected) {fwer:.3} (≤ 0.07)"));
    }
    let (fast, t) = within(Duration::from_secs(120), start);
    detail.push(t);
    Outcome::new(pass && fast, detail.join("; "))
}

fn inverse_impossibility() -> Outcome {
    let d = data::generate_synthetic(&SyntheticConfig {
        n_participants: 10_000,
        n_attributes: 1,
        accuracy_group0: 0.95,
        accuracy_group1: 0.25,
        seed: 42,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let cfg = AuditConfig::new(d.attribute_names().to_vec(), MetricId::GROUP.to_vec());
    let report = full_audit(&d, &cfg, None).unwrap();
    check_report(&report);
    let inter = &report.inter[0];
    let expected_null: BTreeSet<MetricId> =
        [MetricId::StatisticalParity, MetricId::BaseRate, MetricId::AverageOdds].into();
    let non_significant: BTreeSet<MetricId> = inter
        .rows
        .iter()
        .filter(|r| !r.significant_corrected)
        .map(|r| r.metric)
        .collect();
    let significant = inter.rows.iter().filter(|r| r.significant_corrected).count();
    let disagreement = report
        .flags
        .iter()
        .any(|f| f.kind == FlagKind::MetricDisagreement && f.attribute.as_deref() == Some("attr_0000"));
    let pass = inter.family_size == 9
        && (inter.corrected_alpha - 0.05 / 9.0).abs() < 1e-15
        && non_significant == expected_null
        && significant == 6
        && disagreement;
    Outcome::new(
        pass,
        format!(
            "family {} at α = {:.5}; non-significant {:?}; {significant} significant; metric_disagreement {disagreement}",
            inter.family_size,
            inter.corrected_alpha,
            non_significant.iter().map(|m| m.as_str()).collect::<Vec<_>>()
        ),
    )
}

fn wald_coverage() -> Outcome {
    let start = Instant::now();
    let run = |p1, p2, n| {
        stats::coverage_simulation(&CoverageConfig {
            p1,
            p2,
            n1: n,
            n2: n,
            alpha: 0.05,
            trials: 10_000,
            seed: 1,
        })
        .unwrap()
        .empirical
    };
    let a = run(0.5, 0.5, 50);
    let b = run(0.3, 0.6, 100);
    let ok = |c: f64| (0.93..=0.97).contains(&c);
    let (fast, t) = within(Duration::from_secs(10), start);
    Outcome::new(
        ok(a) && ok(b) && fast,
        format!("coverage {a:.4} at (0.5, 0.5, 50, 50), {b:.4} at (0.3, 0.6, 100, 100), band [0.93, 0.97]; {t}"),
    )
}

/// One planted attribute with TPR 0.80 vs 0.70 over 200 actual positives
/// per group, and 133 attributes that halve every confusion cell exactly.
fn planted_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (truth, prediction, planted group, count)
    let cells = [
        (true, true, false, 160),
        (true, false, false, 40),
        (false, true, false, 40),
        (false, false, false, 160),
        (true, true, true, 140),
        (true, false, true, 60),
        (false, true, true, 40),
        (false, false, true, 160),
    ];
    let mut base: Vec<(bool, bool, bool)> = cells
        .iter()
        .flat_map(|&(t, p, g, c)| std::iter::repeat_n((t, p, g), c))
        .collect();
    base.shuffle(&mut rng);
    let noise = 133;
    let mut attrs: Vec<Vec<bool>> = base.iter().map(|&(_, _, g)| vec![g]).collect();
    for _ in 0..noise {
        let mut column = vec![false; base.len()];
        for (t, p) in [(true, true), (true, false), (false, true), (false, false)] {
            let mut idx: Vec<usize> =
                (0..base.len()).filter(|&i| base[i].0 == t && base[i].1 == p).collect();
            idx.shuffle(&mut rng);
            for &i in &idx[..idx.len() / 2] {
                column[i] = true;
            }
        }
        for (a, v) in attrs.iter_mut().zip(column) {
            a.push(v);
        }
    }
    let records = base
        .iter()
        .zip(attrs)
        .map(|(&(truth, prediction, _), attributes)| Record {
            truth,
            prediction,
            attributes,
            features: vec![],
        })
        .collect();
    let mut names = vec!["planted".to_string()];
    names.extend((0..noise).map(|i| format!("noise_{i:03}")));
    Dataset::new(records, names, vec![]).unwrap()
}

fn lost_under_correction() -> Outcome {
    let d = planted_dataset(134);
    let cfg = AuditConfig::new(d.attribute_names().to_vec(), vec![MetricId::EqualOpportunity]);
    let report = full_audit(&d, &cfg, None).unwrap();
    check_report(&report);
    let intra = &report.intra[0];
    let lost: Vec<_> = report
        .flags
        .iter()
        .filter(|f| f.kind == FlagKind::SignificanceLostUnderCorrection)
        .collect();
    let planted = &intra.rows[0];
    let md = report::to_markdown(&report);
    let bold_rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| **")).collect();
    let row_bold = bold_rows.len() == 1 && bold_rows[0].starts_with("| **planted** |");
    let pass = intra.tested == 134
        && (intra.corrected_alpha - 0.05 / 134.0).abs() < 1e-15
        && planted.significant_uncorrected
        && !planted.significant_corrected
        && report.flags.len() == 1
        && lost.len() == 1
        && lost[0].attribute.as_deref() == Some("planted")
        && row_bold;
    Outcome::new(
        pass,
        format!(
            "Δ = {:.3}, uncorrected [{:.4}, {:.4}], corrected [{:.4}, {:.4}] at α/134; {} flag(s), {} lost-under-correction; markdown bold rows {}",
            planted.estimate.point.unwrap_or(f64::NAN),
            planted.uncorrected.lower,
            planted.uncorrected.upper,
            planted.corrected.lower,
            planted.corrected.upper,
            report.flags.len(),
            lost.len(),
            bold_rows.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// Oracles

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, attributes: usize, features: usize, grid: bool) -> Dataset {
    let p_truth: f64 = rng.random();
    let p_pred: f64 = rng.random();
    let p_attr: f64 = rng.random();
    let records = (0..n)
        .map(|_| Record {
            truth: rng.random_bool(p_truth),
            prediction: rng.random_bool(p_pred),
            attributes: (0..attributes).map(|_| rng.random_bool(p_attr)).collect(),
            features: (0..features)
                .map(|_| if grid { rng.random_range(0..4) as f64 } else { rng.random_range(-3.0..3.0) })
                .collect(),
        })
        .collect();
    Dataset::new(
        records,
        (0..attributes).map(|i| format!("a{i}")).collect(),
        (0..features).map(|i| format!("x{i}")).collect(),
    )
    .unwrap()
}

/// Group rate by direct filtering: share of `num` among records of group
/// `g` satisfying `den`.
fn rate(records: &[Record], a: usize, g: bool, num: fn(&Record) -> bool, den: fn(&Record) -> bool) -> Option<f64> {
    let pool: Vec<&Record> = records.iter().filter(|r| r.attributes[a] == g && den(r)).collect();
    if pool.is_empty() {
        return None;
    }
    Some(pool.iter().filter(|r| num(r)).count() as f64 / pool.len() as f64)
}

fn oracle_metric(records: &[Record], a: usize, metric: MetricId) -> Option<f64> {
    let any: fn(&Record) -> bool = |_| true;
    let diff = |num: fn(&Record) -> bool, den: fn(&Record) -> bool| -> Option<f64> {
        Some(rate(records, a, false, num, den)? - rate(records, a, true, num, den)?)
    };
    match metric {
        MetricId::StatisticalParity => diff(|r| r.prediction, any),
        MetricId::BaseRate => diff(|r| r.truth, any),
        MetricId::EqualOpportunity => diff(|r| r.prediction, |r| r.truth),
        MetricId::FalsePositiveRate => diff(|r| r.prediction, |r| !r.truth),
        MetricId::TrueNegativeRate => diff(|r| !r.prediction, |r| !r.truth),
        MetricId::FalseOmissionRate => diff(|r| r.truth, |r| !r.prediction),
        MetricId::PredictiveParity => diff(|r| r.truth, |r| r.prediction),
        MetricId::ErrorRate => diff(|r| r.truth != r.prediction, any),
        MetricId::AverageOdds => {
            let tpr = diff(|r| r.prediction, |r| r.truth)?;
            let fpr = diff(|r| r.prediction, |r| !r.truth)?;
            Some(0.5 * (fpr + tpr))
        }
        MetricId::Theil | MetricId::Consistency => unreachable!(),
    }
}

fn oracle_theil(records: &[Record]) -> Option<f64> {
    let b: Vec<f64> = records
        .iter()
        .map(|r| r.prediction as u8 as f64 - r.truth as u8 as f64 + 1.0)
        .collect();
    let mu = b.iter().sum::<f64>() / b.len() as f64;
    if mu == 0.0 {
        return None;
    }
    let t: f64 = b
        .iter()
        .map(|&bi| if bi == 0.0 { 0.0 } else { (bi / mu) * (bi / mu).ln() })
        .sum();
    Some(t / b.len() as f64)
}

fn oracle_consistency(records: &[Record], k: usize) -> f64 {
    let n = records.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = records[i]
                    .features
                    .iter()
                    .zip(&records[j].features)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (d, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mean = others[..k].iter().filter(|&&(_, j)| records[j].prediction).count() as f64 / k as f64;
        total += (records[i].prediction as u8 as f64 - mean).abs();
    }
    1.0 - total / n as f64
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut group_mismatch = 0;
    let mut group_checked = 0;
    let mut theil_err: f64 = 0.0;
    let mut theil_mismatch = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let a = rng.random_range(1..=3);
        let d = random_dataset(&mut rng, n, a, 0, false);
        for (ai, name) in d.attribute_names().iter().enumerate() {
            let gc = metrics::confusion_by_group(&d, name).unwrap();
            for &m in &MetricId::GROUP {
                group_checked += 1;
                let got = metrics::group_metric(&gc, m);
                let want = oracle_metric(d.records(), ai, m);
                let same = match (got.point, want) {
                    (Some(x), Some(y)) => x.to_bits() == y.to_bits() && got.estimable,
                    (None, None) => !got.estimable && got.reason.is_some(),
                    _ => false,
                };
                if !same {
                    group_mismatch += 1;
                }
            }
        }
        match (metrics::theil_index(&d).ok(), oracle_theil(d.records())) {
            (Some(x), Some(y)) => theil_err = theil_err.max((x - y).abs()),
            (None, None) => {}
            _ => theil_mismatch += 1,
        }
    }
    let mut cons_err: f64 = 0.0;
    let mut cons_checked = 0;
    for i in 0..150 {
        let n = rng.random_range(2..=200);
        let dims = rng.random_range(1..=3);
        let d = random_dataset(&mut rng, n, 1, dims, i % 2 == 0);
        let k = rng.random_range(1..=(n - 1).min(7));
        let got = metrics::consistency(&d, k).unwrap();
        cons_err = cons_err.max((got - oracle_consistency(d.records(), k)).abs());
        cons_checked += 1;
    }
    let pass = group_mismatch == 0 && theil_mismatch == 0 && theil_err <= 1e-12 && cons_err <= 1e-12;
    Outcome::new(
        pass,
        format!(
            "group metrics {} mismatches of {group_checked}; theil max error {theil_err:.1e} (≤ 1e-12), {theil_mismatch} estimability mismatches; consistency max error {cons_err:.1e} over {cons_checked} datasets",
            group_mismatch
        ),
    )
}

fn analytic_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut antisymmetry_failures = 0;
    let mut verdict_failures = 0;
    let mut points = 0;
    for i in 0..300 {
        let n = rng.random_range(5..=300);
        let d = random_dataset(&mut rng, n, 2, 1, false);
        let name = &d.attribute_names()[0];
        let flipped = d.with_relabeled_attribute(name).unwrap();
        let gc = metrics::confusion_by_group(&d, name).unwrap();
        let gf = metrics::confusion_by_group(&flipped, name).unwrap();
        for &m in &MetricId::GROUP {
            let a = metrics::group_metric(&gc, m);
            let b = metrics::group_metric(&gf, m);
            match (a.point, b.point) {
                (Some(x), Some(y)) => {
                    points += 1;
                    if x != -y {
                        antisymmetry_failures += 1;
                    }
                    let ia = stats::estimate_interval(&a, Level::uncorrected(0.05)).unwrap();
                    let ib = stats::estimate_interval(&b, Level::uncorrected(0.05)).unwrap();
                    if ia.excludes_zero() != ib.excludes_zero() {
                        verdict_failures += 1;
                    }
                }
                (None, None) => {}
                _ => antisymmetry_failures += 1,
            }
        }
        // Audits over several scopes feed the monotonicity tally.
        if i % 10 == 0 {
            let scope = [CorrectionScope::Intra, CorrectionScope::Inter, CorrectionScope::Combined][i / 10 % 3];
            let mut cfg = AuditConfig::new(d.attribute_names().to_vec(), MetricId::GROUP.to_vec());
            cfg.scope = scope;
            cfg.alpha = [0.05, 0.1, 0.01][i / 10 % 3];
            let r = full_audit(&d, &cfg, None).unwrap();
            check_report(&r);
            let rf = full_audit(&flipped, &cfg, None).unwrap();
            check_report(&rf);
            let kinds = |r: &AuditReport| r.flags.iter().map(|f| (f.kind, f.attribute.clone(), f.metric)).collect::<Vec<_>>();
            if kinds(&r) != kinds(&rf) {
                verdict_failures += 1;
            }
        }
    }
    let z = stats::normal_quantile(0.975).unwrap();
    let checked = ROWS_CHECKED.load(Ordering::Relaxed);
    let violations = MONOTONE_VIOLATIONS.load(Ordering::Relaxed);
    let pass = antisymmetry_failures == 0
        && verdict_failures == 0
        && violations == 0
        && checked > 0
        && (z - 1.95996398).abs() <= 1e-6;
    Outcome::new(
        pass,
        format!(
            "anti-symmetry failures {antisymmetry_failures} of {points}; relabel verdict changes {verdict_failures}; \
             correction monotonicity violations {violations} of {checked} audit rows; normal_quantile(0.975) = {z:.9}"
        ),
    )
}

fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_fairaudit");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let status = Command::new(exe)
            .args([
                "simulate",
                "--participants", "100",
                "--attributes", "40",
                "--accuracy", "0.75",
                "--bootstrap-replicates", "300",
                "--seed", "7",
                "--out",
            ])
            .arg(dir.path())
            .env_remove("FAIRAUDIT_SEED")
            .output()
            .unwrap();
        assert!(status.status.success(), "simulate failed: {}", String::from_utf8_lossy(&status.stderr));
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    let json_same = read(dirs[0].path(), "report.json") == read(dirs[1].path(), "report.json");
    let md_same = read(dirs[0].path(), "report.md") == read(dirs[1].path(), "report.md");

    let d = data::generate_synthetic(&SyntheticConfig { n_participants: 200, n_attributes: 2, seed: 3, ..Default::default() })
        .unwrap();
    let cfg = BootstrapConfig { replicates: 500, seed: 99, neighbors: 5 };
    let level = Level::uncorrected(0.05);
    let runs = [
        (Some("attr_0000"), MetricId::EqualOpportunity),
        (None, MetricId::Theil),
        (None, MetricId::Consistency),
    ];
    let mut boot_same = true;
    for (attr, m) in runs {
        let a = stats::bootstrap_interval(&d, attr, m, level, &cfg).unwrap();
        let b = stats::bootstrap_interval(&d, attr, m, level, &cfg).unwrap();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| stats::bootstrap_interval(&d, attr, m, level, &cfg).unwrap());
        boot_same &= a == b && a == single;
    }
    Outcome::new(
        json_same && md_same && boot_same,
        format!("report.json identical {json_same}; report.md identical {md_same}; bootstrap identical per seed (incl. 1 thread) {boot_same}"),
    )
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("separable.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut csv = String::from("y_true,x1,x2,sex,region,senior\n");
    for _ in 0..600 {
        let y = rng.random_bool(0.5);
        let margin = rng.random_range(0.5..3.0);
        let x1 = if y { margin } else { -margin };
        let x2: f64 = rng.random_range(-1.0..1.0);
        csv.push_str(&format!(
            "{},{x1},{x2},{},{},{}\n",
            y as u8,
            rng.random_bool(0.5) as u8,
            rng.random_bool(0.3) as u8,
            rng.random_bool(0.6) as u8
        ));
    }
    std::fs::write(&csv_path, csv).unwrap();

    let schema = CsvSchema {
        prediction_column: None,
        attributes: AttributeSelection::Auto,
        features: vec!["x1".into(), "x2".into()],
        ..CsvSchema::default()
    };
    let d = data::load_csv(&csv_path, &schema).unwrap();
    let (train, test) = data::split(&d, 0.9, 1).unwrap();
    let m = model::train(&train, &TrainConfig::default()).unwrap();
    let train_acc = model::accuracy(&model::predict(&m, &train).unwrap());
    let test = model::predict(&m, &test).unwrap();
    let test_acc = model::accuracy(&test);

    let cfg = AuditConfig::new(test.attribute_names().to_vec(), MetricId::ALL.to_vec());
    let report = full_audit(&test, &cfg, None).unwrap();
    check_report(&report);
    let json = report::to_json(&report);
    std::fs::write(dir.path().join("report.json"), &json).unwrap();
    std::fs::write(dir.path().join("report.md"), report::to_markdown(&report)).unwrap();

    let mut svgs = Vec::new();
    for intra in &report.intra {
        let values: Vec<f64> = intra.rows.iter().filter_map(|r| r.estimate.point).collect();
        if values.is_empty() {
            continue;
        }
        let p = dir.path().join(format!("histogram_{}.svg", intra.metric));
        report::emit_histogram_svg(&values, &intra.reference_markers, "histogram", &p).unwrap();
        svgs.push((p, "alpha-marker", 2 * intra.reference_markers.len()));
    }
    for inter in &report.inter {
        let p = dir.path().join(format!("forest_{}.svg", inter.attribute));
        report::emit_forest_svg(&report::forest_rows(inter), "forest", &p).unwrap();
        svgs.push((p, "forest-row", inter.rows.len()));
    }

    let schema_json: serde_json::Value = serde_json::from_str(report::REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema_json).unwrap();
    let instance: serde_json::Value = serde_json::from_slice(&json).unwrap();
    let schema_errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();

    let mut svg_ok = true;
    let mut kinds = BTreeSet::new();
    for (path, class, expected) in &svgs {
        let text = std::fs::read_to_string(path).unwrap();
        match roxmltree::Document::parse(&text) {
            Ok(doc) => {
                let count = doc
                    .descendants()
                    .filter(|n| n.attribute("class") == Some(*class))
                    .count();
                svg_ok &= count == *expected && doc.root_element().tag_name().name() == "svg";
                kinds.insert(*class);
            }
            Err(_) => svg_ok = false,
        }
    }
    let (fast, t) = within(Duration::from_secs(30), start);
    let pass = train_acc == 1.0
        && schema_errors.is_empty()
        && svg_ok
        && kinds.len() == 2
        && dir.path().join("report.md").exists()
        && fast;
    Outcome::new(
        pass,
        format!(
            "train accuracy {train_acc:.3}, test accuracy {test_acc:.3} on {} records; schema errors {}{}; {} SVGs well-formed {svg_ok}; {t}",
            test.len(),
            schema_errors.len(),
            schema_errors.first().map(|e| format!(" (first: {e})")).unwrap_or_default(),
            svgs.len()
        ),
    )
}
