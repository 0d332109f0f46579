//! Fairness auditing with multiple-comparison-corrected confidence
//! intervals.
//!
//! The crate computes nine group-difference metrics, the Theil index and
//! kNN consistency, attaches Wald (or bootstrap) intervals with and without
//! Bonferroni correction, and flags the two selective-reporting patterns an
//! auditor should watch for:
//!
//! * scanning many sensitive attributes under one metric and keeping the
//!   ones that happen to be significant ([`audit::intra_audit`]);
//! * evaluating many metrics on one attribute and keeping the one whose
//!   verdict suits the reporter ([`audit::inter_audit`]).

pub mod audit;
pub mod cli;
pub mod data;
pub mod metrics;
pub mod model;
pub mod report;
pub mod stats;

pub use audit::{full_audit, AuditConfig, CorrectionScope, FlagKind, HackingFlag, Manifest};
pub use data::{Dataset, Record, SyntheticConfig};
pub use metrics::{MetricEstimate, MetricId};
pub use report::AuditReport;
pub use stats::{ConfidenceInterval, Level};
