//! Datasets of binary outcomes, CSV ingestion, splitting, and synthetic
//! generation for the null-model and accuracy-gap experiments.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Column holding the observed label.
pub const TRUTH_COLUMN: &str = "y_true";
/// Column holding the classifier output.
pub const PREDICTION_COLUMN: &str = "y_pred";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("row {row}, column `{column}`: expected {expected}, found `{value}`")]
    Parse {
        /// 1-based data row (header excluded).
        row: usize,
        column: String,
        value: String,
        expected: &'static str,
    },
    #[error("input contains no records")]
    EmptyInput,
    #[error("record {index}: {detail}")]
    Arity { index: usize, detail: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One individual: observed label, predicted label, binary sensitive
/// attributes, and real-valued input features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub truth: bool,
    pub prediction: bool,
    pub attributes: Vec<bool>,
    pub features: Vec<f64>,
}

/// Immutable collection of records sharing one attribute and feature layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    attribute_names: Vec<String>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        records: Vec<Record>,
        attribute_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::EmptyInput);
        }
        check_unique(&attribute_names)?;
        check_unique(&feature_names)?;
        for (index, r) in records.iter().enumerate() {
            if r.attributes.len() != attribute_names.len() {
                return Err(DataError::Arity {
                    index,
                    detail: format!(
                        "{} attribute values for {} attribute columns",
                        r.attributes.len(),
                        attribute_names.len()
                    ),
                });
            }
            if r.features.len() != feature_names.len() {
                return Err(DataError::Arity {
                    index,
                    detail: format!(
                        "{} feature values for {} feature columns",
                        r.features.len(),
                        feature_names.len()
                    ),
                });
            }
        }
        Ok(Self {
            records,
            attribute_names,
            feature_names,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Always false for a constructed dataset; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attribute_names.iter().position(|a| a == name)
    }

    /// Copy of the dataset with the predictions replaced.
    pub fn with_predictions(&self, predictions: &[bool]) -> Result<Self, DataError> {
        if predictions.len() != self.records.len() {
            return Err(DataError::InvalidConfig(format!(
                "{} predictions for {} records",
                predictions.len(),
                self.records.len()
            )));
        }
        let records = self
            .records
            .iter()
            .zip(predictions)
            .map(|(r, &p)| Record {
                prediction: p,
                ..r.clone()
            })
            .collect();
        Ok(Self {
            records,
            attribute_names: self.attribute_names.clone(),
            feature_names: self.feature_names.clone(),
        })
    }

    /// Copy with the group coding of one attribute swapped (0 <-> 1).
    pub fn with_relabeled_attribute(&self, name: &str) -> Option<Self> {
        let idx = self.attribute_index(name)?;
        let mut out = self.clone();
        for r in &mut out.records {
            r.attributes[idx] = !r.attributes[idx];
        }
        Some(out)
    }

    /// Subset by record index, preserving the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, DataError> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Self::new(
            records,
            self.attribute_names.clone(),
            self.feature_names.clone(),
        )
    }

    /// SHA-256 of the dataset's canonical CSV encoding.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        // Writing into a Vec cannot fail.
        write_csv(self, &mut buf).expect("in-memory CSV write");
        hex::encode(Sha256::digest(&buf))
    }
}

fn check_unique(names: &[String]) -> Result<(), DataError> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(DataError::DuplicateColumn(n.clone()));
        }
    }
    Ok(())
}

/// Which columns of a CSV file are sensitive attributes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum AttributeSelection {
    /// Every remaining column whose values are all 0/1.
    #[default]
    Auto,
    Named(Vec<String>),
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub truth_column: String,
    /// `None` when predictions will be produced later by a model; records
    /// then start with `prediction = false`.
    pub prediction_column: Option<String>,
    pub attributes: AttributeSelection,
    pub features: Vec<String>,
    /// Columns never picked up by [`AttributeSelection::Auto`].
    pub ignored_columns: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            truth_column: TRUTH_COLUMN.to_string(),
            prediction_column: Some(PREDICTION_COLUMN.to_string()),
            attributes: AttributeSelection::Auto,
            features: Vec::new(),
            ignored_columns: Vec::new(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, DataError> {
    read_csv(File::open(path)?, schema)
}

/// Header row of a CSV file.
pub fn csv_headers(path: impl AsRef<Path>) -> Result<Vec<String>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?);
    Ok(rdr.headers()?.iter().map(str::to_string).collect())
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    check_unique(&headers)?;
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err(DataError::EmptyInput);
    }

    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let truth_idx = column(&schema.truth_column)?;
    let pred_idx = schema
        .prediction_column
        .as_deref()
        .map(column)
        .transpose()?;
    let feature_idx: Vec<usize> = schema
        .features
        .iter()
        .map(|f| column(f))
        .collect::<Result<_, _>>()?;

    let attribute_idx: Vec<usize> = match &schema.attributes {
        AttributeSelection::Named(names) => {
            names.iter().map(|a| column(a)).collect::<Result<_, _>>()?
        }
        AttributeSelection::Auto => (0..headers.len())
            .filter(|i| *i != truth_idx && Some(*i) != pred_idx && !feature_idx.contains(i))
            .filter(|&i| !schema.ignored_columns.contains(&headers[i]))
            .filter(|&i| rows.iter().all(|r| parse_binary(&r[i]).is_some()))
            .collect(),
    };

    let cell_binary = |row: usize, rec: &csv::StringRecord, col: usize| {
        parse_binary(&rec[col]).ok_or_else(|| DataError::Parse {
            row: row + 1,
            column: headers[col].clone(),
            value: rec[col].to_string(),
            expected: "0 or 1",
        })
    };

    let mut records = Vec::with_capacity(rows.len());
    for (row, rec) in rows.iter().enumerate() {
        let truth = cell_binary(row, rec, truth_idx)?;
        let prediction = match pred_idx {
            Some(c) => cell_binary(row, rec, c)?,
            None => false,
        };
        let attributes = attribute_idx
            .iter()
            .map(|&c| cell_binary(row, rec, c))
            .collect::<Result<_, _>>()?;
        let features = feature_idx
            .iter()
            .map(|&c| {
                rec[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::Parse {
                        row: row + 1,
                        column: headers[c].clone(),
                        value: rec[c].to_string(),
                        expected: "a finite number",
                    })
            })
            .collect::<Result<_, _>>()?;
        records.push(Record {
            truth,
            prediction,
            attributes,
            features,
        });
    }

    Dataset::new(
        records,
        attribute_idx.iter().map(|&i| headers[i].clone()).collect(),
        feature_idx.iter().map(|&i| headers[i].clone()).collect(),
    )
}

fn parse_binary(s: &str) -> Option<bool> {
    match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Writes `y_true,y_pred,<attributes...>,<features...>`.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = [TRUTH_COLUMN, PREDICTION_COLUMN]
        .into_iter()
        .chain(dataset.attribute_names.iter().map(String::as_str))
        .chain(dataset.feature_names.iter().map(String::as_str))
        .collect();
    w.write_record(&header)?;
    let bit = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    for r in &dataset.records {
        let row: Vec<String> = [bit(r.truth), bit(r.prediction)]
            .into_iter()
            .chain(r.attributes.iter().map(|&a| bit(a)))
            // `{:?}` prints the shortest representation that parses back exactly.
            .chain(r.features.iter().map(|f| format!("{f:?}")))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_csv(dataset, File::create(path)?)
}

/// Parameters of the synthetic generator.
///
/// Predictions follow a symmetric flip model: `y_pred = y_true` with the
/// accuracy of the record's group under the first attribute, otherwise the
/// label is flipped. Equal group accuracies give the null model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_participants: usize,
    pub n_attributes: usize,
    pub base_rate: f64,
    pub accuracy_group0: f64,
    pub accuracy_group1: f64,
    /// Bernoulli parameter of every attribute.
    pub attribute_probability: f64,
    /// Adds one N(0, 1) feature per record.
    pub gaussian_feature: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_participants: 100,
            n_attributes: 1000,
            base_rate: 0.5,
            accuracy_group0: 0.75,
            accuracy_group1: 0.75,
            attribute_probability: 0.5,
            gaussian_feature: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_participants == 0 || self.n_attributes == 0 {
            return Err(DataError::InvalidConfig(
                "participant and attribute counts must be at least 1".into(),
            ));
        }
        for (name, p) in [
            ("base_rate", self.base_rate),
            ("accuracy_group0", self.accuracy_group0),
            ("accuracy_group1", self.accuracy_group1),
            ("attribute_probability", self.attribute_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::InvalidConfig(format!(
                    "{name} = {p} is not a probability"
                )));
            }
        }
        Ok(())
    }
}

/// Attribute column name used by the generator.
pub fn synthetic_attribute_name(index: usize) -> String {
    format!("attr_{index:04}")
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let records = (0..config.n_participants)
        .map(|_| {
            let attributes: Vec<bool> = (0..config.n_attributes)
                .map(|_| rng.random_bool(config.attribute_probability))
                .collect();
            let truth = rng.random_bool(config.base_rate);
            let accuracy = if attributes[0] {
                config.accuracy_group1
            } else {
                config.accuracy_group0
            };
            let correct = rng.random_bool(accuracy);
            let features = if config.gaussian_feature {
                vec![rng.sample::<f64, _>(StandardNormal)]
            } else {
                Vec::new()
            };
            Record {
                truth,
                prediction: if correct { truth } else { !truth },
                attributes,
                features,
            }
        })
        .collect();
    let feature_names = if config.gaussian_feature {
        vec!["x".to_string()]
    } else {
        Vec::new()
    };
    Dataset::new(
        records,
        (0..config.n_attributes)
            .map(synthetic_attribute_name)
            .collect(),
        feature_names,
    )
}

/// Seeded random partition into `(train, test)` with `round(n * fraction)`
/// training records. Both halves keep the original record order.
pub fn split(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidConfig(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(DataError::InvalidConfig(format!(
            "fraction {train_fraction} of {n} records leaves an empty partition"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.select(&train)?, dataset.select(&test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(attrs: &[&str]) -> CsvSchema {
        CsvSchema {
            attributes: AttributeSelection::Named(attrs.iter().map(|s| s.to_string()).collect()),
            ..CsvSchema::default()
        }
    }

    #[test]
    fn three_row_csv() {
        let csv = "y_true,y_pred,race\n1,1,0\n0,1,1\n1,0,1\n";
        let d = read_csv(csv.as_bytes(), &schema(&["race"])).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.attribute_names(), ["race"]);
        assert!(d.records()[1].attributes[0]);
        assert!(!d.records()[2].prediction);
    }

    #[test]
    fn non_binary_attribute_is_located() {
        let csv = "y_true,y_pred,race\n1,1,0\n0,1,2\n";
        match read_csv(csv.as_bytes(), &schema(&["race"])) {
            Err(DataError::Parse { row, column, value, .. }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "race", "2"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_and_empty() {
        let err = read_csv("y_true,race\n1,0\n".as_bytes(), &schema(&["race"])).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(c) if c == "y_pred"));
        let err = read_csv("y_true,y_pred,race\n".as_bytes(), &schema(&["race"])).unwrap_err();
        assert!(matches!(err, DataError::EmptyInput));
        let err = read_csv("".as_bytes(), &schema(&[])).unwrap_err();
        assert!(matches!(err, DataError::EmptyInput));
    }

    #[test]
    fn missing_value_is_an_error() {
        let csv = "y_true,y_pred,race\n1,1,\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &schema(&["race"])),
            Err(DataError::Parse { .. })
        ));
    }

    #[test]
    fn auto_attributes_skip_non_binary_columns() {
        let csv = "y_true,y_pred,a,age,b,x\n1,1,0,34,1,0.5\n0,0,1,71,1,1.5\n";
        let s = CsvSchema {
            features: vec!["x".into()],
            ..CsvSchema::default()
        };
        let d = read_csv(csv.as_bytes(), &s).unwrap();
        assert_eq!(d.attribute_names(), ["a", "b"]);
        assert_eq!(d.feature_names(), ["x"]);
        assert_eq!(d.records()[1].features, vec![1.5]);
    }

    #[test]
    fn wide_attribute_header() {
        let names: Vec<String> = (0..134).map(|i| format!("a{i}")).collect();
        let mut csv = format!("y_true,y_pred,{}\n", names.join(","));
        for r in 0..4 {
            let bits: Vec<&str> = (0..134).map(|i| if (i + r) % 2 == 0 { "1" } else { "0" }).collect();
            csv.push_str(&format!("1,0,{}\n", bits.join(",")));
        }
        let d = read_csv(csv.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(d.attribute_names().len(), 134);
        assert_eq!(d.attribute_names()[133], "a133");
    }

    #[test]
    fn prediction_column_optional() {
        let s = CsvSchema {
            prediction_column: None,
            attributes: AttributeSelection::Named(vec!["g".into()]),
            features: vec!["x".into()],
            ..CsvSchema::default()
        };
        let d = read_csv("y_true,g,x\n1,0,2.0\n".as_bytes(), &s).unwrap();
        assert!(!d.records()[0].prediction);
    }

    #[test]
    fn arity_is_checked() {
        let r = Record {
            truth: true,
            prediction: true,
            attributes: vec![true],
            features: vec![],
        };
        assert!(matches!(
            Dataset::new(vec![r], vec!["a".into(), "b".into()], vec![]),
            Err(DataError::Arity { index: 0, .. })
        ));
        assert!(matches!(
            Dataset::new(vec![], vec![], vec![]),
            Err(DataError::EmptyInput)
        ));
    }

    #[test]
    fn null_model_shape_and_accuracy() {
        let cfg = SyntheticConfig {
            seed: 7,
            ..SyntheticConfig::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        assert_eq!(d.len(), 100);
        assert_eq!(d.attribute_names().len(), 1000);
        let acc = d.records().iter().filter(|r| r.truth == r.prediction).count() as f64 / 100.0;
        assert!((acc - 0.75).abs() <= 0.1, "accuracy {acc}");
        assert_eq!(d, generate_synthetic(&cfg).unwrap());
    }

    #[test]
    fn perfect_accuracy() {
        let cfg = SyntheticConfig {
            accuracy_group0: 1.0,
            accuracy_group1: 1.0,
            n_attributes: 3,
            seed: 11,
            ..SyntheticConfig::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        assert!(d.records().iter().all(|r| r.truth == r.prediction));
    }

    #[test]
    fn accuracy_gap_follows_first_attribute() {
        let cfg = SyntheticConfig {
            n_participants: 100,
            n_attributes: 1,
            accuracy_group0: 0.95,
            accuracy_group1: 0.25,
            seed: 3,
            ..SyntheticConfig::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        let acc = |g: bool| {
            let rs: Vec<_> = d.records().iter().filter(|r| r.attributes[0] == g).collect();
            rs.iter().filter(|r| r.truth == r.prediction).count() as f64 / rs.len() as f64
        };
        let gap = acc(false) - acc(true);
        assert!((gap - 0.7).abs() < 0.2, "gap {gap}");
    }

    #[test]
    fn invalid_synthetic_config() {
        let cfg = SyntheticConfig {
            base_rate: 1.5,
            ..SyntheticConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(DataError::InvalidConfig(_))));
        let cfg = SyntheticConfig {
            n_attributes: 0,
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
    }

    fn small(n: usize) -> Dataset {
        generate_synthetic(&SyntheticConfig {
            n_participants: n,
            n_attributes: 2,
            seed: 1,
            ..SyntheticConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = small(10);
        let (a, b) = split(&d, 0.9, 5).unwrap();
        assert_eq!((a.len(), b.len()), (9, 1));
        let (a2, b2) = split(&d, 0.9, 5).unwrap();
        assert_eq!((a, b), (a2, b2));

        let d = small(2);
        let (a, b) = split(&d, 0.5, 0).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
        assert_ne!(a.records()[0], b.records()[0]);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let d = small(10);
        for f in [0.0, 1.0, -0.2, 1.3, f64::NAN] {
            assert!(split(&d, f, 0).is_err(), "fraction {f}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let d = small(25);
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let s = CsvSchema {
            features: d.feature_names().to_vec(),
            attributes: AttributeSelection::Named(d.attribute_names().to_vec()),
            ..CsvSchema::default()
        };
        assert_eq!(read_csv(buf.as_slice(), &s).unwrap(), d);
    }
}
