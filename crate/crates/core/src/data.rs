//! Tabular ingestion and cleaning: CSV loading, label filtering, outlier
//! removal, one-hot encoding and correlation pruning.
//!
//! The defaults in [`PreprocessConfig::default`] describe the public COVID-19
//! patient-precondition table (`covid.csv`): conditions are coded `1` = yes,
//! `2` = no and `97`/`98`/`99` = not specified, and the `icu` column is the
//! label.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{pearson, Matrix};

/// Class code of the negative (majority, "no ICU") class.
pub const NEGATIVE: u8 = 0;
/// Class code of the positive ("ICU") class.
pub const POSITIVE: u8 = 1;

/// Regression target a class code is mapped to while tuning.
///
/// The negative class maps to 1 and the positive class to 2, so consequent
/// means of a learned rule base fall inside `[1, 2]`.
#[inline]
pub fn class_target(label: u8) -> f64 {
    if label == POSITIVE {
        2.0
    } else {
        1.0
    }
}

/// Unparsed CSV contents with cell text kept verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::DuplicateColumn(c.clone()));
            }
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != columns.len() {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: columns.len(),
                    got: r.len(),
                });
            }
        }
        Ok(RawTable { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Loads an RFC-4180 CSV file with a header row.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

/// Parses CSV from any reader. Row indices in errors are zero-based and
/// exclude the header.
pub fn read_csv<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::NoHeader),
    };
    let columns: Vec<String> = header.iter().map(str::to_owned).collect();
    if columns.len() == 1 && columns[0].is_empty() {
        return Err(Error::NoHeader);
    }
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != columns.len() {
            return Err(Error::RaggedRow {
                row: i,
                expected: columns.len(),
                got: rec.len(),
            });
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    RawTable::new(columns, rows)
}

/// Clean numeric data: features, binary labels and names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    label_name: String,
    /// Raw codes written for the negative and positive class.
    class_codes: [String; 2],
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if feature_names.len() != features.cols() {
            return Err(Error::DimensionMismatch {
                expected: features.cols(),
                got: feature_names.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > POSITIVE) {
            return Err(Error::InvalidLabel(bad));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            label_name: "label".to_owned(),
            class_codes: ["0".to_owned(), "1".to_owned()],
        })
    }

    /// Sets the label column name and the raw codes used when writing CSV.
    pub fn with_label_encoding(
        mut self,
        label_name: impl Into<String>,
        negative_code: impl Into<String>,
        positive_code: impl Into<String>,
    ) -> Self {
        self.label_name = label_name.into();
        self.class_codes = [negative_code.into(), positive_code.into()];
        self
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Labels mapped through [`class_target`].
    pub fn targets(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| class_target(l)).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
            class_codes: self.class_codes.clone(),
        }
    }

    /// Keeps the named features in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::MissingColumn(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            features: self.features.select_columns(&idx),
            labels: self.labels.clone(),
            feature_names: names.to_vec(),
            label_name: self.label_name.clone(),
            class_codes: self.class_codes.clone(),
        })
    }

    /// Count of samples per class, indexed by class code.
    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.labels.iter().filter(|&&l| l == POSITIVE).count();
        [self.labels.len() - pos, pos]
    }

    /// Writes features followed by the label column; numbers use the
    /// shortest representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.label_name);
        w.write_record(&header)?;
        let mut cells = Vec::with_capacity(header.len());
        for (row, &label) in self.features.iter_rows().zip(&self.labels) {
            cells.clear();
            cells.extend(row.iter().map(|v| v.to_string()));
            cells.push(self.class_codes[label as usize].clone());
            w.write_record(&cells)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Category list for one categorical column: raw cell value → category name.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalColumn {
    pub column: String,
    pub values: Vec<(String, String)>,
}

impl CategoricalColumn {
    pub fn new(column: impl Into<String>, values: &[(&str, &str)]) -> Self {
        CategoricalColumn {
            column: column.into(),
            values: values
                .iter()
                .map(|(r, c)| (r.to_string(), c.to_string()))
                .collect(),
        }
    }

    /// Distinct category names in first-appearance order.
    pub fn categories(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (_, c) in &self.values {
            if !out.contains(&c.as_str()) {
                out.push(c);
            }
        }
        out
    }
}

/// A row is an outlier when every `(column, value)` condition matches.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierRule {
    pub name: String,
    pub conditions: Vec<(String, String)>,
}

impl OutlierRule {
    /// Parses `col==value & col==value`.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut conditions = Vec::new();
        for part in text.split('&') {
            let (col, val) = part.split_once("==").ok_or_else(|| {
                Error::Config(format!("outlier rule {name:?}: expected `column==value`, got {part:?}"))
            })?;
            conditions.push((col.trim().to_owned(), val.trim().to_owned()));
        }
        Ok(OutlierRule {
            name: name.to_owned(),
            conditions,
        })
    }
}

impl fmt::Display for OutlierRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .conditions
            .iter()
            .map(|(c, v)| format!("{c}=={v}"))
            .collect();
        f.write_str(&parts.join(" & "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Feature pairs with |r| above this are pruned. Must lie in (0, 1].
    pub corr_threshold: f64,
    /// Cell values meaning "missing" in the label or a numeric column.
    pub missing_codes: Vec<String>,
    pub label_column: String,
    pub positive_label: String,
    pub negative_label: String,
    pub drop_columns: Vec<String>,
    pub categorical: Vec<CategoricalColumn>,
    pub outlier_rules: Vec<OutlierRule>,
}

const YES_NO_COLUMNS: [&str; 14] = [
    "intubed",
    "pneumonia",
    "pregnancy",
    "diabetes",
    "copd",
    "asthma",
    "inmsupr",
    "hypertension",
    "other_disease",
    "cardiovascular",
    "obesity",
    "renal_chronic",
    "tobacco",
    "contact_other_covid",
];

impl Default for PreprocessConfig {
    fn default() -> Self {
        let yes_no = [
            ("1", "yes"),
            ("2", "no"),
            ("97", "unspecified"),
            ("98", "unspecified"),
            ("99", "unspecified"),
        ];
        let mut categorical = vec![
            CategoricalColumn::new("sex", &[("1", "female"), ("2", "male"), ("99", "unspecified")]),
            CategoricalColumn::new(
                "patient_type",
                &[("1", "outpatient"), ("2", "inpatient"), ("99", "unspecified")],
            ),
        ];
        categorical.extend(
            YES_NO_COLUMNS
                .iter()
                .map(|c| CategoricalColumn::new(*c, &yes_no)),
        );
        categorical.push(CategoricalColumn::new(
            "covid_res",
            &[("1", "positive"), ("2", "negative"), ("3", "pending")],
        ));
        PreprocessConfig {
            corr_threshold: 0.85,
            missing_codes: vec!["97".into(), "98".into(), "99".into()],
            label_column: "icu".into(),
            positive_label: "1".into(),
            negative_label: "2".into(),
            drop_columns: ["id", "entry_date", "date_symptoms", "date_died"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            categorical,
            outlier_rules: vec![OutlierRule {
                name: "male_pregnancy".into(),
                conditions: vec![("sex".into(), "2".into()), ("pregnancy".into(), "1".into())],
            }],
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.corr_threshold > 0.0 && self.corr_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "correlation threshold must lie in (0, 1], got {}",
                self.corr_threshold
            )));
        }
        if self.positive_label == self.negative_label {
            return Err(Error::Config("positive and negative label codes coincide".into()));
        }
        Ok(())
    }

    fn is_missing(&self, cell: &str) -> bool {
        cell.is_empty() || self.missing_codes.iter().any(|m| m == cell)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowDropReason {
    MissingLabel,
    MissingFeature { column: String },
    Outlier { rule: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnDropReason {
    Configured,
    Constant,
    Correlated { with: String, r: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneHotGroup {
    pub source: String,
    pub columns: Vec<String>,
}

/// Audit trail of everything [`preprocess`] removed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PreprocessReport {
    pub input_rows: usize,
    pub dropped_rows: Vec<(usize, RowDropReason)>,
    pub dropped_columns: Vec<(String, ColumnDropReason)>,
    pub one_hot_groups: Vec<OneHotGroup>,
    /// Outlier rules not applied because a referenced column is absent.
    pub skipped_rules: Vec<String>,
    pub encoded_feature_count: usize,
    pub feature_count: usize,
}

impl PreprocessReport {
    pub fn surviving_rows(&self) -> usize {
        self.input_rows - self.dropped_rows.len()
    }

    pub fn count_dropped(&self, pred: impl Fn(&RowDropReason) -> bool) -> usize {
        self.dropped_rows.iter().filter(|(_, r)| pred(r)).count()
    }
}

impl fmt::Display for PreprocessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input rows: {}", self.input_rows)?;
        writeln!(f, "surviving rows: {}", self.surviving_rows())?;
        writeln!(
            f,
            "dropped rows: {} (missing label {}, missing feature {}, outlier {})",
            self.dropped_rows.len(),
            self.count_dropped(|r| matches!(r, RowDropReason::MissingLabel)),
            self.count_dropped(|r| matches!(r, RowDropReason::MissingFeature { .. })),
            self.count_dropped(|r| matches!(r, RowDropReason::Outlier { .. })),
        )?;
        writeln!(f, "encoded feature columns: {}", self.encoded_feature_count)?;
        writeln!(f, "final feature columns: {}", self.feature_count)?;
        for rule in &self.skipped_rules {
            writeln!(f, "skipped outlier rule {rule}: column absent")?;
        }
        writeln!(f)?;
        writeln!(f, "[dropped columns]")?;
        for (name, why) in &self.dropped_columns {
            match why {
                ColumnDropReason::Configured => writeln!(f, "{name}\tconfigured")?,
                ColumnDropReason::Constant => writeln!(f, "{name}\tconstant")?,
                ColumnDropReason::Correlated { with, r } => {
                    writeln!(f, "{name}\tcorrelated with {with} (r = {r:.6})")?
                }
            }
        }
        writeln!(f)?;
        writeln!(f, "[dropped rows]")?;
        for (row, why) in &self.dropped_rows {
            match why {
                RowDropReason::MissingLabel => writeln!(f, "{row}\tmissing label")?,
                RowDropReason::MissingFeature { column } => {
                    writeln!(f, "{row}\tmissing {column}")?
                }
                RowDropReason::Outlier { rule } => writeln!(f, "{row}\toutlier {rule}")?,
            }
        }
        Ok(())
    }
}

enum ColumnRole<'a> {
    Drop,
    Label,
    Numeric,
    Categorical(&'a CategoricalColumn, Vec<&'a str>),
}

/// Turns a raw table into a clean numeric [`Dataset`].
pub fn preprocess(table: &RawTable, config: &PreprocessConfig) -> Result<(Dataset, PreprocessReport)> {
    config.validate()?;
    let label_idx = table
        .column_index(&config.label_column)
        .ok_or_else(|| Error::MissingColumn(config.label_column.clone()))?;

    let mut report = PreprocessReport {
        input_rows: table.row_count(),
        ..Default::default()
    };

    let roles: Vec<ColumnRole> = table
        .columns()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            if j == label_idx {
                ColumnRole::Label
            } else if config.drop_columns.contains(name) {
                ColumnRole::Drop
            } else if let Some(cat) = config.categorical.iter().find(|c| &c.column == name) {
                ColumnRole::Categorical(cat, cat.categories())
            } else {
                ColumnRole::Numeric
            }
        })
        .collect();

    let mut encoded_names = Vec::new();
    for (name, role) in table.columns().iter().zip(&roles) {
        match role {
            ColumnRole::Drop => report
                .dropped_columns
                .push((name.clone(), ColumnDropReason::Configured)),
            ColumnRole::Numeric => encoded_names.push(name.clone()),
            ColumnRole::Categorical(_, cats) => {
                let cols: Vec<String> = cats.iter().map(|c| format!("{name}={c}")).collect();
                encoded_names.extend(cols.iter().cloned());
                report.one_hot_groups.push(OneHotGroup {
                    source: name.clone(),
                    columns: cols,
                });
            }
            ColumnRole::Label => {}
        }
    }

    let mut rules = Vec::new();
    for rule in &config.outlier_rules {
        let idx: Option<Vec<(usize, &str)>> = rule
            .conditions
            .iter()
            .map(|(c, v)| table.column_index(c).map(|i| (i, v.as_str())))
            .collect();
        match idx {
            Some(idx) => rules.push((rule.name.as_str(), idx)),
            None => report.skipped_rules.push(rule.name.clone()),
        }
    }

    let width = encoded_names.len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut encoded = vec![0.0; width];
    'rows: for (r, row) in table.rows().iter().enumerate() {
        let label_cell = row[label_idx].trim();
        let label = if config.is_missing(label_cell) {
            report.dropped_rows.push((r, RowDropReason::MissingLabel));
            continue;
        } else if label_cell == config.positive_label {
            POSITIVE
        } else if label_cell == config.negative_label {
            NEGATIVE
        } else {
            return Err(Error::UnknownCategory {
                row: r,
                column: config.label_column.clone(),
                value: label_cell.to_owned(),
            });
        };

        for (name, conds) in &rules {
            if conds.iter().all(|&(i, v)| row[i].trim() == v) {
                report.dropped_rows.push((
                    r,
                    RowDropReason::Outlier {
                        rule: (*name).to_owned(),
                    },
                ));
                continue 'rows;
            }
        }

        let mut k = 0;
        for ((cell, role), name) in row.iter().zip(&roles).zip(table.columns()) {
            let cell = cell.trim();
            match role {
                ColumnRole::Drop | ColumnRole::Label => {}
                ColumnRole::Numeric => {
                    if config.is_missing(cell) {
                        report.dropped_rows.push((
                            r,
                            RowDropReason::MissingFeature {
                                column: name.clone(),
                            },
                        ));
                        continue 'rows;
                    }
                    let v: f64 = cell
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| Error::NotNumeric {
                            row: r,
                            column: name.clone(),
                            value: cell.to_owned(),
                        })?;
                    encoded[k] = v;
                    k += 1;
                }
                ColumnRole::Categorical(cat, cats) => {
                    let category = cat
                        .values
                        .iter()
                        .find(|(raw, _)| raw == cell)
                        .map(|(_, c)| c.as_str())
                        .ok_or_else(|| Error::UnknownCategory {
                            row: r,
                            column: name.clone(),
                            value: cell.to_owned(),
                        })?;
                    for c in cats {
                        encoded[k] = if *c == category { 1.0 } else { 0.0 };
                        k += 1;
                    }
                }
            }
        }
        data.extend_from_slice(&encoded);
        labels.push(label);
    }

    if labels.is_empty() {
        return Err(Error::AllRowsDropped);
    }
    report.encoded_feature_count = width;
    let matrix = Matrix::from_vec(labels.len(), width, data)?;

    let keep = prune_columns(&matrix, &encoded_names, config.corr_threshold, &mut report);
    if keep.is_empty() {
        return Err(Error::NoFeatures);
    }
    report.feature_count = keep.len();
    let features = matrix.select_columns(&keep);
    let names = keep.iter().map(|&j| encoded_names[j].clone()).collect();
    let dataset = Dataset::new(features, labels, names)?.with_label_encoding(
        config.label_column.clone(),
        config.negative_label.clone(),
        config.positive_label.clone(),
    );
    Ok((dataset, report))
}

/// Drops constant columns, then walks columns in order and drops any column
/// whose |r| with an already kept column exceeds `threshold`.
fn prune_columns(
    m: &Matrix,
    names: &[String],
    threshold: f64,
    report: &mut PreprocessReport,
) -> Vec<usize> {
    let columns: Vec<Vec<f64>> = (0..m.cols()).map(|j| m.column(j)).collect();
    let mut kept: Vec<usize> = Vec::new();
    'cols: for j in 0..m.cols() {
        let col = &columns[j];
        if col.iter().all(|&v| v == col[0]) {
            report
                .dropped_columns
                .push((names[j].clone(), ColumnDropReason::Constant));
            continue;
        }
        for &k in &kept {
            if let Some(r) = pearson(&columns[k], col) {
                if r.abs() > threshold {
                    report.dropped_columns.push((
                        names[j].clone(),
                        ColumnDropReason::Correlated {
                            with: names[k].clone(),
                            r,
                        },
                    ));
                    continue 'cols;
                }
            }
        }
        kept.push(j);
    }
    kept
}
