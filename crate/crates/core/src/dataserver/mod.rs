//! Named-column numeric tables, their statistics, and the shared text format.
//!
//! File layout:
//!
//! ```text
//! # free comment
//! #COLUMNS: x y theta
//! #UNITS: m s -
//! 0 1 0.25
//! 1 2 0.5
//! ```
//!
//! Lines starting with `#` are comments except the single `#COLUMNS:` header
//! (which must precede every data row) and the optional `#UNITS:` line, where
//! `-` stands for "no unit".

mod expr;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::textfmt::format_f64;

pub use expr::{Expr, ExprError};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    RaggedRow { line: usize, expected: usize, found: usize },
    #[error("line {line}: cell `{cell}` is not a finite number")]
    NonNumericCell { line: usize, cell: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("invalid column name `{0}`")]
    InvalidName(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("column `{name}` has {found} values, table has {expected} rows")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("need at least {needed} rows, table has {found}")]
    InsufficientRows { needed: usize, found: usize },
    #[error("probability {0} outside (0, 1)")]
    BadProbability(f64),
    #[error("expression: {0}")]
    Expression(#[from] ExprError),
    #[error("expression produced a non-finite value at row {0}")]
    NonFiniteResult(usize),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    values: Vec<f64>,
    unit: Option<String>,
}

impl Column {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> Option<&str> {
        self.unit.as_deref()
    }
}

/// Immutable-by-convention table of finite reals with uniquely named columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataTable {
    columns: Vec<Column>,
    n_rows: usize,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace) && !name.starts_with('#')
}

impl DataTable {
    /// Table with the given column names and no rows.
    pub fn empty<S: AsRef<str>>(names: &[S]) -> Result<Self, TableError> {
        let mut t = Self::default();
        for n in names {
            t = t.with_column(n.as_ref(), Vec::new())?;
        }
        Ok(t)
    }

    pub fn from_columns<S: Into<String>>(columns: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self, TableError> {
        let mut t = Self::default();
        for (name, values) in columns {
            t = t.with_column(name, values)?;
        }
        Ok(t)
    }

    /// Builds a table from row vectors; every row must have `names.len()` entries.
    pub fn from_rows<S: AsRef<str>>(names: &[S], rows: &[Vec<f64>]) -> Result<Self, TableError> {
        let mut cols = vec![Vec::with_capacity(rows.len()); names.len()];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(TableError::RaggedRow {
                    line: r + 1,
                    expected: names.len(),
                    found: row.len(),
                });
            }
            for (c, v) in row.iter().enumerate() {
                cols[c].push(*v);
            }
        }
        let mut t = Self {
            n_rows: rows.len(),
            ..Self::default()
        };
        for (name, values) in names.iter().zip(cols) {
            t = t.with_column(name.as_ref(), values)?;
        }
        Ok(t)
    }

    /// Appends a column, validating its name, length and values.
    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self, TableError> {
        let name = name.into();
        if !valid_name(&name) {
            return Err(TableError::InvalidName(name));
        }
        if self.columns.iter().any(|c| c.name == name) {
            return Err(TableError::DuplicateColumn(name));
        }
        if self.columns.is_empty() {
            self.n_rows = values.len();
        } else if values.len() != self.n_rows {
            return Err(TableError::LengthMismatch {
                name,
                expected: self.n_rows,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TableError::NonFinite(name));
        }
        self.columns.push(Column {
            name,
            values,
            unit: None,
        });
        Ok(self)
    }

    pub fn with_unit(mut self, column: &str, unit: &str) -> Result<Self, TableError> {
        if !valid_name(unit) {
            return Err(TableError::InvalidName(unit.to_string()));
        }
        let c = self
            .columns
            .iter_mut()
            .find(|c| c.name == column)
            .ok_or_else(|| TableError::UnknownColumn(column.to_string()))?;
        c.unit = Some(unit.to_string());
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Result<&[f64], TableError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| TableError::UnknownColumn(name.to_string()))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c.values[i]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows).map(|i| self.row(i)).collect()
    }

    /// Rows restricted to the named columns, in the order given.
    pub fn rows_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<Vec<f64>>, TableError> {
        let cols: Vec<&[f64]> = names
            .iter()
            .map(|n| self.column(n.as_ref()))
            .collect::<Result<_, _>>()?;
        Ok((0..self.n_rows).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
    }

    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Self, TableError> {
        let mut out = Self {
            n_rows: self.n_rows,
            ..Self::default()
        };
        for n in names {
            let idx = self
                .column_index(n.as_ref())
                .ok_or_else(|| TableError::UnknownColumn(n.as_ref().to_string()))?;
            let col = self.columns[idx].clone();
            if out.columns.iter().any(|c| c.name == col.name) {
                return Err(TableError::DuplicateColumn(col.name));
            }
            out.columns.push(col);
        }
        Ok(out)
    }

    /// Evaluates `expr` row-wise over existing columns and appends the result.
    pub fn add_derived_column(&self, name: &str, expr: &str) -> Result<Self, TableError> {
        let parsed = Expr::parse(expr)?;
        let names = self.names();
        let bound = parsed.bind(&names)?;
        let mut values = Vec::with_capacity(self.n_rows);
        let mut row = vec![0.0; self.columns.len()];
        for i in 0..self.n_rows {
            for (slot, c) in row.iter_mut().zip(&self.columns) {
                *slot = c.values[i];
            }
            let v = bound.eval(&row);
            if !v.is_finite() {
                return Err(TableError::NonFiniteResult(i));
            }
            values.push(v);
        }
        self.clone().with_column(name, values)
    }

    pub fn stats(&self, column: &str, probs: &[f64]) -> Result<ColumnStats, TableError> {
        ColumnStats::compute(self.column(column)?, probs)
    }

    pub fn to_text(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            for line in c.lines() {
                s.push_str("# ");
                s.push_str(line);
                s.push('\n');
            }
        }
        s.push_str("#COLUMNS:");
        for c in &self.columns {
            s.push(' ');
            s.push_str(&c.name);
        }
        s.push('\n');
        if self.columns.iter().any(|c| c.unit.is_some()) {
            s.push_str("#UNITS:");
            for c in &self.columns {
                s.push(' ');
                s.push_str(c.unit.as_deref().unwrap_or("-"));
            }
            s.push('\n');
        }
        for i in 0..self.n_rows {
            for (j, c) in self.columns.iter().enumerate() {
                if j > 0 {
                    s.push(' ');
                }
                s.push_str(&format_f64(c.values[i]));
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut names: Option<Vec<String>> = None;
        let mut units: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#COLUMNS:") {
                if names.is_some() {
                    return Err(TableError::MalformedHeader(format!(
                        "line {line_no}: second #COLUMNS line"
                    )));
                }
                let n: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                if n.is_empty() {
                    return Err(TableError::MalformedHeader(format!("line {line_no}: no column names")));
                }
                names = Some(n);
                continue;
            }
            if let Some(rest) = line.strip_prefix("#UNITS:") {
                units = Some(rest.split_whitespace().map(str::to_string).collect());
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let Some(header) = names.as_ref() else {
                return Err(TableError::MalformedHeader(format!(
                    "line {line_no}: data before #COLUMNS line"
                )));
            };
            let mut row = Vec::with_capacity(header.len());
            for cell in line.split_whitespace() {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(v),
                    _ => {
                        return Err(TableError::NonNumericCell {
                            line: line_no,
                            cell: cell.to_string(),
                        })
                    }
                }
            }
            if row.len() != header.len() {
                return Err(TableError::RaggedRow {
                    line: line_no,
                    expected: header.len(),
                    found: row.len(),
                });
            }
            rows.push(row);
        }
        let names = names.ok_or_else(|| TableError::MalformedHeader("no #COLUMNS line".to_string()))?;
        let mut table = Self::from_rows(&names, &rows)?;
        if let Some(units) = units {
            if units.len() != names.len() {
                return Err(TableError::MalformedHeader(format!(
                    "#UNITS has {} entries for {} columns",
                    units.len(),
                    names.len()
                )));
            }
            for (n, u) in names.iter().zip(&units) {
                if u != "-" {
                    table = table.with_unit(n, u)?;
                }
            }
        }
        Ok(table)
    }
}

pub fn read_table(path: impl AsRef<Path>) -> Result<DataTable, TableError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TableError::IoFailure {
        path: path.display().to_string(),
        source,
    })?;
    DataTable::parse(&text)
}

pub fn write_table(table: &DataTable, path: impl AsRef<Path>) -> Result<(), TableError> {
    write_table_with_comments(table, path, &[])
}

/// Writes the table preceded by `# ` comment lines.
pub fn write_table_with_comments(
    table: &DataTable,
    path: impl AsRef<Path>,
    comments: &[String],
) -> Result<(), TableError> {
    let path = path.as_ref();
    fs::write(path, table.to_text(comments)).map_err(|source| TableError::IoFailure {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub quantiles: BTreeMap<QuantileKey, f64>,
}

/// Probability used as a map key; ordered by its numeric value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileKey(pub f64);

impl Eq for QuantileKey {}

impl PartialOrd for QuantileKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QuantileKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl ColumnStats {
    pub fn compute(values: &[f64], probs: &[f64]) -> Result<Self, TableError> {
        if values.len() < 2 {
            return Err(TableError::InsufficientRows {
                needed: 2,
                found: values.len(),
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut quantiles = BTreeMap::new();
        for &p in probs {
            quantiles.insert(QuantileKey(p), quantile_sorted(&sorted, p)?);
        }
        Ok(Self {
            mean,
            std_dev: var.sqrt(),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            quantiles,
        })
    }

    pub fn quantile(&self, p: f64) -> Option<f64> {
        self.quantiles.get(&QuantileKey(p)).copied()
    }
}

/// Linear interpolation between order statistics at 1-based position
/// `p (n - 1) + 1`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Result<f64, TableError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(TableError::BadProbability(p));
    }
    if sorted.is_empty() {
        return Err(TableError::InsufficientRows { needed: 1, found: 0 });
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with n - 1 denominator.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// 1-based ranks, ties receiving their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Pearson correlation of ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// Mean squared difference between observations and predictions.
pub fn mse(y: &[f64], pred: &[f64]) -> f64 {
    y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Coefficient of determination `1 - sum (y - pred)^2 / sum (y - mean y)^2`.
/// With leave-one-out predictions this is the Q2 predictivity coefficient.
pub fn r_squared(y: &[f64], pred: &[f64]) -> f64 {
    let m = mean(y);
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - m).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_file() {
        let t = DataTable::parse("#COLUMNS: x y\n0 1\n1 2\n").unwrap();
        assert_eq!(t.n_cols(), 2);
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.column("y").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn comments_only_is_malformed() {
        let err = DataTable::parse("# hello\n# world\n").unwrap_err();
        assert!(matches!(err, TableError::MalformedHeader(_)));
    }

    #[test]
    fn ragged_and_non_numeric_rows() {
        let err = DataTable::parse("#COLUMNS: a b\n1 2\n3\n").unwrap_err();
        assert!(matches!(err, TableError::RaggedRow { line: 3, .. }));
        let err = DataTable::parse("#COLUMNS: a\nfoo\n").unwrap_err();
        assert!(matches!(err, TableError::NonNumericCell { .. }));
        let err = DataTable::parse("#COLUMNS: a\nNaN\n").unwrap_err();
        assert!(matches!(err, TableError::NonNumericCell { .. }));
    }

    #[test]
    fn data_before_header_is_malformed() {
        let err = DataTable::parse("1 2\n#COLUMNS: a b\n").unwrap_err();
        assert!(matches!(err, TableError::MalformedHeader(_)));
    }

    #[test]
    fn single_value_body() {
        let t = DataTable::from_columns([("v", vec![0.5])]).unwrap();
        assert_eq!(t.to_text(&[]), "#COLUMNS: v\n0.5\n");
    }

    #[test]
    fn empty_table_round_trip() {
        let t = DataTable::empty(&["a", "b"]).unwrap();
        let text = t.to_text(&[]);
        assert_eq!(text, "#COLUMNS: a b\n");
        let back = DataTable::parse(&text).unwrap();
        assert_eq!(back.n_rows(), 0);
        assert_eq!(back.names(), vec!["a", "b"]);
    }

    #[test]
    fn units_round_trip() {
        let t = DataTable::from_columns([("x", vec![1.0]), ("t", vec![2.0])])
            .unwrap()
            .with_unit("t", "s")
            .unwrap();
        let back = DataTable::parse(&t.to_text(&["note".into()])).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn file_round_trip_of_point_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.dat");
        let t = DataTable::from_columns([("x", vec![0.1])]).unwrap();
        write_table(&t, &path).unwrap();
        assert_eq!(read_table(&path).unwrap().column("x").unwrap()[0], 0.1);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(DataTable::from_columns([("a b", vec![1.0])]).is_err());
        assert!(DataTable::from_columns([("", vec![1.0])]).is_err());
        assert!(DataTable::from_columns([("a", vec![f64::NAN])]).is_err());
        assert!(DataTable::from_columns([("a", vec![1.0]), ("a", vec![2.0])]).is_err());
        assert!(DataTable::from_columns([("a", vec![1.0]), ("b", vec![2.0, 3.0])]).is_err());
    }

    #[test]
    fn stats_basic() {
        let t = DataTable::from_columns([("v", vec![1.0, 2.0, 3.0])]).unwrap();
        let s = t.stats("v", &[0.5]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std_dev, 1.0);
        assert_eq!(s.quantile(0.5), Some(2.0));
    }

    #[test]
    fn quantile_linear_interpolation() {
        let s = ColumnStats::compute(&[0.0, 1.0], &[0.25]).unwrap();
        assert_eq!(s.quantile(0.25), Some(0.25));
    }

    #[test]
    fn constant_column_stats() {
        let s = ColumnStats::compute(&[5.0, 5.0, 5.0], &[0.1, 0.9]).unwrap();
        assert_eq!(s.std_dev, 0.0);
        assert_eq!(s.quantile(0.1), Some(5.0));
        assert_eq!(s.quantile(0.9), Some(5.0));
    }

    #[test]
    fn stats_errors() {
        let t = DataTable::from_columns([("v", vec![1.0])]).unwrap();
        assert!(matches!(t.stats("w", &[]), Err(TableError::UnknownColumn(_))));
        assert!(matches!(t.stats("v", &[]), Err(TableError::InsufficientRows { .. })));
    }

    #[test]
    fn derived_columns() {
        let t = DataTable::from_columns([("x", vec![1.0, 4.0]), ("y", vec![2.0, 3.0])]).unwrap();
        let d = t.add_derived_column("s", "sqrt(x)").unwrap();
        assert_eq!(d.column("s").unwrap(), &[1.0, 2.0]);
        let d = t.add_derived_column("same", "x+0").unwrap();
        assert_eq!(d.column("same").unwrap(), t.column("x").unwrap());
        assert!(matches!(
            t.add_derived_column("bad", "x/(y-y)"),
            Err(TableError::NonFiniteResult(0))
        ));
        assert!(matches!(
            t.add_derived_column("bad", "z+1"),
            Err(TableError::Expression(ExprError::UnknownColumn(_)))
        ));
    }

    #[test]
    fn spearman_of_monotone_transform_is_one() {
        let a = [0.1, 0.5, 0.3, 0.9];
        let b: Vec<f64> = a.iter().map(|v: &f64| v.exp()).collect();
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, any::<f64>().prop_filter("finite", |v| v.is_finite())]
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(
            cols in 1usize..4,
            rows in prop::collection::vec(prop::collection::vec(finite(), 3), 0..20)
        ) {
            let names: Vec<String> = (0..cols).map(|c| format!("c{c}")).collect();
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r[..cols].to_vec()).collect();
            let t = DataTable::from_rows(&names, &rows).unwrap();
            let back = DataTable::parse(&t.to_text(&[])).unwrap();
            prop_assert_eq!(back.n_rows(), t.n_rows());
            for (a, b) in back.columns().iter().zip(t.columns()) {
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }

        #[test]
        fn mean_invariant_under_replication(
            v in prop::collection::vec(-1e3..1e3f64, 2..30),
            k in 1usize..5
        ) {
            let rep: Vec<f64> = (0..k).flat_map(|_| v.iter().copied()).collect();
            let a = mean(&v);
            let b = mean(&rep);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn quantile_monotone_in_p(
            v in prop::collection::vec(-1e3..1e3f64, 2..30),
            p in 0.001..0.998f64,
            dp in 0.0..0.001f64
        ) {
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            let q1 = quantile_sorted(&s, p).unwrap();
            let q2 = quantile_sorted(&s, p + dp).unwrap();
            prop_assert!(q1 <= q2);
            prop_assert!(s[0] <= q1 && q2 <= s[s.len() - 1]);
        }
    }
}
