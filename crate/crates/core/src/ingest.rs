//! CSV ingestion with row-dropping for missing cells, and train/test splits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// A column addressed by header name or by 0-based position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

impl ColumnRef {
    fn resolve(&self, headers: &[String]) -> Result<usize> {
        match self {
            ColumnRef::Name(name) => headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::AbsentColumn(name.clone())),
            ColumnRef::Index(i) if *i < headers.len() => Ok(*i),
            ColumnRef::Index(i) => Err(Error::AbsentColumn(format!("#{i}"))),
        }
    }
}

impl From<&str> for ColumnRef {
    /// Always a header name, even when it looks numeric; positions use
    /// [`ColumnRef::Index`].
    fn from(name: &str) -> Self {
        ColumnRef::Name(name.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub target: ColumnRef,
    /// Feature columns in order; `None` means every column except the target,
    /// in file order.
    pub features: Option<Vec<ColumnRef>>,
    /// Cell text that marks a missing value, in addition to the empty cell.
    pub missing_sentinel: Option<String>,
}

impl ColumnSpec {
    pub fn new(target: impl Into<ColumnRef>) -> Self {
        Self {
            target: target.into(),
            features: None,
            missing_sentinel: None,
        }
    }

    pub fn with_features(mut self, features: Vec<ColumnRef>) -> Self {
        self.features = Some(features);
        self
    }

    pub fn with_missing_sentinel(mut self, sentinel: impl Into<String>) -> Self {
        self.missing_sentinel = Some(sentinel.into());
        self
    }
}

/// Result of reading a CSV file: the retained rows and how many were dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvData {
    pub dataset: Dataset,
    /// Rows dropped for a missing or non-numeric cell in a selected column.
    pub dropped_rows: usize,
}

fn parse_cell(cell: &str, sentinel: Option<&str>) -> Option<f64> {
    let cell = cell.trim();
    if cell.is_empty() || Some(cell) == sentinel {
        return None;
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Read a header-first, comma-delimited file into a numeric [`Dataset`].
///
/// Row ids are the 0-based positions of data lines in the file, so they stay
/// stable when rows are dropped. Any selected cell that is empty, equal to the
/// sentinel, or not a finite decimal number drops its row.
pub fn read_csv(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<CsvData> {
    let path = path.as_ref();
    let io_error = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_error)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let target = spec.target.resolve(&headers)?;
    let features: Vec<usize> = match &spec.features {
        Some(list) => list
            .iter()
            .map(|c| c.resolve(&headers))
            .collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&j| j != target).collect(),
    };
    if features.is_empty() {
        return Err(Error::InvalidInput("no feature columns selected".into()));
    }
    if features.contains(&target) {
        return Err(Error::InvalidInput(
            "target column is also selected as a feature".into(),
        ));
    }

    let sentinel = spec.missing_sentinel.as_deref();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); features.len()];
    let mut response = Vec::new();
    let mut row_ids = Vec::new();
    let mut dropped = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let cell = |j: usize| record.get(j).and_then(|c| parse_cell(c, sentinel));
        let values: Option<Vec<f64>> = features.iter().map(|&j| cell(j)).collect();
        match (cell(target), values) {
            (Some(y), Some(values)) => {
                for (column, v) in columns.iter_mut().zip(values) {
                    column.push(v);
                }
                response.push(y);
                row_ids.push(line as u64);
            }
            _ => dropped += 1,
        }
    }
    if response.is_empty() {
        return Err(Error::NoRows { dropped });
    }
    if dropped > 0 {
        log::info!(
            "{}: dropped {dropped} rows with missing or non-numeric cells",
            path.display()
        );
    }
    let names = features.iter().map(|&j| headers[j].clone()).collect();
    Ok(CsvData {
        dataset: Dataset::new(columns, response, row_ids, names)?,
        dropped_rows: dropped,
    })
}

/// Feature rows read from a CSV file, without a response column.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<Vec<f64>>,
    /// 0-based data-line positions of the retained rows.
    pub row_ids: Vec<u64>,
    /// Value of the `extra` column for each retained row; `None` where missing.
    pub extra: Vec<Option<f64>>,
    pub dropped_rows: usize,
}

/// Read the named feature columns (in the given order) for prediction.
///
/// Rows with a missing or non-numeric feature cell are dropped. An optional
/// `extra` column, typically the observed response, is carried along without
/// causing drops.
pub fn read_feature_csv(
    path: impl AsRef<Path>,
    features: &[String],
    extra: Option<&str>,
    missing_sentinel: Option<&str>,
) -> Result<FeatureTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let positions: Vec<usize> = features
        .iter()
        .map(|f| ColumnRef::Name(f.clone()).resolve(&headers))
        .collect::<Result<_>>()?;
    let extra_position = extra
        .map(|name| ColumnRef::Name(name.to_string()).resolve(&headers))
        .transpose()?;
    let mut table = FeatureTable {
        rows: Vec::new(),
        row_ids: Vec::new(),
        extra: Vec::new(),
        dropped_rows: 0,
    };
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let cell = |j: usize| record.get(j).and_then(|c| parse_cell(c, missing_sentinel));
        match positions
            .iter()
            .map(|&j| cell(j))
            .collect::<Option<Vec<f64>>>()
        {
            Some(row) => {
                table.rows.push(row);
                table.row_ids.push(line as u64);
                table.extra.push(extra_position.and_then(cell));
            }
            None => table.dropped_rows += 1,
        }
    }
    if table.rows.is_empty() {
        return Err(Error::NoRows {
            dropped: table.dropped_rows,
        });
    }
    Ok(table)
}

/// Random partition with `floor(n * test_fraction)` test rows. The test rows
/// come in draw order; training rows keep their original order.
pub fn train_test_split(
    data: &Dataset,
    test_fraction: f64,
    stream: &mut RandomStream,
) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = data.n_rows();
    let n_test = (n as f64 * test_fraction).floor() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} of {n} rows leaves an empty part"
        )));
    }
    let test = stream.sample_without_replacement(n, n_test)?;
    let mut in_test = vec![false; n];
    for &i in &test {
        in_test[i] = true;
    }
    let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    Ok((data.subset(&train)?, data.subset(&test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_stream;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn drops_rows_with_missing_cells() {
        let f = write("a,b,y\n1,2,3\n4,,6\n7,8,9\n1,1,1\n2,2,2\n");
        let out = read_csv(f.path(), &ColumnSpec::new("y")).unwrap();
        assert_eq!(out.dataset.n_rows(), 4);
        assert_eq!(out.dropped_rows, 1);
        assert_eq!(out.dataset.row_ids(), &[0, 2, 3, 4]);
    }

    #[test]
    fn sentinel_and_text_cells_drop_rows() {
        let f = write("hp,y\n?,1\n3,2\nabc,3\n4,4\n");
        let spec = ColumnSpec::new("y").with_missing_sentinel("?");
        let out = read_csv(f.path(), &spec).unwrap();
        assert_eq!(out.dataset.column(0), &[3.0, 4.0]);
        assert_eq!(out.dropped_rows, 2);
    }

    #[test]
    fn absent_target_is_reported() {
        let f = write("a,b\n1,2\n");
        assert!(matches!(
            read_csv(f.path(), &ColumnSpec::new("y")),
            Err(Error::AbsentColumn(c)) if c == "y"
        ));
    }

    #[test]
    fn keeps_rows_and_column_order() {
        let f = write("c,a,y,b\n1,2,3,4\n5,6,7,8\n");
        let out = read_csv(f.path(), &ColumnSpec::new("y")).unwrap();
        assert_eq!(out.dataset.feature_names(), &["c", "a", "b"]);
        assert_eq!(out.dataset.row(1), vec![5.0, 6.0, 8.0]);
        assert_eq!(out.dataset.response(), &[3.0, 7.0]);
        let picked = ColumnSpec::new(ColumnRef::Index(2))
            .with_features(vec!["b".into(), ColumnRef::Index(0)]);
        let out = read_csv(f.path(), &picked).unwrap();
        assert_eq!(out.dataset.feature_names(), &["b", "c"]);
    }

    #[test]
    fn no_rows_and_unreadable_files_are_distinct() {
        let f = write("a,y\n,1\n2,\n");
        assert!(matches!(
            read_csv(f.path(), &ColumnSpec::new("y")),
            Err(Error::NoRows { dropped: 2 })
        ));
        assert!(matches!(
            read_csv("/nonexistent/file.csv", &ColumnSpec::new("y")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn feature_table_follows_requested_order() {
        let f = write("b,y,a\n1,,2\n3,4,\n5,6,7\n");
        let t = read_feature_csv(f.path(), &["a".into(), "b".into()], Some("y"), None).unwrap();
        assert_eq!(t.rows, vec![vec![2.0, 1.0], vec![7.0, 5.0]]);
        assert_eq!(t.row_ids, vec![0, 2]);
        assert_eq!(t.extra, vec![None, Some(6.0)]);
        assert_eq!(t.dropped_rows, 1);
        assert!(matches!(
            read_feature_csv(f.path(), &["c".into()], None, None),
            Err(Error::AbsentColumn(_))
        ));
    }

    fn rows(n: usize) -> Dataset {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        Dataset::from_rows(&x, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn split_sizes_round_the_test_part_down() {
        let data = rows(392);
        let (train, test) = train_test_split(&data, 0.2, &mut make_stream(1, &[0])).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (314, 78));
        let mut all: Vec<u64> = train
            .row_ids()
            .iter()
            .chain(test.row_ids())
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..392).collect::<Vec<u64>>());
    }

    #[test]
    fn split_is_deterministic_per_stream() {
        let data = rows(50);
        let a = train_test_split(&data, 0.3, &mut make_stream(4, &[1])).unwrap();
        let b = train_test_split(&data, 0.3, &mut make_stream(4, &[1])).unwrap();
        let c = train_test_split(&data, 0.3, &mut make_stream(5, &[1])).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.1.row_ids(), c.1.row_ids());
    }

    #[test]
    fn degenerate_fractions_are_rejected() {
        let data = rows(3);
        for frac in [0.0, 1.0, 0.1, -0.5, f64::NAN] {
            assert!(matches!(
                train_test_split(&data, frac, &mut make_stream(1, &[0])),
                Err(Error::InvalidInput(_))
            ));
        }
    }
}
