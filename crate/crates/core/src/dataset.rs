use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Numeric regression data stored column-major, with a stable identity per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    response: Vec<f64>,
    row_ids: Vec<u64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        columns: Vec<Vec<f64>>,
        response: Vec<f64>,
        row_ids: Vec<u64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = response.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset has no rows".into()));
        }
        if columns.is_empty() {
            return Err(Error::InvalidInput("dataset has no feature columns".into()));
        }
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::InvalidInput(format!(
                "feature column {j} has {} rows, response has {n}",
                c.len()
            )));
        }
        if row_ids.len() != n {
            return Err(Error::InvalidInput(
                "row_ids length differs from response".into(),
            ));
        }
        if feature_names.len() != columns.len() {
            return Err(Error::InvalidInput(
                "one name per feature column required".into(),
            ));
        }
        if columns
            .iter()
            .flatten()
            .chain(&response)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "dataset contains non-finite values".into(),
            ));
        }
        let mut ids = row_ids.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("row_ids are not unique".into()));
        }
        Ok(Self {
            columns,
            response,
            row_ids,
            feature_names,
        })
    }

    /// Build from row-major feature vectors; row ids are `0..n` and features
    /// are named `x1..xp`.
    pub fn from_rows(rows: &[Vec<f64>], response: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("rows have differing lengths".into()));
        }
        if rows.len() != response.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature rows but {} responses",
                rows.len(),
                response.len()
            )));
        }
        let columns = (0..p)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        let row_ids = (0..response.len() as u64).collect();
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::new(columns, response, row_ids, names)
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature]
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// Rows `indices` (in that order) as a new dataset, keeping their row ids.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            indices.iter().map(|&i| self.response[i]).collect(),
            indices.iter().map(|&i| self.row_ids[i]).collect(),
            self.feature_names.clone(),
        )
    }

    /// Population variance of the response.
    pub fn response_variance(&self) -> f64 {
        let n = self.n_rows() as f64;
        let mean = self.response.iter().sum::<f64>() / n;
        self.response
            .iter()
            .map(|y| (y - mean).powi(2))
            .sum::<f64>()
            / n
    }

    pub fn fingerprint(&self) -> DatasetFingerprint {
        let mut hasher = Sha256::new();
        for name in &self.feature_names {
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
        }
        for id in &self.row_ids {
            hasher.update(id.to_le_bytes());
        }
        for v in self.columns.iter().flatten().chain(&self.response) {
            hasher.update(v.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        DatasetFingerprint {
            n_rows: self.n_rows(),
            feature_names: self.feature_names.clone(),
            content_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub n_rows: usize,
    pub feature_names: Vec<String>,
    pub content_sha256: String,
}
