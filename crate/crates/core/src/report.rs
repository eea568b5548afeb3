//! Self-describing result documents written as JSON or flattened CSV.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::archive::write_atomically;
use crate::error::{Error, Result};

/// Version of the report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    /// Everything needed to rerun the command that produced the report.
    pub config: Value,
    /// One flat object per row: coverage records, intervals or histogram bins.
    pub records: Vec<Value>,
    /// Largest Monte Carlo standard error among the records, when they carry one.
    pub mc_stderr: Option<f64>,
    /// Wall-clock time, only when requested, so reports stay byte-reproducible
    /// by default.
    pub runtime_ms: Option<u64>,
}

impl ReportDocument {
    pub fn new(config: impl Serialize, records: Vec<Value>) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(encode_error)?;
        let mc_stderr = records
            .iter()
            .filter_map(|r| r.get("mc_stderr").and_then(Value::as_f64))
            .reduce(f64::max);
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            config,
            records,
            mc_stderr,
            runtime_ms: None,
        })
    }

    /// Serialize typed records into flat JSON objects.
    pub fn from_records<T: Serialize>(config: impl Serialize, records: &[T]) -> Result<Self> {
        let records = records
            .iter()
            .map(serde_json::to_value)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(encode_error)?;
        Self::new(config, records)
    }

    pub fn with_runtime_ms(mut self, runtime_ms: Option<u64>) -> Self {
        self.runtime_ms = runtime_ms;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self).map_err(encode_error)?;
        text.push('\n');
        Ok(text)
    }

    /// One row per record. Columns are `schema_version` followed by record keys
    /// in first-seen order; nested values are embedded as JSON text.
    pub fn to_csv(&self) -> Result<String> {
        let mut columns: Vec<String> = Vec::new();
        for record in &self.records {
            for key in as_object(record)?.keys() {
                if !columns.contains(key) {
                    columns.push(key.clone());
                }
            }
        }
        let mut writer = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("schema_version").chain(columns.iter().map(String::as_str));
        writer.write_record(header).map_err(csv_error)?;
        for record in &self.records {
            let object = as_object(record)?;
            let cells = std::iter::once(self.schema_version.to_string()).chain(
                columns
                    .iter()
                    .map(|c| object.get(c).map(cell_text).unwrap_or_default()),
            );
            writer.write_record(cells).map_err(csv_error)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn as_object(record: &Value) -> Result<&Map<String, Value>> {
    record
        .as_object()
        .ok_or_else(|| Error::InvalidInput("report records must be JSON objects".into()))
}

fn cell_text(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn encode_error(e: serde_json::Error) -> Error {
    Error::Parse(format!("cannot encode report: {e}"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(format!("cannot encode report as csv: {e}"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidInput(format!(
                "unknown report format `{other}`"
            ))),
        }
    }
}

impl ReportDocument {
    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }
}

pub fn write_report(
    report: &ReportDocument,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    write_atomically(path.as_ref(), report.render(format)?.as_bytes())
}
