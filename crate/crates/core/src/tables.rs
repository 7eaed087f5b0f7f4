//! Reader for the tabular data files shipped with the crate.
//!
//! The format is plain text:
//!
//! ```text
//! # free-form comment / provenance lines
//! @key value unit          directive (value parsed against the key's dimension)
//! col_a  col_b  col_c      header row naming the columns
//! 1.0    2.0    3.0        whitespace-separated numeric rows
//! ```

use std::collections::BTreeMap;

use crate::error::DataError;
use crate::units::{parse_quantity, Dimension};

#[derive(Debug, Clone, Default)]
pub struct DataTable {
    pub source: String,
    pub comments: Vec<String>,
    directives: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DataTable {
    pub fn parse(source: &str, text: &str) -> Result<Self, DataError> {
        let mut table = DataTable {
            source: source.to_string(),
            ..Default::default()
        };
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                table.comments.push(comment.trim().to_string());
                continue;
            }
            if let Some(directive) = line.strip_prefix('@') {
                let mut parts = directive.splitn(2, char::is_whitespace);
                let key = parts.next().unwrap_or_default().to_string();
                let value = parts.next().unwrap_or_default().trim().to_string();
                if key.is_empty() || value.is_empty() {
                    return Err(DataError::Malformed {
                        file: source.to_string(),
                        line: lineno,
                        message: "directive needs a key and a value".into(),
                    });
                }
                if table.directives.insert(key.clone(), value).is_some() {
                    return Err(DataError::Malformed {
                        file: source.to_string(),
                        line: lineno,
                        message: format!("duplicate directive `{key}`"),
                    });
                }
                continue;
            }
            if table.columns.is_empty() {
                table.columns = line.split_whitespace().map(str::to_string).collect();
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| DataError::Malformed {
                    file: source.to_string(),
                    line: lineno,
                    message: format!("bad number: {e}"),
                })?;
            if row.len() != table.columns.len() {
                return Err(DataError::Malformed {
                    file: source.to_string(),
                    line: lineno,
                    message: format!(
                        "expected {} columns, found {}",
                        table.columns.len(),
                        row.len()
                    ),
                });
            }
            table.rows.push(row);
        }
        if table.columns.is_empty() || table.rows.is_empty() {
            return Err(DataError::Malformed {
                file: source.to_string(),
                line: 0,
                message: "no data rows".into(),
            });
        }
        Ok(table)
    }

    pub fn directive(&self, key: &str) -> Option<&str> {
        self.directives.get(key).map(String::as_str)
    }

    pub fn quantity(&self, key: &str, dimension: Dimension) -> Result<f64, DataError> {
        let raw = self
            .directive(key)
            .ok_or_else(|| DataError::MissingDirective {
                file: self.source.clone(),
                key: key.to_string(),
            })?;
        parse_quantity(raw, dimension).map_err(|e| DataError::BadDirective {
            file: self.source.clone(),
            key: key.to_string(),
            message: e.to_string(),
        })
    }

    /// A directive holding a plain number whose unit is spelled out after it
    /// and must match `unit` exactly (used for compound coefficient units).
    pub fn number_with_unit(&self, key: &str, unit: &str) -> Result<f64, DataError> {
        let raw = self
            .directive(key)
            .ok_or_else(|| DataError::MissingDirective {
                file: self.source.clone(),
                key: key.to_string(),
            })?;
        let bad = |message: String| DataError::BadDirective {
            file: self.source.clone(),
            key: key.to_string(),
            message,
        };
        let mut parts = raw.split_whitespace();
        let value: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("cannot parse `{raw}`")))?;
        let found = parts.collect::<Vec<_>>().join(" ");
        if found != unit {
            return Err(bad(format!("expected unit `{unit}`, found `{found}`")));
        }
        Ok(value)
    }

    /// A dimensionless directive.
    pub fn number(&self, key: &str) -> Result<f64, DataError> {
        self.number_with_unit(key, "")
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, DataError> {
        let idx = self.columns.iter().position(|c| c == name).ok_or_else(|| {
            DataError::MissingColumn {
                file: self.source.clone(),
                column: name.to_string(),
            }
        })?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}
