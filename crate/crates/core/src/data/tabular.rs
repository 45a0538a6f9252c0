use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, Response};
use crate::{FppError, Result};

/// Names a CSV column either by header text or by zero-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Name(String),
    Index(usize),
}

impl From<&str> for ColumnSelector {
    fn from(s: &str) -> Self {
        ColumnSelector::Name(s.to_string())
    }
}

impl From<usize> for ColumnSelector {
    fn from(i: usize) -> Self {
        ColumnSelector::Index(i)
    }
}

impl ColumnSelector {
    fn resolve(&self, headers: &[String]) -> Result<usize> {
        match self {
            ColumnSelector::Name(n) => headers
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| FppError::invalid(format!("no column named '{n}'"))),
            ColumnSelector::Index(i) if *i < headers.len() => Ok(*i),
            ColumnSelector::Index(i) => Err(FppError::IndexOutOfRange {
                index: *i,
                len: headers.len(),
            }),
        }
    }
}

/// Load a headed CSV file. The selected columns become responses
/// (categorical where flagged, label-encoded in first-appearance order); all
/// remaining columns must be numeric and become features.
pub fn load_csv(
    path: impl AsRef<Path>,
    response_columns: &[ColumnSelector],
    categorical_flags: &[bool],
) -> Result<Dataset> {
    let path = path.as_ref();
    if categorical_flags.len() != response_columns.len() {
        return Err(FppError::DimensionMismatch {
            expected: response_columns.len(),
            actual: categorical_flags.len(),
        });
    }
    let file = std::fs::File::open(path).map_err(|e| FppError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let response_idx = response_columns
        .iter()
        .map(|s| s.resolve(&headers))
        .collect::<Result<Vec<_>>>()?;
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|i| !response_idx.contains(i))
        .collect();
    if feature_idx.is_empty() {
        return Err(FppError::invalid("no feature columns left after selecting responses"));
    }

    let mut features = Vec::new();
    let mut raw_responses: Vec<Vec<String>> = vec![Vec::new(); response_idx.len()];
    let mut rows = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for &j in &feature_idx {
            let cell = record.get(j).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| FppError::BadCell {
                row,
                column: headers[j].clone(),
                message: format!("non-numeric feature value '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(FppError::BadCell {
                    row,
                    column: headers[j].clone(),
                    message: format!("non-finite feature value '{cell}'"),
                });
            }
            features.push(v);
        }
        for (k, &j) in response_idx.iter().enumerate() {
            raw_responses[k].push(record.get(j).unwrap_or("").to_string());
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(FppError::EmptyDataset);
    }

    let mut responses = Vec::with_capacity(response_idx.len());
    for ((&j, raw), &categorical) in response_idx.iter().zip(raw_responses).zip(categorical_flags) {
        let name = headers[j].clone();
        let response = if categorical {
            let mut codes: HashMap<String, usize> = HashMap::new();
            let mut class_names = Vec::new();
            let labels = raw
                .into_iter()
                .map(|s| {
                    *codes.entry(s.clone()).or_insert_with(|| {
                        class_names.push(s);
                        class_names.len() - 1
                    })
                })
                .collect();
            Response::categorical_named(name, labels, class_names)?
        } else {
            let values = raw
                .iter()
                .enumerate()
                .map(|(row, s)| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| FppError::BadCell {
                            row,
                            column: name.clone(),
                            message: format!("bad continuous response value '{s}'"),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            Response::continuous(name, values)?
        };
        responses.push(response);
    }

    let x = Array2::from_shape_vec((rows, feature_idx.len()), features)
        .map_err(|e| FppError::invalid(e.to_string()))?;
    let names = feature_idx.iter().map(|&j| headers[j].clone()).collect();
    Dataset::new(x, responses)?.with_column_names(names)
}
