//! On-disk dataset bundle: `features.npy`, `responses.csv` and `meta.json`
//! in one directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_npy, write_npy, Dataset, GroundTruth, Response, ResponseKind, ResponseValues};
use crate::{FppError, Result};

pub const FEATURES_FILE: &str = "features.npy";
pub const RESPONSES_FILE: &str = "responses.csv";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseMeta {
    pub name: String,
    pub kind: ResponseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub sample_count: usize,
    pub dim: usize,
    pub responses: Vec<ResponseMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    /// Free-form description of how the data was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl BundleMeta {
    pub fn describe(d: &Dataset, generator: Option<serde_json::Value>) -> Self {
        BundleMeta {
            sample_count: d.sample_count(),
            dim: d.dim(),
            responses: d
                .responses()
                .iter()
                .map(|r| ResponseMeta {
                    name: r.name().to_string(),
                    kind: r.kind(),
                    classes: match r.values() {
                        ResponseValues::Categorical { class_names, .. } => Some(class_names.clone()),
                        _ => None,
                    },
                })
                .collect(),
            column_names: d.column_names().map(<[String]>::to_vec),
            ground_truth: d.ground_truth().cloned(),
            generator,
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| FppError::io(path, e))
}

pub fn write_bundle(
    dir: impl AsRef<Path>,
    d: &Dataset,
    generator: Option<serde_json::Value>,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| FppError::io(dir, e))?;
    write_npy(dir.join(FEATURES_FILE), d.features())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(d.responses().iter().map(Response::name))?;
    for i in 0..d.sample_count() {
        let row: Vec<String> = d
            .responses()
            .iter()
            .map(|r| match r.values() {
                ResponseValues::Continuous { values } => values[i].to_string(),
                ResponseValues::Categorical {
                    labels,
                    class_names,
                    ..
                } => class_names[labels[i]].clone(),
            })
            .collect();
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| FppError::invalid(e.to_string()))?;
    write_file(&dir.join(RESPONSES_FILE), &bytes)?;

    let meta = BundleMeta::describe(d, generator);
    let mut json = serde_json::to_vec_pretty(&meta)?;
    json.push(b'\n');
    write_file(&dir.join(META_FILE), &json)
}

/// Read a bundle. Without `meta.json` every response column is taken as
/// continuous.
pub fn read_bundle(dir: impl AsRef<Path>) -> Result<(Dataset, Option<BundleMeta>)> {
    let dir = dir.as_ref();
    let x = read_npy(dir.join(FEATURES_FILE))?;
    let meta_path = dir.join(META_FILE);
    let meta: Option<BundleMeta> = if meta_path.exists() {
        let text = std::fs::read(&meta_path).map_err(|e| FppError::io(&meta_path, e))?;
        Some(serde_json::from_slice(&text)?)
    } else {
        None
    };

    let resp_path = dir.join(RESPONSES_FILE);
    let mut responses = Vec::new();
    if resp_path.exists() {
        let file = std::fs::File::open(&resp_path).map_err(|e| FppError::io(&resp_path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut columns: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for record in reader.records() {
            let record = record?;
            for (j, col) in columns.iter_mut().enumerate() {
                col.push(record.get(j).unwrap_or("").to_string());
            }
        }
        for (j, (name, raw)) in headers.into_iter().zip(columns).enumerate() {
            let rmeta = meta.as_ref().and_then(|m| m.responses.get(j));
            let response = match rmeta {
                Some(ResponseMeta {
                    kind: ResponseKind::Categorical,
                    classes,
                    ..
                }) => {
                    let classes = classes.clone().unwrap_or_default();
                    let labels = raw
                        .iter()
                        .enumerate()
                        .map(|(row, s)| {
                            classes.iter().position(|c| c == s).ok_or_else(|| {
                                FppError::BadCell {
                                    row,
                                    column: name.clone(),
                                    message: format!("unknown class '{s}'"),
                                }
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Response::categorical_named(name, labels, classes)?
                }
                _ => {
                    let values = raw
                        .iter()
                        .enumerate()
                        .map(|(row, s)| {
                            s.parse::<f64>().map_err(|_| FppError::BadCell {
                                row,
                                column: name.clone(),
                                message: format!("bad response value '{s}'"),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Response::continuous(name, values)?
                }
            };
            responses.push(response);
        }
    }

    let mut d = Dataset::new(x, responses)?;
    if let Some(m) = &meta {
        if let Some(names) = &m.column_names {
            d = d.with_column_names(names.clone())?;
        }
        if let Some(gt) = &m.ground_truth {
            d = d.with_ground_truth(gt.clone())?;
        }
    }
    Ok((d, meta))
}
