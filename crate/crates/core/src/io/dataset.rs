use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::points::Point;
use crate::rng;

use super::points::parse_cell;
use super::read_text;

/// A rectangular, finite feature matrix with optional per-row labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Point>,
    pub label_name: Option<String>,
    pub labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Distinct label values in first-seen order.
    pub fn label_values(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for l in self.labels.iter().flatten() {
            if !out.contains(l) {
                out.push(l.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Field delimiter; detected among `,`, `;` and tab when absent.
    pub delimiter: Option<u8>,
    /// Feature columns by header name; empty selects every non-label column.
    #[serde(default)]
    pub feature_columns: Vec<String>,
    pub label_column: Option<String>,
    /// When false, columns are named `c1`, `c2`, ...
    #[serde(default = "yes")]
    pub has_header: bool,
}

fn yes() -> bool {
    true
}

impl IngestOptions {
    pub fn with_header() -> Self {
        IngestOptions {
            has_header: true,
            ..Default::default()
        }
    }
}

/// Picks the candidate delimiter occurring most often in `line` (comma on ties).
pub fn detect_delimiter(line: &str) -> u8 {
    let count = |c: char| line.matches(c).count();
    b",;\t"
        .iter()
        .copied()
        .max_by_key(|&d| (count(d as char), d == b','))
        .unwrap_or(b',')
}

pub fn parse_dataset(text: &str, options: &IngestOptions) -> Result<Dataset> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let delimiter = options.delimiter.unwrap_or_else(|| detect_delimiter(first));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let mut names: Vec<String> = Vec::new();
    let mut first_data = None;
    if options.has_header {
        match records.next() {
            Some(rec) => names = rec?.iter().map(|s| s.trim().to_string()).collect(),
            None => return invalid("dataset is empty"),
        }
    } else if let Some(rec) = records.next() {
        let rec = rec?;
        names = (1..=rec.len()).map(|k| format!("c{k}")).collect();
        first_data = Some(rec);
    }
    let find = |name: &str| -> Result<usize> {
        names.iter().position(|n| n == name).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "column `{name}` not found; available: {}",
                names.join(", ")
            ))
        })
    };
    let label_idx = options.label_column.as_deref().map(find).transpose()?;
    let feature_idx: Vec<usize> = if options.feature_columns.is_empty() {
        (0..names.len()).filter(|k| Some(*k) != label_idx).collect()
    } else {
        options
            .feature_columns
            .iter()
            .map(|n| find(n))
            .collect::<Result<_>>()?
    };
    if feature_idx.is_empty() {
        return invalid("no feature columns selected");
    }

    let header_rows = usize::from(options.has_header);
    let mut rows = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let all = first_data.into_iter().map(Ok).chain(records);
    for (k, rec) in all.enumerate() {
        let rec = rec?;
        let line = k + 1 + header_rows;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if rec.len() != names.len() {
            return Err(Error::Parse {
                row: line,
                column: rec.len().min(names.len()) + 1,
                message: format!("expected {} fields, found {}", names.len(), rec.len()),
            });
        }
        let row = feature_idx
            .iter()
            .map(|&c| parse_cell(&rec[c], line, c + 1))
            .collect::<Result<Point>>()?;
        rows.push(row);
        if let (Some(c), Some(l)) = (label_idx, labels.as_mut()) {
            let value = rec[c].trim().trim_matches('"').to_string();
            if value.is_empty() {
                return Err(Error::Parse {
                    row: line,
                    column: c + 1,
                    message: "missing label".into(),
                });
            }
            l.push(value);
        }
    }
    if rows.is_empty() {
        return invalid("dataset has no data rows");
    }
    Ok(Dataset {
        feature_names: feature_idx.iter().map(|&k| names[k].clone()).collect(),
        rows,
        label_name: label_idx.map(|k| names[k].clone()),
        labels,
    })
}

pub fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<Dataset> {
    parse_dataset(&read_text(path)?, options)
}

fn same_label(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Rows carrying label `a` and rows carrying label `b`, each in file order.
pub fn split_by_label(ds: &Dataset, a: &str, b: &str) -> Result<(Vec<Point>, Vec<Point>)> {
    let Some(labels) = &ds.labels else {
        return invalid("dataset has no label column");
    };
    if same_label(a, b) {
        return invalid(format!("the two groups must differ, both are `{a}`"));
    }
    let pick = |v: &str| -> Result<Vec<Point>> {
        let rows: Vec<Point> = ds
            .rows
            .iter()
            .zip(labels)
            .filter(|(_, l)| same_label(l, v))
            .map(|(r, _)| r.clone())
            .collect();
        if rows.is_empty() {
            return invalid(format!(
                "label `{v}` does not occur; available: {}",
                ds.label_values().join(", ")
            ));
        }
        Ok(rows)
    };
    Ok((pick(a)?, pick(b)?))
}

/// `k` rows drawn without replacement (partial Fisher-Yates), in draw order.
pub fn subsample(sample: &[Point], k: usize, seed: u64) -> Result<Vec<Point>> {
    if k == 0 {
        return invalid("subsample size must be positive");
    }
    if k > sample.len() {
        return invalid(format!("cannot draw {k} rows from {}", sample.len()));
    }
    let mut r = rng::stream(seed, "subsample", 0);
    let mut idx: Vec<usize> = (0..sample.len()).collect();
    for i in 0..k {
        let j = r.random_range(i..idx.len());
        idx.swap(i, j);
    }
    Ok(idx[..k].iter().map(|&i| sample[i].clone()).collect())
}
