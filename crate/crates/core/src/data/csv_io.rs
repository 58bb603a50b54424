use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LoadMeta, TimeSeriesDataset};
use crate::error::{ImputeError, Result};

/// Parsing options for the input CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvOptions {
    /// Cell content treated as missing, in addition to empty cells.
    pub missing_token: String,
    /// First column holds numeric timestamps. When false, timestamps are row indices.
    pub time_column: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            missing_token: "NA".to_string(),
            time_column: true,
        }
    }
}

pub fn load_csv(path: &Path, missing_token: &str) -> Result<TimeSeriesDataset> {
    load_csv_with(
        path,
        &CsvOptions {
            missing_token: missing_token.to_string(),
            time_column: true,
        },
    )
}

pub fn load_csv_with(path: &Path, opts: &CsvOptions) -> Result<TimeSeriesDataset> {
    let file = std::fs::File::open(path).map_err(|e| ImputeError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let skip = usize::from(opts.time_column);
    if headers.len() <= skip {
        return Err(ImputeError::ZeroFeatures);
    }
    let feature_names: Vec<String> = headers.iter().skip(skip).map(str::to_string).collect();
    let k = feature_names.len();

    let mut rows: Vec<(f64, Vec<Option<f64>>)> = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| ImputeError::Parse {
            row,
            message: e.to_string(),
        })?;
        let time = if opts.time_column {
            let cell = rec.get(0).unwrap_or_default();
            cell.parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .ok_or_else(|| ImputeError::Parse {
                    row,
                    message: format!("unparseable timestamp '{cell}'"),
                })?
        } else {
            idx as f64
        };
        let mut cells = Vec::with_capacity(k);
        for (j, cell) in rec.iter().skip(skip).enumerate() {
            if cell.is_empty() || cell == opts.missing_token {
                cells.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| ImputeError::Parse {
                row,
                message: format!("column '{}': unparseable value '{cell}'", feature_names[j]),
            })?;
            cells.push(v.is_finite().then_some(v));
        }
        rows.push((time, cells));
    }
    if rows.is_empty() {
        return Err(ImputeError::ZeroRows);
    }

    let mut meta = LoadMeta {
        time_column: opts.time_column.then(|| headers[0].to_string()),
        ..LoadMeta::default()
    };
    if rows.windows(2).any(|w| w[1].0 < w[0].0) {
        meta.resorted = true;
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let before = rows.len();
    rows.dedup_by(|later, earlier| later.0 == earlier.0);
    meta.duplicates_dropped = before - rows.len();

    let timestamps = rows.iter().map(|r| r.0).collect();
    let mut values = Vec::with_capacity(rows.len() * k);
    let mut mask = Vec::with_capacity(rows.len() * k);
    for (_, cells) in &rows {
        for c in cells {
            values.push(c.unwrap_or(0.0));
            mask.push(c.is_some());
        }
    }
    let mut ds = TimeSeriesDataset::new(values, mask, timestamps, feature_names)?;
    ds.meta = meta;
    Ok(ds)
}

/// Writes a dense `T × K` matrix with the dataset's header layout.
pub fn write_matrix_csv(path: &Path, like: &TimeSeriesDataset, values: &[f64]) -> Result<()> {
    let k = like.n_features();
    let mut out = String::new();
    let time_header = like.meta.time_column.as_deref();
    if let Some(h) = time_header {
        out.push_str(h);
        out.push(',');
    }
    out.push_str(&like.feature_names().join(","));
    out.push('\n');
    for t in 0..like.n_steps() {
        if time_header.is_some() {
            out.push_str(&format_number(like.timestamps()[t]));
            out.push(',');
        }
        let row: Vec<String> = values[t * k..(t + 1) * k]
            .iter()
            .map(|&v| format_number(v))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    crate::io_util::write_atomic(path, out.as_bytes())
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_number(v: f64) -> String {
    format!("{v}")
}
