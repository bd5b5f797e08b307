//! Dataset schema, CSV ingestion and serialization, predictor
//! standardization, and a seeded synthetic data generator.
//!
//! Canonical CSV layout:
//!
//! ```text
//! plot_id, pine_hgm, pine_dgm, pine_n, pine_ba, pine_v, spruce_hgm, …, decid_v, x001, …, xNNN
//! ```
//!
//! Columns are matched by name, so their order in the file is free. Lines
//! starting with `#` are comments.

mod standardize;
mod synth;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

pub use standardize::{standardize, StandardizationStats};
pub use synth::{
    generate_synthetic, generate_synthetic_with_truth, SynthConfig, SynthMode, SynthTruth,
};

use crate::error::{DataError, Error, Result};
use crate::gpr::TrainingSet;
use crate::linalg::Matrix;

pub const SPECIES: [&str; 3] = ["pine", "spruce", "decid"];
pub const ATTRIBUTES_PER_SPECIES: [&str; 5] = ["hgm", "dgm", "n", "ba", "v"];
pub const ATTRIBUTE_UNITS: [&str; 5] = ["m", "cm", "stems/ha", "m2/ha", "m3/ha"];
pub const N_ATTRIBUTES: usize = 15;
pub const PLOT_ID: &str = "plot_id";

/// Attribute column names in canonical (species-major) order.
pub fn attribute_names() -> Vec<String> {
    SPECIES
        .iter()
        .flat_map(|s| {
            ATTRIBUTES_PER_SPECIES
                .iter()
                .map(move |a| format!("{s}_{a}"))
        })
        .collect()
}

/// Canonical predictor name for the 0-based column `j` (`x001`, …).
pub fn predictor_name(j: usize) -> String {
    format!("x{:03}", j + 1)
}

fn predictor_sort_key(name: &str) -> (u8, u64, String) {
    match name.strip_prefix('x').and_then(|d| d.parse::<u64>().ok()) {
        Some(k) => (0, k, name.to_string()),
        None => (1, 0, name.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub plot_ids: Vec<String>,
    /// n × 15 attributes, canonical order.
    pub y: Matrix<f64>,
    /// n × n_x predictors.
    pub x: Matrix<f64>,
    pub predictor_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        plot_ids: Vec<String>,
        y: Matrix<f64>,
        x: Matrix<f64>,
        predictor_names: Vec<String>,
    ) -> Result<Self> {
        let n = plot_ids.len();
        if y.rows() != n || x.rows() != n {
            return Err(Error::dims("dataset rows", n, y.rows().max(x.rows())));
        }
        if y.cols() != N_ATTRIBUTES {
            return Err(Error::dims("attribute columns", N_ATTRIBUTES, y.cols()));
        }
        if predictor_names.len() != x.cols() {
            return Err(Error::dims(
                "predictor names",
                x.cols(),
                predictor_names.len(),
            ));
        }
        let mut seen = HashSet::new();
        for (row, id) in plot_ids.iter().enumerate() {
            if !seen.insert(id) {
                return Err(DataError::DuplicatePlotId {
                    row: row + 1,
                    id: id.clone(),
                }
                .into());
            }
        }
        let names = attribute_names();
        for i in 0..n {
            for (a, &v) in y.row(i).iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        row: i + 1,
                        column: names[a].clone(),
                    }
                    .into());
                }
                if v < 0.0 {
                    return Err(DataError::NegativeAttribute {
                        row: i + 1,
                        column: names[a].clone(),
                        value: v,
                    }
                    .into());
                }
            }
            for (j, &v) in x.row(i).iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        row: i + 1,
                        column: predictor_names[j].clone(),
                    }
                    .into());
                }
            }
        }
        Ok(Dataset {
            plot_ids,
            y,
            x,
            predictor_names,
        })
    }

    pub fn n(&self) -> usize {
        self.plot_ids.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.x.cols()
    }

    pub fn attribute_names(&self) -> Vec<String> {
        attribute_names()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Dataset {
            plot_ids: idx.iter().map(|&i| self.plot_ids[i].clone()).collect(),
            y: self.y.select_rows(idx),
            x: self.x.select_rows(idx),
            predictor_names: self.predictor_names.clone(),
        }
    }

    pub fn to_training_set(&self) -> Result<TrainingSet<f64>> {
        TrainingSet::new(
            self.x.clone(),
            self.y.clone(),
            attribute_names(),
            self.predictor_names.clone(),
        )
    }

    /// One-line schema summary, e.g. `n=493, attributes=15, predictors=77`.
    pub fn summary(&self) -> String {
        format!(
            "n={}, attributes={}, predictors={}",
            self.n(),
            N_ATTRIBUTES,
            self.n_predictors()
        )
    }
}

/// Predictor rows without (or ignoring) attribute columns, for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorTable {
    pub plot_ids: Vec<String>,
    pub x: Matrix<f64>,
    pub predictor_names: Vec<String>,
}

impl PredictorTable {
    /// Reorders columns to `names`, failing on any missing name.
    pub fn select(&self, names: &[String]) -> Result<Matrix<f64>> {
        let index: HashMap<&str, usize> = self
            .predictor_names
            .iter()
            .enumerate()
            .map(|(j, n)| (n.as_str(), j))
            .collect();
        let cols = names
            .iter()
            .map(|n| {
                index
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| DataError::MissingColumn(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.x.select_cols(&cols))
    }
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_raw<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(str::to_string).collect(),
        Err(e) => return Err(DataError::Csv(e.to_string()).into()),
    };
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DataError::Empty.into());
    }
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(DataError::DuplicateColumn(h.clone()).into());
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        match rec {
            Ok(r) => rows.push(r),
            Err(e) => {
                if let csv::ErrorKind::UnequalLengths {
                    expected_len, len, ..
                } = e.kind()
                {
                    return Err(DataError::RaggedRow {
                        row: i + 1,
                        expected: *expected_len as usize,
                        found: *len as usize,
                    }
                    .into());
                }
                return Err(DataError::Csv(e.to_string()).into());
            }
        }
    }
    if rows.is_empty() {
        return Err(DataError::Empty.into());
    }
    Ok(RawTable { header, rows })
}

fn parse_cell(raw: &RawTable, row: usize, col: usize) -> Result<f64, DataError> {
    let text = raw.rows[row].get(col).unwrap_or("");
    let v: f64 = text.parse().map_err(|_| DataError::NonNumeric {
        row: row + 1,
        column: raw.header[col].clone(),
        value: text.to_string(),
    })?;
    if !v.is_finite() {
        return Err(DataError::NonFinite {
            row: row + 1,
            column: raw.header[col].clone(),
        });
    }
    Ok(v)
}

struct Layout {
    plot_col: usize,
    attr_cols: Option<Vec<usize>>,
    pred_cols: Vec<usize>,
    pred_names: Vec<String>,
}

fn layout(raw: &RawTable, require_attributes: bool) -> Result<Layout> {
    let pos: HashMap<&str, usize> = raw
        .header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    let plot_col = *pos
        .get(PLOT_ID)
        .ok_or_else(|| DataError::MissingColumn(PLOT_ID.into()))?;
    let names = attribute_names();
    let found: Vec<Option<usize>> = names.iter().map(|n| pos.get(n.as_str()).copied()).collect();
    let attr_cols = if found.iter().all(Option::is_some) {
        Some(found.iter().map(|c| c.unwrap()).collect::<Vec<_>>())
    } else if require_attributes || found.iter().any(Option::is_some) {
        let missing = names
            .iter()
            .zip(&found)
            .find(|(_, c)| c.is_none())
            .map(|(n, _)| n.clone())
            .unwrap();
        return Err(DataError::MissingColumn(missing).into());
    } else {
        None
    };
    let attr_set: HashSet<&str> = names.iter().map(String::as_str).collect();
    let mut preds: Vec<(usize, &String)> = raw
        .header
        .iter()
        .enumerate()
        .filter(|(i, h)| *i != plot_col && !attr_set.contains(h.as_str()))
        .collect();
    if preds.is_empty() {
        return Err(DataError::MissingColumn(predictor_name(0)).into());
    }
    preds.sort_by_key(|(_, h)| predictor_sort_key(h));
    Ok(Layout {
        plot_col,
        attr_cols,
        pred_cols: preds.iter().map(|(i, _)| *i).collect(),
        pred_names: preds.iter().map(|(_, h)| (*h).clone()).collect(),
    })
}

fn parse_block(raw: &RawTable, cols: &[usize]) -> Result<Matrix<f64>> {
    let mut data = Vec::with_capacity(raw.rows.len() * cols.len());
    for i in 0..raw.rows.len() {
        for &c in cols {
            data.push(parse_cell(raw, i, c)?);
        }
    }
    Matrix::new(raw.rows.len(), cols.len(), data)
}

fn plot_ids(raw: &RawTable, col: usize) -> Vec<String> {
    raw.rows
        .iter()
        .map(|r| r.get(col).unwrap_or("").to_string())
        .collect()
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let raw = read_raw(reader)?;
    let lay = layout(&raw, true)?;
    let y = parse_block(&raw, lay.attr_cols.as_ref().expect("attributes required"))?;
    let x = parse_block(&raw, &lay.pred_cols)?;
    Dataset::new(plot_ids(&raw, lay.plot_col), y, x, lay.pred_names)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    read_dataset(File::open(path).map_err(Error::io_at(path))?)
}

/// Reads plot ids and predictors; attribute columns, if present, are
/// ignored.
pub fn read_predictors<R: Read>(reader: R) -> Result<PredictorTable> {
    let raw = read_raw(reader)?;
    let lay = layout(&raw, false)?;
    let x = parse_block(&raw, &lay.pred_cols)?;
    let ids = plot_ids(&raw, lay.plot_col);
    let mut seen = HashSet::new();
    for (row, id) in ids.iter().enumerate() {
        if !seen.insert(id) {
            return Err(DataError::DuplicatePlotId {
                row: row + 1,
                id: id.clone(),
            }
            .into());
        }
    }
    Ok(PredictorTable {
        plot_ids: ids,
        x,
        predictor_names: lay.pred_names,
    })
}

pub fn load_predictors(path: impl AsRef<Path>) -> Result<PredictorTable> {
    let path = path.as_ref();
    read_predictors(File::open(path).map_err(Error::io_at(path))?)
}

/// Writes the canonical CSV. Values use Rust's shortest round-trip float
/// formatting, so `read_dataset(write_dataset(ds)) == ds`.
pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![PLOT_ID.to_string()];
    header.extend(attribute_names());
    header.extend(ds.predictor_names.iter().cloned());
    w.write_record(&header)
        .map_err(|e| DataError::Csv(e.to_string()))?;
    for i in 0..ds.n() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(ds.plot_ids[i].clone());
        rec.extend(ds.y.row(i).iter().map(|v| format!("{v}")));
        rec.extend(ds.x.row(i).iter().map(|v| format!("{v}")));
        w.write_record(&rec)
            .map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
    let f =
        std::io::BufWriter::new(File::create(path.as_ref()).map_err(Error::io_at(path.as_ref()))?);
    write_dataset(ds, f, comment)
}
