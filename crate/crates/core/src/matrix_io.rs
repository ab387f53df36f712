//! Activation matrices, label vectors and their on-disk formats.
//!
//! Two matrix encodings are supported:
//!
//! * **CSV**: header row `id,<node>,<node>,...`, one row per sentence, first
//!   column is the row identifier. Values are written with 17 significant
//!   digits so a CSV round trip reproduces every `f64` exactly.
//! * **bin**: magic `NPSSMAT1`, little-endian `u64` row count `M`, `u64`
//!   column count `J`, `M*J` little-endian `f64` in row-major order, then `M`
//!   row identifiers each prefixed by a little-endian `u64` byte length.
//!
//! Label files are CSV with header `id,label` and labels in `{0,1}`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{NpssError, Result};
use crate::seed::rng_from;

pub const MATRIX_MAGIC: &[u8; 8] = b"NPSSMAT1";

/// Dense `M x J` activation matrix for one layer: rows are sentences,
/// columns are nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    values: Vec<f64>,
    nrows: usize,
    ncols: usize,
    row_ids: Vec<String>,
    layer_tag: Option<String>,
}

impl ActivationMatrix {
    /// Builds a matrix from row-major `values`. Fails if the shape is empty,
    /// any value is non-finite or the row ids are not unique.
    pub fn new(values: Vec<f64>, nrows: usize, ncols: usize, row_ids: Vec<String>) -> Result<Self> {
        if nrows == 0 || ncols == 0 {
            return Err(NpssError::Validation(format!(
                "matrix must have at least one row and one column, got {nrows}x{ncols}"
            )));
        }
        if values.len() != nrows * ncols {
            return Err(NpssError::Shape(format!(
                "{} values cannot fill a {nrows}x{ncols} matrix",
                values.len()
            )));
        }
        if row_ids.len() != nrows {
            return Err(NpssError::Shape(format!("{} row ids for {nrows} rows", row_ids.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(NpssError::Validation(format!(
                "non-finite value {} at row {}, column {}",
                values[pos],
                pos / ncols,
                pos % ncols
            )));
        }
        let mut seen = HashSet::with_capacity(nrows);
        for id in &row_ids {
            if !seen.insert(id.as_str()) {
                return Err(NpssError::Validation(format!("duplicate row id {id:?}")));
            }
        }
        Ok(Self {
            values,
            nrows,
            ncols,
            row_ids,
            layer_tag: None,
        })
    }

    /// Builds a matrix from nested rows, naming rows `r0, r1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
            return Err(NpssError::Shape(format!(
                "row {bad} has {} values, expected {ncols}",
                rows[bad].len()
            )));
        }
        let values = rows.iter().flatten().copied().collect();
        let ids = (0..nrows).map(|i| format!("r{i}")).collect();
        Self::new(values, nrows, ncols, ids)
    }

    pub fn with_layer_tag(mut self, tag: impl Into<String>) -> Self {
        self.layer_tag = Some(tag.into());
        self
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn layer_tag(&self) -> Option<&str> {
        self.layer_tag.as_deref()
    }

    /// Row-major backing storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.ncols..(row + 1) * self.ncols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.nrows).map(|m| self.get(m, col)).collect()
    }

    /// Copies the given rows (in the given order) into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.ncols);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.nrows {
                return Err(NpssError::Index {
                    index: r,
                    len: self.nrows,
                });
            }
            values.extend_from_slice(self.row(r));
            ids.push(self.row_ids[r].clone());
        }
        let mut out = Self::new(values, rows.len(), self.ncols, ids)?;
        out.layer_tag = self.layer_tag.clone();
        Ok(out)
    }

    /// Element-wise negation, keeping ids and tag.
    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    Bin,
}

impl MatrixFormat {
    /// Guesses the format from a file extension; anything but `.csv` is bin.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Bin,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = NpssError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "bin" => Ok(MatrixFormat::Bin),
            other => Err(NpssError::InvalidArgument(format!(
                "unknown matrix format {other:?} (expected csv or bin)"
            ))),
        }
    }
}

impl fmt::Display for MatrixFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Bin => "bin",
        })
    }
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<ActivationMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| NpssError::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        MatrixFormat::Csv => read_matrix_csv(reader),
        MatrixFormat::Bin => read_matrix_bin(reader).map_err(|e| attach_path(e, path)),
    }
}

pub fn save_matrix(m: &ActivationMatrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| NpssError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    match format {
        MatrixFormat::Csv => write_matrix_csv(m, &mut writer),
        MatrixFormat::Bin => write_matrix_bin(m, &mut writer),
    }
    .map_err(|e| attach_path(e, path))?;
    writer.flush().map_err(|e| NpssError::io(path, e))
}

fn attach_path(err: NpssError, path: &Path) -> NpssError {
    match err {
        NpssError::Io { source, .. } => NpssError::io(path, source),
        other => other,
    }
}

pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> NpssError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => NpssError::io("<csv stream>", io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => NpssError::Parse {
            line,
            message: format!("ragged row: expected {expected_len} fields, found {len}"),
        },
        other => NpssError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn read_matrix_csv<R: Read>(reader: R) -> Result<ActivationMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.get(0).map(str::trim) != Some("id") {
        return Err(NpssError::Parse {
            line: 1,
            message: "first header column must be `id`".into(),
        });
    }
    let ncols = headers.len() - 1;
    let mut values = Vec::new();
    let mut ids = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        ids.push(record[0].to_string());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| NpssError::Parse {
                line,
                message: format!("column {j}: cannot parse {cell:?} as a number"),
            })?;
            values.push(v);
        }
    }
    let nrows = ids.len();
    ActivationMatrix::new(values, nrows, ncols, ids)
}

pub fn write_matrix_csv<W: Write>(m: &ActivationMatrix, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header = Vec::with_capacity(m.ncols + 1);
    header.push("id".to_string());
    header.extend((0..m.ncols).map(|j| format!("n{j}")));
    w.write_record(&header).map_err(csv_error)?;
    for r in 0..m.nrows {
        let mut rec = Vec::with_capacity(m.ncols + 1);
        rec.push(m.row_ids[r].clone());
        rec.extend(m.row(r).iter().map(|&v| format_f64(v)));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush().map_err(|e| NpssError::io("<csv stream>", e))
}

pub(crate) struct BinReader<R> {
    inner: R,
    offset: usize,
}

impl<R: Read> BinReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub(crate) fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| self.truncated(e))?;
        self.offset += N;
        Ok(buf)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        self.bytes::<8>().map(u64::from_le_bytes)
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        self.bytes::<8>().map(f64::from_le_bytes)
    }

    pub(crate) fn len_prefixed_string(&mut self) -> Result<String> {
        let len = self.u64()? as usize;
        let mut buf = Vec::new();
        (&mut self.inner)
            .take(len as u64)
            .read_to_end(&mut buf)
            .map_err(|e| NpssError::io("<bin stream>", e))?;
        if buf.len() != len {
            return Err(self.truncated(std::io::ErrorKind::UnexpectedEof.into()));
        }
        self.offset += len;
        String::from_utf8(buf).map_err(|_| NpssError::Parse {
            line: 0,
            message: format!("row id at byte {} is not valid UTF-8", self.offset),
        })
    }

    pub(crate) fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(NpssError::Parse {
                line: 0,
                message: format!("trailing bytes after offset {}", self.offset),
            }),
            Err(e) => Err(NpssError::io("<bin stream>", e)),
        }
    }

    fn truncated(&self, e: std::io::Error) -> NpssError {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            NpssError::Parse {
                line: 0,
                message: format!("file truncated at byte {}", self.offset),
            }
        } else {
            NpssError::io("<bin stream>", e)
        }
    }
}

pub(crate) fn checked_cells(nrows: u64, ncols: u64) -> Result<usize> {
    nrows
        .checked_mul(ncols)
        .filter(|&n| n <= (isize::MAX as u64) / 8)
        .map(|n| n as usize)
        .ok_or_else(|| NpssError::Parse {
            line: 0,
            message: format!("implausible shape {nrows}x{ncols}"),
        })
}

pub fn read_matrix_bin<R: Read>(reader: R) -> Result<ActivationMatrix> {
    let mut r = BinReader::new(reader);
    let magic = r.bytes::<8>()?;
    if &magic != MATRIX_MAGIC {
        return Err(NpssError::Parse {
            line: 0,
            message: "missing NPSSMAT1 magic".into(),
        });
    }
    let nrows = r.u64()?;
    let ncols = r.u64()?;
    let cells = checked_cells(nrows, ncols)?;
    let mut values = Vec::with_capacity(cells.min(1 << 24));
    for _ in 0..cells {
        values.push(r.f64()?);
    }
    let mut ids = Vec::with_capacity(nrows as usize);
    for _ in 0..nrows {
        ids.push(r.len_prefixed_string()?);
    }
    r.expect_end()?;
    ActivationMatrix::new(values, nrows as usize, ncols as usize, ids)
}

pub(crate) fn write_row_ids<W: Write>(ids: &[String], w: &mut W) -> std::io::Result<()> {
    for id in ids {
        w.write_all(&(id.len() as u64).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    Ok(())
}

pub fn write_matrix_bin<W: Write>(m: &ActivationMatrix, mut w: W) -> Result<()> {
    let io = |e| NpssError::io("<bin stream>", e);
    w.write_all(MATRIX_MAGIC).map_err(io)?;
    w.write_all(&(m.nrows as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(m.ncols as u64).to_le_bytes()).map_err(io)?;
    for v in &m.values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    write_row_ids(&m.row_ids, &mut w).map_err(io)
}

/// Binary ground-truth labels keyed by row id (1 = anomalous).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    ids: Vec<String>,
    labels: Vec<u8>,
    index: HashMap<String, usize>,
}

impl LabelVector {
    pub fn new(ids: Vec<String>, labels: Vec<u8>) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(NpssError::LabelMismatch(format!(
                "{} ids but {} labels",
                ids.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(NpssError::Validation(format!("label {bad} not in {{0,1}}")));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(NpssError::Validation(format!("duplicate label for id {id:?}")));
            }
        }
        Ok(Self { ids, labels, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Position of `id` in label order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<u8> {
        self.index.get(id).map(|&i| self.labels[i])
    }

    pub fn anomalous_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Reorders the labels to follow `row_ids`; every row needs a label.
    pub fn aligned_to(&self, row_ids: &[String]) -> Result<LabelVector> {
        let labels = row_ids
            .iter()
            .map(|id| {
                self.get(id)
                    .ok_or_else(|| NpssError::LabelMismatch(format!("no label for row id {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        LabelVector::new(row_ids.to_vec(), labels)
    }
}

pub fn read_labels_csv<R: Read>(reader: R) -> Result<LabelVector> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != ["id", "label"] {
        return Err(NpssError::Parse {
            line: 1,
            message: format!("label header must be `id,label`, got {names:?}"),
        });
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        ids.push(record[0].to_string());
        labels.push(match record[1].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(NpssError::Parse {
                    line,
                    message: format!("label {other:?} not in {{0,1}}"),
                })
            }
        });
    }
    LabelVector::new(ids, labels)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| NpssError::io(path, e))?;
    read_labels_csv(BufReader::new(file)).map_err(|e| attach_path(e, path))
}

pub fn write_labels_csv<W: Write>(labels: &LabelVector, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["id", "label"]).map_err(csv_error)?;
    for (id, l) in labels.ids.iter().zip(&labels.labels) {
        w.write_record([id.as_str(), if *l == 1 { "1" } else { "0" }])
            .map_err(csv_error)?;
    }
    w.flush().map_err(|e| NpssError::io("<csv stream>", e))
}

pub fn save_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| NpssError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_labels_csv(labels, &mut w).map_err(|e| attach_path(e, path))?;
    w.flush().map_err(|e| NpssError::io(path, e))
}

/// Number of anomalous rows in a test set of `size` rows, rounded half-up.
pub fn anomalous_count(size: usize, anom_frac: f64) -> usize {
    ((size as f64 * anom_frac + 0.5).floor() as usize).min(size)
}

/// Draws a labelled test set: `anomalous_count(size, anom_frac)` rows with
/// replacement from `anomalous`, the rest with replacement from `clean`,
/// then shuffles. Row ids become `<position>:<source id>` so duplicates
/// drawn from the same source row stay distinct.
pub fn sample_test_set(
    clean: &ActivationMatrix,
    anomalous: Option<&ActivationMatrix>,
    size: usize,
    anom_frac: f64,
    seed: u64,
) -> Result<(ActivationMatrix, LabelVector)> {
    if size == 0 {
        return Err(NpssError::InvalidArgument("test set size must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&anom_frac) {
        return Err(NpssError::InvalidArgument(format!(
            "anomalous fraction {anom_frac} outside [0, 1]"
        )));
    }
    let n_anom = anomalous_count(size, anom_frac);
    let n_clean = size - n_anom;
    if let Some(a) = anomalous {
        if a.ncols() != clean.ncols() {
            return Err(NpssError::Shape(format!(
                "clean pool has {} nodes, anomalous pool has {}",
                clean.ncols(),
                a.ncols()
            )));
        }
    }
    let anomalous = match anomalous {
        Some(a) => Some(a),
        None if n_anom > 0 => {
            return Err(NpssError::EmptySource {
                pool: "anomalous",
                requested: n_anom,
            })
        }
        None => None,
    };

    let mut rng = rng_from(seed);
    // (is_anomalous, source row)
    let mut draws: Vec<(bool, usize)> = Vec::with_capacity(size);
    if let Some(a) = anomalous {
        for _ in 0..n_anom {
            draws.push((true, rng.random_range(0..a.nrows())));
        }
    }
    for _ in 0..n_clean {
        draws.push((false, rng.random_range(0..clean.nrows())));
    }
    draws.shuffle(&mut rng);

    let ncols = clean.ncols();
    let mut values = Vec::with_capacity(size * ncols);
    let mut ids = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for (pos, &(is_anom, src)) in draws.iter().enumerate() {
        let pool = match (is_anom, anomalous) {
            (true, Some(a)) => a,
            _ => clean,
        };
        values.extend_from_slice(pool.row(src));
        ids.push(format!("{pos}:{}", pool.row_ids()[src]));
        labels.push(u8::from(is_anom));
    }
    let matrix = ActivationMatrix::new(values, size, ncols, ids.clone())?;
    Ok((matrix, LabelVector::new(ids, labels)?))
}
