//! Empirical p-values of test activations against a reference sample.
//!
//! For a right-tailed test the p-value of activation `z` at node `j` is the
//! normalised rank `(1 + #{b : ref_bj >= z}) / (1 + B)`. Reference values
//! equal to `z` make the rank ambiguous, so each cell carries the range
//! `[pmin, pmax]` obtained by counting ties as strictly greater (pmax) or
//! not (pmin), and `p` is drawn uniformly inside that range. The draw uses
//! a ChaCha stream keyed by `(seed, m, j)` and does not depend on traversal
//! order or thread count.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NpssError, Result};
use crate::matrix_io::{checked_cells, write_row_ids, ActivationMatrix, BinReader};
use crate::seed::rng_from;

pub const PVALUE_MAGIC: &[u8; 8] = b"NPSSPVM1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Left,
    Right,
    Two,
}

impl Tail {
    fn code(self) -> u8 {
        match self {
            Tail::Left => 0,
            Tail::Right => 1,
            Tail::Two => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Tail::Left),
            1 => Ok(Tail::Right),
            2 => Ok(Tail::Two),
            other => Err(NpssError::Parse {
                line: 0,
                message: format!("unknown tail code {other}"),
            }),
        }
    }
}

impl FromStr for Tail {
    type Err = NpssError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Tail::Left),
            "right" => Ok(Tail::Right),
            "two" => Ok(Tail::Two),
            other => Err(NpssError::InvalidArgument(format!(
                "unknown tail {other:?} (expected left, right or two)"
            ))),
        }
    }
}

impl fmt::Display for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tail::Left => "left",
            Tail::Right => "right",
            Tail::Two => "two",
        })
    }
}

/// `M x J` p-values plus the tie ranges they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMatrix {
    p: Vec<f64>,
    pmin: Vec<f64>,
    pmax: Vec<f64>,
    nrows: usize,
    ncols: usize,
    row_ids: Vec<String>,
    tail: Tail,
    seed: u64,
    reference_size: usize,
}

impl PValueMatrix {
    /// Wraps precomputed p-values with degenerate ranges (`pmin = pmax = p`).
    /// `reference_size` is recorded as 0, which disables the `1/(1+B)`
    /// lower-bound check; useful for synthetic inputs and tests.
    pub fn from_values(values: Vec<f64>, nrows: usize, ncols: usize) -> Result<Self> {
        let ids = (0..nrows).map(|i| format!("r{i}")).collect();
        Self::from_parts(
            values.clone(),
            values.clone(),
            values,
            nrows,
            ncols,
            ids,
            Tail::Right,
            0,
            0,
        )
    }

    /// Same as [`PValueMatrix::from_values`] from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(NpssError::Shape("ragged p-value rows".into()));
        }
        Self::from_values(rows.iter().flatten().copied().collect(), rows.len(), ncols)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        p: Vec<f64>,
        pmin: Vec<f64>,
        pmax: Vec<f64>,
        nrows: usize,
        ncols: usize,
        row_ids: Vec<String>,
        tail: Tail,
        seed: u64,
        reference_size: usize,
    ) -> Result<Self> {
        if nrows == 0 || ncols == 0 {
            return Err(NpssError::Validation(format!(
                "p-value matrix must be non-empty, got {nrows}x{ncols}"
            )));
        }
        let cells = nrows * ncols;
        if p.len() != cells || pmin.len() != cells || pmax.len() != cells {
            return Err(NpssError::Shape(format!(
                "p-value planes do not match shape {nrows}x{ncols}"
            )));
        }
        if row_ids.len() != nrows {
            return Err(NpssError::Shape(format!("{} row ids for {nrows} rows", row_ids.len())));
        }
        let floor = if reference_size > 0 {
            1.0 / (1.0 + reference_size as f64)
        } else {
            0.0
        };
        for i in 0..cells {
            let (lo, v, hi) = (pmin[i], p[i], pmax[i]);
            let ok = lo > 0.0 && lo >= floor && lo <= v && v <= hi && hi <= 1.0;
            if !ok {
                return Err(NpssError::Validation(format!(
                    "cell ({}, {}) violates 0 < pmin <= p <= pmax <= 1: [{lo}, {v}, {hi}]",
                    i / ncols,
                    i % ncols
                )));
            }
        }
        Ok(Self {
            p,
            pmin,
            pmax,
            nrows,
            ncols,
            row_ids,
            tail,
            seed,
            reference_size,
        })
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

    pub fn tail(&self) -> Tail {
        self.tail
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Reference sample size `B` (0 for synthetic matrices).
    pub fn reference_size(&self) -> usize {
        self.reference_size
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.p[row * self.ncols + col]
    }

    pub fn bounds(&self, row: usize, col: usize) -> (f64, f64) {
        let i = row * self.ncols + col;
        (self.pmin[i], self.pmax[i])
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.p[row * self.ncols..(row + 1) * self.ncols]
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn pmin(&self) -> &[f64] {
        &self.pmin
    }

    pub fn pmax(&self) -> &[f64] {
        &self.pmax
    }
}

/// Tie-range counts of one test value inside one sorted reference column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RankCounts {
    below: usize,
    at_or_below: usize,
}

fn rank_counts(sorted: &[f64], z: f64) -> RankCounts {
    RankCounts {
        below: sorted.partition_point(|&r| r < z),
        at_or_below: sorted.partition_point(|&r| r <= z),
    }
}

fn cell_uniform(seed: u64, cell: u64) -> f64 {
    let mut rng: ChaCha8Rng = rng_from(seed);
    rng.set_stream(cell);
    rng.random::<f64>()
}

/// Returns `(pmin, p, pmax)` for one cell.
fn cell_pvalue(counts: RankCounts, b: usize, tail: Tail, u: impl FnOnce() -> f64) -> (f64, f64, f64) {
    let denom = 1.0 + b as f64;
    let ties = counts.at_or_below - counts.below;
    let u = if ties > 0 { u() } else { 0.0 };
    // (strict count, weak count) for each side
    let right = (b - counts.at_or_below, b - counts.below);
    let left = (counts.below, counts.at_or_below);
    let one_side = |(strict, weak): (usize, usize)| {
        let lo = (1 + strict) as f64 / denom;
        let hi = (1 + weak) as f64 / denom;
        let p = (1.0 + strict as f64 + u * (weak - strict) as f64) / denom;
        (lo, p.clamp(lo, hi), hi)
    };
    match tail {
        Tail::Right => one_side(right),
        Tail::Left => one_side(left),
        Tail::Two => {
            let (llo, lp, lhi) = one_side(left);
            let (rlo, rp, rhi) = one_side(right);
            let double = |a: f64, b: f64| (2.0 * a.min(b)).min(1.0);
            (double(llo, rlo), double(lp, rp), double(lhi, rhi))
        }
    }
}

/// Computes empirical p-values of `test` against `reference`, node by node.
pub fn empirical_pvalues(
    reference: &ActivationMatrix,
    test: &ActivationMatrix,
    tail: Tail,
    seed: u64,
) -> Result<PValueMatrix> {
    if reference.ncols() != test.ncols() {
        return Err(NpssError::Shape(format!(
            "reference has {} nodes, test has {}",
            reference.ncols(),
            test.ncols()
        )));
    }
    let b = reference.nrows();
    let ncols = test.ncols();
    let sorted: Vec<Vec<f64>> = (0..ncols)
        .into_par_iter()
        .map(|j| {
            let mut col = reference.column(j);
            col.sort_by(f64::total_cmp);
            col
        })
        .collect();

    let cells = test.nrows() * ncols;
    let mut p = vec![0.0; cells];
    let mut pmin = vec![0.0; cells];
    let mut pmax = vec![0.0; cells];
    p.par_chunks_mut(ncols)
        .zip(pmin.par_chunks_mut(ncols))
        .zip(pmax.par_chunks_mut(ncols))
        .enumerate()
        .for_each(|(m, ((p_row, lo_row), hi_row))| {
            for (j, z) in test.row(m).iter().enumerate() {
                let counts = rank_counts(&sorted[j], *z);
                let cell = (m * ncols + j) as u64;
                let (lo, v, hi) = cell_pvalue(counts, b, tail, || cell_uniform(seed, cell));
                lo_row[j] = lo;
                p_row[j] = v;
                hi_row[j] = hi;
            }
        });

    PValueMatrix::from_parts(
        p,
        pmin,
        pmax,
        test.nrows(),
        ncols,
        test.row_ids().to_vec(),
        tail,
        seed,
        b,
    )
}

/// Kolmogorov-Smirnov distance between the empirical CDF of each column's
/// p-values and Uniform(0, 1).
pub fn null_uniformity_check(p: &PValueMatrix) -> Vec<f64> {
    (0..p.ncols())
        .into_par_iter()
        .map(|j| {
            let mut col: Vec<f64> = (0..p.nrows()).map(|m| p.get(m, j)).collect();
            col.sort_by(f64::total_cmp);
            ks_uniform_distance(&col)
        })
        .collect()
}

/// KS distance of an ascending sample against Uniform(0, 1).
pub fn ks_uniform_distance(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let above = (i + 1) as f64 / n - x;
            let below = x - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a one-sample KS distance `d` with sample size `n`
/// (Kolmogorov distribution with the Stephens small-sample correction).
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn read_pvalues_bin<R: Read>(reader: R) -> Result<PValueMatrix> {
    let mut r = BinReader::new(reader);
    if &r.bytes::<8>()? != PVALUE_MAGIC {
        return Err(NpssError::Parse {
            line: 0,
            message: "missing NPSSPVM1 magic".into(),
        });
    }
    let nrows = r.u64()?;
    let ncols = r.u64()?;
    let cells = checked_cells(nrows, ncols)?;
    let tail = Tail::from_code(r.bytes::<1>()?[0])?;
    let seed = r.u64()?;
    let reference_size = r.u64()? as usize;
    let mut planes: [Vec<f64>; 3] = Default::default();
    for plane in planes.iter_mut() {
        plane.reserve(cells.min(1 << 24));
        for _ in 0..cells {
            plane.push(r.f64()?);
        }
    }
    let mut ids = Vec::with_capacity(nrows as usize);
    for _ in 0..nrows {
        ids.push(r.len_prefixed_string()?);
    }
    r.expect_end()?;
    let [p, pmin, pmax] = planes;
    PValueMatrix::from_parts(
        p,
        pmin,
        pmax,
        nrows as usize,
        ncols as usize,
        ids,
        tail,
        seed,
        reference_size,
    )
}

/// Layout: magic `NPSSPVM1`, u64 M, u64 J, u8 tail (0 left, 1 right,
/// 2 two), u64 seed, u64 B, then the p, pmin and pmax planes (row-major
/// little-endian f64), then length-prefixed row ids.
pub fn write_pvalues_bin<W: Write>(pv: &PValueMatrix, mut w: W) -> Result<()> {
    let io = |e| NpssError::io("<bin stream>", e);
    w.write_all(PVALUE_MAGIC).map_err(io)?;
    w.write_all(&(pv.nrows as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(pv.ncols as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&[pv.tail.code()]).map_err(io)?;
    w.write_all(&pv.seed.to_le_bytes()).map_err(io)?;
    w.write_all(&(pv.reference_size as u64).to_le_bytes()).map_err(io)?;
    for plane in [&pv.p, &pv.pmin, &pv.pmax] {
        for v in plane.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    write_row_ids(&pv.row_ids, &mut w).map_err(io)
}

pub fn load_pvalues(path: impl AsRef<Path>) -> Result<PValueMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| NpssError::io(path, e))?;
    read_pvalues_bin(BufReader::new(file))
}

pub fn save_pvalues(pv: &PValueMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| NpssError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_pvalues_bin(pv, &mut w)?;
    w.flush().map_err(|e| NpssError::io(path, e))
}
