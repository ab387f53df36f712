//! Fast generalized subset scanning.
//!
//! A restart starts from random row and column subsets and alternates two
//! exact conditional maximisations: rows given the current columns, then
//! columns given the current rows. Each maximisation uses the linear-time
//! subset scanning property: for a fixed level `a`, the score is increasing
//! in `N_a` for a fixed subset size, so the best subset of every size is a
//! prefix of the elements sorted by their count of p-values below `a`.
//! Scanning all prefixes for all grid levels therefore finds the conditional
//! optimum over every non-empty subset.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NpssError, Result};
use crate::pvalues::{PValueMatrix, Tail};
use crate::scoring::{check_index_set, score_subset, ScoreConfig, Statistic, SubsetScore};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub restarts: usize,
    pub max_alternations: usize,
    pub score_tolerance: f64,
    pub seed: u64,
    pub score_cfg: ScoreConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_alternations: 100,
            score_tolerance: 1e-12,
            seed: 0,
            score_cfg: ScoreConfig::default(),
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(NpssError::InvalidArgument("restarts must be >= 1".into()));
        }
        if self.max_alternations == 0 {
            return Err(NpssError::InvalidArgument("max_alternations must be >= 1".into()));
        }
        if self.score_tolerance.is_nan() || self.score_tolerance < 0.0 {
            return Err(NpssError::InvalidArgument("score_tolerance must be >= 0".into()));
        }
        self.score_cfg.validate()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Seed handed to restart `index`.
    pub fn restart_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, &format!("restart/{index}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Selected rows, ascending.
    pub rows: Vec<usize>,
    /// Selected columns, ascending.
    pub cols: Vec<usize>,
    pub score: f64,
    pub best_alpha: f64,
    pub restart_index: usize,
    /// Completed row/column alternations in the winning restart.
    pub alternations: usize,
}

/// Per-element cumulative counts: `counts[e * levels + k]` is the number of
/// cells of element `e` inside the fixed other-axis subset with
/// `p < alpha_grid[k]`.
struct LevelCounts {
    counts: Vec<usize>,
    levels: usize,
    elements: usize,
}

impl LevelCounts {
    fn finish(mut raw: Vec<usize>, elements: usize, levels: usize) -> Self {
        // raw is laid out with `levels + 1` buckets per element
        let mut counts = Vec::with_capacity(elements * levels);
        for e in 0..elements {
            let buckets = &mut raw[e * (levels + 1)..(e + 1) * (levels + 1)];
            let mut running = 0;
            for &b in buckets.iter().take(levels) {
                running += b;
                counts.push(running);
            }
        }
        Self {
            counts,
            levels,
            elements,
        }
    }

    fn for_rows(p: &PValueMatrix, cols: &[usize], cfg: &ScoreConfig) -> Self {
        let levels = cfg.alpha_grid.len();
        let mut raw = vec![0usize; p.nrows() * (levels + 1)];
        for m in 0..p.nrows() {
            let row = p.row(m);
            let base = m * (levels + 1);
            for &j in cols {
                raw[base + cfg.first_level_above(row[j])] += 1;
            }
        }
        Self::finish(raw, p.nrows(), levels)
    }

    fn for_cols(p: &PValueMatrix, rows: &[usize], cfg: &ScoreConfig) -> Self {
        let levels = cfg.alpha_grid.len();
        let mut raw = vec![0usize; p.ncols() * (levels + 1)];
        for &m in rows {
            for (j, &v) in p.row(m).iter().enumerate() {
                raw[j * (levels + 1) + cfg.first_level_above(v)] += 1;
            }
        }
        Self::finish(raw, p.ncols(), levels)
    }

    fn get(&self, element: usize, level: usize) -> usize {
        self.counts[element * self.levels + level]
    }
}

/// Best prefix over all grid levels. Among equal scores the earliest
/// candidate wins: smaller level first, then shorter prefix.
///
/// With the gate on, `phi` is non-decreasing in `N_a` for a fixed subset
/// size, so descending-count prefixes suffice. Without the gate `phi` is
/// convex in `N_a`, so the ascending-count prefixes are scanned as well.
fn ltss_maximize(counts: &LevelCounts, other_size: usize, cfg: &ScoreConfig) -> (Vec<usize>, SubsetScore) {
    let mut order: Vec<usize> = (0..counts.elements).collect();
    let mut best: Option<(f64, usize, usize)> = None; // (score, level, n_alpha)
    let mut best_subset = Vec::new();
    let passes: &[bool] = if cfg.one_sided_gate { &[false] } else { &[false, true] };
    for (level, &alpha) in cfg.alpha_grid.iter().enumerate() {
        order.sort_by(|&a, &b| counts.get(b, level).cmp(&counts.get(a, level)).then(a.cmp(&b)));
        // (ascending pass, prefix length) of this level's winner, if any
        let mut winner: Option<(bool, usize)> = None;
        for &ascending in passes {
            let mut n_alpha = 0;
            for k in 0..order.len() {
                let e = if ascending {
                    order[order.len() - 1 - k]
                } else {
                    order[k]
                };
                n_alpha += counts.get(e, level);
                let s = cfg
                    .statistic
                    .phi(alpha, n_alpha, (k + 1) * other_size, cfg.one_sided_gate);
                if best.is_none_or(|(bs, ..)| s > bs) {
                    best = Some((s, level, n_alpha));
                    winner = Some((ascending, k + 1));
                }
            }
        }
        if let Some((ascending, len)) = winner {
            best_subset.clear();
            if ascending {
                best_subset.extend(order.iter().rev().take(len).copied());
            } else {
                best_subset.extend_from_slice(&order[..len]);
            }
        }
    }
    let (score, level, n_alpha) = best.expect("non-empty grid and axis");
    best_subset.sort_unstable();
    let n = best_subset.len() * other_size;
    (
        best_subset,
        SubsetScore {
            score,
            best_alpha: cfg.alpha_grid[level],
            n,
            n_alpha,
        },
    )
}

/// Best row subset with the columns held fixed.
pub fn optimize_rows(p: &PValueMatrix, fixed_cols: &[usize], cfg: &ScoreConfig) -> Result<(Vec<usize>, SubsetScore)> {
    cfg.validate()?;
    check_index_set(fixed_cols, p.ncols(), "column")?;
    Ok(ltss_maximize(
        &LevelCounts::for_rows(p, fixed_cols, cfg),
        fixed_cols.len(),
        cfg,
    ))
}

/// Best column subset with the rows held fixed.
pub fn optimize_cols(p: &PValueMatrix, fixed_rows: &[usize], cfg: &ScoreConfig) -> Result<(Vec<usize>, SubsetScore)> {
    cfg.validate()?;
    check_index_set(fixed_rows, p.nrows(), "row")?;
    Ok(ltss_maximize(
        &LevelCounts::for_cols(p, fixed_rows, cfg),
        fixed_rows.len(),
        cfg,
    ))
}

/// Each index kept independently with probability 1/2, redrawn if empty.
fn random_subset(rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    loop {
        let subset: Vec<usize> = (0..len).filter(|_| rng.random_bool(0.5)).collect();
        if !subset.is_empty() {
            return subset;
        }
    }
}

/// One ascent from a random start. Steps that fail to improve the score by
/// more than the tolerance are rejected and end the ascent, so the returned
/// subset is a coordinate-wise local optimum.
pub fn single_restart(p: &PValueMatrix, cfg: &ScanConfig, restart_seed: u64) -> Result<ScanResult> {
    cfg.validate()?;
    let score_cfg = &cfg.score_cfg;
    let mut rng = rng_from(restart_seed);
    let mut rows = random_subset(&mut rng, p.nrows());
    let mut cols = random_subset(&mut rng, p.ncols());

    let mut current: Option<f64> = None;
    let mut alternations = 0;
    let improves = |current: Option<f64>, s: f64| current.is_none_or(|c| s > c + cfg.score_tolerance);

    while alternations < cfg.max_alternations {
        let (new_rows, row_step) = ltss_maximize(&LevelCounts::for_rows(p, &cols, score_cfg), cols.len(), score_cfg);
        if !improves(current, row_step.score) {
            break;
        }
        debug_assert!(current.is_none_or(|c| row_step.score >= c));
        rows = new_rows;
        current = Some(row_step.score);

        let (new_cols, col_step) = ltss_maximize(&LevelCounts::for_cols(p, &rows, score_cfg), rows.len(), score_cfg);
        alternations += 1;
        if !improves(current, col_step.score) {
            break;
        }
        cols = new_cols;
        current = Some(col_step.score);
    }

    let final_score = score_subset(p, &rows, &cols, score_cfg)?;
    if let Some(c) = current {
        assert!(
            (final_score.score - c).abs() <= 1e-9 * c.abs().max(1.0),
            "ascent score {c} disagrees with subset score {}",
            final_score.score
        );
    }
    Ok(ScanResult {
        rows,
        cols,
        score: final_score.score,
        best_alpha: final_score.best_alpha,
        restart_index: 0,
        alternations,
    })
}

/// Runs `cfg.restarts` independent restarts (in parallel) and keeps the
/// highest score, breaking ties by the smaller restart index.
pub fn scan(p: &PValueMatrix, cfg: &ScanConfig) -> Result<ScanResult> {
    cfg.validate()?;
    let results = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| {
            single_restart(p, cfg, cfg.restart_seed(i)).map(|mut r| {
                r.restart_index = i;
                r
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<ScanResult> = None;
    for r in results {
        if best.as_ref().is_none_or(|b| r.score > b.score) {
            best = Some(r);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

pub const SCHEMA_VERSION: u32 = 1;

/// Serialized form of a [`ScanResult`] together with the configuration that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub score: f64,
    pub alpha: f64,
    pub rows: Vec<String>,
    pub row_indices: Vec<usize>,
    pub cols: Vec<usize>,
    pub statistic: Statistic,
    pub tail: Tail,
    pub seed: u64,
    pub restarts: usize,
    pub alternations: usize,
    pub restart_index: usize,
    pub pvalue_seed: u64,
    pub reference_size: usize,
    pub alpha_grid: Vec<f64>,
    pub one_sided_gate: bool,
    pub max_alternations: usize,
    pub score_tolerance: f64,
}

impl ScanReport {
    pub fn new(result: &ScanResult, p: &PValueMatrix, cfg: &ScanConfig) -> Self {
        Self::from_parts(result, p.row_ids(), p.tail(), p.seed(), p.reference_size(), cfg)
    }

    /// `row_ids` must be indexable by `result.rows`.
    pub fn from_parts(
        result: &ScanResult,
        row_ids: &[String],
        tail: Tail,
        pvalue_seed: u64,
        reference_size: usize,
        cfg: &ScanConfig,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            score: result.score,
            alpha: result.best_alpha,
            rows: result.rows.iter().map(|&m| row_ids[m].clone()).collect(),
            row_indices: result.rows.clone(),
            cols: result.cols.clone(),
            statistic: cfg.score_cfg.statistic,
            tail,
            seed: cfg.seed,
            restarts: cfg.restarts,
            alternations: result.alternations,
            restart_index: result.restart_index,
            pvalue_seed,
            reference_size,
            alpha_grid: cfg.score_cfg.alpha_grid.clone(),
            one_sided_gate: cfg.score_cfg.one_sided_gate,
            max_alternations: cfg.max_alternations,
            score_tolerance: cfg.score_tolerance,
        }
    }
}
