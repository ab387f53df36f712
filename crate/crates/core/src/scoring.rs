//! Non-parametric scan statistics.
//!
//! A subset `S` of p-value cells is scored as `F(S) = max_a phi(a, N_a(S), N(S))`
//! where `N(S)` is the number of cells and `N_a(S)` the number of cells with
//! `p < a`. `phi` is either Higher Criticism or Berk-Jones. With the
//! one-sided gate enabled, `phi` is zero whenever `N_a(S) <= a * N(S)`, so
//! only over-representation of small p-values is rewarded.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NpssError, Result};
use crate::pvalues::PValueMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    #[serde(rename = "hc")]
    HigherCriticism,
    #[serde(rename = "bj")]
    BerkJones,
}

impl FromStr for Statistic {
    type Err = NpssError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hc" => Ok(Statistic::HigherCriticism),
            "bj" => Ok(Statistic::BerkJones),
            other => Err(NpssError::InvalidArgument(format!(
                "unknown statistic {other:?} (expected hc or bj)"
            ))),
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::HigherCriticism => "hc",
            Statistic::BerkJones => "bj",
        })
    }
}

impl Statistic {
    /// `phi(alpha, n_alpha, n)` without argument validation.
    #[inline]
    pub(crate) fn phi(self, alpha: f64, n_alpha: usize, n: usize, gate: bool) -> f64 {
        let n_f = n as f64;
        let expected = n_f * alpha;
        let observed = n_alpha as f64;
        // n_alpha is an integer, so a genuine excess is never this small.
        if gate && observed - expected <= 1e-9 * expected.max(1.0) {
            return 0.0;
        }
        match self {
            Statistic::HigherCriticism => (observed - expected).abs() / (expected * (1.0 - alpha)).sqrt(),
            Statistic::BerkJones => n_f * kl_bernoulli(observed / n_f, alpha),
        }
    }

    pub fn evaluate(self, alpha: f64, n_alpha: usize, n: usize, gate: bool) -> Result<f64> {
        if n == 0 {
            return Err(NpssError::Domain("N(S) must be at least 1".into()));
        }
        if n_alpha > n {
            return Err(NpssError::Domain(format!("N_alpha = {n_alpha} exceeds N = {n}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(NpssError::Domain(format!("alpha {alpha} outside (0, 1)")));
        }
        Ok(self.phi(alpha, n_alpha, n, gate))
    }
}

/// KL divergence between Bernoulli(x) and Bernoulli(y), with `0 ln 0 = 0`.
fn kl_bernoulli(x: f64, y: f64) -> f64 {
    let term = |a: f64, b: f64| if a <= 0.0 { 0.0 } else { a * (a / b).ln() };
    term(x, y) + term(1.0 - x, 1.0 - y)
}

/// Gated Higher Criticism statistic.
pub fn hc_statistic(alpha: f64, n_alpha: usize, n: usize) -> Result<f64> {
    Statistic::HigherCriticism.evaluate(alpha, n_alpha, n, true)
}

/// Gated Berk-Jones statistic.
pub fn bj_statistic(alpha: f64, n_alpha: usize, n: usize) -> Result<f64> {
    Statistic::BerkJones.evaluate(alpha, n_alpha, n, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub statistic: Statistic,
    pub alpha_grid: Vec<f64>,
    pub one_sided_gate: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            statistic: Statistic::HigherCriticism,
            alpha_grid: Self::default_grid(),
            one_sided_gate: true,
        }
    }
}

impl ScoreConfig {
    pub fn new(statistic: Statistic, alpha_grid: Vec<f64>, one_sided_gate: bool) -> Result<Self> {
        let cfg = Self {
            statistic,
            alpha_grid,
            one_sided_gate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_statistic(statistic: Statistic) -> Self {
        Self {
            statistic,
            ..Self::default()
        }
    }

    /// `{0.05, 0.10, ..., 0.50}`.
    pub fn default_grid() -> Vec<f64> {
        (1..=10).map(|k| k as f64 / 20.0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() {
            return Err(NpssError::InvalidArgument("alpha grid is empty".into()));
        }
        if let Some(a) = self.alpha_grid.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return Err(NpssError::InvalidArgument(format!("alpha {a} outside (0, 1)")));
        }
        if self.alpha_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NpssError::InvalidArgument(
                "alpha grid must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Index of the first grid level strictly above `p`; a cell with p-value
    /// `p` counts towards `N_a` for every level from this index on.
    #[inline]
    pub(crate) fn first_level_above(&self, p: f64) -> usize {
        self.alpha_grid.partition_point(|&a| a <= p)
    }

    /// Maximises `phi` over the grid given `N_a` per level. Returns
    /// `(score, level index)`; ties keep the smaller level.
    pub(crate) fn best_over_grid(&self, n_alpha: &[usize], n: usize) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (k, (&alpha, &na)) in self.alpha_grid.iter().zip(n_alpha).enumerate() {
            let s = self.statistic.phi(alpha, na, n, self.one_sided_gate);
            if s > best.0 {
                best = (s, k);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub score: f64,
    pub best_alpha: f64,
    pub n: usize,
    pub n_alpha: usize,
}

pub(crate) fn check_index_set(indices: &[usize], len: usize, what: &str) -> Result<()> {
    if indices.is_empty() {
        return Err(NpssError::InvalidArgument(format!("{what} subset is empty")));
    }
    let mut seen = vec![false; len];
    for &i in indices {
        if i >= len {
            return Err(NpssError::Index { index: i, len });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(NpssError::InvalidArgument(format!("{what} index {i} repeated")));
        }
    }
    Ok(())
}

/// Scores the sub-matrix `rows x cols` of `p`.
pub fn score_subset(p: &PValueMatrix, rows: &[usize], cols: &[usize], cfg: &ScoreConfig) -> Result<SubsetScore> {
    cfg.validate()?;
    check_index_set(rows, p.nrows(), "row")?;
    check_index_set(cols, p.ncols(), "column")?;
    let levels = cfg.alpha_grid.len();
    let mut hist = vec![0usize; levels + 1];
    for &m in rows {
        let row = p.row(m);
        for &j in cols {
            hist[cfg.first_level_above(row[j])] += 1;
        }
    }
    let mut n_alpha = vec![0usize; levels];
    let mut running = 0;
    for k in 0..levels {
        running += hist[k];
        n_alpha[k] = running;
    }
    let n = rows.len() * cols.len();
    let (score, k) = cfg.best_over_grid(&n_alpha, n);
    Ok(SubsetScore {
        score,
        best_alpha: cfg.alpha_grid[k],
        n,
        n_alpha: n_alpha[k],
    })
}
