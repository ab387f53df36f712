//! Aggregation strategies over base scans.
//!
//! * `scanL` / `scanR`: one scan over left- or right-tailed p-values.
//! * `scanLR`: both one-tailed scans; flagged sentences are the union of
//!   the two row subsets.
//! * `scan2`: top-k scanning over two-tailed p-values. After each iteration
//!   the found rows are removed from the test set, p-values are recomputed
//!   on the reduced set against the untouched reference, and the next scan
//!   runs. Flagged sentences are the union over iterations.
//!
//! Child seeds: `left`, `right` and `top/<i>` (1-based) derived from the
//! strategy seed with [`derive_seed`]. The child seed is used both for the
//! p-value tie draws and as the scan seed of that constituent.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NpssError, Result};
use crate::fgss::{scan, ScanConfig, ScanReport, ScanResult, SCHEMA_VERSION};
use crate::matrix_io::ActivationMatrix;
use crate::pvalues::{empirical_pvalues, Tail};
use crate::scoring::Statistic;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "scanL")]
    ScanL,
    #[serde(rename = "scanR")]
    ScanR,
    #[serde(rename = "scanLR")]
    ScanLR,
    #[serde(rename = "scan2")]
    Scan2,
}

impl FromStr for Method {
    type Err = NpssError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scanL" => Ok(Method::ScanL),
            "scanR" => Ok(Method::ScanR),
            "scanLR" => Ok(Method::ScanLR),
            "scan2" => Ok(Method::Scan2),
            other => Err(NpssError::InvalidArgument(format!(
                "unknown method {other:?} (expected scanL, scanR, scanLR or scan2)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ScanL => "scanL",
            Method::ScanR => "scanR",
            Method::ScanLR => "scanLR",
            Method::Scan2 => "scan2",
        })
    }
}

/// Which strategy to run; `k` only matters for `scan2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub method: Method,
    pub k: usize,
    /// For `scan2`: fail instead of stopping early when the test set runs
    /// out before `k` iterations.
    pub strict: bool,
}

impl StrategySpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            k: 3,
            strict: false,
        }
    }

    pub fn top_k(k: usize) -> Self {
        Self {
            method: Method::Scan2,
            k,
            strict: false,
        }
    }
}

/// One constituent scan of a strategy, with rows expressed as indices into
/// the original test matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstituentScan {
    pub label: String,
    pub tail: Tail,
    pub seed: u64,
    pub result: ScanResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub strategy: Method,
    pub k: Option<usize>,
    /// Union of constituent rows, ascending.
    pub flagged_rows: Vec<usize>,
    pub per_scan: Vec<ConstituentScan>,
    pub node_sets: Vec<Vec<usize>>,
    pub reference_size: usize,
    pub seed: u64,
}

impl StrategyResult {
    fn assemble(
        strategy: Method,
        k: Option<usize>,
        per_scan: Vec<ConstituentScan>,
        reference_size: usize,
        seed: u64,
    ) -> Self {
        let flagged: BTreeSet<usize> = per_scan.iter().flat_map(|c| c.result.rows.iter().copied()).collect();
        let node_sets = per_scan.iter().map(|c| c.result.cols.clone()).collect();
        Self {
            strategy,
            k,
            flagged_rows: flagged.into_iter().collect(),
            per_scan,
            node_sets,
            reference_size,
            seed,
        }
    }
}

/// Scans `test` against `reference` for one tail. `cfg.seed` drives both
/// the tie draws and the restarts.
pub fn scan_tail(
    reference: &ActivationMatrix,
    test: &ActivationMatrix,
    tail: Tail,
    cfg: &ScanConfig,
) -> Result<ScanResult> {
    let p = empirical_pvalues(reference, test, tail, cfg.seed)?;
    scan(&p, cfg)
}

pub fn scan_one_tailed(
    reference: &ActivationMatrix,
    test: &ActivationMatrix,
    tail: Tail,
    cfg: &ScanConfig,
) -> Result<ScanResult> {
    if tail == Tail::Two {
        return Err(NpssError::InvalidArgument(
            "scan_one_tailed needs the left or right tail".into(),
        ));
    }
    scan_tail(reference, test, tail, cfg)
}

fn one_tail_constituent(
    reference: &ActivationMatrix,
    test: &ActivationMatrix,
    tail: Tail,
    cfg: &ScanConfig,
) -> Result<ConstituentScan> {
    let label = tail.to_string();
    let seed = derive_seed(cfg.seed, &label);
    let result = scan_one_tailed(reference, test, tail, &cfg.with_seed(seed))?;
    Ok(ConstituentScan {
        label,
        tail,
        seed,
        result,
    })
}

/// `scanL` or `scanR` as a strategy (one constituent).
pub fn scan_single(
    reference: &ActivationMatrix,
    test: &ActivationMatrix,
    tail: Tail,
    cfg: &ScanConfig,
) -> Result<StrategyResult> {
    let method = match tail {
        Tail::Left => Method::ScanL,
        Tail::Right => Method::ScanR,
        Tail::Two => {
            return Err(NpssError::InvalidArgument(
                "single-tail strategies are left or right".into(),
            ))
        }
    };
    let c = one_tail_constituent(reference, test, tail, cfg)?;
    Ok(StrategyResult::assemble(
        method,
        None,
        vec![c],
        reference.nrows(),
        cfg.seed,
    ))
}

/// Union of the left-tail and right-tail scans.
pub fn scan_lr(reference: &ActivationMatrix, test: &ActivationMatrix, cfg: &ScanConfig) -> Result<StrategyResult> {
    let (left, right) = rayon::join(
        || one_tail_constituent(reference, test, Tail::Left, cfg),
        || one_tail_constituent(reference, test, Tail::Right, cfg),
    );
    Ok(StrategyResult::assemble(
        Method::ScanLR,
        None,
        vec![left?, right?],
        reference.nrows(),
        cfg.seed,
    ))
}

/// Top-k two-tailed scanning with removal of found rows between iterations.
pub fn scan_topk(
    reference: &ActivationMatrix,
    test: &ActivationMatrix,
    k: usize,
    strict: bool,
    cfg: &ScanConfig,
) -> Result<StrategyResult> {
    if k == 0 {
        return Err(NpssError::InvalidArgument("k must be >= 1".into()));
    }
    if test.nrows() < k {
        return Err(NpssError::InvalidArgument(format!(
            "k = {k} exceeds the {} test rows",
            test.nrows()
        )));
    }
    let mut remaining: Vec<usize> = (0..test.nrows()).collect();
    let mut per_scan = Vec::with_capacity(k);
    for i in 1..=k {
        if remaining.is_empty() {
            if strict {
                return Err(NpssError::EmptyTest {
                    completed: i - 1,
                    requested: k,
                });
            }
            break;
        }
        let reduced = test.select_rows(&remaining)?;
        let label = format!("top/{i}");
        let seed = derive_seed(cfg.seed, &label);
        let mut result = scan_tail(reference, &reduced, Tail::Two, &cfg.with_seed(seed))?;
        result.rows = result.rows.iter().map(|&r| remaining[r]).collect();
        let found: BTreeSet<usize> = result.rows.iter().copied().collect();
        remaining.retain(|r| !found.contains(r));
        per_scan.push(ConstituentScan {
            label,
            tail: Tail::Two,
            seed,
            result,
        });
    }
    let out = StrategyResult::assemble(Method::Scan2, Some(k), per_scan, reference.nrows(), cfg.seed);
    let total: usize = out.per_scan.iter().map(|c| c.result.rows.len()).sum();
    assert_eq!(total, out.flagged_rows.len(), "top-k row subsets overlap");
    Ok(out)
}

pub fn run_strategy(
    reference: &ActivationMatrix,
    test: &ActivationMatrix,
    spec: &StrategySpec,
    cfg: &ScanConfig,
) -> Result<StrategyResult> {
    match spec.method {
        Method::ScanL => scan_single(reference, test, Tail::Left, cfg),
        Method::ScanR => scan_single(reference, test, Tail::Right, cfg),
        Method::ScanLR => scan_lr(reference, test, cfg),
        Method::Scan2 => scan_topk(reference, test, spec.k, spec.strict, cfg),
    }
}

/// Serialized [`StrategyResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub schema_version: u32,
    pub strategy: Method,
    pub k: Option<usize>,
    pub flagged_row_ids: Vec<String>,
    pub flagged_rows: Vec<usize>,
    pub per_scan: Vec<ScanReport>,
    pub node_sets: Vec<Vec<usize>>,
    pub seed: u64,
    pub statistic: Statistic,
    pub restarts: usize,
    pub test_rows: usize,
    pub nodes: usize,
    pub reference_size: usize,
}

impl StrategyReport {
    pub fn new(result: &StrategyResult, test: &ActivationMatrix, cfg: &ScanConfig) -> Self {
        let ids = test.row_ids();
        Self {
            schema_version: SCHEMA_VERSION,
            strategy: result.strategy,
            k: result.k,
            flagged_row_ids: result.flagged_rows.iter().map(|&r| ids[r].clone()).collect(),
            flagged_rows: result.flagged_rows.clone(),
            per_scan: result
                .per_scan
                .iter()
                .map(|c| {
                    ScanReport::from_parts(
                        &c.result,
                        ids,
                        c.tail,
                        c.seed,
                        result.reference_size,
                        &cfg.with_seed(c.seed),
                    )
                })
                .collect(),
            node_sets: result.node_sets.clone(),
            seed: result.seed,
            statistic: cfg.score_cfg.statistic,
            restarts: cfg.restarts,
            test_rows: test.nrows(),
            nodes: test.ncols(),
            reference_size: result.reference_size,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> ActivationMatrix {
        ActivationMatrix::from_rows(rows).unwrap()
    }

    fn small_case() -> (ActivationMatrix, ActivationMatrix) {
        let reference: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64, (i % 5) as f64, (i % 3) as f64])
            .collect();
        let mut test: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i % 7) as f64, (i % 5) as f64, (i % 3) as f64])
            .collect();
        test[2] = vec![50.0, 50.0, 1.0];
        test[7] = vec![-50.0, -50.0, 1.0];
        (matrix(&reference), matrix(&test))
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::ScanL, Method::ScanR, Method::ScanLR, Method::Scan2] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("scan3".parse::<Method>().is_err());
    }

    #[test]
    fn lr_union_covers_both_constituents() {
        let (reference, test) = small_case();
        let r = scan_lr(&reference, &test, &ScanConfig::default()).unwrap();
        assert_eq!(r.per_scan.len(), 2);
        assert_eq!(r.node_sets.len(), 2);
        for c in &r.per_scan {
            assert!(c.result.rows.iter().all(|x| r.flagged_rows.contains(x)));
        }
        let max = r.per_scan.iter().map(|c| c.result.rows.len()).max().unwrap();
        assert!(r.flagged_rows.len() >= max);
    }

    #[test]
    fn one_tailed_rejects_two() {
        let (reference, test) = small_case();
        assert!(scan_one_tailed(&reference, &test, Tail::Two, &ScanConfig::default()).is_err());
    }

    #[test]
    fn topk_validates_k() {
        let (reference, test) = small_case();
        let cfg = ScanConfig::default();
        assert!(scan_topk(&reference, &test, 0, false, &cfg).is_err());
        assert!(scan_topk(&reference, &test, 13, false, &cfg).is_err());
    }

    #[test]
    fn topk_rows_are_disjoint() {
        let (reference, test) = small_case();
        let r = scan_topk(&reference, &test, 4, false, &ScanConfig::default()).unwrap();
        let mut seen = BTreeSet::new();
        for c in &r.per_scan {
            for &row in &c.result.rows {
                assert!(seen.insert(row));
            }
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), r.flagged_rows);
    }

    #[test]
    fn topk_strict_mode_reports_exhaustion() {
        // Two identical extreme rows: the first iteration takes both.
        let reference: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let reference = matrix(&reference);
        let test = matrix(&[vec![500.0], vec![500.0]]);
        let cfg = ScanConfig::default();
        let lenient = scan_topk(&reference, &test, 2, false, &cfg).unwrap();
        assert_eq!(lenient.per_scan.len(), 1);
        assert_eq!(lenient.flagged_rows, vec![0, 1]);
        let err = scan_topk(&reference, &test, 2, true, &cfg).unwrap_err();
        assert_eq!(err.kind(), "EmptyTestError");
    }
}
