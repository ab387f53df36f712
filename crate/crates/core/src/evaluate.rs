//! Detection metrics and the repeated-trial experiment protocol.
//!
//! Each trial samples a fresh labelled test set (with replacement, fixed
//! anomalous fraction), runs a strategy, and scores the flagged sentences
//! against the labels. Summaries use the population standard deviation
//! (divide by the number of trials).

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NpssError, Result};
use crate::fgss::{ScanConfig, SCHEMA_VERSION};
use crate::matrix_io::{sample_test_set, ActivationMatrix, LabelVector};
use crate::scoring::check_index_set;
use crate::seed::derive_seed;
use crate::strategies::{run_strategy, Method, StrategyResult, StrategySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub precision: f64,
    pub recall: f64,
    /// Fraction of the test set flagged.
    pub size: f64,
    pub true_positives: usize,
    pub flagged: usize,
    pub anomalous: usize,
    pub test_size: usize,
    /// Nothing was flagged; precision is reported as 0.
    pub precision_degenerate: bool,
    /// The test set has no anomalous rows; recall is reported as 0.
    pub recall_degenerate: bool,
    /// Fraction of nodes in each constituent scan's node subset.
    pub node_size: Vec<f64>,
    /// Size of the intersection of the left and right node subsets (scanLR).
    pub inode: Option<usize>,
}

/// Precision, recall and relative size of a flagged row set.
pub fn compute_metrics(flagged: &[usize], labels: &LabelVector, test_size: usize) -> Result<TrialMetrics> {
    if labels.len() != test_size {
        return Err(NpssError::LabelMismatch(format!(
            "{} labels for a test set of {test_size} rows",
            labels.len()
        )));
    }
    if !flagged.is_empty() {
        check_index_set(flagged, test_size, "flagged")?;
    }
    let anomalous = labels.anomalous_count();
    let true_positives = flagged.iter().filter(|&&r| labels.labels()[r] == 1).count();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(TrialMetrics {
        precision: ratio(true_positives, flagged.len()),
        recall: ratio(true_positives, anomalous),
        size: ratio(flagged.len(), test_size),
        true_positives,
        flagged: flagged.len(),
        anomalous,
        test_size,
        precision_degenerate: flagged.is_empty(),
        recall_degenerate: anomalous == 0,
        node_size: Vec::new(),
        inode: None,
    })
}

/// Per-node membership counts across node subsets.
pub fn node_frequency(sets: &[Vec<usize>], ncols: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; ncols];
    for set in sets {
        for &j in set.iter().collect::<HashSet<_>>() {
            *counts.get_mut(j).ok_or(NpssError::Index { index: j, len: ncols })? += 1;
        }
    }
    Ok(counts)
}

/// `|a ∩ b|`.
pub fn node_intersection(a: &[usize], b: &[usize]) -> usize {
    let a: HashSet<usize> = a.iter().copied().collect();
    b.iter().copied().collect::<HashSet<_>>().intersection(&a).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub strategy: StrategySpec,
    pub trials: usize,
    pub test_size: usize,
    pub anom_frac: f64,
    pub scan: ScanConfig,
}

impl ExperimentConfig {
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.scan.seed, &format!("trial/{trial}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub metrics: TrialMetrics,
    pub flagged_row_ids: Vec<String>,
    pub node_sets: Vec<Vec<usize>>,
    pub constituents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub size: MeanStd,
    /// Keyed by constituent label (`left`, `right`, `top/1`, ...).
    pub node_size: BTreeMap<String, MeanStd>,
    pub inode: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFrequency {
    pub constituent: String,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub std_kind: String,
    pub reference_size: usize,
    pub nodes: usize,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
    pub node_frequency: Vec<NodeFrequency>,
}

fn trial_metrics(
    result: &StrategyResult,
    labels: &LabelVector,
    test_size: usize,
    ncols: usize,
) -> Result<TrialMetrics> {
    let mut metrics = compute_metrics(&result.flagged_rows, labels, test_size)?;
    metrics.node_size = result.node_sets.iter().map(|s| s.len() as f64 / ncols as f64).collect();
    if result.strategy == Method::ScanLR {
        metrics.inode = Some(node_intersection(&result.node_sets[0], &result.node_sets[1]));
    }
    Ok(metrics)
}

fn summarize(trials: &[TrialRecord]) -> Summary {
    let column = |f: &dyn Fn(&TrialMetrics) -> f64| -> Vec<f64> { trials.iter().map(|t| f(&t.metrics)).collect() };
    let mut node_sizes: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in trials {
        for (label, &ns) in t.constituents.iter().zip(&t.metrics.node_size) {
            node_sizes.entry(label.clone()).or_default().push(ns);
        }
    }
    let inodes: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.metrics.inode.map(|v| v as f64))
        .collect();
    Summary {
        precision: MeanStd::of(&column(&|m| m.precision)),
        recall: MeanStd::of(&column(&|m| m.recall)),
        size: MeanStd::of(&column(&|m| m.size)),
        node_size: node_sizes.into_iter().map(|(k, v)| (k, MeanStd::of(&v))).collect(),
        inode: (!inodes.is_empty()).then(|| MeanStd::of(&inodes)),
    }
}

fn frequencies(trials: &[TrialRecord], ncols: usize) -> Result<Vec<NodeFrequency>> {
    let mut by_label: BTreeMap<(usize, String), Vec<Vec<usize>>> = BTreeMap::new();
    for t in trials {
        for (pos, (label, set)) in t.constituents.iter().zip(&t.node_sets).enumerate() {
            by_label.entry((pos, label.clone())).or_default().push(set.clone());
        }
    }
    by_label
        .into_iter()
        .map(|((_, constituent), sets)| {
            Ok(NodeFrequency {
                constituent,
                counts: node_frequency(&sets, ncols)?,
            })
        })
        .collect()
}

/// Runs `cfg.trials` independent trials (in parallel) of sampling, scanning
/// and scoring.
pub fn run_experiment(
    reference: &ActivationMatrix,
    clean: &ActivationMatrix,
    anomalous: &ActivationMatrix,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if cfg.trials == 0 {
        return Err(NpssError::InvalidArgument("trials must be >= 1".into()));
    }
    cfg.scan.validate()?;
    for (name, m) in [("clean", clean), ("anomalous", anomalous)] {
        if m.ncols() != reference.ncols() {
            return Err(NpssError::Shape(format!(
                "reference has {} nodes, {name} pool has {}",
                reference.ncols(),
                m.ncols()
            )));
        }
    }
    let ncols = reference.ncols();
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = cfg.trial_seed(t);
            let (test, labels) = sample_test_set(
                clean,
                Some(anomalous),
                cfg.test_size,
                cfg.anom_frac,
                derive_seed(seed, "sample"),
            )?;
            let scan_cfg = cfg.scan.with_seed(derive_seed(seed, "strategy"));
            let result = run_strategy(reference, &test, &cfg.strategy, &scan_cfg)?;
            let metrics = trial_metrics(&result, &labels, test.nrows(), ncols)?;
            Ok(TrialRecord {
                trial: t,
                seed,
                metrics,
                flagged_row_ids: result.flagged_rows.iter().map(|&r| test.row_ids()[r].clone()).collect(),
                node_sets: result.node_sets.clone(),
                constituents: result.per_scan.iter().map(|c| c.label.clone()).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        std_kind: "population".into(),
        reference_size: reference.nrows(),
        nodes: ncols,
        summary: summarize(&trials),
        node_frequency: frequencies(&trials, ncols)?,
        trials,
    })
}

impl ExperimentReport {
    /// Recomputes the summary from the stored per-trial rows.
    pub fn recompute_summary(&self) -> Summary {
        summarize(&self.trials)
    }

    /// One row per trial followed by `mean` and `std` rows. Multiple node
    /// subsets are `;`-separated in the `node_size` column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "row,trial,seed,precision,recall,size,node_size,inode,true_positives,flagged,anomalous,test_size,precision_degenerate,recall_degenerate\n",
        );
        for t in &self.trials {
            let m = &t.metrics;
            let node_size: Vec<String> = m.node_size.iter().map(f64::to_string).collect();
            let _ = writeln!(
                out,
                "trial,{},{},{},{},{},{},{},{},{},{},{},{},{}",
                t.trial,
                t.seed,
                m.precision,
                m.recall,
                m.size,
                node_size.join(";"),
                m.inode.map_or(String::new(), |v| v.to_string()),
                m.true_positives,
                m.flagged,
                m.anomalous,
                m.test_size,
                m.precision_degenerate,
                m.recall_degenerate
            );
        }
        let s = &self.summary;
        let node_stat = |f: fn(&MeanStd) -> f64| {
            s.node_size
                .values()
                .map(|v| f(v).to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        let inode = |f: fn(&MeanStd) -> f64| s.inode.as_ref().map_or(String::new(), |v| f(v).to_string());
        for (name, f) in [
            ("mean", (|v: &MeanStd| v.mean) as fn(&MeanStd) -> f64),
            ("std", |v: &MeanStd| v.std),
        ] {
            let _ = writeln!(
                out,
                "{name},,,{},{},{},{},{},,,,,,",
                f(&s.precision),
                f(&s.recall),
                f(&s.size),
                node_stat(f),
                inode(f)
            );
        }
        out
    }
}
