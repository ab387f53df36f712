//! Weakly supervised anomalous-pattern detection in activation matrices.
//!
//! Test activations are converted into empirical p-values against a
//! reference sample of "normal" inputs ([`pvalues`]), subsets of rows and
//! columns are scored with non-parametric scan statistics ([`scoring`]), the
//! most anomalous sub-matrix is found by alternating linear-time subset
//! scans ([`fgss`]), and the results of several scans are combined
//! ([`strategies`]) and evaluated against ground truth ([`evaluate`]).

pub mod cli;
pub mod error;
pub mod evaluate;
pub mod fgss;
pub mod matrix_io;
pub mod pvalues;
pub mod scoring;
pub mod seed;
pub mod strategies;

pub use error::{NpssError, Result};
pub use evaluate::{
    compute_metrics, node_frequency, node_intersection, run_experiment, ExperimentConfig, ExperimentReport,
    TrialMetrics,
};
pub use fgss::{optimize_cols, optimize_rows, scan, single_restart, ScanConfig, ScanReport, ScanResult};
pub use matrix_io::{
    load_labels, load_matrix, sample_test_set, save_labels, save_matrix, ActivationMatrix, LabelVector, MatrixFormat,
};
pub use pvalues::{empirical_pvalues, load_pvalues, null_uniformity_check, save_pvalues, PValueMatrix, Tail};
pub use scoring::{bj_statistic, hc_statistic, score_subset, ScoreConfig, Statistic, SubsetScore};
pub use seed::derive_seed;
pub use strategies::{
    run_strategy, scan_lr, scan_one_tailed, scan_topk, Method, StrategyReport, StrategyResult, StrategySpec,
};
