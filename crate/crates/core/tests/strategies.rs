mod common;

use std::collections::BTreeSet;

use npss::strategies::{scan_single, scan_tail};
use npss::{
    derive_seed, empirical_pvalues, run_strategy, scan, scan_lr, scan_one_tailed, scan_topk, ActivationMatrix, Method,
    ScanConfig, StrategySpec, Tail,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::{gaussian_matrix, two_sided_pool};

fn fixture(seed: u64) -> (ActivationMatrix, ActivationMatrix) {
    let reference = gaussian_matrix(seed, 60, 8, "ref");
    let clean = gaussian_matrix(seed + 1, 20, 8, "t");
    let anom = two_sided_pool(seed + 2, 6, 8, &[0, 1, 2], 4.0);
    let mut values = clean.values().to_vec();
    values.extend_from_slice(anom.values());
    let ids = (0..26).map(|i| format!("t{i}")).collect();
    (reference, ActivationMatrix::new(values, 26, 8, ids).unwrap())
}

fn cfg(seed: u64) -> ScanConfig {
    ScanConfig {
        restarts: 6,
        seed,
        ..ScanConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn left_scan_equals_right_scan_of_negated(seed in 0u64..1000) {
        let (reference, test) = fixture(seed);
        let left = scan_one_tailed(&reference, &test, Tail::Left, &cfg(seed)).unwrap();
        let right = scan_one_tailed(&reference.negated(), &test.negated(), Tail::Right, &cfg(seed)).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn topk_remaps_to_the_selected_row_ids(seed in 0u64..1000, k in 1usize..4) {
        let (reference, test) = fixture(seed);
        let mut ids: Vec<String> = (0..test.nrows()).map(|i| format!("id-{i}")).collect();
        ids.shuffle(&mut common::rng(seed));
        let test = ActivationMatrix::new(test.values().to_vec(), test.nrows(), test.ncols(), ids).unwrap();
        let base = cfg(seed);
        let res = scan_topk(&reference, &test, k, false, &base).unwrap();

        // Replay each iteration independently on the reduced matrix.
        let mut remaining: Vec<usize> = (0..test.nrows()).collect();
        for c in &res.per_scan {
            prop_assert_eq!(c.seed, derive_seed(seed, &c.label));
            let reduced = test.select_rows(&remaining).unwrap();
            let p = empirical_pvalues(&reference, &reduced, Tail::Two, c.seed).unwrap();
            prop_assert_eq!(p.reference_size(), reference.nrows());
            let local = scan(&p, &base.with_seed(c.seed)).unwrap();
            let want: BTreeSet<&str> = local.rows.iter().map(|&r| reduced.row_ids()[r].as_str()).collect();
            let got: BTreeSet<&str> = c.result.rows.iter().map(|&r| test.row_ids()[r].as_str()).collect();
            prop_assert_eq!(want, got);
            prop_assert_eq!(local.score, c.result.score);
            remaining.retain(|r| !c.result.rows.contains(r));
        }
        prop_assert_eq!(res.reference_size, reference.nrows());
    }

    #[test]
    fn scan_lr_is_union_of_single_tails(seed in 0u64..1000) {
        let (reference, test) = fixture(seed);
        let lr = scan_lr(&reference, &test, &cfg(seed)).unwrap();
        let l = scan_single(&reference, &test, Tail::Left, &cfg(seed)).unwrap();
        let r = scan_single(&reference, &test, Tail::Right, &cfg(seed)).unwrap();
        let union: BTreeSet<usize> = r.flagged_rows.iter().chain(&l.flagged_rows).copied().collect();
        prop_assert_eq!(lr.flagged_rows, union.into_iter().collect::<Vec<_>>());
        prop_assert_eq!(&lr.per_scan[0], &l.per_scan[0]);
        prop_assert_eq!(&lr.per_scan[1], &r.per_scan[0]);
    }
}

#[test]
fn constituent_seeds_follow_roles() {
    let (reference, test) = fixture(3);
    let r = run_strategy(&reference, &test, &StrategySpec::new(Method::ScanR), &cfg(3)).unwrap();
    assert_eq!(r.per_scan[0].seed, derive_seed(3, "right"));
    let direct = scan_tail(&reference, &test, Tail::Right, &cfg(derive_seed(3, "right"))).unwrap();
    assert_eq!(r.per_scan[0].result, direct);
    assert_eq!(r.node_sets, vec![direct.cols.clone()]);
}

#[test]
fn topk_errors() {
    let (reference, test) = fixture(4);
    assert_eq!(
        scan_topk(&reference, &test, 0, false, &cfg(0)).unwrap_err().kind(),
        "InvalidArgument"
    );
    assert_eq!(
        scan_topk(&reference, &test, 27, false, &cfg(0)).unwrap_err().kind(),
        "InvalidArgument"
    );
    assert_eq!(
        scan_one_tailed(&reference, &test, Tail::Two, &cfg(0))
            .unwrap_err()
            .kind(),
        "InvalidArgument"
    );
    let narrow = gaussian_matrix(9, 10, 3, "x");
    assert_eq!(scan_lr(&narrow, &test, &cfg(0)).unwrap_err().kind(), "ShapeError");
}

#[test]
fn topk_exhausting_test_rows() {
    // Two identical extreme rows: the first iteration takes both, leaving
    // nothing for the second.
    let reference = gaussian_matrix(1, 50, 2, "r");
    let test = ActivationMatrix::from_rows(&[vec![500.0, 500.0], vec![500.0, 500.0]]).unwrap();
    let lenient = scan_topk(&reference, &test, 2, false, &cfg(0)).unwrap();
    assert_eq!(lenient.per_scan.len(), 1);
    assert_eq!(lenient.flagged_rows, vec![0, 1]);
    let strict = scan_topk(&reference, &test, 2, true, &cfg(0)).unwrap_err();
    assert_eq!(strict.kind(), "EmptyTestError");
}
