mod common;

use std::io::Cursor;

use npss::matrix_io::{anomalous_count, read_matrix_bin, read_matrix_csv, write_matrix_bin, write_matrix_csv};
use npss::pvalues::{read_pvalues_bin, write_pvalues_bin};
use npss::{
    empirical_pvalues, sample_test_set, score_subset, ActivationMatrix, PValueMatrix, ScoreConfig, Statistic, Tail,
};
use proptest::prelude::*;

use common::{oracle_score, GRID};

fn matrix_strategy() -> impl Strategy<Value = ActivationMatrix> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1e6f64..1e6, r * c).prop_map(move |v| {
            ActivationMatrix::new(v, r, c, (0..r).map(|i| format!("row,{i} \"q\"")).collect()).unwrap()
        })
    })
}

/// Reference and test matrices over the same columns, with integer values
/// so that ties with the reference are common.
fn pair_strategy() -> impl Strategy<Value = (ActivationMatrix, ActivationMatrix)> {
    (1usize..12, 1usize..6, 1usize..5).prop_flat_map(|(b, m, j)| {
        (
            prop::collection::vec(-5i32..5, b * j),
            prop::collection::vec(-6i32..6, m * j),
        )
            .prop_map(move |(rv, tv)| {
                let f = |v: Vec<i32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
                (
                    ActivationMatrix::new(f(rv), b, j, (0..b).map(|i| format!("b{i}")).collect()).unwrap(),
                    ActivationMatrix::new(f(tv), m, j, (0..m).map(|i| format!("t{i}")).collect()).unwrap(),
                )
            })
    })
}

fn naive_bounds(reference: &ActivationMatrix, col: usize, z: f64, tail: Tail) -> (f64, f64) {
    let column = reference.column(col);
    let b1 = column.len() as f64 + 1.0;
    let ge = column.iter().filter(|&&v| v >= z).count() as f64;
    let gt = column.iter().filter(|&&v| v > z).count() as f64;
    let le = column.iter().filter(|&&v| v <= z).count() as f64;
    let lt = column.iter().filter(|&&v| v < z).count() as f64;
    match tail {
        Tail::Right => ((1.0 + gt) / b1, (1.0 + ge) / b1),
        Tail::Left => ((1.0 + lt) / b1, (1.0 + le) / b1),
        Tail::Two => (
            (2.0 * ((1.0 + gt) / b1).min((1.0 + lt) / b1)).min(1.0),
            (2.0 * ((1.0 + ge) / b1).min((1.0 + le) / b1)).min(1.0),
        ),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bin_round_trip_is_lossless(m in matrix_strategy()) {
        let mut buf = Vec::new();
        write_matrix_bin(&m, &mut buf).unwrap();
        let back = read_matrix_bin(Cursor::new(buf)).unwrap();
        prop_assert_eq!(back.values(), m.values());
        prop_assert_eq!(back.row_ids(), m.row_ids());
    }

    #[test]
    fn csv_round_trip(m in matrix_strategy()) {
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        let back = read_matrix_csv(Cursor::new(buf)).unwrap();
        prop_assert_eq!(back.row_ids(), m.row_ids());
        for (a, b) in back.values().iter().zip(m.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn non_finite_cells_are_rejected(m in matrix_strategy(), which in 0usize..3, at in any::<prop::sample::Index>()) {
        let bad = [f64::NAN, f64::INFINITY, f64::NEG_INFINITY][which];
        let mut values = m.values().to_vec();
        let i = at.index(values.len());
        values[i] = bad;
        let err = ActivationMatrix::new(values.clone(), m.nrows(), m.ncols(), m.row_ids().to_vec()).unwrap_err();
        prop_assert_eq!(err.kind(), "ValidationError");

        let mut text = String::from("id");
        for c in 0..m.ncols() { text.push_str(&format!(",n{c}")); }
        text.push('\n');
        for r in 0..m.nrows() {
            text.push_str(&format!("r{r}"));
            for c in 0..m.ncols() { text.push_str(&format!(",{}", values[r * m.ncols() + c])); }
            text.push('\n');
        }
        prop_assert!(read_matrix_csv(Cursor::new(text)).is_err());

        // Patch the binary payload directly: header is 8 magic + 2 x u64.
        let mut buf = Vec::new();
        write_matrix_bin(&m, &mut buf).unwrap();
        let off = 24 + 8 * i;
        buf[off..off + 8].copy_from_slice(&bad.to_le_bytes());
        prop_assert_eq!(read_matrix_bin(Cursor::new(buf)).unwrap_err().kind(), "ValidationError");
    }

    #[test]
    fn sample_has_exact_anomalous_count(size in 1usize..300, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let clean = common::gaussian_matrix(1, 7, 3, "c");
        let anom = common::gaussian_matrix(2, 4, 3, "a");
        let (test, labels) = sample_test_set(&clean, Some(&anom), size, frac, seed).unwrap();
        let expected = (size as f64 * frac).round() as usize;
        prop_assert_eq!(labels.anomalous_count(), expected);
        prop_assert_eq!(anomalous_count(size, frac), expected);
        prop_assert_eq!(test.nrows(), size);
        prop_assert_eq!(labels.ids(), test.row_ids());
        for (id, &l) in labels.ids().iter().zip(labels.labels()) {
            let source = id.split_once(':').unwrap().1;
            prop_assert_eq!(source.starts_with('a'), l == 1);
        }
    }

    #[test]
    fn pvalues_match_naive_counts((reference, test) in pair_strategy(), tail_code in 0u8..3, seed in any::<u64>()) {
        let tail = [Tail::Left, Tail::Right, Tail::Two][tail_code as usize];
        let pv = empirical_pvalues(&reference, &test, tail, seed).unwrap();
        for m in 0..test.nrows() {
            for j in 0..test.ncols() {
                let (lo, hi) = naive_bounds(&reference, j, test.get(m, j), tail);
                let (plo, phi) = pv.bounds(m, j);
                prop_assert!((plo - lo).abs() < 1e-15 && (phi - hi).abs() < 1e-15);
                let p = pv.get(m, j);
                prop_assert!(lo <= p && p <= hi);
                if lo == hi { prop_assert_eq!(p, lo); }
            }
        }
    }

    #[test]
    fn right_tail_is_monotone((reference, test) in pair_strategy(), seed in any::<u64>()) {
        let pv = empirical_pvalues(&reference, &test, Tail::Right, seed).unwrap();
        for j in 0..test.ncols() {
            for a in 0..test.nrows() {
                for b in 0..test.nrows() {
                    if test.get(a, j) < test.get(b, j) {
                        let (alo, ahi) = pv.bounds(a, j);
                        let (blo, bhi) = pv.bounds(b, j);
                        prop_assert!(blo <= alo && bhi <= ahi);
                        // Strictly separated intervals pin the drawn value.
                        if bhi <= alo { prop_assert!(pv.get(b, j) <= pv.get(a, j)); }
                    }
                }
            }
        }
    }

    #[test]
    fn left_tail_mirrors_right((reference, test) in pair_strategy(), seed in any::<u64>()) {
        let left = empirical_pvalues(&reference, &test, Tail::Left, seed).unwrap();
        let right = empirical_pvalues(&reference.negated(), &test.negated(), Tail::Right, seed).unwrap();
        prop_assert_eq!(left.pmin(), right.pmin());
        prop_assert_eq!(left.pmax(), right.pmax());
        prop_assert_eq!(left.values(), right.values());
    }

    #[test]
    fn pvalues_are_deterministic((reference, test) in pair_strategy(), seed in any::<u64>()) {
        let a = empirical_pvalues(&reference, &test, Tail::Two, seed).unwrap();
        let b = empirical_pvalues(&reference, &test, Tail::Two, seed).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| empirical_pvalues(&reference, &test, Tail::Two, seed).unwrap());
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a, &c);
        let mut buf = Vec::new();
        write_pvalues_bin(&a, &mut buf).unwrap();
        prop_assert_eq!(read_pvalues_bin(Cursor::new(buf)).unwrap(), a);
    }

    #[test]
    fn score_matches_per_alpha_oracle(seed in any::<u64>(), bj in any::<bool>(), rmask in 1usize..64, cmask in 1usize..32) {
        let stat = if bj { Statistic::BerkJones } else { Statistic::HigherCriticism };
        let p = common::random_pvalues(seed, 6, 5);
        let rows = common::members(rmask, 6);
        let cols = common::members(cmask, 5);
        let got = score_subset(&p, &rows, &cols, &ScoreConfig::with_statistic(stat)).unwrap();
        let want = oracle_score(stat, &common::cells(&p, &rows, &cols));
        prop_assert!((got.score - want).abs() < 1e-9, "{} vs {}", got.score, want);
        prop_assert!(got.score >= 0.0 && got.n_alpha <= got.n);
        prop_assert!(GRID.contains(&got.best_alpha));
    }

    #[test]
    fn dilution_never_increases_score(cells in prop::collection::vec(0.001f64..1.0, 1..40), extra in 1usize..10, bj in any::<bool>()) {
        let stat = if bj { Statistic::BerkJones } else { Statistic::HigherCriticism };
        let cfg = ScoreConfig::with_statistic(stat);
        let mut before = None;
        for added in 0..=extra {
            let mut v = cells.clone();
            v.extend(std::iter::repeat_n(1.0, added));
            let n = v.len();
            let p = PValueMatrix::from_values(v, 1, n).unwrap();
            let s = score_subset(&p, &[0], &(0..n).collect::<Vec<_>>(), &cfg).unwrap().score;
            if let Some(b) = before { prop_assert!(s <= b + 1e-12); }
            before = Some(s);
        }
    }

    #[test]
    fn score_ignores_subset_order(seed in any::<u64>(), rows in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(), cols in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(), keep_r in 1usize..=6, keep_c in 1usize..=5) {
        let p = common::random_pvalues(seed, 6, 5);
        let cfg = ScoreConfig::with_statistic(Statistic::BerkJones);
        let (r, c) = (&rows[..keep_r], &cols[..keep_c]);
        let mut rs = r.to_vec(); rs.sort();
        let mut cs = c.to_vec(); cs.sort();
        prop_assert_eq!(score_subset(&p, r, c, &cfg).unwrap(), score_subset(&p, &rs, &cs, &cfg).unwrap());
    }

    #[test]
    fn gate_boundary_is_exact(n in 1usize..400, k in 1usize..=10) {
        let alpha = k as f64 / 20.0;
        for na in 0..=n {
            let hc = npss::hc_statistic(alpha, na, n).unwrap();
            let bj = npss::bj_statistic(alpha, na, n).unwrap();
            // Integer comparison avoids rounding in n * alpha.
            let excess = 20 * na > k * n;
            prop_assert_eq!(hc > 0.0, excess);
            prop_assert_eq!(bj > 0.0, excess);
        }
    }
}
