mod common;

use npss::{optimize_cols, optimize_rows, scan, score_subset, single_restart, ScanConfig, ScoreConfig, Statistic};
use proptest::prelude::*;

use common::{brute_global, brute_rows, members, random_pvalues};

fn stat(bj: bool) -> Statistic {
    if bj {
        Statistic::BerkJones
    } else {
        Statistic::HigherCriticism
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimize_rows_matches_enumeration(seed in any::<u64>(), m in 1usize..=10, j in 1usize..=6, cmask in 1usize..64, bj in any::<bool>()) {
        let p = random_pvalues(seed, m, j);
        let cols = members(cmask % (1 << j), j);
        prop_assume!(!cols.is_empty());
        let cfg = ScoreConfig::with_statistic(stat(bj));
        let (rows, s) = optimize_rows(&p, &cols, &cfg).unwrap();
        let want = brute_rows(stat(bj), &p, &cols);
        prop_assert!((s.score - want).abs() < 1e-9, "{} vs {}", s.score, want);
        prop_assert_eq!(score_subset(&p, &rows, &cols, &cfg).unwrap(), s);
    }

    #[test]
    fn ungated_optimize_rows_matches_enumeration(seed in any::<u64>(), m in 1usize..=8, j in 1usize..=4, bj in any::<bool>()) {
        let p = random_pvalues(seed, m, j);
        let cols: Vec<usize> = (0..j).collect();
        let cfg = ScoreConfig::new(stat(bj), ScoreConfig::default_grid(), false).unwrap();
        let (_, s) = optimize_rows(&p, &cols, &cfg).unwrap();
        let mut want = 0.0f64;
        for mask in 1..1usize << m {
            let cells = common::cells(&p, &members(mask, m), &cols);
            for &a in &common::GRID {
                let na = cells.iter().filter(|&&x| x < a).count() as f64;
                let n = cells.len() as f64;
                let v = match stat(bj) {
                    Statistic::HigherCriticism => (na - n * a).abs() / (n * a * (1.0 - a)).sqrt(),
                    Statistic::BerkJones => {
                        let x = na / n;
                        let t = |u: f64, w: f64| if u <= 0.0 { 0.0 } else { u * (u / w).ln() };
                        n * (t(x, a) + t(1.0 - x, 1.0 - a))
                    }
                };
                want = want.max(v);
            }
        }
        prop_assert!((s.score - want).abs() < 1e-9, "{} vs {}", s.score, want);
    }

    #[test]
    fn optimize_cols_matches_transposed_rows(seed in any::<u64>(), m in 1usize..=6, j in 1usize..=6, bj in any::<bool>()) {
        let p = random_pvalues(seed, m, j);
        let t = npss::PValueMatrix::from_values(
            (0..j).flat_map(|c| (0..m).map(move |r| (r, c))).map(|(r, c)| p.get(r, c)).collect(), j, m).unwrap();
        let rows: Vec<usize> = (0..m).step_by(2).collect();
        let cfg = ScoreConfig::with_statistic(stat(bj));
        let (cols, a) = optimize_cols(&p, &rows, &cfg).unwrap();
        let (rows_t, b) = optimize_rows(&t, &rows, &cfg).unwrap();
        prop_assert_eq!(cols, rows_t);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn restart_is_a_coordinate_local_optimum(seed in any::<u64>(), bj in any::<bool>()) {
        let p = random_pvalues(seed, 8, 6);
        let cfg = ScanConfig { score_cfg: ScoreConfig::with_statistic(stat(bj)), ..ScanConfig::default() };
        let r = single_restart(&p, &cfg, seed).unwrap();
        prop_assert_eq!(score_subset(&p, &r.rows, &r.cols, &cfg.score_cfg).unwrap().score, r.score);
        let (_, by_rows) = optimize_rows(&p, &r.cols, &cfg.score_cfg).unwrap();
        let (_, by_cols) = optimize_cols(&p, &r.rows, &cfg.score_cfg).unwrap();
        prop_assert!(by_rows.score <= r.score + cfg.score_tolerance);
        prop_assert!(by_cols.score <= r.score + cfg.score_tolerance);
    }

    #[test]
    fn more_restarts_never_score_lower(seed in any::<u64>(), restarts in 1usize..10) {
        let p = random_pvalues(seed, 10, 8);
        let few = ScanConfig { restarts, seed, ..ScanConfig::default() };
        let many = ScanConfig { restarts: restarts + 5, ..few.clone() };
        prop_assert!(scan(&p, &many).unwrap().score >= scan(&p, &few).unwrap().score);
    }
}

#[test]
fn scan_never_exceeds_global_maximum() {
    for seed in 0..20u64 {
        let p = random_pvalues(1000 + seed, 5, 4);
        for bj in [false, true] {
            let cfg = ScanConfig {
                seed,
                score_cfg: ScoreConfig::with_statistic(stat(bj)),
                ..ScanConfig::default()
            };
            let r = scan(&p, &cfg).unwrap();
            assert!(r.score <= brute_global(stat(bj), &p) + 1e-9);
        }
    }
}

#[test]
fn scan_is_deterministic_across_thread_counts() {
    let p = random_pvalues(5, 30, 12);
    let cfg = ScanConfig {
        seed: 77,
        ..ScanConfig::default()
    };
    let a = scan(&p, &cfg).unwrap();
    let b = scan(&p, &cfg).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = one.install(|| scan(&p, &cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
    let mut single = single_restart(&p, &cfg, cfg.restart_seed(a.restart_index)).unwrap();
    single.restart_index = a.restart_index;
    assert_eq!(single, a);
}

#[test]
fn invalid_configs_are_rejected() {
    let p = random_pvalues(1, 3, 3);
    let bad = ScanConfig {
        restarts: 0,
        ..ScanConfig::default()
    };
    assert_eq!(scan(&p, &bad).unwrap_err().kind(), "InvalidArgument");
    let bad = ScanConfig {
        score_tolerance: -1.0,
        ..ScanConfig::default()
    };
    assert!(scan(&p, &bad).is_err());
    assert_eq!(
        optimize_rows(&p, &[3], &ScoreConfig::default()).unwrap_err().kind(),
        "IndexError"
    );
}
