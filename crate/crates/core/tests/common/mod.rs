//! Oracles and fixtures shared by the integration tests. Nothing here calls
//! the scoring or optimisation code under test.

#![allow(dead_code)]

use npss::{ActivationMatrix, PValueMatrix, Statistic};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRID: [f64; 10] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Direct closed forms, one-sided gate applied.
pub fn oracle_phi(stat: Statistic, alpha: f64, n_alpha: usize, n: usize) -> f64 {
    let (na, nf) = (n_alpha as f64, n as f64);
    if na <= nf * alpha {
        return 0.0;
    }
    match stat {
        Statistic::HigherCriticism => (na - nf * alpha) / (nf * alpha * (1.0 - alpha)).sqrt(),
        Statistic::BerkJones => {
            let x = na / nf;
            let mut kl = x * (x / alpha).ln();
            if x < 1.0 {
                kl += (1.0 - x) * ((1.0 - x) / (1.0 - alpha)).ln();
            }
            nf * kl
        }
    }
}

/// Score of an explicit cell list by counting every level from scratch.
pub fn oracle_score(stat: Statistic, cells: &[f64]) -> f64 {
    GRID.iter()
        .map(|&a| oracle_phi(stat, a, cells.iter().filter(|&&p| p < a).count(), cells.len()))
        .fold(0.0, f64::max)
}

pub fn cells(p: &PValueMatrix, rows: &[usize], cols: &[usize]) -> Vec<f64> {
    rows.iter()
        .flat_map(|&r| cols.iter().map(move |&c| p.get(r, c)))
        .collect()
}

pub fn members(mask: usize, len: usize) -> Vec<usize> {
    (0..len).filter(|i| mask >> i & 1 == 1).collect()
}

/// Best score over every non-empty row subset for fixed columns.
pub fn brute_rows(stat: Statistic, p: &PValueMatrix, cols: &[usize]) -> f64 {
    (1..1usize << p.nrows())
        .map(|m| oracle_score(stat, &cells(p, &members(m, p.nrows()), cols)))
        .fold(0.0, f64::max)
}

/// Best score over every non-empty (rows, cols) pair.
pub fn brute_global(stat: Statistic, p: &PValueMatrix) -> f64 {
    let mut best = 0.0f64;
    for rm in 1..1usize << p.nrows() {
        let rows = members(rm, p.nrows());
        for cm in 1..1usize << p.ncols() {
            best = best.max(oracle_score(stat, &cells(p, &rows, &members(cm, p.ncols()))));
        }
    }
    best
}

/// Random p-values on a coarse lattice so ties and exact grid hits occur.
pub fn random_pvalues(seed: u64, nrows: usize, ncols: usize) -> PValueMatrix {
    let mut r = rng(seed);
    let values = (0..nrows * ncols)
        .map(|_| {
            if r.random_bool(0.3) {
                r.random_range(1..=10) as f64 / 100.0
            } else {
                r.random_range(1..=100) as f64 / 100.0
            }
        })
        .collect();
    PValueMatrix::from_values(values, nrows, ncols).unwrap()
}

pub fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Standard Gaussian matrix with `prefix0, prefix1, ...` row ids.
pub fn gaussian_matrix(seed: u64, nrows: usize, ncols: usize, prefix: &str) -> ActivationMatrix {
    let mut r = rng(seed);
    let values = (0..nrows * ncols).map(|_| gaussian(&mut r)).collect();
    ActivationMatrix::new(
        values,
        nrows,
        ncols,
        (0..nrows).map(|i| format!("{prefix}{i}")).collect(),
    )
    .unwrap()
}

/// Gaussian rows where `shifted` columns move by `+shift` on even rows and
/// `-shift` on odd rows.
pub fn two_sided_pool(seed: u64, nrows: usize, ncols: usize, shifted: &[usize], shift: f64) -> ActivationMatrix {
    let base = gaussian_matrix(seed, nrows, ncols, "a");
    let mut values = base.values().to_vec();
    for r in 0..nrows {
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        for &c in shifted {
            values[r * ncols + c] += sign * shift;
        }
    }
    ActivationMatrix::new(values, nrows, ncols, base.row_ids().to_vec()).unwrap()
}
