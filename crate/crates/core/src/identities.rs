//! Randomized checks of two algebraic identities the Richardson equations
//! rest on: relabeling of triangular double sums, and the partial-fraction
//! split `1/((x-a)(x-b)) = (1/(a-b)) (1/(x-a) - 1/(x-b))`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const PARTIAL_FRACTION_TOLERANCE: f64 = 1e-12;

/// Minimum pairwise distance between `a`, `b` and `x` in the random
/// partial-fraction trials (points are drawn from the unit square).
const MIN_SEPARATION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub trials: usize,
    pub seed: u64,
    pub double_sum_failures: usize,
    pub partial_fraction_failures: usize,
    pub max_partial_fraction_error: f64,
    pub pass: bool,
}

/// `Σ_i Σ_{j>i} a_ij`, row by row.
pub fn upper_sum_by_rows(a: &[Vec<i64>]) -> i64 {
    let n = a.len();
    (0..n).map(|i| (i + 1..n).map(|j| a[i][j]).sum::<i64>()).sum()
}

/// `Σ_j Σ_{i<j} a_ij`, column by column.
pub fn upper_sum_by_columns(a: &[Vec<i64>]) -> i64 {
    let n = a.len();
    (0..n).map(|j| (0..j).map(|i| a[i][j]).sum::<i64>()).sum()
}

/// Relative discrepancy between the two sides of the partial-fraction split.
pub fn partial_fraction_error(a: Complex64, b: Complex64, x: Complex64) -> f64 {
    let lhs = ((x - a) * (x - b)).inv();
    let rhs = (a - b).inv() * ((x - a).inv() - (x - b).inv());
    (lhs - rhs).norm() / lhs.norm()
}

fn random_point(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn verify_identities(trials: usize, seed: u64) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut double_sum_failures = 0;
    let mut partial_fraction_failures = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = rng.gen_range(0..=12);
        let a: Vec<Vec<i64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1_000_000..=1_000_000)).collect())
            .collect();
        if upper_sum_by_rows(&a) != upper_sum_by_columns(&a) {
            double_sum_failures += 1;
        }

        let (a, b, x) = loop {
            let (a, b, x) = (random_point(&mut rng), random_point(&mut rng), random_point(&mut rng));
            if (a - b).norm().min((x - a).norm()).min((x - b).norm()) >= MIN_SEPARATION {
                break (a, b, x);
            }
        };
        let err = partial_fraction_error(a, b, x);
        worst = worst.max(err);
        if err.is_nan() || err > PARTIAL_FRACTION_TOLERANCE {
            partial_fraction_failures += 1;
        }
    }
    IdentityReport {
        trials,
        seed,
        double_sum_failures,
        partial_fraction_failures,
        max_partial_fraction_error: worst,
        pass: double_sum_failures == 0 && partial_fraction_failures == 0,
    }
}
