//! Exact diagonalization of the pairing Hamiltonian in the seniority-zero
//! space, used as ground truth for discrete-spectrum solves.
//!
//! Configurations are bitmasks over pair states. In this basis
//! `H = Σ_j 2ε_j b†_j b_j - G B₀†B₀` has diagonal `Σ_{j∈S} 2ε_j - G n` and
//! `-G` between configurations related by moving a single pair.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::richardson::PairSolution;
use crate::spectrum::{Level, PairingProblem};

pub const MAX_LEVELS: usize = 24;
pub const MAX_BASIS: usize = 500_000;
pub const MAX_DIAGONALIZATION: usize = 3000;

/// All `n`-subsets of `L` pair states, lexicographic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigBasis {
    level_count: usize,
    pair_count: usize,
    configs: Vec<u32>,
}

impl ConfigBasis {
    pub fn level_count(&self) -> usize {
        self.level_count
    }

    pub fn pair_count(&self) -> usize {
        self.pair_count
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn masks(&self) -> &[u32] {
        &self.configs
    }

    /// Occupied pair states of configuration `i`, ascending.
    pub fn occupied(&self, i: usize) -> Vec<usize> {
        let m = self.configs[i];
        (0..self.level_count).filter(|j| m >> j & 1 == 1).collect()
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

pub fn build_basis(level_count: usize, pair_count: usize) -> Result<ConfigBasis> {
    if pair_count > level_count {
        return Err(Error::Domain(format!(
            "{pair_count} pairs do not fit into {level_count} levels"
        )));
    }
    if level_count > MAX_LEVELS {
        return Err(Error::Capacity(format!(
            "{level_count} levels exceed the oracle limit of {MAX_LEVELS}"
        )));
    }
    let size = binomial(level_count, pair_count);
    if size > MAX_BASIS as u128 {
        return Err(Error::Capacity(format!(
            "basis of {size} configurations exceeds {MAX_BASIS}"
        )));
    }
    let mut configs = Vec::with_capacity(size as usize);
    let mut idx: Vec<usize> = (0..pair_count).collect();
    loop {
        configs.push(idx.iter().fold(0u32, |m, &j| m | 1 << j));
        // advance to the next combination in lexicographic order
        let Some(pos) = (0..pair_count)
            .rev()
            .find(|&i| idx[i] < level_count - pair_count + i)
        else {
            break;
        };
        idx[pos] += 1;
        for i in pos + 1..pair_count {
            idx[i] = idx[i - 1] + 1;
        }
    }
    Ok(ConfigBasis {
        level_count,
        pair_count,
        configs,
    })
}

/// Dense real symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl DenseSymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Domain("matrix must be square".into()));
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Domain(format!("matrix not symmetric at ({i}, {j})")));
                }
                m.data[i * dim + j] = rows[i][j];
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }
}

pub fn build_hamiltonian(basis: &ConfigBasis, levels: &[Level], strength: f64) -> Result<DenseSymMatrix> {
    if levels.len() != basis.level_count {
        return Err(Error::Domain(format!(
            "basis has {} levels, got {}",
            basis.level_count,
            levels.len()
        )));
    }
    if levels.iter().any(|l| !l.energy.is_finite()) || !strength.is_finite() {
        return Err(Error::Domain("oracle needs finite real levels and strength".into()));
    }
    let index: HashMap<u32, usize> = basis
        .configs
        .iter()
        .enumerate()
        .map(|(i, &m)| (m, i))
        .collect();
    let d = basis.len();
    let n = basis.pair_count as f64;
    let mut h = DenseSymMatrix::zeros(d);
    for (a, &mask) in basis.configs.iter().enumerate() {
        let diag: f64 = (0..basis.level_count)
            .filter(|j| mask >> j & 1 == 1)
            .map(|j| 2.0 * levels[j].energy)
            .sum();
        h.set(a, a, diag - strength * n);
        for from in (0..basis.level_count).filter(|j| mask >> j & 1 == 1) {
            for to in (0..basis.level_count).filter(|j| mask >> j & 1 == 0) {
                let b = index[&(mask ^ (1 << from) ^ (1 << to))];
                if b > a {
                    h.set(a, b, -strength);
                }
            }
        }
    }
    Ok(h)
}

/// All eigenvalues by cyclic Jacobi rotations, ascending.
pub fn eigenvalues(matrix: &DenseSymMatrix) -> Result<Vec<f64>> {
    let n = matrix.dim;
    if n > MAX_DIAGONALIZATION {
        return Err(Error::Capacity(format!(
            "dimension {n} exceeds the dense eigensolver limit of {MAX_DIAGONALIZATION}"
        )));
    }
    let mut a = matrix.data.clone();
    const THRESHOLD: f64 = 1e-12;
    for sweep in 0..100 {
        let (mut off, mut sum) = (0.0f64, 0.0);
        for i in 0..n {
            for v in &a[i * n + i + 1..(i + 1) * n] {
                off = off.max(v.abs());
                sum += v.abs();
            }
        }
        if off < THRESHOLD {
            break;
        }
        // early sweeps only rotate away the large elements
        let skip_below = if sweep < 3 { 0.2 * sum / (n * n) as f64 } else { 0.0 };
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                if sweep > 3 && apq.abs() < THRESHOLD * 1e-3 && app + 100.0 * apq == app && aqq + 100.0 * apq == aqq {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                if apq == 0.0 || apq.abs() <= skip_below {
                    continue;
                }
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                // rows p and q are contiguous; by symmetry they hold the
                // columns too, which are mirrored afterwards
                let (head, tail) = a.split_at_mut(q * n);
                let row_p = &mut head[p * n..(p + 1) * n];
                let row_q = &mut tail[..n];
                for r in 0..n {
                    let arp = row_p[r];
                    let arq = row_q[r];
                    row_p[r] = arp - s * (arq + tau * arp);
                    row_q[r] = arq + s * (arp - tau * arq);
                }
                row_p[p] = app - t * apq;
                row_q[q] = aqq + t * apq;
                row_p[q] = 0.0;
                row_q[p] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        a[r * n + p] = a[p * n + r];
                        a[r * n + q] = a[q * n + r];
                    }
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// The `k` smallest eigenvalues, ascending.
pub fn lowest_eigenvalues(matrix: &DenseSymMatrix, k: usize) -> Result<Vec<f64>> {
    if k > matrix.dim {
        return Err(Error::Domain(format!(
            "requested {k} eigenvalues of a {}-dimensional matrix",
            matrix.dim
        )));
    }
    let mut all = eigenvalues(matrix)?;
    all.truncate(k);
    Ok(all)
}

/// Full seniority-zero spectrum of a real discrete problem.
pub fn oracle_spectrum(problem: &PairingProblem) -> Result<Vec<f64>> {
    if !problem.resonances.is_empty() || problem.has_densities() {
        return Err(Error::Domain(
            "the oracle handles real discrete spectra only".into(),
        ));
    }
    let levels: Vec<Level> = problem.real_levels().cloned().collect();
    let basis = build_basis(levels.len(), problem.pairs)?;
    let h = build_hamiltonian(&basis, &levels, problem.strength)?;
    eigenvalues(&h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub total: Complex64,
    pub nearest_index: usize,
    pub nearest: f64,
    pub gap: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

fn judge(total: Complex64, index: usize, value: f64, tolerance: f64) -> Comparison {
    let gap = (total.re - value).abs();
    let leak = total.im.abs() > tolerance;
    let diagnostic = if leak {
        Some(format!(
            "imaginary leak: Im total = {:.3e} on a real spectrum",
            total.im
        ))
    } else if gap > tolerance {
        Some(format!("gap {gap:.3e} exceeds tolerance {tolerance:.1e}"))
    } else {
        None
    };
    Comparison {
        total,
        nearest_index: index,
        nearest: value,
        gap,
        pass: !leak && gap <= tolerance,
        diagnostic,
    }
}

/// Matches a solution total to the nearest oracle eigenvalue.
pub fn compare(solution: &PairSolution, oracle_values: &[f64], tolerance: f64) -> Comparison {
    compare_total(solution.total, oracle_values, tolerance)
}

pub fn compare_total(total: Complex64, oracle_values: &[f64], tolerance: f64) -> Comparison {
    let best = oracle_values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - total.re).abs().total_cmp(&(b.1 - total.re).abs()));
    match best {
        Some((i, &v)) => judge(total, i, v, tolerance),
        None => Comparison {
            total,
            nearest_index: 0,
            nearest: f64::NAN,
            gap: f64::INFINITY,
            pass: false,
            diagnostic: Some("no oracle eigenvalues".into()),
        },
    }
}

/// Ground-state comparison against the lowest eigenvalue.
pub fn compare_ground(solution: &PairSolution, oracle_values: &[f64], tolerance: f64) -> Comparison {
    match oracle_values.first() {
        Some(&v) => judge(solution.total, 0, v, tolerance),
        None => compare_total(solution.total, oracle_values, tolerance),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::richardson::{PairEnergies, SolveMethod};

    fn levels(e: &[f64]) -> Vec<Level> {
        e.iter().enumerate().map(|(i, &x)| Level::new(x, format!("l{i}"))).collect()
    }

    #[test]
    fn basis_enumeration() {
        let b = build_basis(2, 1).unwrap();
        assert_eq!(b.occupied(0), vec![0]);
        assert_eq!(b.occupied(1), vec![1]);
        assert_eq!(build_basis(4, 2).unwrap().len(), 6);
        assert_eq!(build_basis(8, 4).unwrap().len(), 70);
        assert_eq!(build_basis(5, 0).unwrap().len(), 1);
        let b = build_basis(6, 3).unwrap();
        let lists: Vec<Vec<usize>> = (0..b.len()).map(|i| b.occupied(i)).collect();
        let mut sorted = lists.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(lists, sorted);
    }

    #[test]
    fn basis_limits() {
        assert!(matches!(build_basis(25, 1), Err(Error::Capacity(_))));
        assert!(matches!(build_basis(24, 12), Err(Error::Capacity(_))));
        assert!(build_basis(3, 4).is_err());
    }

    #[test]
    fn two_level_matrix() {
        let b = build_basis(2, 1).unwrap();
        let h = build_hamiltonian(&b, &levels(&[0.0, 1.0]), 0.5).unwrap();
        let want = DenseSymMatrix::from_rows(&[vec![-0.5, -0.5], vec![-0.5, 1.5]]).unwrap();
        assert_eq!(h, want);
        let ev = lowest_eigenvalues(&h, 2).unwrap();
        assert!((ev[0] - (1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-10);
        assert!((ev[1] - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-10);
    }

    #[test]
    fn no_interaction_gives_diagonal() {
        let e = [0.3, -1.0, 2.0, 0.7];
        let b = build_basis(4, 2).unwrap();
        let h = build_hamiltonian(&b, &levels(&e), 0.0).unwrap();
        let mut want: Vec<f64> = (0..b.len())
            .map(|i| b.occupied(i).iter().map(|&j| 2.0 * e[j]).sum())
            .collect();
        for i in 0..b.len() {
            assert_eq!(h.get(i, i), want[i]);
            for j in 0..b.len() {
                if i != j {
                    assert_eq!(h.get(i, j), 0.0);
                }
            }
        }
        want.sort_by(f64::total_cmp);
        assert_eq!(eigenvalues(&h).unwrap(), want);
    }

    #[test]
    fn degenerate_model_matrix() {
        let b = build_basis(4, 2).unwrap();
        let h = build_hamiltonian(&b, &levels(&[1.0; 4]), 0.2).unwrap();
        for i in 0..6 {
            assert!((h.get(i, i) - (4.0 - 0.4)).abs() < 1e-15);
            for j in 0..6 {
                if i != j {
                    // configurations share one pair unless they are complements
                    let shared = (b.masks()[i] & b.masks()[j]).count_ones();
                    let want = if shared == 1 { -0.2 } else { 0.0 };
                    assert_eq!(h.get(i, j), want);
                }
            }
        }
        let ev = lowest_eigenvalues(&h, 1).unwrap();
        assert!((ev[0] - 2.8).abs() < 1e-10);
    }

    #[test]
    fn trace_matches_eigenvalue_sum_and_permutation_invariance() {
        let e = [0.0, 0.4, 1.1, 1.5, 2.2, 3.0, 3.1];
        let b = build_basis(e.len(), 3).unwrap();
        let h = build_hamiltonian(&b, &levels(&e), 0.35).unwrap();
        let ev = eigenvalues(&h).unwrap();
        let sum: f64 = ev.iter().sum();
        assert!((sum - h.trace()).abs() <= 1e-9 * h.trace().abs());
        let mut perm = e;
        perm.reverse();
        perm.swap(1, 4);
        let hp = build_hamiltonian(&b, &levels(&perm), 0.35).unwrap();
        for (a, c) in ev.iter().zip(eigenvalues(&hp).unwrap()) {
            assert!((a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn lowest_rejects_too_many() {
        let h = DenseSymMatrix::zeros(2);
        assert!(lowest_eigenvalues(&h, 3).is_err());
    }

    fn solution(total: Complex64) -> PairSolution {
        PairSolution {
            energies: PairEnergies(vec![total]),
            residual_norm: 0.0,
            total,
            iterations: 0,
            continuation_steps: 0,
            promotions: 0,
            method: SolveMethod::Continuation,
            strength: 0.5,
            warnings: vec![],
        }
    }

    #[test]
    fn comparison_report() {
        let vals = [(1.0 - 5f64.sqrt()) / 2.0, (1.0 + 5f64.sqrt()) / 2.0];
        let r = compare(&solution(Complex64::new(-0.6180339887, 0.0)), &vals, 1e-8);
        assert!(r.pass && r.gap < 1e-8 && r.nearest_index == 0);
        let r = compare(&solution(Complex64::new(0.0, 0.0)), &[0.0], 1e-8);
        assert_eq!(r.gap, 0.0);
        let r = compare(&solution(Complex64::new(0.0, 1e-3)), &[0.0], 1e-8);
        assert!(!r.pass);
        assert!(r.diagnostic.unwrap().contains("imaginary leak"));
        let r = compare_ground(&solution(Complex64::new(1.618, 0.0)), &vals, 1e-8);
        assert!(!r.pass);
    }
}
