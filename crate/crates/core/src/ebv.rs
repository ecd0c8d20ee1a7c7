//! Continuation in eigenvalue-based variables.
//!
//! For distinct pair states `x_j = 2ε_j` the quantities
//! `z_j = G Σ_ν 1/(x_j - E_ν)` obey
//!
//! ```text
//! z_j² - z_j - G Σ_{k≠j} (z_j - z_k)/(x_j - x_k) = 0
//! ```
//!
//! which stays regular where pair energies collide. At `G = 0` the
//! occupation fixes `z_j ∈ {0, 1}`. The pair energies are recovered as the
//! roots of the monic polynomial `P` with `P'(x_j) = (z_j/G) P(x_j)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::richardson::{inf_norm, solve_linear, RichardsonSystem, SolverSettings};

struct EbvSystem {
    x: Vec<Complex64>,
    /// `1/(x_j - x_k)`, zero on the diagonal.
    inv: Vec<Vec<Complex64>>,
}

impl EbvSystem {
    fn new(x: &[Complex64]) -> Self {
        let inv = x
            .iter()
            .enumerate()
            .map(|(j, a)| {
                x.iter()
                    .enumerate()
                    .map(|(k, b)| if j == k { Complex64::new(0.0, 0.0) } else { (a - b).inv() })
                    .collect()
            })
            .collect();
        Self { x: x.to_vec(), inv }
    }

    fn coupling(&self, z: &[Complex64]) -> Vec<Complex64> {
        (0..z.len())
            .map(|j| (0..z.len()).map(|k| (z[j] - z[k]) * self.inv[j][k]).sum())
            .collect()
    }

    fn residual(&self, z: &[Complex64], g: f64) -> Vec<Complex64> {
        self.coupling(z)
            .into_iter()
            .zip(z)
            .map(|(c, zj)| zj * zj - zj - g * c)
            .collect()
    }

    fn jacobian(&self, z: &[Complex64], g: f64) -> DMatrix<Complex64> {
        let l = z.len();
        DMatrix::from_fn(l, l, |j, k| {
            if j == k {
                let row: Complex64 = self.inv[j].iter().sum();
                2.0 * z[j] - 1.0 - g * row
            } else {
                g * self.inv[j][k]
            }
        })
    }

    fn newton(&self, mut z: Vec<Complex64>, g: f64, max_iterations: usize) -> Option<(Vec<Complex64>, usize)> {
        for it in 0..=max_iterations {
            let r = self.residual(&z, g);
            let scale = inf_norm(&z).max(1.0);
            if inf_norm(&r) < 1e-13 * scale {
                return Some((z, it));
            }
            if it == max_iterations {
                break;
            }
            let rhs: Vec<Complex64> = r.iter().map(|v| -v).collect();
            let d = solve_linear(self.jacobian(&z, g), &rhs)?;
            for (a, b) in z.iter_mut().zip(d) {
                *a += b;
            }
        }
        None
    }

    fn tangent(&self, z: &[Complex64], g: f64) -> Option<Vec<Complex64>> {
        // ∂F/∂G = -coupling, so J dz/dG = coupling
        solve_linear(self.jacobian(z, g), &self.coupling(z))
    }
}

/// Runs the continuation and returns recovered (unpolished) pair energies
/// together with the number of accepted steps.
pub(crate) fn solve(
    system: &RichardsonSystem,
    occupation: &[usize],
    strength: f64,
    settings: &SolverSettings,
) -> Result<(Vec<Complex64>, usize)> {
    let x = system.poles();
    let ebv = EbvSystem::new(x);
    let mut z = vec![Complex64::new(0.0, 0.0); x.len()];
    for &i in occupation {
        z[i] = Complex64::new(1.0, 0.0);
    }
    let min_step = strength * 1e-12;
    let mut h = settings.initial_step(strength);
    let mut g = 0.0;
    let mut steps = 0;
    while g < strength {
        let next = if g + h >= strength * (1.0 - 1e-14) { strength } else { g + h };
        let Some(t) = ebv.tangent(&z, g) else {
            return Err(Error::NonConvergence {
                last_good_g: g,
                target_g: strength,
                reason: "singular eigenvalue-based Jacobian".into(),
            });
        };
        let predicted: Vec<Complex64> = z.iter().zip(&t).map(|(a, d)| a + d * (next - g)).collect();
        let accepted = ebv
            .newton(predicted.clone(), next, 12)
            .filter(|(zn, _)| {
                zn.iter()
                    .zip(&predicted)
                    .all(|(a, b)| (a - b).norm() <= 0.1)
            });
        match accepted {
            Some((zn, _)) => {
                z = zn;
                g = next;
                steps += 1;
                h *= 2.0;
            }
            None => {
                h *= 0.5;
                if h < min_step {
                    return Err(Error::NonConvergence {
                        last_good_g: g,
                        target_g: strength,
                        reason: "eigenvalue-based continuation stalled".into(),
                    });
                }
            }
        }
    }
    let energies = recover_pair_energies(&ebv.x, &z, strength, occupation.len())?;
    // Σ_ν E_ν = Σ_j x_j z_j - G n (L - n + 1)
    let n = occupation.len() as f64;
    let l = x.len() as f64;
    let from_z: Complex64 =
        x.iter().zip(&z).map(|(a, b)| a * b).sum::<Complex64>() - strength * n * (l - n + 1.0);
    let from_roots: Complex64 = energies.iter().sum();
    let scale = x.iter().map(|v| v.norm()).fold(1.0, f64::max) * n;
    if (from_z - from_roots).norm() > 1e-6 * scale {
        return Err(Error::NonConvergence {
            last_good_g: strength,
            target_g: strength,
            reason: "pair energies recovered from eigenvalue-based variables are inconsistent"
                .into(),
        });
    }
    Ok((energies, steps))
}

/// Least-squares fit of the monic polynomial with `P'(x_j) = Λ_j P(x_j)`
/// (in centred, scaled coordinates), followed by its roots.
fn recover_pair_energies(
    x: &[Complex64],
    z: &[Complex64],
    strength: f64,
    n: usize,
) -> Result<Vec<Complex64>> {
    let l = x.len();
    let centre: Complex64 = x.iter().sum::<Complex64>() / l as f64;
    let scale = x.iter().map(|v| (v - centre).norm()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut a = DMatrix::<Complex64>::zeros(l, n);
    let mut b = DVector::<Complex64>::zeros(l);
    for j in 0..l {
        let u = (x[j] - centre) / scale;
        let mu = z[j] / strength * scale;
        let w = 1.0 / mu.norm().max(1.0);
        let pow = |k: usize| u.powu(k as u32);
        for k in 0..n {
            let deriv = if k == 0 { Complex64::new(0.0, 0.0) } else { k as f64 * pow(k - 1) };
            a[(j, k)] = (deriv - mu * pow(k)) * w;
        }
        b[j] = (mu * pow(n) - n as f64 * pow(n - 1)) * w;
    }
    let coeffs = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::NonConvergence {
            last_good_g: strength,
            target_g: strength,
            reason: format!("polynomial fit failed: {e}"),
        })?;
    let roots = polynomial_roots(coeffs.as_slice());
    Ok(roots.into_iter().map(|u| centre + u * scale).collect())
}

fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    // monic: z^n + Σ_{k<n} c_k z^k
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Roots of the monic polynomial `z^n + Σ_{k<n} c_k z^k` by Aberth–Ehrlich
/// iteration.
pub(crate) fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len();
    if n == 0 {
        return Vec::new();
    }
    let radius = 1.0 + coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut roots: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect();
    for _ in 0..1000 {
        let mut biggest: f64 = 0.0;
        for k in 0..n {
            let (p, dp) = horner(coeffs, roots[k]);
            if p == Complex64::new(0.0, 0.0) {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| (roots[k] - roots[j]).inv())
                .sum();
            let w = ratio / (1.0 - ratio * repulsion);
            if w.re.is_finite() && w.im.is_finite() {
                roots[k] -= w;
                biggest = biggest.max(w.norm() / roots[k].norm().max(1.0));
            }
        }
        if biggest < 1e-15 {
            break;
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (z - 1)(z + 2)(z - i) = z^3 + (1 - i) z^2 + (-2 - i) z + 2i
        let coeffs = [c(0.0, 2.0), c(-2.0, -1.0), c(1.0, -1.0)];
        let mut roots = polynomial_roots(&coeffs);
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let want = [c(-2.0, 0.0), c(0.0, 1.0), c(1.0, 0.0)];
        for (r, w) in roots.iter().zip(want) {
            assert!((r - w).norm() < 1e-12, "{r} vs {w}");
        }
    }

    #[test]
    fn two_level_ground_state() {
        let system = RichardsonSystem::new(vec![c(0.0, 0.0), c(2.0, 0.0)], 1e-9);
        let (e, _) = solve(&system, &[0], 0.5, &SolverSettings::default()).unwrap();
        assert!((e[0] - c((1.0 - 5f64.sqrt()) / 2.0, 0.0)).norm() < 1e-10);
    }
}
