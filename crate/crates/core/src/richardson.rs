//! Richardson's equations for discrete pair states, their Jacobian, and the
//! occupation-seeded solver.
//!
//! For pair energies `E_1..E_n` the residual of equation `ν` is
//!
//! ```text
//! r_ν = 1 - G Σ_j 1/(2ε_j - E_ν) - G Σ_d ½∫ g_d(ε)/(2ε - E_ν) dε - 2G Σ_{ν'≠ν} 1/(E_ν - E_ν')
//! ```
//!
//! where `j` runs over discrete pair states (one per doubly degenerate level
//! or resonance pole) and `d` over level-density tables, which count fermion
//! states. With no tables this is the box-spectrum form; the exact
//! eigenenergy is the plain sum of the `E_ν`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::continuation;
use crate::error::{Error, Result};
use crate::quadrature::DiscretizedDensity;
use crate::spectrum::{DensityKind, PairingProblem};

pub type CMatrix = DMatrix<Complex64>;

/// Row `ν` holds one denominator per pair state or per pair energy.
type Denominators = Vec<Vec<Complex64>>;

/// Ordered pair energies `E_ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairEnergies(pub Vec<Complex64>);

impl PairEnergies {
    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn real(values: &[f64]) -> Self {
        Self(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }
}

impl From<Vec<Complex64>> for PairEnergies {
    fn from(v: Vec<Complex64>) -> Self {
        Self(v)
    }
}

/// How the accepted pair energies were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// The unperturbed `G = 0` configuration.
    Unperturbed,
    /// Newton continuation in the pair energies.
    Continuation,
    /// Continuation in eigenvalue-based variables, then Newton polish.
    EigenvalueBased,
}

/// A converged solution of the Richardson equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSolution {
    pub energies: PairEnergies,
    pub residual_norm: f64,
    pub total: Complex64,
    pub iterations: usize,
    pub continuation_steps: usize,
    pub promotions: usize,
    pub method: SolveMethod,
    pub strength: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Convergence threshold on the residual ∞-norm.
    pub newton_tolerance: f64,
    pub max_newton_iterations: usize,
    /// First continuation step; `None` means `G/100`.
    pub initial_g_step: Option<f64>,
    /// Smallest continuation step before giving up; `None` means `G·1e-8`.
    pub min_g_step: Option<f64>,
    pub collision_tolerance: f64,
    /// Extra complex perturbations added to the `G→0` seeds, one per pair.
    pub seed_offsets: Option<Vec<Complex64>>,
    /// Fall back to eigenvalue-based continuation when the pair-energy
    /// continuation stalls (discrete pole spectra only).
    pub allow_fallback: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            newton_tolerance: 1e-12,
            max_newton_iterations: 50,
            initial_g_step: None,
            min_g_step: None,
            collision_tolerance: 1e-9,
            seed_offsets: None,
            allow_fallback: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive, got {v}")))
            }
        };
        positive("newton_tolerance", self.newton_tolerance)?;
        positive("collision_tolerance", self.collision_tolerance)?;
        if self.max_newton_iterations == 0 {
            return Err(Error::Domain("max_newton_iterations must be positive".into()));
        }
        if let Some(v) = self.initial_g_step {
            positive("initial_g_step", v)?;
        }
        if let Some(v) = self.min_g_step {
            positive("min_g_step", v)?;
        }
        if let (Some(init), Some(min)) = (self.initial_g_step, self.min_g_step) {
            if min > init {
                return Err(Error::Domain(format!(
                    "min_g_step {min} exceeds initial_g_step {init}"
                )));
            }
        }
        Ok(())
    }

    pub fn initial_step(&self, strength: f64) -> f64 {
        self.initial_g_step.unwrap_or(strength / 100.0).min(strength)
    }

    pub fn min_step(&self, strength: f64) -> f64 {
        self.min_g_step.unwrap_or(strength * 1e-8)
    }
}

/// Pair states and density terms entering one set of Richardson equations.
#[derive(Debug, Clone)]
pub struct RichardsonSystem {
    poles: Vec<Complex64>,
    densities: Vec<DiscretizedDensity>,
    collision_tolerance: f64,
}

impl RichardsonSystem {
    /// `poles` are the `2ε_j` of the discrete pair states.
    pub fn new(poles: Vec<Complex64>, collision_tolerance: f64) -> Self {
        Self {
            poles,
            densities: Vec::new(),
            collision_tolerance,
        }
    }

    pub fn with_density(mut self, density: DiscretizedDensity) -> Self {
        self.densities.push(density);
        self
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn densities(&self) -> &[DiscretizedDensity] {
        &self.densities
    }

    pub fn collision_tolerance(&self) -> f64 {
        self.collision_tolerance
    }

    /// Real pair states and no complex densities: roots come in conjugate
    /// pairs.
    pub fn is_real(&self) -> bool {
        self.poles.iter().all(|p| p.im == 0.0)
            && self
                .densities
                .iter()
                .all(|d| d.table().kind() == DensityKind::Background)
    }

    /// Pure pole spectrum with pairwise distinct pair states.
    pub fn has_distinct_poles_only(&self) -> bool {
        if !self.densities.is_empty() {
            return false;
        }
        let scale = self.poles.iter().map(|p| p.norm()).fold(1.0, f64::max);
        self.poles.iter().enumerate().all(|(i, a)| {
            self.poles[i + 1..]
                .iter()
                .all(|b| (a - b).norm() > 1e-12 * scale)
        })
    }

    fn check_admissible(&self, energies: &[Complex64]) -> Result<()> {
        for (nu, e) in energies.iter().enumerate() {
            if !(e.re.is_finite() && e.im.is_finite()) {
                return Err(Error::Singularity {
                    what: format!("E[{nu}] is not finite"),
                    distance: f64::NAN,
                });
            }
            for (j, x) in self.poles.iter().enumerate() {
                let d = (x - e).norm();
                if d < self.collision_tolerance {
                    return Err(Error::Singularity {
                        what: format!("E[{nu}] = {e} hits pair state {j} (2ε = {x})"),
                        distance: d,
                    });
                }
            }
            for (mu, f) in energies.iter().enumerate().skip(nu + 1) {
                let d = (e - f).norm();
                if d < self.collision_tolerance {
                    return Err(Error::Singularity {
                        what: format!("E[{nu}] and E[{mu}] coincide near {e}"),
                        distance: d,
                    });
                }
            }
        }
        Ok(())
    }

    /// `Σ_j 1/(2ε_j - E) + ½ Σ_d ∫ g_d/(2ε - E)`.
    fn single_sum(&self, e: Complex64) -> Result<Complex64> {
        let mut s: Complex64 = self.poles.iter().map(|x| (x - e).inv()).sum();
        for d in &self.densities {
            s += 0.5 * d.integral(e)?;
        }
        Ok(s)
    }

    fn single_sum_derivative(&self, e: Complex64) -> Result<Complex64> {
        let mut s: Complex64 = self
            .poles
            .iter()
            .map(|x| {
                let d = x - e;
                (d * d).inv()
            })
            .sum();
        for d in &self.densities {
            s += 0.5 * d.derivative(e)?;
        }
        Ok(s)
    }

    pub fn residual(&self, energies: &[Complex64], strength: f64) -> Result<Vec<Complex64>> {
        self.check_admissible(energies)?;
        let g = strength;
        energies
            .iter()
            .enumerate()
            .map(|(nu, &e)| {
                let pair: Complex64 = energies
                    .iter()
                    .enumerate()
                    .filter(|(mu, _)| *mu != nu)
                    .map(|(_, f)| (e - f).inv())
                    .sum();
                Ok(1.0 - g * self.single_sum(e)? - 2.0 * g * pair)
            })
            .collect()
    }

    /// Size of the rounding noise in [`residual`](Self::residual): every
    /// term `G/(a - b)` carries a relative error of a few ulps of
    /// `(|a| + |b|)/|a - b|`. Near a pair state at weak coupling this floor
    /// exceeds any fixed absolute tolerance.
    pub fn residual_floor(&self, energies: &[Complex64], strength: f64) -> f64 {
        let (poles, pairs) = self.floor_parts(energies, strength);
        poles.max(pairs)
    }

    /// The floor split by origin: `(pair-state terms, pair-pair terms)`,
    /// each maximised over the equations.
    pub(crate) fn floor_parts(&self, energies: &[Complex64], strength: f64) -> (f64, f64) {
        let g = strength;
        let ulps = 4.0 * f64::EPSILON;
        energies
            .iter()
            .enumerate()
            .map(|(nu, e)| {
                let poles: f64 = self
                    .poles
                    .iter()
                    .map(|x| g * (x.norm() + e.norm()) / (x - e).norm_sqr())
                    .sum();
                let pairs: f64 = energies
                    .iter()
                    .enumerate()
                    .filter(|(mu, _)| *mu != nu)
                    .map(|(_, f)| 2.0 * g * (e.norm() + f.norm()) / (e - f).norm_sqr())
                    .sum();
                (ulps * (1.0 + poles + pairs), ulps * (1.0 + pairs))
            })
            .fold((0.0, 0.0), |(a, b), (c, d)| (f64::max(a, c), f64::max(b, d)))
    }

    pub fn jacobian(&self, energies: &[Complex64], strength: f64) -> Result<CMatrix> {
        self.check_admissible(energies)?;
        let n = energies.len();
        let g = strength;
        let mut jac = CMatrix::zeros(n, n);
        for nu in 0..n {
            let mut diag = -g * self.single_sum_derivative(energies[nu])?;
            for mu in 0..n {
                if mu == nu {
                    continue;
                }
                let d = energies[nu] - energies[mu];
                let t = 2.0 * g / (d * d);
                diag += t;
                jac[(nu, mu)] = -t;
            }
            jac[(nu, nu)] = diag;
        }
        Ok(jac)
    }

    /// Denominators `2ε_j - E_ν` and `E_ν - E_μ` at `E_ν = a_ν + G u_ν`, where
    /// `a_ν` is the pair state with index `anchors[ν]`. Offsets between pair
    /// states are exact, so nothing cancels as `G → 0` (where `E_ν - a_ν`
    /// formed directly would lose all its digits).
    fn scaled_denominators(
        &self,
        anchors: &[usize],
        u: &[Complex64],
        g: f64,
    ) -> Result<(Denominators, Denominators)> {
        let tol = self.collision_tolerance;
        let mut to_poles = Vec::with_capacity(u.len());
        let mut to_pairs = Vec::with_capacity(u.len());
        for (nu, (&a, &w)) in anchors.iter().zip(u).enumerate() {
            if !(w.re.is_finite() && w.im.is_finite()) {
                return Err(Error::Singularity {
                    what: format!("u[{nu}] is not finite"),
                    distance: f64::NAN,
                });
            }
            let anchor = self.poles[a];
            let row: Vec<Complex64> = self
                .poles
                .iter()
                .map(|x| {
                    let offset = x - anchor;
                    if offset == Complex64::new(0.0, 0.0) {
                        -g * w
                    } else {
                        offset - g * w
                    }
                })
                .collect();
            for (j, d) in row.iter().enumerate() {
                let scale = if self.poles[j] == anchor { g } else { 1.0 };
                if d.norm() < tol * scale {
                    return Err(Error::Singularity {
                        what: format!("E[{nu}] hits pair state {j}"),
                        distance: d.norm(),
                    });
                }
            }
            to_poles.push(row);
            let pairs: Vec<Complex64> = anchors
                .iter()
                .zip(u)
                .map(|(&b, &v)| (anchor - self.poles[b]) + g * (w - v))
                .collect();
            for (mu, d) in pairs.iter().enumerate() {
                let scale = if self.poles[anchors[mu]] == anchor { g } else { 1.0 };
                if mu != nu && d.norm() < tol * scale {
                    return Err(Error::Singularity {
                        what: format!("E[{nu}] and E[{mu}] coincide"),
                        distance: d.norm(),
                    });
                }
            }
            to_pairs.push(pairs);
        }
        Ok((to_poles, to_pairs))
    }

    /// [`residual`](Self::residual) in the scaled variables
    /// `u_ν = (E_ν - a_ν)/G`; see `scaled_denominators`.
    pub(crate) fn scaled_residual(&self, anchors: &[usize], u: &[Complex64], strength: f64) -> Result<Vec<Complex64>> {
        let g = strength;
        let (to_poles, to_pairs) = self.scaled_denominators(anchors, u, g)?;
        (0..u.len())
            .map(|nu| {
                let e = self.poles[anchors[nu]] + g * u[nu];
                let mut r = Complex64::new(1.0, 0.0);
                for d in &to_poles[nu] {
                    r -= g / d;
                }
                for dens in &self.densities {
                    r -= 0.5 * g * dens.integral(e)?;
                }
                for (mu, d) in to_pairs[nu].iter().enumerate() {
                    if mu != nu {
                        r -= 2.0 * g / d;
                    }
                }
                Ok(r)
            })
            .collect()
    }

    /// `∂r_ν/∂u_μ` for [`scaled_residual`](Self::scaled_residual).
    pub(crate) fn scaled_jacobian(&self, anchors: &[usize], u: &[Complex64], strength: f64) -> Result<CMatrix> {
        let g = strength;
        let (to_poles, to_pairs) = self.scaled_denominators(anchors, u, g)?;
        let n = u.len();
        let mut jac = CMatrix::zeros(n, n);
        for nu in 0..n {
            let e = self.poles[anchors[nu]] + g * u[nu];
            let mut diag: Complex64 = to_poles[nu].iter().map(|d| -(g / d) * (g / d)).sum();
            for dens in &self.densities {
                diag -= 0.5 * g * g * dens.derivative(e)?;
            }
            for mu in 0..n {
                if mu == nu {
                    continue;
                }
                let q = g / to_pairs[nu][mu];
                let t = 2.0 * q * q;
                diag += t;
                jac[(nu, mu)] = -t;
            }
            jac[(nu, nu)] = diag;
        }
        Ok(jac)
    }
}

pub fn inf_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn discrete_system(problem: &PairingProblem, collision_tolerance: f64) -> Result<RichardsonSystem> {
    if problem.has_densities() || !problem.resonances.is_empty() {
        return Err(Error::Domain(
            "discrete Richardson equations take real levels only; use the continuum or complex modes"
                .into(),
        ));
    }
    Ok(RichardsonSystem::new(
        problem.pair_state_energies(false),
        collision_tolerance,
    ))
}

fn check_len(energies: &PairEnergies, problem: &PairingProblem) -> Result<()> {
    if energies.len() != problem.pairs {
        return Err(Error::Domain(format!(
            "expected {} pair energies, got {}",
            problem.pairs,
            energies.len()
        )));
    }
    Ok(())
}

/// Residuals of the box-spectrum Richardson equations.
pub fn residual_discrete(energies: &PairEnergies, problem: &PairingProblem) -> Result<Vec<Complex64>> {
    check_len(energies, problem)?;
    discrete_system(problem, SolverSettings::default().collision_tolerance)?
        .residual(energies.values(), problem.strength)
}

/// Analytic Jacobian `∂r_ν/∂E_μ` of [`residual_discrete`].
pub fn jacobian_discrete(energies: &PairEnergies, problem: &PairingProblem) -> Result<CMatrix> {
    check_len(energies, problem)?;
    discrete_system(problem, SolverSettings::default().collision_tolerance)?
        .jacobian(energies.values(), problem.strength)
}

/// `𝓔_n = Σ_ν E_ν`.
pub fn total_energy(energies: &PairEnergies) -> Complex64 {
    energies.values().iter().sum()
}

pub fn validate_occupation(occupation: &[usize], states: usize, pairs: usize) -> Result<()> {
    if occupation.len() != pairs {
        return Err(Error::Domain(format!(
            "occupation lists {} pair states but the problem has {pairs} pairs",
            occupation.len()
        )));
    }
    if pairs > states {
        return Err(Error::Domain(format!(
            "{pairs} pairs do not fit into {states} pair states"
        )));
    }
    let mut seen = vec![false; states];
    for &i in occupation {
        if i >= states {
            return Err(Error::Domain(format!(
                "occupation index {i} out of range (0..{states})"
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Domain(format!("occupation index {i} repeated")));
        }
    }
    Ok(())
}

/// Lowest `pairs` pair states by real part of `2ε`, ties by index.
pub fn ground_occupation(states: &[Complex64], pairs: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..states.len()).collect();
    idx.sort_by(|&a, &b| states[a].re.total_cmp(&states[b].re).then(a.cmp(&b)));
    idx.truncate(pairs);
    idx.sort_unstable();
    idx
}

/// `G → 0` seeds `2ε_j - g₀` for the given pair states.
///
/// Occupied states sharing the same `2ε` receive alternating imaginary
/// offsets `+i g₀/4, -i g₀/4, +i g₀/2, -i g₀/2, ...` so the seeds stay
/// distinct.
pub fn seed_from_states(states: &[Complex64], occupation: &[usize], g0: f64) -> Result<PairEnergies> {
    validate_occupation(occupation, states.len(), occupation.len())?;
    let mut counts: HashMap<(u64, u64), usize> = HashMap::new();
    let key = |z: Complex64| (z.re.to_bits(), z.im.to_bits());
    for &i in occupation {
        *counts.entry(key(states[i])).or_default() += 1;
    }
    let mut used: HashMap<(u64, u64), usize> = HashMap::new();
    let seeds = occupation
        .iter()
        .map(|&i| {
            let x = states[i];
            let mut e = x - g0;
            if counts[&key(x)] > 1 {
                let k = used.entry(key(x)).or_default();
                let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
                let mag = (*k / 2 + 1) as f64 * 0.25 * g0;
                e += Complex64::new(0.0, sign * mag);
                *k += 1;
            }
            e
        })
        .collect();
    Ok(PairEnergies(seeds))
}

/// Seeds for a problem's discrete pair states (real levels, then resonance
/// poles when present).
pub fn seed_g0(problem: &PairingProblem, occupation: &[usize], g0: f64) -> Result<PairEnergies> {
    validate_occupation(
        occupation,
        problem.pair_state_energies(true).len(),
        problem.pairs,
    )?;
    seed_from_states(&problem.pair_state_energies(true), occupation, g0)
}

/// Solves the box-spectrum equations for the branch that starts from the
/// given `G = 0` occupation.
pub fn solve_discrete(
    problem: &PairingProblem,
    occupation: &[usize],
    settings: &SolverSettings,
) -> Result<PairSolution> {
    problem.validate()?;
    settings.validate()?;
    let system = discrete_system(problem, settings.collision_tolerance)?;
    validate_occupation(occupation, system.poles().len(), problem.pairs)?;
    continuation::solve(&system, occupation, problem.strength, settings)
}

/// Sorts by real part (then imaginary part) and, for real spectra, makes
/// conjugate partners exact conjugates and near-real energies exactly real.
/// Returns `false` if some complex energy has no conjugate partner within
/// `tol`.
pub fn symmetrize_conjugates(energies: &mut [Complex64], tol: f64) -> bool {
    let n = energies.len();
    let mut closed = true;
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let e = energies[i];
        let scale = e.norm().max(1.0);
        if e.im.abs() <= tol * scale {
            energies[i] = Complex64::new(e.re, 0.0);
            done[i] = true;
            continue;
        }
        let partner = (0..n)
            .filter(|&j| j != i && !done[j])
            .min_by(|&a, &b| {
                (energies[a] - e.conj())
                    .norm()
                    .total_cmp(&(energies[b] - e.conj()).norm())
            });
        match partner {
            Some(j) if (energies[j] - e.conj()).norm() <= tol * scale => {
                let avg = 0.5 * (e + energies[j].conj());
                let upper = Complex64::new(avg.re, avg.im.abs());
                energies[i] = upper;
                energies[j] = upper.conj();
                done[i] = true;
                done[j] = true;
            }
            _ => {
                closed = false;
                done[i] = true;
            }
        }
    }
    sort_energies(energies);
    closed
}

/// Ascending real part; conjugate partners adjacent with `-Im` first.
pub fn sort_energies(energies: &mut [Complex64]) {
    energies.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Whether the multiset is closed under conjugation within `tol`.
pub fn is_conjugation_closed(energies: &[Complex64], tol: f64) -> bool {
    let mut used = vec![false; energies.len()];
    energies.iter().all(|e| {
        let partner = (0..energies.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                (energies[a] - e.conj())
                    .norm()
                    .total_cmp(&(energies[b] - e.conj()).norm())
            });
        match partner {
            Some(j) if (energies[j] - e.conj()).norm() <= tol => {
                used[j] = true;
                true
            }
            _ => false,
        }
    })
}

pub(crate) fn solve_linear(jac: CMatrix, rhs: &[Complex64]) -> Option<Vec<Complex64>> {
    let b = DVector::from_column_slice(rhs);
    let x = jac.lu().solve(&b)?;
    x.iter()
        .all(|z| z.re.is_finite() && z.im.is_finite())
        .then(|| x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_level() -> PairingProblem {
        // 2ε = {0, 2}
        PairingProblem::from_energies(&[0.0, 1.0], 0.5, 1)
    }

    #[test]
    fn residual_vanishes_at_quadratic_root() {
        let e = PairEnergies::real(&[(1.0 - 5f64.sqrt()) / 2.0]);
        let r = residual_discrete(&e, &two_level()).unwrap();
        assert!(r[0].norm() < 1e-12);
    }

    #[test]
    fn residual_direct_evaluation() {
        let r = residual_discrete(&PairEnergies::real(&[-1.0]), &two_level()).unwrap();
        assert!((r[0] - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn residual_is_one_without_interaction() {
        let p = PairingProblem::from_energies(&[-1.0, 0.3, 2.0, 2.5], 0.0, 3);
        let e = PairEnergies(vec![c(0.1, 0.2), c(-3.0, 0.0), c(7.0, -1.0)]);
        for r in residual_discrete(&e, &p).unwrap() {
            assert_eq!(r, c(1.0, 0.0));
        }
        let jac = jacobian_discrete(&e, &p).unwrap();
        assert!(jac.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn pole_hits_are_reported() {
        let err = residual_discrete(&PairEnergies::real(&[2.0]), &two_level()).unwrap_err();
        assert!(matches!(err, Error::Singularity { .. }), "{err}");
        let p = PairingProblem::from_energies(&[0.0, 1.0, 2.0], 0.5, 2);
        let err = residual_discrete(&PairEnergies::real(&[-1.0, -1.0]), &p).unwrap_err();
        assert!(err.to_string().contains("E[0] and E[1]"), "{err}");
    }

    #[test]
    fn single_pair_jacobian() {
        let jac = jacobian_discrete(&PairEnergies::real(&[-1.0]), &two_level()).unwrap();
        assert_eq!(jac.shape(), (1, 1));
        assert!((jac[(0, 0)].re + 0.5556).abs() < 1e-4);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let l = rng.gen_range(2..8);
            let n = rng.gen_range(1..=l.min(4));
            let eps: Vec<f64> = (0..l).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = PairingProblem::from_energies(&eps, rng.gen_range(0.05..1.0), n);
            let e: Vec<Complex64> = (0..n)
                .map(|_| c(rng.gen_range(-6.0..6.0), rng.gen_range(0.2..1.5)))
                .collect();
            let jac = jacobian_discrete(&PairEnergies(e.clone()), &p).unwrap();
            let h = 1e-6;
            for col in 0..n {
                let mut up = e.clone();
                let mut dn = e.clone();
                up[col] += h;
                dn[col] -= h;
                let ru = residual_discrete(&PairEnergies(up), &p).unwrap();
                let rd = residual_discrete(&PairEnergies(dn), &p).unwrap();
                for row in 0..n {
                    let fd = (ru[row] - rd[row]) / (2.0 * h);
                    let an = jac[(row, col)];
                    assert!((fd - an).norm() <= 1e-6 * an.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn scaled_form_matches_direct_form() {
        let system = RichardsonSystem::new(vec![c(-1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(3.0, 0.0)], 1e-9);
        let anchors = [0, 1, 2];
        let u = [c(-1.2, 0.0), c(-0.8, 0.4), c(-0.8, -0.4)];
        let g = 0.3;
        let e: Vec<Complex64> = anchors.iter().zip(&u).map(|(&a, w)| system.poles()[a] + g * w).collect();
        let direct = system.residual(&e, g).unwrap();
        let scaled = system.scaled_residual(&anchors, &u, g).unwrap();
        for (a, b) in direct.iter().zip(&scaled) {
            assert!((a - b).norm() < 1e-13, "{a} vs {b}");
        }
        // chain rule: ∂r/∂u = G ∂r/∂E
        let jd = system.jacobian(&e, g).unwrap() * c(g, 0.0);
        let js = system.scaled_jacobian(&anchors, &u, g).unwrap();
        assert!((jd - js).norm() < 1e-12);
    }

    #[test]
    fn scaled_form_is_exact_at_tiny_strength() {
        // one pair next to 2ε = 7: r = 1 + 1/u - G/(-9 - Gu) to all digits
        let system = RichardsonSystem::new(vec![c(-2.0, 0.0), c(7.0, 0.0)], 1e-9);
        let (g, u) = (1e-12, c(-1.0, 0.0));
        let r = system.scaled_residual(&[1], &[u], g).unwrap()[0];
        assert!((r - (1.0 + 1.0 / u - g / (-9.0 - g * u))).norm() < 1e-15);
    }

    #[test]
    fn seeds_follow_formula() {
        let seed = seed_g0(&two_level(), &[0], 0.005).unwrap();
        assert_eq!(seed.values(), &[c(-0.005, 0.0)]);
        let degenerate = PairingProblem::from_energies(&[1.0, 1.0], 0.4, 2);
        let seed = seed_g0(&degenerate, &[0, 1], 0.004).unwrap();
        assert!((seed.values()[0] - c(2.0 - 0.004, 0.001)).norm() < 1e-15);
        assert!((seed.values()[1] - c(2.0 - 0.004, -0.001)).norm() < 1e-15);
        assert!(seed_g0(&degenerate, &[1, 1], 0.004).is_err());
        assert!(seed_g0(&degenerate, &[0, 2], 0.004).is_err());
    }

    #[test]
    fn ground_occupation_takes_lowest_levels() {
        let states = [c(4.0, 0.0), c(-2.0, 0.0), c(1.0, -0.1), c(-2.0, 0.0)];
        assert_eq!(ground_occupation(&states, 2), vec![1, 3]);
        assert_eq!(ground_occupation(&states, 3), vec![1, 2, 3]);
    }

    #[test]
    fn total_energy_sums() {
        assert_eq!(total_energy(&PairEnergies(vec![])), c(0.0, 0.0));
        assert!((total_energy(&PairEnergies::real(&[-0.618, 2.618])) - c(2.0, 0.0)).norm() < 1e-15);
        let mut e = vec![c(1.3, 0.7 + 1e-13), c(1.3 + 1e-13, -0.7)];
        assert!(symmetrize_conjugates(&mut e, 1e-9));
        let t = total_energy(&PairEnergies(e));
        assert_eq!(t.im, 0.0);
        assert!((t.re - 2.6).abs() < 1e-12);
    }

    #[test]
    fn conjugation_closure_check() {
        assert!(is_conjugation_closed(&[c(1.0, 2.0), c(0.5, 0.0), c(1.0, -2.0)], 1e-12));
        assert!(!is_conjugation_closed(&[c(1.0, 2.0), c(1.0, 2.0)], 1e-12));
        let mut lone = vec![c(1.0, 1.0), c(3.0, 0.0)];
        assert!(!symmetrize_conjugates(&mut lone, 1e-9));
    }

    #[test]
    fn settings_validation() {
        assert!(SolverSettings::default().validate().is_ok());
        let bad = SolverSettings {
            initial_g_step: Some(1e-3),
            min_g_step: Some(1e-2),
            ..SolverSettings::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverSettings {
            newton_tolerance: 0.0,
            ..SolverSettings::default()
        };
        assert!(bad.validate().is_err());
    }
}
