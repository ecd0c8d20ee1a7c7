//! Richardson equations with continuum contributions: a real level density
//! integrated along the positive energy axis, and the complex-energy form in
//! which resonances enter as discrete poles `2ε_r - iΓ_r`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::continuation;
use crate::error::{Error, Result};
use crate::quadrature::{DiscretizedDensity, QuadratureRule, DEFAULT_NODES_PER_PANEL};
use crate::richardson::{
    validate_occupation, PairEnergies, PairSolution, RichardsonSystem, SolverSettings,
};
use crate::spectrum::{DensityKind, DensityTable, PairingProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContinuumMode {
    /// Bound levels plus `½∫ g(ε)/(2ε - E)` over a real density.
    RealContinuum,
    /// Bound levels plus resonance poles; densities dropped.
    ComplexPole,
    /// Poles plus the real background and the rotated-contour background.
    ComplexFull,
}

#[derive(Debug, Clone)]
pub struct ContinuumProblem {
    pub base: PairingProblem,
    pub quadrature: QuadratureRule,
    pub mode: ContinuumMode,
}

/// Ten times the largest `|2ε|` in the problem (levels, resonances and
/// density grids), but at least 1.
pub fn default_cutoff(problem: &PairingProblem) -> f64 {
    let tables = problem.background.iter().chain(problem.complex_background.iter());
    let scale = problem
        .real_levels()
        .map(|l| 2.0 * l.energy.abs())
        .chain(problem.resonances.iter().map(|r| 2.0 * r.position))
        .chain(tables.map(|t| 2.0 * t.upper()))
        .fold(0.0, f64::max);
    (10.0 * scale).max(1.0)
}

impl ContinuumProblem {
    /// Uses the default cutoff and `DEFAULT_NODES_PER_PANEL`.
    pub fn new(base: PairingProblem, mode: ContinuumMode) -> Result<Self> {
        Self::with_quadrature(base, mode, None, DEFAULT_NODES_PER_PANEL)
    }

    pub fn with_quadrature(
        base: PairingProblem,
        mode: ContinuumMode,
        cutoff: Option<f64>,
        nodes_per_panel: usize,
    ) -> Result<Self> {
        let cutoff = cutoff.unwrap_or_else(|| default_cutoff(&base));
        let tables: Vec<&DensityTable> = match mode {
            ContinuumMode::ComplexPole => Vec::new(),
            _ => base
                .background
                .iter()
                .chain(base.complex_background.iter())
                .collect(),
        };
        let quadrature = QuadratureRule::new(cutoff, nodes_per_panel, &tables, &base.resonances)?
            .with_principal_value(mode == ContinuumMode::RealContinuum);
        let problem = Self {
            base,
            quadrature,
            mode,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_strength(&self, strength: f64) -> Self {
        Self {
            base: self.base.with_strength(strength),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let b = &self.base;
        match self.mode {
            ContinuumMode::RealContinuum => {
                if b.background.is_none() {
                    return Err(Error::Domain("real-continuum mode needs a background density".into()));
                }
                if !b.resonances.is_empty() {
                    return Err(Error::Domain(
                        "real-continuum mode takes resonances through the density table, not as poles"
                            .into(),
                    ));
                }
                if b.complex_background.is_some() {
                    return Err(Error::Domain(
                        "a complex background needs complex-full mode".into(),
                    ));
                }
            }
            ContinuumMode::ComplexPole => {
                if b.resonances.is_empty() {
                    return Err(Error::Domain("complex-pole mode needs at least one resonance".into()));
                }
            }
            ContinuumMode::ComplexFull => {
                if b.resonances.is_empty() {
                    return Err(Error::Domain("complex-full mode needs at least one resonance".into()));
                }
                if b.background.is_none() || b.complex_background.is_none() {
                    return Err(Error::Domain(
                        "complex-full mode needs both background and complex_background".into(),
                    ));
                }
            }
        }
        if let Some(t) = &b.background {
            if t.kind() != DensityKind::Background {
                return Err(Error::Domain("background density must be real".into()));
            }
        }
        if let Some(t) = &b.complex_background {
            if t.kind() != DensityKind::ComplexBackground {
                return Err(Error::Domain(
                    "complex_background must be a complex density table".into(),
                ));
            }
        }
        Ok(())
    }

    /// Discrete pair states first (levels, then resonance poles in the
    /// complex modes); occupations index this list.
    pub fn pair_states(&self) -> Vec<Complex64> {
        self.base
            .pair_state_energies(self.mode != ContinuumMode::RealContinuum)
    }

    pub fn system(&self, collision_tolerance: f64) -> RichardsonSystem {
        let mut system = RichardsonSystem::new(self.pair_states(), collision_tolerance);
        if self.mode != ContinuumMode::ComplexPole {
            for t in self.base.background.iter().chain(&self.base.complex_background) {
                system = system.with_density(DiscretizedDensity::new(t, &self.quadrature));
            }
        }
        system
    }
}

fn residual(energies: &PairEnergies, problem: &ContinuumProblem) -> Result<Vec<Complex64>> {
    problem.validate()?;
    if energies.len() != problem.base.pairs {
        return Err(Error::Domain(format!(
            "expected {} pair energies, got {}",
            problem.base.pairs,
            energies.len()
        )));
    }
    problem
        .system(SolverSettings::default().collision_tolerance)
        .residual(energies.values(), problem.base.strength)
}

/// Residuals with a real level density.
pub fn residual_continuum(energies: &PairEnergies, problem: &ContinuumProblem) -> Result<Vec<Complex64>> {
    if problem.mode != ContinuumMode::RealContinuum {
        return Err(Error::Domain("residual_continuum needs real-continuum mode".into()));
    }
    residual(energies, problem)
}

/// Residuals in the complex-energy representation.
pub fn residual_complex(energies: &PairEnergies, problem: &ContinuumProblem) -> Result<Vec<Complex64>> {
    if problem.mode == ContinuumMode::RealContinuum {
        return Err(Error::Domain(
            "residual_complex needs complex-pole or complex-full mode".into(),
        ));
    }
    residual(energies, problem)
}

pub fn solve_continuum(
    problem: &ContinuumProblem,
    occupation: &[usize],
    settings: &SolverSettings,
) -> Result<PairSolution> {
    problem.validate()?;
    settings.validate()?;
    let system = problem.system(settings.collision_tolerance);
    validate_occupation(occupation, system.poles().len(), problem.base.pairs)?;
    let solution = continuation::solve(&system, occupation, problem.base.strength, settings)?;
    Ok(annotate(problem, &system, solution))
}

/// Warm-started variant for sweeps.
pub fn solve_continuum_from(
    problem: &ContinuumProblem,
    previous: &PairSolution,
    occupation: &[usize],
    settings: &SolverSettings,
) -> Result<PairSolution> {
    problem.validate()?;
    settings.validate()?;
    let system = problem.system(settings.collision_tolerance);
    validate_occupation(occupation, system.poles().len(), problem.base.pairs)?;
    let solution =
        continuation::solve_from(&system, previous, occupation, problem.base.strength, settings)?;
    Ok(annotate(problem, &system, solution))
}

fn annotate(problem: &ContinuumProblem, system: &RichardsonSystem, mut solution: PairSolution) -> PairSolution {
    for d in system.densities() {
        if solution.energies.values().iter().any(|e| d.on_contour(*e)) {
            solution
                .warnings
                .push("a pair energy lies on the integration contour; used the principal value".into());
            break;
        }
    }
    if problem.mode != ContinuumMode::RealContinuum && pole_quality(&solution) == 0.0 {
        solution
            .warnings
            .push("total energy is real; the resonances do not contribute a width".into());
    }
    solution
}

/// `|Im 𝓔|`: how far the pole approximation is from a stationary state.
pub fn pole_quality(solution: &PairSolution) -> f64 {
    solution.total.im.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::richardson::{ground_occupation, residual_discrete, solve_discrete};
    use crate::spectrum::Resonance;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn zero_table() -> DensityTable {
        DensityTable::real(vec![0.5, 1.0, 4.0], vec![0.0; 3]).unwrap()
    }

    #[test]
    fn zero_density_reduces_to_discrete() {
        let mut base = PairingProblem::from_energies(&[-2.0, -0.5, 0.3], 0.4, 2);
        let discrete = base.clone();
        base.background = Some(zero_table());
        let p = ContinuumProblem::new(base, ContinuumMode::RealContinuum).unwrap();
        let e = PairEnergies(vec![c(-4.7, 0.0), c(-0.9, 0.3)]);
        let a = residual_continuum(&e, &p).unwrap();
        let b = residual_discrete(&e, &discrete).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() <= 1e-14);
        }
        let occ = ground_occupation(&p.pair_states(), 2);
        let s1 = solve_continuum(&p, &occ, &SolverSettings::default()).unwrap();
        let s2 = solve_discrete(&discrete, &occ, &SolverSettings::default()).unwrap();
        assert!((s1.total - s2.total).norm() < 1e-12);
    }

    #[test]
    fn zero_strength_gives_unit_residuals() {
        let mut base = PairingProblem::from_energies(&[-1.0], 0.0, 1);
        base.resonances = vec![Resonance::new(1.0, 0.1).unwrap()];
        let p = ContinuumProblem::new(base.clone(), ContinuumMode::ComplexPole).unwrap();
        let r = residual_complex(&PairEnergies(vec![c(0.5, 0.2)]), &p).unwrap();
        assert_eq!(r, vec![c(1.0, 0.0)]);
        base.resonances.clear();
        base.background = Some(DensityTable::real(vec![0.5, 3.0], vec![1.0, 1.0]).unwrap());
        let p = ContinuumProblem::new(base, ContinuumMode::RealContinuum).unwrap();
        let r = residual_continuum(&PairEnergies(vec![c(-3.0, 0.0)]), &p).unwrap();
        assert_eq!(r, vec![c(1.0, 0.0)]);
    }

    #[test]
    fn mode_requirements() {
        let base = PairingProblem::from_energies(&[-1.0], 0.1, 1);
        assert!(ContinuumProblem::new(base.clone(), ContinuumMode::RealContinuum).is_err());
        assert!(ContinuumProblem::new(base.clone(), ContinuumMode::ComplexPole).is_err());
        let mut with_res = base.clone();
        with_res.resonances = vec![Resonance::new(1.0, 0.1).unwrap()];
        assert!(ContinuumProblem::new(with_res.clone(), ContinuumMode::ComplexFull).is_err());
        with_res.background = Some(zero_table());
        assert!(ContinuumProblem::new(with_res.clone(), ContinuumMode::RealContinuum).is_err());
        // the pole approximation ignores the tables
        assert!(ContinuumProblem::new(with_res, ContinuumMode::ComplexPole).is_ok());
    }

    #[test]
    fn narrow_resonance_matches_bound_level() {
        let mut base = PairingProblem::default().with_strength(0.1);
        base.pairs = 1;
        base.resonances = vec![Resonance::new(1.0, 1e-8).unwrap()];
        let p = ContinuumProblem::new(base, ContinuumMode::ComplexPole).unwrap();
        let s = solve_continuum(&p, &[0], &SolverSettings::default()).unwrap();
        let real = PairingProblem::from_energies(&[1.0], 0.1, 1);
        let d = solve_discrete(&real, &[0], &SolverSettings::default()).unwrap();
        assert!((s.energies.values()[0] - d.energies.values()[0]).norm() < 1e-6);
        // one pair on one state: E = 2ε - G
        assert!((d.total - c(1.9, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pole_approximation_total_has_width() {
        let mut base = PairingProblem::from_energies(&[-1.0], 0.5, 1);
        base.resonances = vec![Resonance::new(1.0, 0.1).unwrap()];
        let p = ContinuumProblem::new(base, ContinuumMode::ComplexPole).unwrap();
        let s = solve_continuum(&p, &[0], &SolverSettings::default()).unwrap();
        let r = residual_complex(&s.energies, &p).unwrap();
        assert!(r[0].norm() < 1e-12);
        // the bound pair mixes with the decaying resonance and acquires a
        // width: Im E < 0
        assert!(s.total.im < 0.0);
        assert!(pole_quality(&s) > 0.0);
    }

    #[test]
    fn default_cutoff_covers_the_problem() {
        let mut base = PairingProblem::from_energies(&[-2.0, 0.5], 0.1, 1);
        assert_eq!(default_cutoff(&base), 40.0);
        base.background = Some(DensityTable::real(vec![1.0, 7.0], vec![1.0, 1.0]).unwrap());
        assert_eq!(default_cutoff(&base), 140.0);
    }

    #[test]
    fn complex_background_breaks_conjugation_symmetry() {
        let mut base = PairingProblem::from_energies(&[-1.0], 0.3, 1);
        base.resonances = vec![Resonance::new(2.0, 0.2).unwrap()];
        base.background = Some(DensityTable::real(vec![0.2, 6.0], vec![0.1, 0.1]).unwrap());
        base.complex_background = Some(
            DensityTable::complex(vec![0.2, 6.0], vec![c(0.05, -0.02), c(0.05, -0.02)]).unwrap(),
        );
        let p = ContinuumProblem::new(base.clone(), ContinuumMode::ComplexFull).unwrap();
        assert!(!p.system(1e-9).is_real());
        let s = solve_continuum(&p, &[0], &SolverSettings::default()).unwrap();
        assert!(residual_complex(&s.energies, &p).unwrap()[0].norm() < 1e-12);
        let pole = ContinuumProblem::new(base, ContinuumMode::ComplexPole).unwrap();
        let sp = solve_continuum(&pole, &[0], &SolverSettings::default()).unwrap();
        // the background terms shift the answer
        assert!((s.total - sp.total).norm() > 1e-4);
    }
}
