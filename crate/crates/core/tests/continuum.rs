use num_complex::Complex64;
use proptest::prelude::*;
use rpsolve::continuum::{
    pole_quality, residual_complex, residual_continuum, solve_continuum, ContinuumMode,
    ContinuumProblem,
};
use rpsolve::quadrature::{integral_term, QuadratureRule};
use rpsolve::richardson::{ground_occupation, residual_discrete, solve_discrete};
use rpsolve::spectrum::{box_density_table, box_spectrum, histogram_density, DensityTable};
use rpsolve::{Level, PairEnergies, PairingProblem, Resonance, SolverSettings};

const MASS_SCALE: f64 = 20.736;

fn bound() -> Vec<Level> {
    vec![Level::new(-2.0, "b0"), Level::new(-0.5, "b1")]
}

fn real(values: &[f64]) -> PairEnergies {
    PairEnergies(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
}

fn box_problem(radius: f64, count: usize, g: f64) -> PairingProblem {
    let mut p = PairingProblem::discrete(bound(), g, 2);
    p.box_levels = box_spectrum(radius, count, MASS_SCALE).unwrap();
    p
}

/// Relative gap between the explicit box and its smooth density.
fn box_gap(radius: f64, count: usize) -> f64 {
    let disc = box_problem(radius, count, 0.3);
    let occ = ground_occupation(&disc.pair_state_energies(false), 2);
    let sd = solve_discrete(&disc, &occ, &SolverSettings::default()).unwrap();
    let mut cont = PairingProblem::discrete(bound(), 0.3, 2);
    cont.background = Some(box_density_table(radius, count, MASS_SCALE, 100).unwrap());
    let p = ContinuumProblem::new(cont, ContinuumMode::RealContinuum).unwrap();
    let sc = solve_continuum(&p, &[0, 1], &SolverSettings::default()).unwrap();
    assert!(sc.total.im.abs() < 1e-10);
    (sd.total - sc.total).norm() / sc.total.norm()
}

#[test]
fn box_converges_to_its_density() {
    let gaps: Vec<f64> = [(10.0, 10), (20.0, 20), (40.0, 40)]
        .iter()
        .map(|&(r, n)| box_gap(r, n))
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(gaps[2] < 1e-2, "{gaps:?}");
}

#[test]
fn histogram_of_box_reproduces_residuals() {
    // weak coupling keeps the smearing error of the Gaussians small
    let disc = box_problem(10.0, 20, 0.1);
    let mut cont = PairingProblem::discrete(bound(), 0.1, 2);
    cont.background = Some(histogram_density(&disc.box_levels, 6).unwrap());
    let p = ContinuumProblem::new(cont, ContinuumMode::RealContinuum).unwrap();
    let e = real(&[-5.0, -2.0]);
    let a = residual_continuum(&e, &p).unwrap();
    let b = residual_discrete(&e, &disc).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).norm() < 1e-3, "{x} vs {y}");
    }
}

#[test]
fn histogram_of_box_reproduces_total() {
    let disc = box_problem(10.0, 20, 0.3);
    let sd = solve_discrete(&disc, &[0, 1], &SolverSettings::default()).unwrap();
    let mut cont = PairingProblem::discrete(bound(), 0.3, 2);
    cont.background = Some(histogram_density(&disc.box_levels, 6).unwrap());
    let p = ContinuumProblem::new(cont, ContinuumMode::RealContinuum).unwrap();
    let sc = solve_continuum(&p, &[0, 1], &SolverSettings::default()).unwrap();
    assert!((sd.total - sc.total).norm() / sd.total.norm() < 1e-2);
}

fn single_resonance(width: f64) -> ContinuumProblem {
    let mut base = PairingProblem::default().with_strength(0.1);
    base.pairs = 1;
    base.resonances = vec![Resonance::new(1.0, width).unwrap()];
    ContinuumProblem::new(base, ContinuumMode::ComplexPole).unwrap()
}

#[test]
fn pole_approximation_is_continuous_in_width() {
    // one pair on one state: E = 2ε - G exactly
    let reference = Complex64::new(1.9, 0.0);
    let d = solve_discrete(
        &PairingProblem::from_energies(&[1.0], 0.1, 1),
        &[0],
        &SolverSettings::default(),
    )
    .unwrap();
    assert!((d.total - reference).norm() < 1e-12);

    let narrow = solve_continuum(&single_resonance(1e-8), &[0], &SolverSettings::default()).unwrap();
    assert!((narrow.energies.values()[0] - d.energies.values()[0]).norm() < 1e-6);

    let wide = solve_continuum(&single_resonance(0.2), &[0], &SolverSettings::default()).unwrap();
    // single pole: E = 2ε_r - iΓ - G
    assert!((wide.total - Complex64::new(1.9, -0.2)).norm() < 1e-10, "{}", wide.total);
    assert!(pole_quality(&wide) > 0.0);
}

#[test]
fn constant_density_integral_is_a_log() {
    let grid: Vec<f64> = (0..11).map(|i| 1e-12 + i as f64).collect();
    let t = DensityTable::from_fn(grid, |_| 1.0).unwrap();
    let rule = QuadratureRule::new(t.upper(), 64, &[&t], &[]).unwrap();
    for e in [-2.0, -0.3, -7.5] {
        let got = integral_term(&t, &rule, Complex64::new(e, 0.0)).unwrap();
        // ∫_a^b dε / (2ε - E) = ½ ln((2b - E) / (2a - E))
        let want = 0.5 * ((2.0 * t.upper() - e) / (2.0 * t.lower() - e)).ln();
        assert!((got.re - want).abs() < 1e-6, "E={e}: {got} vs {want}");
    }
}

#[test]
fn quadrature_converges_under_node_doubling() {
    let t = box_density_table(20.0, 20, MASS_SCALE, 100).unwrap();
    let rule = QuadratureRule::new(200.0, 32, &[&t], &[]).unwrap();
    for e in [Complex64::new(-3.0, 0.0), Complex64::new(2.0, -0.5)] {
        let a = integral_term(&t, &rule.with_nodes_per_panel(64), e).unwrap();
        let b = integral_term(&t, &rule.with_nodes_per_panel(128), e).unwrap();
        assert!((a - b).norm() / b.norm() < 1e-9, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn empty_densities_reduce_to_discrete(
        levels in prop::collection::vec(-3.0f64..3.0, 2..6),
        g in 0.0f64..1.0,
        z in prop::collection::vec((-8.0f64..8.0, -2.0f64..2.0), 1..3),
    ) {
        let n = z.len().min(levels.len());
        let discrete = PairingProblem::from_energies(&levels, g, n);
        let mut base = discrete.clone();
        base.background = Some(DensityTable::real(vec![0.5, 2.0, 9.0], vec![0.0; 3]).unwrap());
        let p = ContinuumProblem::new(base, ContinuumMode::RealContinuum).unwrap();
        let e = PairEnergies(z[..n].iter().map(|&(a, b)| Complex64::new(a, b)).collect());
        let poles = discrete.pair_state_energies(false);
        prop_assume!(e.values().iter().all(|x| poles.iter().all(|y| (x - y).norm() > 1e-3)));
        prop_assume!(n < 2 || (e.values()[0] - e.values()[1]).norm() > 1e-3);
        let a = residual_continuum(&e, &p).unwrap();
        let b = residual_discrete(&e, &discrete).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).norm() <= 1e-14, "{x} vs {y}");
        }
    }

    #[test]
    fn pole_mode_ignores_tables(pos in 0.2f64..3.0, width in 1e-3f64..0.5, g in 0.01f64..0.6) {
        let mut base = PairingProblem::from_energies(&[-1.0], g, 1);
        base.resonances = vec![Resonance::new(pos, width).unwrap()];
        let bare = ContinuumProblem::new(base.clone(), ContinuumMode::ComplexPole).unwrap();
        base.background = Some(DensityTable::real(vec![0.5, 4.0], vec![0.3, 0.3]).unwrap());
        let dressed = ContinuumProblem::new(base, ContinuumMode::ComplexPole).unwrap();
        let e = PairEnergies(vec![Complex64::new(-2.5, 0.1)]);
        prop_assert_eq!(residual_complex(&e, &bare).unwrap(), residual_complex(&e, &dressed).unwrap());
    }
}
