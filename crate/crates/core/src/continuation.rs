//! Homotopy continuation of Richardson solutions in the pairing strength.
//!
//! Branches start from the `G → 0` configuration selected by an occupation
//! and are carried to the target strength with a tangent predictor and a
//! damped Newton corrector. When two real pair energies merge at a level the
//! branch continues as a complex-conjugate pair.

use num_complex::Complex64;

use crate::ebv;
use crate::error::{Error, Result};
use crate::richardson::{
    inf_norm, seed_from_states, solve_linear, symmetrize_conjugates, validate_occupation,
    PairSolution, RichardsonSystem, SolveMethod, SolverSettings,
};

/// Intermediate continuation points are accepted at this residual even when
/// the final tolerance is tighter.
const INTERMEDIATE_TOLERANCE: f64 = 1e-10;

/// A pair energy counts as real for collision handling when
/// `|Im E| <= REAL_AXIS_TOLERANCE * max(1, |E|)`.
const REAL_AXIS_TOLERANCE: f64 = 1e-8;

/// Largest rounding floor that may stand in for the residual tolerance.
/// Weak coupling puts each pair energy next to its own pair state, where the
/// floor grows like `ε_mach |2ε| / G`.
const FLOOR_CAP: f64 = 1e-6;

/// Cap on the part of the floor coming from pair-pair terms. Two pair
/// energies pressed together (typically against one pair state) make this
/// large, and there the residual carries no information.
const PAIR_FLOOR_CAP: f64 = 1e-8;

fn below_floor(system: &RichardsonSystem, e: &[Complex64], strength: f64, norm: f64) -> bool {
    let (floor, pairs) = system.floor_parts(e, strength);
    floor <= FLOOR_CAP && pairs <= PAIR_FLOOR_CAP && norm <= floor
}

#[derive(Debug, Clone)]
pub(crate) struct Converged {
    pub energies: Vec<Complex64>,
    pub iterations: usize,
}

/// Damped Newton: full step first, halved until the residual ∞-norm drops.
pub(crate) fn newton(
    system: &RichardsonSystem,
    start: Vec<Complex64>,
    strength: f64,
    tolerance: f64,
    max_iterations: usize,
) -> std::result::Result<Converged, usize> {
    let mut e = start;
    let Ok(mut r) = system.residual(&e, strength) else {
        return Err(0);
    };
    let mut norm = inf_norm(&r);
    for it in 0..=max_iterations {
        if norm < tolerance || below_floor(system, &e, strength, norm) {
            return Ok(Converged {
                energies: e,
                iterations: it,
            });
        }
        if it == max_iterations {
            break;
        }
        let Ok(jac) = system.jacobian(&e, strength) else {
            return Err(it);
        };
        let rhs: Vec<Complex64> = r.iter().map(|z| -z).collect();
        let Some(step) = solve_linear(jac, &rhs) else {
            return Err(it);
        };
        let mut lambda = 1.0;
        loop {
            let trial: Vec<Complex64> = e.iter().zip(&step).map(|(a, d)| a + d * lambda).collect();
            match system.residual(&trial, strength) {
                Ok(rt) if inf_norm(&rt) < norm => {
                    norm = inf_norm(&rt);
                    r = rt;
                    e = trial;
                    break;
                }
                _ => {
                    lambda *= 0.5;
                    if lambda < 1e-4 {
                        return Err(it + 1);
                    }
                }
            }
        }
    }
    Err(max_iterations)
}

/// [`newton`] in the scaled variables `u_ν = (E_ν - a_ν)/G`.
fn scaled_newton(
    system: &RichardsonSystem,
    anchors: &[usize],
    start: Vec<Complex64>,
    strength: f64,
    tolerance: f64,
    max_iterations: usize,
) -> std::result::Result<(Vec<Complex64>, f64, usize), usize> {
    let mut u = start;
    let Ok(mut r) = system.scaled_residual(anchors, &u, strength) else {
        return Err(0);
    };
    let mut norm = inf_norm(&r);
    for it in 0..=max_iterations {
        if norm < tolerance {
            return Ok((u, norm, it));
        }
        if it == max_iterations {
            break;
        }
        let Ok(jac) = system.scaled_jacobian(anchors, &u, strength) else {
            return Err(it);
        };
        let rhs: Vec<Complex64> = r.iter().map(|z| -z).collect();
        let Some(step) = solve_linear(jac, &rhs) else {
            return Err(it);
        };
        let mut lambda = 1.0;
        loop {
            let trial: Vec<Complex64> = u.iter().zip(&step).map(|(a, d)| a + d * lambda).collect();
            match system.scaled_residual(anchors, &trial, strength) {
                Ok(rt) if inf_norm(&rt) < norm => {
                    norm = inf_norm(&rt);
                    r = rt;
                    u = trial;
                    break;
                }
                _ => {
                    lambda *= 0.5;
                    if lambda < 1e-4 {
                        return Err(it + 1);
                    }
                }
            }
        }
    }
    Err(max_iterations)
}

/// Distance from each pair energy to its nearest singular feature (another
/// pair energy or a discrete pair state).
fn feature_scales(system: &RichardsonSystem, e: &[Complex64]) -> Vec<f64> {
    e.iter()
        .enumerate()
        .map(|(nu, a)| {
            let to_poles = system.poles().iter().map(|x| (x - a).norm());
            let to_pairs = e
                .iter()
                .enumerate()
                .filter(|(mu, _)| *mu != nu)
                .map(|(_, b)| (a - b).norm());
            to_poles.chain(to_pairs).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub(crate) struct Tracker<'a> {
    system: &'a RichardsonSystem,
    settings: &'a SolverSettings,
    pub iterations: usize,
    pub steps: usize,
    pub promotions: usize,
}

impl<'a> Tracker<'a> {
    pub fn new(system: &'a RichardsonSystem, settings: &'a SolverSettings) -> Self {
        Self {
            system,
            settings,
            iterations: 0,
            steps: 0,
            promotions: 0,
        }
    }

    fn correct(&mut self, start: Vec<Complex64>, g: f64, tol: f64) -> Option<Converged> {
        match newton(self.system, start, g, tol, self.settings.max_newton_iterations) {
            Ok(c) => {
                self.iterations += c.iterations;
                Some(c)
            }
            Err(it) => {
                self.iterations += it;
                None
            }
        }
    }

    /// Tangent predictor. On a solution `r = 0`, so `∂r/∂G = -1/G` in every
    /// component and `dE/dG = J⁻¹ (1/G)`.
    fn predict(&self, e: &[Complex64], g: f64, next: f64) -> Vec<Complex64> {
        if g == 0.0 {
            return e.to_vec();
        }
        let tangent = self
            .system
            .jacobian(e, g)
            .ok()
            .and_then(|jac| solve_linear(jac, &vec![Complex64::new(1.0 / g, 0.0); e.len()]));
        match tangent {
            Some(t) => e.iter().zip(&t).map(|(a, d)| a + d * (next - g)).collect(),
            None => e.to_vec(),
        }
    }

    /// Rejects corrector moves larger than half the local feature scale,
    /// which would indicate a jump to a different branch.
    fn on_branch(&self, old: &[Complex64], predicted: &[Complex64], new: &[Complex64]) -> bool {
        let scales = feature_scales(self.system, old);
        predicted
            .iter()
            .zip(new)
            .zip(scales)
            .all(|((p, n), s)| (p - n).norm() <= 0.5 * s)
    }

    /// The two closest adjacent real pair energies, if they are isolated
    /// from the rest: candidates for merging into a conjugate pair.
    fn merging_pair(&self, e: &[Complex64]) -> Option<(usize, usize, f64)> {
        if !self.system.is_real() {
            return None;
        }
        let mut real: Vec<usize> = (0..e.len())
            .filter(|&i| e[i].im.abs() <= REAL_AXIS_TOLERANCE * e[i].norm().max(1.0))
            .collect();
        real.sort_by(|&a, &b| e[a].re.total_cmp(&e[b].re));
        let (a, b) = real
            .windows(2)
            .map(|w| (w[0], w[1]))
            .min_by(|x, y| (e[x.1].re - e[x.0].re).total_cmp(&(e[y.1].re - e[y.0].re)))?;
        let sep = e[b].re - e[a].re;
        let others = e
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != a && *i != b)
            .map(|(_, z)| (z - e[a]).norm().min((z - e[b]).norm()))
            .fold(f64::INFINITY, f64::min);
        (sep < 0.5 * others).then_some((a, b, sep))
    }

    /// Replaces a merging real pair by `c ± iδ` and tries to converge at the
    /// next strength. `c` is the pair state between them when there is one.
    fn promote(&mut self, e: &[Complex64], next: f64, tol: f64) -> Option<Vec<Complex64>> {
        let (a, b, sep) = self.merging_pair(e)?;
        let (lo, hi) = (e[a].re, e[b].re);
        let mid = 0.5 * (lo + hi);
        let centre = self
            .system
            .poles()
            .iter()
            .filter(|x| x.re > lo && x.re < hi)
            .map(|x| x.re)
            .min_by(|x, y| (x - mid).abs().total_cmp(&(y - mid).abs()))
            .unwrap_or(mid);
        // both energies must already hug the merge point
        let room = self
            .system
            .poles()
            .iter()
            .map(|x| (x - Complex64::new(centre, 0.0)).norm())
            .filter(|d| *d > 0.0)
            .chain(
                (0..e.len())
                    .filter(|&i| i != a && i != b)
                    .map(|i| (e[i] - Complex64::new(centre, 0.0)).norm()),
            )
            .fold(f64::INFINITY, f64::min);
        if (lo - centre).abs().max(hi - centre) > 0.25 * room {
            return None;
        }
        for delta in [0.5 * sep, 0.125 * sep, 2.0 * sep, sep / 32.0] {
            let mut trial = e.to_vec();
            trial[a] = Complex64::new(centre, delta);
            trial[b] = Complex64::new(centre, -delta);
            if let Some(c) = self.correct(trial.clone(), next, tol) {
                let split = (c.energies[a] - c.energies[b]).norm();
                // the new pair must open up where the old one merged, and the
                // spectator energies must stay on their branch
                let local = [a, b]
                    .iter()
                    .all(|&i| (c.energies[i] - Complex64::new(centre, 0.0)).norm() <= 2.0 * sep);
                let others: Vec<usize> = (0..e.len()).filter(|&i| i != a && i != b).collect();
                let pick = |v: &[Complex64]| others.iter().map(|&i| v[i]).collect::<Vec<_>>();
                let spectators = self.on_branch(&pick(e), &pick(&trial), &pick(&c.energies));
                if c.energies[a].im.abs() > self.settings.collision_tolerance
                    && split > self.settings.collision_tolerance
                    && local
                    && spectators
                {
                    return Some(c.energies);
                }
            }
        }
        None
    }

    /// Carries a solution at `from` to `target`.
    pub fn track(&mut self, start: Vec<Complex64>, from: f64, target: f64) -> Result<Vec<Complex64>> {
        let span = (target - from).abs();
        let dir = (target - from).signum();
        let scale = target.abs().max(from.abs());
        let min_step = self.settings.min_step(scale);
        let mut h = self.settings.initial_step(scale).max(min_step).min(span);
        let mut g = from;
        let mut e = start;
        let final_tol = self.settings.newton_tolerance;
        let inter_tol = final_tol.max(INTERMEDIATE_TOLERANCE);
        while (target - g) * dir > 0.0 {
            let mut next = g + dir * h;
            if (target - next) * dir <= 1e-14 * scale {
                next = target;
            }
            let tol = if next == target { final_tol } else { inter_tol };
            let predicted = self.predict(&e, g, next);
            let corrected = self
                .correct(predicted.clone(), next, tol)
                .filter(|c| self.on_branch(&e, &predicted, &c.energies));
            if let Some(c) = corrected {
                e = c.energies;
                g = next;
                self.steps += 1;
                h *= 2.0;
                continue;
            }
            if dir > 0.0 {
                if let Some(p) = self.promote(&e, next, tol) {
                    e = p;
                    g = next;
                    self.steps += 1;
                    self.promotions += 1;
                    continue;
                }
            }
            h *= 0.5;
            if h < min_step {
                if let Some((a, b, _)) = self.merging_pair(&e) {
                    return Err(Error::Collision { g, a, b });
                }
                return Err(Error::NonConvergence {
                    last_good_g: g,
                    target_g: target,
                    reason: format!("continuation step fell below {min_step:.3e}"),
                });
            }
        }
        Ok(e)
    }
}

/// `scaled_residual` is the residual of the unrounded solution when it came
/// from weak-coupling tracking; rounding the pair energies to `E_ν` can put
/// the direct residual far above it.
#[allow(clippy::too_many_arguments)]
fn finish(
    system: &RichardsonSystem,
    mut energies: Vec<Complex64>,
    scaled_residual: Option<f64>,
    strength: f64,
    settings: &SolverSettings,
    tracker: &Tracker<'_>,
    method: SolveMethod,
    mut warnings: Vec<String>,
) -> Result<PairSolution> {
    if system.is_real() && !symmetrize_conjugates(&mut energies, 1e-9) {
        warnings.push("pair energies are not closed under conjugation".into());
    }
    if !system.is_real() {
        crate::richardson::sort_energies(&mut energies);
    }
    let residual_norm = match scaled_residual {
        Some(r) => r,
        None => inf_norm(&system.residual(&energies, strength)?),
    };
    if residual_norm > settings.newton_tolerance
        && (scaled_residual.is_some() || !below_floor(system, &energies, strength, residual_norm))
    {
        return Err(Error::NonConvergence {
            last_good_g: strength,
            target_g: strength,
            reason: format!(
                "final residual {residual_norm:.3e} above tolerance {:.1e}",
                settings.newton_tolerance
            ),
        });
    }
    let total = energies.iter().sum();
    Ok(PairSolution {
        energies: energies.into(),
        residual_norm,
        total,
        iterations: tracker.iterations,
        continuation_steps: tracker.steps,
        promotions: tracker.promotions,
        method,
        strength,
        warnings,
    })
}

fn unperturbed(system: &RichardsonSystem, occupation: &[usize]) -> PairSolution {
    let mut energies: Vec<Complex64> = occupation.iter().map(|&i| system.poles()[i]).collect();
    crate::richardson::sort_energies(&mut energies);
    let total = energies.iter().sum();
    PairSolution {
        energies: energies.into(),
        residual_norm: 0.0,
        total,
        iterations: 0,
        continuation_steps: 0,
        promotions: 0,
        method: SolveMethod::Unperturbed,
        strength: 0.0,
        warnings: Vec::new(),
    }
}

fn seeds(
    system: &RichardsonSystem,
    occupation: &[usize],
    g0: f64,
    settings: &SolverSettings,
) -> Result<Vec<Complex64>> {
    let mut seed = seed_from_states(system.poles(), occupation, g0)?.0;
    if let Some(offsets) = &settings.seed_offsets {
        if offsets.len() != seed.len() {
            return Err(Error::Domain(format!(
                "{} seed offsets given for {} pairs",
                offsets.len(),
                seed.len()
            )));
        }
        for (s, o) in seed.iter_mut().zip(offsets) {
            *s += o;
        }
    }
    Ok(seed)
}

/// Where weak-coupling tracking left off: either the target itself (with
/// the residual of the unrounded solution) or a strength from which plain
/// tracking is well conditioned.
struct WeakStart {
    energies: Vec<Complex64>,
    strength: f64,
    residual: f64,
}

/// Whether every pair energy still sits next to its own pair state:
/// `|G u_ν|` small against the distance from `a_ν` to any other pair state
/// or other anchor.
fn is_weak(system: &RichardsonSystem, anchors: &[usize], u: &[Complex64], g: f64) -> bool {
    let poles = system.poles();
    anchors.iter().zip(u).all(|(&a, w)| {
        let gap = poles
            .iter()
            .chain(anchors.iter().map(|&b| &poles[b]))
            .map(|x| (x - poles[a]).norm())
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min);
        (g * w).norm() <= 0.1 * gap
    })
}

/// Follows the branch from `G → 0` in the scaled variables of
/// [`scaled_newton`], doubling the strength while the configuration stays
/// weak and the direct residual is still dominated by rounding.
fn weak_coupling(
    tracker: &mut Tracker<'_>,
    system: &RichardsonSystem,
    occupation: &[usize],
    strength: f64,
    settings: &SolverSettings,
) -> Result<WeakStart> {
    let min_step = settings.min_step(strength);
    let max_it = settings.max_newton_iterations;
    let mut g0 = settings.initial_step(strength);
    let (mut u, mut norm) = loop {
        let tol = if g0 == strength {
            settings.newton_tolerance
        } else {
            settings.newton_tolerance.max(INTERMEDIATE_TOLERANCE)
        };
        let start: Vec<Complex64> = seeds(system, occupation, g0, settings)?
            .iter()
            .zip(occupation)
            .map(|(e, &a)| (e - system.poles()[a]) / g0)
            .collect();
        match scaled_newton(system, occupation, start, g0, tol, max_it) {
            Ok((u, norm, it)) => {
                tracker.iterations += it;
                tracker.steps += 1;
                break (u, norm);
            }
            Err(it) => tracker.iterations += it,
        }
        g0 *= 0.5;
        if g0 < min_step {
            return Err(Error::NonConvergence {
                last_good_g: 0.0,
                target_g: strength,
                reason: "no convergence from the G -> 0 seeds".into(),
            });
        }
    };
    let mut g = g0;
    let energies = |u: &[Complex64], g: f64| -> Vec<Complex64> {
        occupation
            .iter()
            .zip(u)
            .map(|(&a, w)| system.poles()[a] + g * w)
            .collect()
    };
    let well_conditioned =
        |u: &[Complex64], g: f64| system.residual_floor(&energies(u, g), g) <= 1e-3 * INTERMEDIATE_TOLERANCE;
    while g < strength && is_weak(system, occupation, &u, g) && !well_conditioned(&u, g) {
        let mut next = (2.0 * g).min(strength);
        loop {
            let tol = if next == strength {
                settings.newton_tolerance
            } else {
                settings.newton_tolerance.max(INTERMEDIATE_TOLERANCE)
            };
            match scaled_newton(system, occupation, u.clone(), next, tol, max_it) {
                Ok((w, n, it)) if is_weak(system, occupation, &w, next) => {
                    tracker.iterations += it;
                    tracker.steps += 1;
                    u = w;
                    norm = n;
                    g = next;
                    break;
                }
                Ok((_, _, it)) | Err(it) => tracker.iterations += it,
            }
            next = g + 0.5 * (next - g);
            if next - g < min_step {
                break;
            }
        }
        if g < next {
            // no progress: hand over to plain tracking from here
            break;
        }
    }
    Ok(WeakStart {
        energies: energies(&u, g),
        strength: g,
        residual: norm,
    })
}

fn continue_from_zero(
    tracker: &mut Tracker<'_>,
    system: &RichardsonSystem,
    occupation: &[usize],
    strength: f64,
    settings: &SolverSettings,
) -> Result<(Vec<Complex64>, Option<f64>)> {
    let start = weak_coupling(tracker, system, occupation, strength, settings)?;
    if start.strength == strength {
        return Ok((start.energies, Some(start.residual)));
    }
    let e = tracker.track(start.energies, start.strength, strength)?;
    Ok((e, None))
}

/// Occupation-seeded solve of an arbitrary Richardson system.
pub fn solve(
    system: &RichardsonSystem,
    occupation: &[usize],
    strength: f64,
    settings: &SolverSettings,
) -> Result<PairSolution> {
    settings.validate()?;
    validate_occupation(occupation, system.poles().len(), occupation.len())?;
    if !(strength.is_finite() && strength >= 0.0) {
        return Err(Error::Domain(format!(
            "pairing strength must be nonnegative, got {strength}"
        )));
    }
    if strength == 0.0 {
        return Ok(unperturbed(system, occupation));
    }
    let mut tracker = Tracker::new(system, settings);
    match continue_from_zero(&mut tracker, system, occupation, strength, settings) {
        Ok((e, scaled)) => finish(
            system,
            e,
            scaled,
            strength,
            settings,
            &tracker,
            SolveMethod::Continuation,
            Vec::new(),
        ),
        Err(err) if settings.allow_fallback && system.has_distinct_poles_only() => {
            let mut fallback = Tracker::new(system, settings);
            match ebv::solve(system, occupation, strength, settings) {
                Ok((e, steps)) => {
                    fallback.steps = steps;
                    let polished = newton(
                        system,
                        e,
                        strength,
                        settings.newton_tolerance,
                        settings.max_newton_iterations,
                    )
                    .map_err(|_| err)?;
                    fallback.iterations = polished.iterations;
                    finish(
                        system,
                        polished.energies,
                        None,
                        strength,
                        settings,
                        &fallback,
                        SolveMethod::EigenvalueBased,
                        vec!["pair-energy continuation stalled; used eigenvalue-based continuation"
                            .into()],
                    )
                }
                Err(_) => Err(err),
            }
        }
        Err(err) => Err(err),
    }
}

/// Warm start from a solution at another strength, falling back to a full
/// occupation-seeded solve when tracking fails.
pub fn solve_from(
    system: &RichardsonSystem,
    previous: &PairSolution,
    occupation: &[usize],
    strength: f64,
    settings: &SolverSettings,
) -> Result<PairSolution> {
    if previous.strength == 0.0 || strength == 0.0 || previous.energies.len() != occupation.len() {
        return solve(system, occupation, strength, settings);
    }
    let mut tracker = Tracker::new(system, settings);
    let step_settings = SolverSettings {
        initial_g_step: Some((strength - previous.strength).abs()),
        min_g_step: Some(settings.min_step(strength).min((strength - previous.strength).abs())),
        ..settings.clone()
    };
    let mut warm = Tracker::new(system, &step_settings);
    match warm.track(previous.energies.0.clone(), previous.strength, strength) {
        Ok(e) => {
            tracker.iterations = warm.iterations;
            tracker.steps = warm.steps;
            tracker.promotions = warm.promotions;
            finish(
                system,
                e,
                None,
                strength,
                settings,
                &tracker,
                SolveMethod::Continuation,
                Vec::new(),
            )
        }
        Err(_) => solve(system, occupation, strength, settings),
    }
}
