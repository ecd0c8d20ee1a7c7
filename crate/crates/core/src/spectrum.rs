//! Single-particle input: bound levels, box quasi-continuum, resonances and
//! tabulated level densities.
//!
//! Every discrete entry stands for one doubly degenerate pair state
//! `(j+, j-)`. Density tables, on the other hand, count fermion states and
//! therefore already carry the spin sum; the residual functions apply the
//! matching `G/2` factor.

use std::collections::HashSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One doubly degenerate single-particle level with real energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub energy: f64,
    #[serde(default)]
    pub label: String,
}

impl Level {
    pub fn new(energy: f64, label: impl Into<String>) -> Self {
        Self {
            energy,
            label: label.into(),
        }
    }
}

/// A single-particle resonance in the positive-energy continuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub position: f64,
    pub width: f64,
}

impl Resonance {
    pub fn new(position: f64, width: f64) -> Result<Self> {
        let r = Self { position, width };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.position.is_finite() && self.position > 0.0) {
            return Err(Error::Domain(format!(
                "resonance position must be positive, got {}",
                self.position
            )));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::Domain(format!(
                "resonance width must be positive, got {}",
                self.width
            )));
        }
        Ok(())
    }

    /// Pole of the analytically continued Lorentzian, `ε_r - iΓ_r/2`.
    pub fn pole(&self) -> Complex64 {
        Complex64::new(self.position, -0.5 * self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    /// Real density on the real energy axis.
    Background,
    /// Complex remainder density along a rotated contour.
    ComplexBackground,
}

/// Tabulated level density on a positive, strictly increasing grid.
///
/// Between grid points the table is interpolated with a monotone
/// piecewise-cubic Hermite scheme (real and imaginary parts separately).
/// Outside `[grid[0], grid[last]]` the density is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    grid: Vec<f64>,
    values: Vec<Complex64>,
    kind: DensityKind,
    slopes: Vec<Complex64>,
}

impl DensityTable {
    pub fn new(grid: Vec<f64>, values: Vec<Complex64>, kind: DensityKind) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::Domain(format!(
                "density table needs at least 2 grid points, got {}",
                grid.len()
            )));
        }
        if grid.len() != values.len() {
            return Err(Error::Domain(format!(
                "density table has {} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::Domain("density grid must be finite and positive".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("density grid must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Domain("density values must be finite".into()));
        }
        if kind == DensityKind::Background && values.iter().any(|v| v.im != 0.0) {
            return Err(Error::Domain(
                "a background density on the real axis must be real-valued".into(),
            ));
        }
        let re: Vec<f64> = values.iter().map(|v| v.re).collect();
        let im: Vec<f64> = values.iter().map(|v| v.im).collect();
        let dre = pchip_slopes(&grid, &re);
        let dim = pchip_slopes(&grid, &im);
        let slopes = dre
            .into_iter()
            .zip(dim)
            .map(|(a, b)| Complex64::new(a, b))
            .collect();
        Ok(Self {
            grid,
            values,
            kind,
            slopes,
        })
    }

    pub fn real(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let values = values.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        Self::new(grid, values, DensityKind::Background)
    }

    pub fn complex(grid: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        Self::new(grid, values, DensityKind::ComplexBackground)
    }

    /// Tabulates `f` on `grid`.
    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&e| f(e)).collect();
        Self::real(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn lower(&self) -> f64 {
        self.grid[0]
    }

    pub fn upper(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Interpolated density; zero outside the tabulated range.
    pub fn value_at(&self, energy: f64) -> Complex64 {
        let n = self.grid.len();
        if !(energy >= self.grid[0] && energy <= self.grid[n - 1]) {
            return Complex64::new(0.0, 0.0);
        }
        let k = self.grid.partition_point(|&g| g <= energy).clamp(1, n - 1) - 1;
        let h = self.grid[k + 1] - self.grid[k];
        let t = (energy - self.grid[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        self.values[k] * h00
            + self.slopes[k] * (h10 * h)
            + self.values[k + 1] * h01
            + self.slopes[k + 1] * (h11 * h)
    }
}

/// Fritsch–Carlson slopes with the three-point shape-preserving end rule.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    d[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn pchip_end(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

/// Full model input for one Richardson solve.
#[derive(Debug, Clone, Default)]
pub struct PairingProblem {
    pub bound_levels: Vec<Level>,
    pub box_levels: Vec<Level>,
    pub resonances: Vec<Resonance>,
    pub background: Option<DensityTable>,
    pub complex_background: Option<DensityTable>,
    pub strength: f64,
    pub pairs: usize,
}

impl PairingProblem {
    /// Purely discrete problem with the given real levels.
    pub fn discrete(levels: Vec<Level>, strength: f64, pairs: usize) -> Self {
        Self {
            bound_levels: levels,
            strength,
            pairs,
            ..Self::default()
        }
    }

    /// Convenience constructor from bare energies; labels are `l0, l1, ...`.
    pub fn from_energies(energies: &[f64], strength: f64, pairs: usize) -> Self {
        let levels = energies
            .iter()
            .enumerate()
            .map(|(i, &e)| Level::new(e, format!("l{i}")))
            .collect();
        Self::discrete(levels, strength, pairs)
    }

    pub fn with_strength(&self, strength: f64) -> Self {
        Self {
            strength,
            ..self.clone()
        }
    }

    /// Real levels in order: bound first, then box.
    pub fn real_levels(&self) -> impl Iterator<Item = &Level> {
        self.bound_levels.iter().chain(self.box_levels.iter())
    }

    /// `2ε_j` for every discrete pair state. With `with_resonances`, the
    /// complex poles `2ε_r - iΓ_r` follow the real levels.
    pub fn pair_state_energies(&self, with_resonances: bool) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = self
            .real_levels()
            .map(|l| Complex64::new(2.0 * l.energy, 0.0))
            .collect();
        if with_resonances {
            out.extend(self.resonances.iter().map(|r| 2.0 * r.pole()));
        }
        out
    }

    pub fn has_densities(&self) -> bool {
        self.background.is_some() || self.complex_background.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strength.is_finite() && self.strength >= 0.0) {
            return Err(Error::Domain(format!(
                "pairing strength must be nonnegative, got {}",
                self.strength
            )));
        }
        if self.pairs == 0 {
            return Err(Error::Domain("number of pairs must be positive".into()));
        }
        let mut seen = HashSet::new();
        for l in self.real_levels() {
            if !l.energy.is_finite() {
                return Err(Error::Domain(format!("level {:?} has non-finite energy", l.label)));
            }
            if !l.label.is_empty() && !seen.insert(l.label.as_str()) {
                return Err(Error::Domain(format!("duplicate level label {:?}", l.label)));
            }
        }
        for r in &self.resonances {
            r.validate()?;
        }
        Ok(())
    }
}

/// s-wave levels of a free particle in a hard-wall sphere of the given
/// radius: `mass_scale * (kπ/R)^2` for `k = 1..=count`.
pub fn box_spectrum(radius: f64, count: usize, mass_scale: f64) -> Result<Vec<Level>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Domain(format!("box radius must be positive, got {radius}")));
    }
    if count == 0 {
        return Err(Error::Domain("box level count must be at least 1".into()));
    }
    if !(mass_scale.is_finite() && mass_scale > 0.0) {
        return Err(Error::Domain(format!(
            "mass scale must be positive, got {mass_scale}"
        )));
    }
    Ok((1..=count)
        .map(|k| {
            let q = k as f64 * PI / radius;
            Level::new(mass_scale * q * q, format!("box{k}"))
        })
        .collect())
}

/// Sum of unit-area Lorentzians, one per resonance.
pub fn lorentzian_density(resonances: &[Resonance], energy: f64) -> f64 {
    resonances
        .iter()
        .map(|r| {
            let half = 0.5 * r.width;
            let d = energy - r.position;
            half / (PI * (d * d + half * half))
        })
        .sum()
}

/// Removes the resonant Lorentzians from a total density, leaving the
/// (possibly negative) background on the same grid.
pub fn split_density(total: &DensityTable, resonances: &[Resonance]) -> Result<DensityTable> {
    if total.kind() != DensityKind::Background {
        return Err(Error::Domain(
            "only real-axis densities can be split into resonant and background parts".into(),
        ));
    }
    let values = total
        .grid()
        .iter()
        .zip(total.values())
        .map(|(&e, v)| v.re - lorentzian_density(resonances, e))
        .collect();
    DensityTable::real(total.grid().to_vec(), values)
}

/// Smooth level density of the box spectrum, spin degeneracy included:
/// `g(ε) = 2 dk/dε = R / (π sqrt(mass_scale ε))`, tabulated on a geometric
/// grid between the energies of `k = 1/2` and `k = count + 1/2` so that the
/// box sum is the midpoint rule of the integral.
pub fn box_density_table(
    radius: f64,
    count: usize,
    mass_scale: f64,
    points: usize,
) -> Result<DensityTable> {
    box_spectrum(radius, count, mass_scale)?;
    if points < 2 {
        return Err(Error::Domain("need at least 2 grid points".into()));
    }
    let energy = |k: f64| mass_scale * (k * PI / radius).powi(2);
    let lo = energy(0.5);
    let hi = energy(count as f64 + 0.5);
    let ratio = (hi / lo).ln();
    let mut grid: Vec<f64> = (0..points)
        .map(|i| lo * (ratio * i as f64 / (points - 1) as f64).exp())
        .collect();
    grid[points - 1] = hi;
    DensityTable::from_fn(grid, |e| radius / (PI * (mass_scale * e).sqrt()))
}

/// Smears each level into a normalized Gaussian of area 2 (spin
/// degeneracy) whose width is one quarter of the distance to the nearest
/// neighbouring level (zero energy counts as the lower neighbour of the
/// first level).
pub fn histogram_density(levels: &[Level], points_per_sigma: usize) -> Result<DensityTable> {
    if levels.is_empty() {
        return Err(Error::Domain("histogram of an empty spectrum".into()));
    }
    let mut energies: Vec<f64> = levels.iter().map(|l| l.energy).collect();
    energies.sort_by(f64::total_cmp);
    if energies[0] <= 0.0 {
        return Err(Error::Domain("histogram levels must be positive".into()));
    }
    let n = energies.len();
    let sigmas: Vec<f64> = (0..n)
        .map(|k| {
            let below = if k == 0 { energies[0] } else { energies[k] - energies[k - 1] };
            let above = if k + 1 < n { energies[k + 1] - energies[k] } else { below };
            0.25 * below.min(above)
        })
        .collect();
    if sigmas.iter().any(|s| *s <= 0.0) {
        return Err(Error::Domain("histogram levels must be distinct".into()));
    }
    let per = points_per_sigma.max(1) as f64;
    let mut grid = Vec::new();
    for (e, s) in energies.iter().zip(&sigmas) {
        let steps = (8.0 * per) as i64;
        for i in -steps..=steps {
            let x = e + s * i as f64 / per;
            if x > 0.0 {
                grid.push(x);
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    let norm = 2.0 / (2.0 * PI).sqrt();
    DensityTable::from_fn(grid, |x| {
        energies
            .iter()
            .zip(&sigmas)
            .map(|(e, s)| {
                let z = (x - e) / s;
                if z.abs() > 10.0 {
                    0.0
                } else {
                    norm / s * (-0.5 * z * z).exp()
                }
            })
            .sum()
    })
}
