//! Panel-wise Gauss–Legendre quadrature of `∫ g(ε) / (2ε - E) dε`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectrum::{DensityTable, Resonance};

pub const DEFAULT_NODES_PER_PANEL: usize = 64;

/// Pair energies with `|Im E|` at or below this are treated as lying on the
/// real axis.
pub const CONTOUR_IM_TOLERANCE: f64 = 1e-12;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Fixed Gauss–Legendre panels tiling `(0, Λ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    panels: Vec<(f64, f64)>,
    nodes_per_panel: usize,
    upper_cutoff: f64,
    principal_value: bool,
}

impl QuadratureRule {
    /// Panels whose edges contain every grid point of the given tables below
    /// the cutoff, and every resonance position and `position ± 5Γ`.
    pub fn new(
        upper_cutoff: f64,
        nodes_per_panel: usize,
        tables: &[&DensityTable],
        resonances: &[Resonance],
    ) -> Result<Self> {
        if !(upper_cutoff.is_finite() && upper_cutoff > 0.0) {
            return Err(Error::Domain(format!(
                "quadrature cutoff must be positive, got {upper_cutoff}"
            )));
        }
        if nodes_per_panel == 0 {
            return Err(Error::Domain("nodes_per_panel must be positive".into()));
        }
        let mut edges = vec![0.0, upper_cutoff];
        for t in tables {
            edges.extend(t.grid().iter().copied());
        }
        for r in resonances {
            for e in [r.position - 5.0 * r.width, r.position, r.position + 5.0 * r.width] {
                edges.push(e);
            }
        }
        edges.retain(|e| *e >= 0.0 && *e <= upper_cutoff);
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
        let panels = edges.windows(2).map(|w| (w[0], w[1])).collect();
        Ok(Self {
            panels,
            nodes_per_panel,
            upper_cutoff,
            principal_value: false,
        })
    }

    /// Allow principal-value evaluation for pair energies on the contour.
    pub fn with_principal_value(mut self, enabled: bool) -> Self {
        self.principal_value = enabled;
        self
    }

    pub fn with_nodes_per_panel(&self, nodes_per_panel: usize) -> Self {
        Self {
            nodes_per_panel,
            ..self.clone()
        }
    }

    pub fn panels(&self) -> &[(f64, f64)] {
        &self.panels
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.nodes_per_panel
    }

    pub fn upper_cutoff(&self) -> f64 {
        self.upper_cutoff
    }

    pub fn principal_value(&self) -> bool {
        self.principal_value
    }

    /// Panels clipped to `[lo, hi]`.
    fn clipped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.panels.iter().filter_map(move |&(a, b)| {
            let a = a.max(lo);
            let b = b.min(hi);
            (b > a).then_some((a, b))
        })
    }
}

/// A density sampled at the quadrature nodes, with weights folded in.
#[derive(Debug, Clone)]
pub struct DiscretizedDensity {
    nodes: Vec<f64>,
    weighted: Vec<Complex64>,
    support: (f64, f64),
    rule: QuadratureRule,
    table: DensityTable,
}

impl DiscretizedDensity {
    pub fn new(table: &DensityTable, rule: &QuadratureRule) -> Self {
        let (xs, ws) = gauss_legendre(rule.nodes_per_panel);
        let lo = table.lower();
        let hi = table.upper().min(rule.upper_cutoff);
        let mut nodes = Vec::new();
        let mut weighted = Vec::new();
        for (a, b) in rule.clipped(lo, hi) {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            for (x, w) in xs.iter().zip(&ws) {
                let e = mid + half * x;
                nodes.push(e);
                weighted.push(table.value_at(e) * (w * half));
            }
        }
        Self {
            nodes,
            weighted,
            support: (lo, hi),
            rule: rule.clone(),
            table: table.clone(),
        }
    }

    pub fn table(&self) -> &DensityTable {
        &self.table
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Whether `pair_energy / 2` falls on the integration path.
    pub fn on_contour(&self, pair_energy: Complex64) -> bool {
        let (lo, hi) = self.support;
        let half = 0.5 * pair_energy.re;
        hi > lo && pair_energy.im.abs() <= CONTOUR_IM_TOLERANCE && half >= lo && half <= hi
    }

    /// `∫ g(ε) / (2ε - E) dε` over the support below the cutoff.
    pub fn integral(&self, pair_energy: Complex64) -> Result<Complex64> {
        if self.on_contour(pair_energy) {
            if !self.rule.principal_value {
                return Err(Error::Contour {
                    re: pair_energy.re,
                    im: pair_energy.im,
                });
            }
            return Ok(self.principal_value(pair_energy.re));
        }
        Ok(self
            .nodes
            .iter()
            .zip(&self.weighted)
            .map(|(e, wg)| wg / (2.0 * e - pair_energy))
            .sum())
    }

    /// `d/dE` of [`integral`](Self::integral), i.e. `∫ g / (2ε - E)^2`.
    pub fn derivative(&self, pair_energy: Complex64) -> Result<Complex64> {
        if self.on_contour(pair_energy) {
            if !self.rule.principal_value {
                return Err(Error::Contour {
                    re: pair_energy.re,
                    im: pair_energy.im,
                });
            }
            let e = pair_energy.re;
            let h = 1e-6 * e.abs().max(1.0);
            let (lo, hi) = self.support;
            let (a, b) = ((e - h).max(2.0 * lo), (e + h).min(2.0 * hi));
            let d = (self.principal_value(b) - self.principal_value(a)) / (b - a);
            return Ok(d);
        }
        Ok(self
            .nodes
            .iter()
            .zip(&self.weighted)
            .map(|(e, wg)| {
                let d = 2.0 * e - pair_energy;
                wg / (d * d)
            })
            .sum())
    }

    /// Principal value for a real pole `E` inside the support: the smooth
    /// remainder `(g(ε) - g(E/2)) / (2ε - E)` is integrated on panels split
    /// symmetrically around `E/2`, and the subtracted term is added back in
    /// closed form.
    fn principal_value(&self, pair_energy: f64) -> Complex64 {
        let (lo, hi) = self.support;
        let pole = 0.5 * pair_energy;
        let at_pole = self.table.value_at(pole);
        let (xs, ws) = gauss_legendre(self.rule.nodes_per_panel);
        let mut panels: Vec<(f64, f64)> = Vec::new();
        for (a, b) in self.rule.clipped(lo, hi) {
            if pole > a && pole < b {
                let h = (pole - a).min(b - pole);
                for p in [(a, pole - h), (pole - h, pole), (pole, pole + h), (pole + h, b)] {
                    if p.1 > p.0 {
                        panels.push(p);
                    }
                }
            } else {
                panels.push((a, b));
            }
        }
        let mut sum = Complex64::new(0.0, 0.0);
        for (a, b) in panels {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            for (x, w) in xs.iter().zip(&ws) {
                let e = mid + half * x;
                let d = 2.0 * e - pair_energy;
                if d != 0.0 {
                    sum += (self.table.value_at(e) - at_pole) * (w * half / d);
                }
            }
        }
        let log = 0.5 * ((2.0 * hi - pair_energy).abs() / (2.0 * lo - pair_energy).abs()).ln();
        sum + at_pole * log
    }
}

/// `∫_0^Λ g(ε) / (2ε - E) dε`; the caller applies the `G/2` prefactor.
pub fn integral_term(
    density: &DensityTable,
    rule: &QuadratureRule,
    pair_energy: Complex64,
) -> Result<Complex64> {
    DiscretizedDensity::new(density, rule).integral(pair_energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::lorentzian_density;

    fn constant(c: f64, lo: f64, hi: f64, n: usize) -> DensityTable {
        let grid = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        DensityTable::from_fn(grid, |_| c).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 2, 5, 16, 64, 128] {
            let (x, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "n={n}");
            // exact for degree 2n-1
            let deg = 2 * n - 1;
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let want = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((got - want).abs() < 1e-13, "n={n}: {got} vs {want}");
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn constant_density_matches_log() {
        let t = constant(1.0, 1e-12, 10.0, 11);
        let rule = QuadratureRule::new(10.0, 64, &[&t], &[]).unwrap();
        let got = integral_term(&t, &rule, Complex64::new(-2.0, 0.0)).unwrap();
        assert!((got.re - 0.5 * 11f64.ln()).abs() < 1e-6, "{got}");
        assert!(got.im.abs() < 1e-15);
    }

    #[test]
    fn zero_density_gives_zero() {
        let t = constant(0.0, 0.5, 10.0, 5);
        let rule = QuadratureRule::new(10.0, 16, &[&t], &[]).unwrap();
        let got = integral_term(&t, &rule, Complex64::new(3.0, -0.5)).unwrap();
        assert_eq!(got, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn off_axis_value_is_self_converged() {
        let t = constant(1.0, 1e-12, 10.0, 11);
        let e = Complex64::new(1.0, -0.5);
        let mut nodes = 8;
        let rule = QuadratureRule::new(10.0, nodes, &[&t], &[]).unwrap();
        let mut prev = integral_term(&t, &rule, e).unwrap();
        loop {
            nodes *= 2;
            let next = integral_term(&t, &rule.with_nodes_per_panel(nodes), e).unwrap();
            let change = (next - prev).norm();
            prev = next;
            if change < 1e-10 {
                break;
            }
            assert!(nodes < 4096);
        }
        let at_default = integral_term(&t, &rule.with_nodes_per_panel(64), e).unwrap();
        assert!((at_default - prev).norm() < 1e-9);
        // closed form: (1/2) log((2Λ - E) / (0 - E))
        let exact = 0.5 * ((Complex64::new(20.0, 0.0) - e) / (-e)).ln();
        assert!((prev - exact).norm() < 1e-9, "{prev} vs {exact}");
    }

    #[test]
    fn contour_without_pv_is_an_error() {
        let t = constant(1.0, 0.1, 10.0, 11);
        let rule = QuadratureRule::new(10.0, 32, &[&t], &[]).unwrap();
        let err = integral_term(&t, &rule, Complex64::new(4.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Contour { .. }));
        // a real energy outside the support is fine
        assert!(integral_term(&t, &rule, Complex64::new(25.0, 0.0)).is_ok());
    }

    #[test]
    fn principal_value_of_constant_density() {
        let t = constant(1.0, 0.1, 10.0, 11);
        let rule = QuadratureRule::new(10.0, 32, &[&t], &[])
            .unwrap()
            .with_principal_value(true);
        let e = 4.3;
        let got = integral_term(&t, &rule, Complex64::new(e, 0.0)).unwrap();
        let exact = 0.5 * ((20.0 - e) / (e - 0.2)).ln();
        assert!((got.re - exact).abs() < 1e-10, "{got} vs {exact}");
        // off the axis the same integral is a complex logarithm
        let z = Complex64::new(e, 0.5);
        let off = integral_term(&t, &rule, z).unwrap();
        let closed = 0.5 * ((20.0 - z) / (0.2 - z)).ln();
        assert!((off - closed).norm() < 1e-10, "{off} vs {closed}");
    }

    #[test]
    fn principal_value_of_linear_density() {
        let grid: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
        let t = DensityTable::from_fn(grid, |x| x).unwrap();
        let rule = QuadratureRule::new(10.0, 32, &[&t], &[])
            .unwrap()
            .with_principal_value(true);
        let dd = DiscretizedDensity::new(&t, &rule);
        let e: f64 = 7.0;
        // PV ∫_a^b x/(2x - e) dx = (b - a)/2 + (e/4) ln|(2b - e)/(2a - e)|
        let (a, b): (f64, f64) = (0.25, 10.0);
        let exact = 0.5 * (b - a) + 0.25 * e * ((2.0 * b - e) / (e - 2.0 * a)).ln();
        assert!((dd.integral(Complex64::new(e, 0.0)).unwrap().re - exact).abs() < 1e-10);
        let d = dd.derivative(Complex64::new(e, 0.0)).unwrap();
        let fd = (dd.integral(Complex64::new(e + 1e-4, 0.0)).unwrap()
            - dd.integral(Complex64::new(e - 1e-4, 0.0)).unwrap())
            / 2e-4;
        assert!((d - fd).norm() < 1e-5 * fd.norm().max(1.0));
    }

    #[test]
    fn derivative_matches_finite_difference_off_axis() {
        let grid: Vec<f64> = (1..=50).map(|i| 0.2 * i as f64).collect();
        let t = DensityTable::from_fn(grid, |x| (-x).exp() * x).unwrap();
        let rule = QuadratureRule::new(10.0, 32, &[&t], &[]).unwrap();
        let dd = DiscretizedDensity::new(&t, &rule);
        let e = Complex64::new(-1.5, 0.3);
        let h = 1e-6;
        let fd = (dd.integral(e + h).unwrap() - dd.integral(e - h).unwrap()) / (2.0 * h);
        let an = dd.derivative(e).unwrap();
        assert!((an - fd).norm() < 1e-7 * an.norm());
    }

    #[test]
    fn panels_contain_breakpoints() {
        let t = constant(1.0, 0.5, 3.0, 6);
        let r = [Resonance::new(2.0, 0.1).unwrap()];
        let rule = QuadratureRule::new(4.0, 8, &[&t], &r).unwrap();
        let edges: Vec<f64> = rule.panels().iter().map(|p| p.0).collect();
        for want in [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 1.5, 2.5, 3.0] {
            assert!(edges.iter().any(|e| (e - want).abs() < 1e-12), "missing {want}");
        }
        assert_eq!(rule.panels().last().unwrap().1, 4.0);
        assert!(rule.panels().windows(2).all(|w| w[0].1 == w[1].0));
    }

    #[test]
    fn lorentzian_has_unit_area() {
        for (pos, width) in [(1.0, 0.2), (3.0, 0.01), (0.5, 1.0)] {
            let r = [Resonance::new(pos, width).unwrap()];
            let (lo, hi) = (pos - 50.0 * width, pos + 50.0 * width);
            let (x, w) = gauss_legendre(64);
            let panels = 200;
            let step = (hi - lo) / panels as f64;
            let mut area = 0.0;
            for p in 0..panels {
                let a = lo + p as f64 * step;
                for (xi, wi) in x.iter().zip(&w) {
                    area += wi * 0.5 * step * lorentzian_density(&r, a + 0.5 * step * (xi + 1.0));
                }
            }
            // each tail beyond 50Γ carries atan-complement mass
            let tail = 0.5 - (100.0f64).atan() / PI;
            area += 2.0 * tail;
            assert!((area - 1.0).abs() < 1e-6, "area {area}");
        }
    }
}
