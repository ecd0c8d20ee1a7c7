//! Command-line front end: JSON configuration in, JSON or CSV results out.
//!
//! Data goes to stdout (or `--out`); diagnostics go to stderr. Exit codes are
//! 0 on success, 2 when a solve does not converge (or an oracle check
//! fails), 3 for invalid input.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuum::{
    pole_quality, solve_continuum, solve_continuum_from, ContinuumMode, ContinuumProblem,
};
use crate::error::{Error, Result};
use crate::identities::{verify_identities, IdentityReport};
use crate::oracle::{compare, compare_ground, oracle_spectrum, Comparison};
use crate::quadrature::DEFAULT_NODES_PER_PANEL;
use crate::richardson::{ground_occupation, solve_discrete, PairSolution, SolverSettings};
use crate::spectrum::{box_spectrum, DensityTable, Level, PairingProblem, Resonance};

/// Agreement required between a Richardson total and the oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "rpsolve", version, about = "Exact pairing energies from Richardson's equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Solve sweep points independently in parallel (no warm start).
    #[arg(long, global = true)]
    pub parallel: bool,
    /// Suppress warnings on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Box (discrete) spectrum.
    Discrete,
    /// Bound levels plus a real level density.
    Continuum,
    /// Resonances as complex poles; densities dropped.
    ComplexPole,
    /// Resonance poles plus real and rotated-contour backgrounds.
    ComplexFull,
    /// Compare discrete solutions with exact diagonalization.
    Verify,
    /// Solve over a range of pairing strengths.
    Sweep,
    /// Randomized checks of the algebraic identities.
    Identities,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Solver representation named in the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Discrete,
    Continuum,
    ComplexPole,
    ComplexFull,
    Verify,
    Sweep,
}

impl Mode {
    fn solver(self) -> Option<SolverMode> {
        match self {
            Mode::Discrete => Some(SolverMode::Discrete),
            Mode::Continuum => Some(SolverMode::Continuum(ContinuumMode::RealContinuum)),
            Mode::ComplexPole => Some(SolverMode::Continuum(ContinuumMode::ComplexPole)),
            Mode::ComplexFull => Some(SolverMode::Continuum(ContinuumMode::ComplexFull)),
            Mode::Verify | Mode::Sweep => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SolverMode {
    Discrete,
    Continuum(ContinuumMode),
}

impl SolverMode {
    fn name(self) -> &'static str {
        match self {
            SolverMode::Discrete => "discrete",
            SolverMode::Continuum(ContinuumMode::RealContinuum) => "continuum",
            SolverMode::Continuum(ContinuumMode::ComplexPole) => "complex-pole",
            SolverMode::Continuum(ContinuumMode::ComplexFull) => "complex-full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub radius: f64,
    pub count: usize,
    pub mass_scale: f64,
}

/// A density given inline or as a CSV file (relative paths are resolved
/// against the configuration file's directory).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum DensitySource {
    Real { grid: Vec<f64>, values: Vec<f64> },
    Complex { grid: Vec<f64>, re: Vec<f64>, im: Vec<f64> },
    Csv { csv: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrengthSweep {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    /// Consecutive totals may differ by at most `slack · ΔG · n`.
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_slack() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Occupation {
    Named(String),
    Explicit(Vec<usize>),
}

impl Default for Occupation {
    fn default() -> Self {
        Occupation::Named("ground".into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub cutoff: Option<f64>,
    pub nodes_per_panel: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub levels: Vec<Level>,
    #[serde(default, rename = "box")]
    pub box_spec: Option<BoxSpec>,
    #[serde(default)]
    pub resonances: Vec<Resonance>,
    #[serde(default)]
    pub background: Option<DensitySource>,
    #[serde(default)]
    pub complex_background: Option<DensitySource>,
    #[serde(default)]
    pub strength: Option<f64>,
    #[serde(default)]
    pub strength_sweep: Option<StrengthSweep>,
    pub pairs: usize,
    #[serde(default)]
    pub occupation: Occupation,
    #[serde(default)]
    pub settings: SolverSettings,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The strengths to solve at: the sweep grid, or the single strength.
    pub fn strengths(&self) -> Result<Vec<f64>> {
        match (&self.strength, &self.strength_sweep) {
            (Some(_), Some(_)) => Err(Error::Config(
                "give either `strength` or `strength_sweep`, not both".into(),
            )),
            (Some(g), None) => Ok(vec![*g]),
            (None, Some(s)) => {
                if s.steps == 0 {
                    return Err(Error::Config("`strength_sweep.steps` must be positive".into()));
                }
                if !(s.start.is_finite() && s.stop.is_finite() && s.start >= 0.0 && s.stop >= s.start) {
                    return Err(Error::Config(
                        "`strength_sweep` needs 0 <= start <= stop".into(),
                    ));
                }
                if s.steps == 1 {
                    return Ok(vec![s.start]);
                }
                let dg = (s.stop - s.start) / (s.steps - 1) as f64;
                Ok((0..s.steps)
                    .map(|i| if i + 1 == s.steps { s.stop } else { s.start + dg * i as f64 })
                    .collect())
            }
            (None, None) => Err(Error::Config(
                "missing field `strength` (or `strength_sweep`)".into(),
            )),
        }
    }
}

fn parse_number(field: &str, path: &Path, row: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::Config(format!(
            "{}: row {row}: cannot parse {field:?} as a number",
            path.display()
        ))
    })
}

/// Reads a density CSV with `columns` numeric columns; a non-numeric first
/// row is taken as a header and `#` starts a comment line.
pub fn read_density_csv(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if record.len() != columns {
            return Err(Error::Config(format!(
                "{}: row {}: expected {columns} columns, found {}",
                path.display(),
                i + 1,
                record.len()
            )));
        }
        if i == 0 && record.get(0).is_some_and(|f| f.trim().parse::<f64>().is_err()) {
            continue;
        }
        rows.push(
            record
                .iter()
                .map(|f| parse_number(f, path, i + 1))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(rows)
}

fn load_density(source: &DensitySource, base: &Path, complex: bool) -> Result<DensityTable> {
    match (source, complex) {
        (DensitySource::Real { grid, values }, false) => {
            DensityTable::real(grid.clone(), values.clone())
        }
        (DensitySource::Complex { grid, re, im }, true) => {
            if re.len() != im.len() {
                return Err(Error::Config("complex_background: `re` and `im` differ in length".into()));
            }
            let values = re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)).collect();
            DensityTable::complex(grid.clone(), values)
        }
        (DensitySource::Csv { csv }, _) => {
            let path = if csv.is_absolute() { csv.clone() } else { base.join(csv) };
            let rows = read_density_csv(&path, if complex { 3 } else { 2 })?;
            let grid = rows.iter().map(|r| r[0]).collect();
            if complex {
                DensityTable::complex(grid, rows.iter().map(|r| Complex64::new(r[1], r[2])).collect())
            } else {
                DensityTable::real(grid, rows.iter().map(|r| r[1]).collect())
            }
        }
        (_, false) => Err(Error::Config(
            "background must be {grid, values} or {csv}".into(),
        )),
        (_, true) => Err(Error::Config(
            "complex_background must be {grid, re, im} or {csv}".into(),
        )),
    }
}

/// Builds the model problem (at the first requested strength).
pub fn build_problem(config: &RunConfig, base_dir: &Path) -> Result<PairingProblem> {
    let mut levels = config.levels.clone();
    for (i, l) in levels.iter_mut().enumerate() {
        if l.label.is_empty() {
            l.label = format!("l{i}");
        }
    }
    let box_levels = match &config.box_spec {
        Some(b) => box_spectrum(b.radius, b.count, b.mass_scale)?,
        None => Vec::new(),
    };
    let background = config
        .background
        .as_ref()
        .map(|s| load_density(s, base_dir, false))
        .transpose()?;
    let complex_background = config
        .complex_background
        .as_ref()
        .map(|s| load_density(s, base_dir, true))
        .transpose()?;
    let problem = PairingProblem {
        bound_levels: levels,
        box_levels,
        resonances: config.resonances.clone(),
        background,
        complex_background,
        strength: config.strengths()?[0],
        pairs: config.pairs,
    };
    problem.validate()?;
    Ok(problem)
}

/// One prepared solve target.
enum Target {
    Discrete(PairingProblem),
    Continuum(ContinuumProblem),
}

impl Target {
    fn new(mode: SolverMode, problem: PairingProblem, quadrature: &QuadratureSpec) -> Result<Self> {
        Ok(match mode {
            SolverMode::Discrete => Target::Discrete(problem),
            SolverMode::Continuum(m) => Target::Continuum(ContinuumProblem::with_quadrature(
                problem,
                m,
                quadrature.cutoff,
                quadrature.nodes_per_panel.unwrap_or(DEFAULT_NODES_PER_PANEL),
            )?),
        })
    }

    fn states(&self) -> Vec<Complex64> {
        match self {
            Target::Discrete(p) => p.pair_state_energies(false),
            Target::Continuum(p) => p.pair_states(),
        }
    }

    fn cutoff(&self) -> Option<f64> {
        match self {
            Target::Continuum(p) if p.mode != ContinuumMode::ComplexPole => {
                Some(p.quadrature.upper_cutoff())
            }
            _ => None,
        }
    }

    fn is_complex(&self) -> bool {
        matches!(self, Target::Continuum(p) if p.mode != ContinuumMode::RealContinuum)
    }

    fn solve(
        &self,
        g: f64,
        occupation: &[usize],
        previous: Option<&PairSolution>,
        settings: &SolverSettings,
    ) -> Result<PairSolution> {
        match (self, previous) {
            (Target::Discrete(p), None) => solve_discrete(&p.with_strength(g), occupation, settings),
            (Target::Discrete(p), Some(prev)) => {
                let system = crate::richardson::discrete_system(p, settings.collision_tolerance)?;
                crate::continuation::solve_from(&system, prev, occupation, g, settings)
            }
            (Target::Continuum(p), None) => solve_continuum(&p.with_strength(g), occupation, settings),
            (Target::Continuum(p), Some(prev)) => {
                solve_continuum_from(&p.with_strength(g), prev, occupation, settings)
            }
        }
    }
}

fn resolve_occupation(occupation: &Occupation, states: &[Complex64], pairs: usize) -> Result<Vec<usize>> {
    match occupation {
        Occupation::Named(name) if name == "ground" => Ok(ground_occupation(states, pairs)),
        Occupation::Named(name) => Err(Error::Config(format!(
            "occupation must be \"ground\" or a list of indices, got {name:?}"
        ))),
        Occupation::Explicit(list) => {
            crate::richardson::validate_occupation(list, states.len(), pairs)?;
            Ok(list.clone())
        }
    }
}

/// Result of one solve, as emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOutput {
    pub mode: String,
    pub strength: f64,
    pub pairs: usize,
    pub occupation: Vec<usize>,
    pub total: [f64; 2],
    pub energies: Vec<[f64; 2]>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub continuation_steps: usize,
    pub promotions: usize,
    pub method: crate::richardson::SolveMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pole_quality: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn solve_output(mode: SolverMode, target: &Target, occupation: &[usize], s: &PairSolution) -> SolveOutput {
    SolveOutput {
        mode: mode.name().into(),
        strength: s.strength,
        pairs: s.energies.len(),
        occupation: occupation.to_vec(),
        total: pair(s.total),
        energies: s.energies.values().iter().map(|z| pair(*z)).collect(),
        residual_norm: s.residual_norm,
        iterations: s.iterations,
        continuation_steps: s.continuation_steps,
        promotions: s.promotions,
        method: s.method,
        pole_quality: target.is_complex().then(|| pole_quality(s)),
        cutoff: target.cutoff(),
        warnings: s.warnings.clone(),
    }
}

/// Sweep table: `g, total_re, total_im, residual_norm, continuation_steps`,
/// then `e{k}_re, e{k}_im` for each pair energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn sweep_columns(pairs: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["g", "total_re", "total_im", "residual_norm", "continuation_steps"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for k in 1..=pairs {
        cols.push(format!("e{k}_re"));
        cols.push(format!("e{k}_im"));
    }
    cols
}

pub fn emit_sweep(results: &[(f64, PairSolution)]) -> SweepTable {
    let pairs = results.first().map_or(0, |(_, s)| s.energies.len());
    let rows = results
        .iter()
        .map(|(g, s)| {
            let mut row = vec![
                *g,
                s.total.re,
                s.total.im,
                s.residual_norm,
                s.continuation_steps as f64,
            ];
            for e in s.energies.values() {
                row.push(e.re);
                row.push(e.im);
            }
            row
        })
        .collect();
    SweepTable {
        columns: sweep_columns(pairs),
        rows,
    }
}

/// CSV with 17 significant digits; the step count is written as an integer.
pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = table.columns.join(",");
    out.push('\n');
    for row in &table.rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            if i == 4 {
                let _ = write!(out, "{}", *v as u64);
            } else {
                let _ = write!(out, "{v:.16e}");
            }
        }
        out.push('\n');
    }
    out
}

/// Flags sweep steps whose total moves by more than `slack · ΔG · n`.
pub fn sweep_continuity_violations(results: &[(f64, PairSolution)], slack: f64) -> Vec<(f64, f64)> {
    results
        .windows(2)
        .filter_map(|w| {
            let (g0, a) = &w[0];
            let (g1, b) = &w[1];
            let bound = slack * (g1 - g0).abs() * a.energies.len() as f64;
            ((b.total - a.total).norm() > bound).then_some((*g0, *g1))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyPoint {
    pub strength: f64,
    pub occupation: Vec<usize>,
    pub ground: bool,
    pub comparison: Comparison,
    pub residual_norm: f64,
    pub conjugation_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub tolerance: f64,
    pub oracle_dimension: usize,
    pub points: Vec<VerifyPoint>,
    pub pass: bool,
}

struct Diagnostics {
    quiet: bool,
}

impl Diagnostics {
    fn warn(&self, msg: &str) {
        if !self.quiet {
            eprintln!("warning: {msg}");
        }
    }
}

fn write_output(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn solver_mode(command: Command, config: &RunConfig) -> Result<SolverMode> {
    let from_command = match command {
        Command::Discrete | Command::Verify => Some(SolverMode::Discrete),
        Command::Continuum => Some(SolverMode::Continuum(ContinuumMode::RealContinuum)),
        Command::ComplexPole => Some(SolverMode::Continuum(ContinuumMode::ComplexPole)),
        Command::ComplexFull => Some(SolverMode::Continuum(ContinuumMode::ComplexFull)),
        Command::Sweep | Command::Identities => None,
    };
    let from_config = config.mode.and_then(Mode::solver);
    match (from_command, from_config) {
        (Some(a), Some(b)) if a != b => Err(Error::Config(format!(
            "config mode {:?} conflicts with subcommand {:?}",
            b.name(),
            a.name()
        ))),
        (Some(a), _) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Ok(SolverMode::Discrete),
    }
}

fn check_mode_command(command: Command, config: &RunConfig) -> Result<()> {
    match (config.mode, command) {
        (Some(Mode::Sweep), c) if c != Command::Sweep => Err(Error::Config(
            "config mode \"sweep\" needs the `sweep` subcommand".into(),
        )),
        (Some(Mode::Verify), c) if c != Command::Verify => Err(Error::Config(
            "config mode \"verify\" needs the `verify` subcommand".into(),
        )),
        _ => Ok(()),
    }
}

fn run_identities(cli: &Cli) -> Result<i32> {
    let report: IdentityReport = verify_identities(1000, 0);
    let text = match cli.format {
        Format::Json => to_json(&report),
        Format::Csv => format!(
            "trials,seed,double_sum_failures,partial_fraction_failures,max_partial_fraction_error,pass\n{},{},{},{},{:.16e},{}\n",
            report.trials,
            report.seed,
            report.double_sum_failures,
            report.partial_fraction_failures,
            report.max_partial_fraction_error,
            report.pass
        ),
    };
    write_output(cli, &text)?;
    Ok(if report.pass { 0 } else { 2 })
}

fn run_verify(cli: &Cli, config: &RunConfig, problem: PairingProblem, diag: &Diagnostics) -> Result<i32> {
    let strengths = config.strengths()?;
    let states = problem.pair_state_energies(false);
    let occupation = resolve_occupation(&config.occupation, &states, problem.pairs)?;
    let ground = occupation == ground_occupation(&states, problem.pairs);
    let mut points = Vec::new();
    let mut dimension = 0;
    for g in strengths {
        let p = problem.with_strength(g);
        let values = oracle_spectrum(&p)?;
        dimension = values.len();
        let s = solve_discrete(&p, &occupation, &config.settings)?;
        for w in &s.warnings {
            diag.warn(w);
        }
        let comparison = if ground {
            compare_ground(&s, &values, ORACLE_TOLERANCE)
        } else {
            compare(&s, &values, ORACLE_TOLERANCE)
        };
        if let Some(d) = &comparison.diagnostic {
            diag.warn(&format!("G = {g}: {d}"));
        }
        points.push(VerifyPoint {
            strength: g,
            occupation: occupation.clone(),
            ground,
            comparison,
            residual_norm: s.residual_norm,
            conjugation_closed: crate::richardson::is_conjugation_closed(s.energies.values(), 1e-9),
        });
    }
    let pass = points.iter().all(|p| p.comparison.pass && p.conjugation_closed);
    let report = VerifyReport {
        tolerance: ORACLE_TOLERANCE,
        oracle_dimension: dimension,
        points,
        pass,
    };
    let text = match cli.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut out = String::from("g,total_re,total_im,oracle,gap,pass\n");
            for p in &report.points {
                let c = &p.comparison;
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                    p.strength, c.total.re, c.total.im, c.nearest, c.gap, c.pass
                );
            }
            out
        }
    };
    write_output(cli, &text)?;
    Ok(if report.pass { 0 } else { 2 })
}

fn run_sweep(
    cli: &Cli,
    config: &RunConfig,
    mode: SolverMode,
    target: &Target,
    occupation: &[usize],
    diag: &Diagnostics,
) -> Result<i32> {
    let strengths = config.strengths()?;
    let mut results: Vec<(f64, PairSolution)> = Vec::new();
    let mut failure = None;
    if cli.parallel {
        let solved: Vec<Result<PairSolution>> = strengths
            .par_iter()
            .map(|&g| target.solve(g, occupation, None, &config.settings))
            .collect();
        for (g, r) in strengths.iter().zip(solved) {
            match r {
                Ok(s) => results.push((*g, s)),
                Err(e) => {
                    failure = Some((*g, e));
                    break;
                }
            }
        }
    } else {
        for &g in &strengths {
            let previous = results.last().map(|(_, s)| s);
            match target.solve(g, occupation, previous, &config.settings) {
                Ok(s) => results.push((g, s)),
                Err(e) => {
                    failure = Some((g, e));
                    break;
                }
            }
        }
    }
    for (g, s) in &results {
        for w in &s.warnings {
            diag.warn(&format!("G = {g}: {w}"));
        }
    }
    let slack = config.strength_sweep.as_ref().map_or(10.0, |s| s.slack);
    for (g0, g1) in sweep_continuity_violations(&results, slack) {
        diag.warn(&format!(
            "total energy jumps between G = {g0} and G = {g1}; the branch may have switched"
        ));
    }
    if !results.is_empty() {
        let text = match cli.format {
            Format::Csv => sweep_csv(&emit_sweep(&results)),
            Format::Json => {
                #[derive(Serialize)]
                struct SweepOutput<'a> {
                    mode: &'a str,
                    pairs: usize,
                    occupation: &'a [usize],
                    #[serde(flatten)]
                    table: SweepTable,
                }
                to_json(&SweepOutput {
                    mode: mode.name(),
                    pairs: occupation.len(),
                    occupation,
                    table: emit_sweep(&results),
                })
            }
        };
        write_output(cli, &text)?;
    }
    match failure {
        Some((g, e)) => {
            eprintln!("error: sweep stopped at G = {g}: {e}");
            Ok(e.exit_code())
        }
        None => Ok(0),
    }
}

fn run_solve(cli: &Cli, mode: SolverMode, target: &Target, config: &RunConfig, occupation: &[usize], diag: &Diagnostics) -> Result<i32> {
    let strengths = config.strengths()?;
    if strengths.len() != 1 {
        return Err(Error::Config(
            "`strength_sweep` needs the `sweep` subcommand".into(),
        ));
    }
    let s = target.solve(strengths[0], occupation, None, &config.settings)?;
    for w in &s.warnings {
        diag.warn(w);
    }
    let text = match cli.format {
        Format::Json => to_json(&solve_output(mode, target, occupation, &s)),
        Format::Csv => sweep_csv(&emit_sweep(&[(strengths[0], s)])),
    };
    write_output(cli, &text)?;
    Ok(0)
}

fn execute(cli: &Cli) -> Result<i32> {
    let diag = Diagnostics { quiet: cli.quiet };
    if cli.command == Command::Identities {
        return run_identities(cli);
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let config = RunConfig::load(path)?;
    check_mode_command(cli.command, &config)?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let problem = build_problem(&config, base_dir)?;
    if cli.command == Command::Verify {
        return run_verify(cli, &config, problem, &diag);
    }
    let mode = solver_mode(cli.command, &config)?;
    let target = Target::new(mode, problem, &config.quadrature)?;
    let occupation = resolve_occupation(&config.occupation, &target.states(), config.pairs)?;
    if cli.command == Command::Sweep {
        run_sweep(cli, &config, mode, &target, &occupation, &diag)
    } else {
        run_solve(cli, mode, &target, &config, &occupation, &diag)
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
