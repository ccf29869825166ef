//! Command-line front end: classify, verify, shoot, sweep and export.
//!
//! Exit codes: 0 success, 1 failed check, 2 invalid parameters or range,
//! 3 no usable (non-degenerate) root, 4 shooting bracket not found,
//! 5 output not writable.

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{classify, find_positive_roots, RootSearch, SynchronizedFamily};
use crate::error::Error;
use crate::ode::{exact_trajectory, fmt17, integrate_two_sided, shoot_synchronized, ShootingConfig};
use crate::params::{critical_exponent, ProblemParams};
use crate::verify::{full_verification, verify_families, FamilySummary, RadialGrid, SHOOTING_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_BRACKET: i32 = 4;
pub const EXIT_UNWRITABLE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "doubly-critical", version, about = "Synchronized solutions of doubly critical Hardy-Sobolev systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the synchronized families (C, c1, c2, f'(C)).
    Classify(CommonArgs),
    /// Run every check and emit the verification report.
    Verify(VerifyArgs),
    /// Recover the maximum amplitude of each family by shooting.
    Shoot(ShootArgs),
    /// Root counts over a range of nu or alpha.
    Sweep(SweepArgs),
    /// Write profile or trajectory data as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub n: u32,
    #[arg(long, default_value_t = 0.0, conflicts_with_all = ["gamma1", "gamma2"])]
    pub gamma: f64,
    #[arg(long, requires = "gamma2")]
    pub gamma1: Option<f64>,
    #[arg(long, requires = "gamma1")]
    pub gamma2: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub nu: f64,
    /// Defaults to 2*/2.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Defaults to 2* - alpha; an explicit value must satisfy alpha + beta = 2*.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub mu0: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Integrator tolerance override.
    #[arg(long)]
    pub tol: Option<f64>,
}

impl CommonArgs {
    pub fn params(&self) -> Result<ProblemParams, Error> {
        let two_star = critical_exponent(self.n)?;
        let alpha = self.alpha.unwrap_or(two_star / 2.0);
        let beta = self.beta.unwrap_or(two_star - alpha);
        let (g1, g2) = match (self.gamma1, self.gamma2) {
            (Some(a), Some(b)) => (a, b),
            _ => (self.gamma, self.gamma),
        };
        ProblemParams::new(self.n, g1, g2, self.nu, alpha, beta)
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Scale both constants of every family by this factor before checking.
    #[arg(long, hide = true)]
    pub perturb_amplitude: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ShootArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Lower end of the amplitude bracket (with --window-hi).
    #[arg(long, requires = "window_hi")]
    pub window_lo: Option<f64>,
    #[arg(long, requires = "window_lo")]
    pub window_hi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Nu,
    Alpha,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Profile,
    Trajectory,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = ExportKind::Profile)]
    pub kind: ExportKind,
    /// Index of the family in ascending root order.
    #[arg(long, default_value_t = 0)]
    pub family: usize,
    /// Trajectory window is log(mu0) +- this.
    #[arg(long, default_value_t = 10.0)]
    pub half_width: f64,
    /// Trajectory sample count (closed form).
    #[arg(long, default_value_t = 2001)]
    pub samples: usize,
    /// Export the numerically integrated trajectory instead of the closed form.
    #[arg(long)]
    pub integrate: bool,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DimensionTooSmall { .. }
            | Error::GammaOutOfRange { .. }
            | Error::ExponentTooSmall { .. }
            | Error::ExponentSum { .. }
            | Error::NegativeCoupling { .. }
            | Error::NonFiniteParameter { .. }
            | Error::InvalidScale { .. }
            | Error::UnequalGamma { .. }
            | Error::InvalidTolerance { .. }
            | Error::InvalidGrid
            | Error::InvalidRange(_) => EXIT_INVALID,
            Error::BracketNotFound { .. } => EXIT_BRACKET,
            Error::VanishingCoupling => EXIT_DEGENERATE,
            _ => EXIT_CHECK_FAILED,
        };
        Self::new(code, e.to_string())
    }
}

fn unwritable(e: io::Error) -> Failure {
    Failure::new(EXIT_UNWRITABLE, format!("cannot write output: {e}"))
}

/// Sends the output to `--out` or to `stdout`.
fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, body: &dyn Fn(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(unwritable)?;
            let mut w = BufWriter::new(file);
            body(&mut w).map_err(unwritable)?;
            w.flush().map_err(unwritable)
        }
        None => body(stdout).map_err(unwritable),
    }
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, stdout: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("serializable output");
    emit(out, stdout, &|w| writeln!(w, "{text}"))
}

#[derive(Debug, Serialize)]
struct ClassifyOutput {
    params: ProblemParams,
    mu0: f64,
    families: Vec<FamilySummary>,
}

fn summary(f: &SynchronizedFamily) -> FamilySummary {
    FamilySummary { c_tilde: f.root.c_tilde, c1: f.c1, c2: f.c2, f_prime: f.root.f_prime }
}

fn families_or_exit(p: &ProblemParams, mu0: f64) -> Result<Vec<SynchronizedFamily>, Failure> {
    let fams = classify(p, mu0)?;
    if fams.is_empty() {
        let degenerate = find_positive_roots(p, &RootSearch::default())?.len();
        let msg = if degenerate > 0 {
            format!("only degenerate roots found ({degenerate})")
        } else {
            "no positive roots found".to_string()
        };
        return Err(Failure::new(EXIT_DEGENERATE, msg));
    }
    Ok(fams)
}

fn cmd_classify(a: &CommonArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let p = a.params()?;
    let fams = families_or_exit(&p, a.mu0)?;
    let rows: Vec<FamilySummary> = fams.iter().map(summary).collect();
    match a.format {
        Format::Json => emit_json(&a.out, stdout, &ClassifyOutput { params: p, mu0: a.mu0, families: rows })?,
        Format::Csv => emit(&a.out, stdout, &|w| {
            writeln!(w, "c_tilde,c1,c2,f_prime")?;
            for r in &rows {
                writeln!(w, "{},{},{},{}", fmt17(r.c_tilde), fmt17(r.c1), fmt17(r.c2), fmt17(r.f_prime))?;
            }
            Ok(())
        })?,
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    let p = c.params()?;
    let report = match a.perturb_amplitude {
        None => full_verification(&p, c.mu0)?,
        Some(factor) => {
            let fams = classify(&p, c.mu0)?;
            let perturbed: Vec<SynchronizedFamily> = fams.iter().map(|f| f.with_scaled_amplitude(factor)).collect();
            verify_families(&p, c.mu0, &perturbed, &fams)
        }
    };
    match c.format {
        Format::Json => emit(&c.out, stdout, &|w| writeln!(w, "{}", report.to_json()))?,
        Format::Csv => emit(&c.out, stdout, &|w| report.write_csv(w))?,
    }
    Ok(if report.overall { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[derive(Debug, Serialize)]
struct ShootRow {
    c_tilde: f64,
    amplitude: f64,
    target: f64,
    relative_error: f64,
}

fn cmd_shoot(a: &ShootArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    let p = c.params()?;
    let fams = families_or_exit(&p, c.mu0)?;
    let mut cfg = ShootingConfig::default();
    if let (Some(lo), Some(hi)) = (a.window_lo, a.window_hi) {
        cfg.window = Some((lo, hi));
    }
    if let Some(tol) = c.tol {
        cfg.ode_tol = tol;
    }
    let rows: Vec<ShootRow> = fams
        .iter()
        .map(|f| {
            let amplitude = shoot_synchronized(&p, &f.root, &cfg)?;
            let d = &f.profile.derived;
            let target = f.c1 * d.amplitude * 2f64.powf(-d.delta);
            Ok(ShootRow { c_tilde: f.root.c_tilde, amplitude, target, relative_error: (amplitude - target).abs() / target })
        })
        .collect::<Result<_, Error>>()?;
    match c.format {
        Format::Json => emit_json(&c.out, stdout, &rows)?,
        Format::Csv => emit(&c.out, stdout, &|w| {
            writeln!(w, "c_tilde,amplitude,target,relative_error")?;
            for r in &rows {
                writeln!(w, "{},{},{},{}", fmt17(r.c_tilde), fmt17(r.amplitude), fmt17(r.target), fmt17(r.relative_error))?;
            }
            Ok(())
        })?,
    }
    let ok = rows.iter().all(|r| r.relative_error <= SHOOTING_TOL);
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub root_count: usize,
    pub degenerate_count: usize,
    /// `f` vanishes identically at this sample.
    pub continuum: bool,
    pub roots: Vec<f64>,
}

/// Root counts at `samples` evenly spaced values of the swept parameter.
/// Rows come back in input order whatever the scheduling.
pub fn sweep(base: &ProblemParams, param: SweepParam, from: f64, to: f64, samples: usize) -> Result<Vec<SweepRow>, Error> {
    if samples < 2 || !from.is_finite() || !to.is_finite() || !(to > from) {
        return Err(Error::InvalidRange(format!("need from < to and >= 2 samples, got [{from}, {to}] x {samples}")));
    }
    let values: Vec<f64> = (0..samples)
        .map(|i| if i + 1 == samples { to } else { from + (to - from) * i as f64 / (samples - 1) as f64 })
        .collect();
    let two_star = base.two_star();
    let points: Vec<ProblemParams> = values
        .iter()
        .map(|&v| match param {
            SweepParam::Nu => base.with_nu(v),
            SweepParam::Alpha => ProblemParams::new(base.n, base.gamma1, base.gamma2, base.nu, v, two_star - v),
        })
        .collect::<Result<_, Error>>()
        .map_err(|e| Error::InvalidRange(e.to_string()))?;
    points
        .par_iter()
        .zip(values.par_iter())
        .map(|(p, &value)| {
            let roots = match find_positive_roots(p, &RootSearch::default()) {
                Err(Error::VanishingCoupling) => {
                    return Ok(SweepRow { value, root_count: 0, degenerate_count: 0, continuum: true, roots: vec![] })
                }
                other => other?,
            };
            let simple: Vec<f64> = roots.iter().filter(|r| !r.is_degenerate).map(|r| r.c_tilde).collect();
            Ok(SweepRow {
                value,
                root_count: simple.len(),
                degenerate_count: roots.len() - simple.len(),
                continuum: false,
                roots: simple,
            })
        })
        .collect()
}

fn cmd_sweep(a: &SweepArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    let base = c.params()?;
    let rows = sweep(&base, a.param, a.from, a.to, a.samples)?;
    let column = match a.param {
        SweepParam::Nu => "nu",
        SweepParam::Alpha => "alpha",
    };
    match c.format {
        Format::Json => emit_json(&c.out, stdout, &rows)?,
        Format::Csv => emit(&c.out, stdout, &|w| {
            // roots are ';'-separated inside their column
            writeln!(w, "{column},root_count,degenerate_count,continuum,roots")?;
            for r in &rows {
                let roots: Vec<String> = r.roots.iter().map(|x| fmt17(*x)).collect();
                writeln!(w, "{},{},{},{},{}", fmt17(r.value), r.root_count, r.degenerate_count, r.continuum, roots.join(";"))?;
            }
            Ok(())
        })?,
    }
    Ok(EXIT_OK)
}

/// One row of the profile CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub r: f64,
    pub u: f64,
    pub v: f64,
    pub r_tau1_u: f64,
    pub r_tau2_u: f64,
}

pub const PROFILE_HEADER: &str = "r,u,v,r_tau1_u,r_tau2_u";

pub fn profile_rows(fam: &SynchronizedFamily, grid: &RadialGrid) -> Result<Vec<ProfileRow>, Error> {
    let d = &fam.profile.derived;
    grid.points()
        .iter()
        .map(|&r| {
            let (u, v) = fam.values(r)?;
            Ok(ProfileRow { r, u, v, r_tau1_u: r.powf(d.tau1) * u, r_tau2_u: r.powf(d.tau2) * u })
        })
        .collect()
}

pub fn write_profile_csv<W: Write + ?Sized>(rows: &[ProfileRow], w: &mut W) -> io::Result<()> {
    writeln!(w, "{PROFILE_HEADER}")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt17(row.r),
            fmt17(row.u),
            fmt17(row.v),
            fmt17(row.r_tau1_u),
            fmt17(row.r_tau2_u)
        )?;
    }
    Ok(())
}

/// Parses a file written by [`write_profile_csv`].
pub fn read_profile_csv<R: BufRead>(reader: R) -> io::Result<Vec<ProfileRow>> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == PROFILE_HEADER => {}
        Some(Ok(h)) => return Err(bad(format!("unexpected header {h:?}"))),
        Some(Err(e)) => return Err(e),
        None => return Err(bad("empty file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
        if vals.len() != 5 {
            return Err(bad(format!("line {}: expected 5 columns, got {}", i + 2, vals.len())));
        }
        rows.push(ProfileRow { r: vals[0], u: vals[1], v: vals[2], r_tau1_u: vals[3], r_tau2_u: vals[4] });
    }
    Ok(rows)
}

fn cmd_export(a: &ExportArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    let p = c.params()?;
    let fams = families_or_exit(&p, c.mu0)?;
    let fam = fams.get(a.family).ok_or_else(|| {
        Failure::new(EXIT_INVALID, format!("family index {} out of range ({} families)", a.family, fams.len()))
    })?;
    if c.format == Format::Json {
        log::warn!("export writes CSV only; ignoring --format json");
    }
    match a.kind {
        ExportKind::Profile => {
            let rows = profile_rows(fam, &RadialGrid::default())?;
            emit(&c.out, stdout, &|w| write_profile_csv(&rows, w))?;
        }
        ExportKind::Trajectory => {
            if !(a.half_width > 0.0) || a.samples < 2 {
                return Err(Failure::new(EXIT_INVALID, "need --half-width > 0 and --samples >= 2"));
            }
            let t0 = c.mu0.ln();
            let traj = if a.integrate {
                let start = crate::ode::exact_ef_solution(fam, t0);
                let tol = c.tol.unwrap_or(crate::verify::INTEGRATION_TOL);
                integrate_two_sided(&start, t0 - a.half_width, t0 + a.half_width, &p, tol)?
            } else {
                // symmetric offsets so the samples are mirror images about t0
                let m = (a.samples - 1) as f64 / 2.0;
                let dt = a.half_width / m;
                let times: Vec<f64> = (0..a.samples).map(|i| t0 + (i as f64 - m) * dt).collect();
                exact_trajectory(fam, &times)
            };
            emit(&c.out, stdout, &|w| traj.write_csv(w))?;
        }
    }
    Ok(EXIT_OK)
}

/// Runs a parsed command, writing to `stdout` unless `--out` is given.
pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Classify(a) => cmd_classify(a, stdout),
        Command::Verify(a) => cmd_verify(a, stdout),
        Command::Shoot(a) => cmd_shoot(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Export(a) => cmd_export(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

/// Parses `args` (program name first) and runs; clap usage errors exit 2.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let stderr = io::stderr();
    execute(&cli, &mut stdout.lock(), &mut stderr.lock())
}
