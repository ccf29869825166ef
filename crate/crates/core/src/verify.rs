//! Grids, finite-difference oracles, convergence fits and the bundled
//! verification report.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{classify, verify_constants_system, SynchronizedFamily};
use crate::error::{Error, Result};
use crate::ode::{
    ef_system_residual, exact_ef_solution, integrate, integrate_two_sided, proportionality_defect,
    radial_system_residual, scalar_energy, shoot_synchronized, simultaneous_max_check, weighted_system_residual,
    ShootingConfig,
};
use crate::params::ProblemParams;
use crate::scalar::asymptotic_limits;

pub const DEFAULT_GRID_POINTS: usize = 2048;
pub const DEFAULT_GRID_MIN: f64 = 1e-6;
pub const DEFAULT_GRID_MAX: f64 = 1e6;

/// Errors below this are treated as pure roundoff by [`convergence_order`].
pub const ROUNDOFF_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    LogUniform,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    points: Vec<f64>,
    spacing: Spacing,
}

impl RadialGrid {
    /// `count` points spaced uniformly in `log r` on `[lo, hi]`, endpoints included.
    pub fn log_uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) || count < 2 {
            return Err(Error::InvalidGrid);
        }
        let (a, b) = (lo.ln(), hi.ln());
        let step = (b - a) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|i| (a + step * i as f64).exp()).collect();
        points[0] = lo;
        points[count - 1] = hi;
        Self::validate(&points)?;
        Ok(Self { points, spacing: Spacing::LogUniform })
    }

    pub fn custom(points: Vec<f64>) -> Result<Self> {
        Self::validate(&points)?;
        Ok(Self { points, spacing: Spacing::Custom })
    }

    fn validate(points: &[f64]) -> Result<()> {
        if points.is_empty()
            || points.iter().any(|r| !(*r > 0.0) || !r.is_finite())
            || points.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidGrid);
        }
        Ok(())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for RadialGrid {
    /// 2048 log-uniform points on `[1e-6, 1e6]`.
    fn default() -> Self {
        Self::log_uniform(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_POINTS).expect("valid default grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdOrder {
    First,
    Second,
}

/// Centered three-point difference, error `O(h^2)`. Requires `r - 2h > 0`.
pub fn fd_derivative<F>(u: F, r: f64, h: f64, order: FdOrder) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(h > 0.0) || !(r - 2.0 * h > 0.0) {
        return Err(Error::StencilLeavesDomain { r, h });
    }
    let (up, um) = (u(r + h)?, u(r - h)?);
    Ok(match order {
        FdOrder::First => (up - um) / (2.0 * h),
        FdOrder::Second => (up - 2.0 * u(r)? + um) / (h * h),
    })
}

/// Least-squares slope of `log err` against `log h`.
pub fn convergence_order(errors: &[(f64, f64)]) -> Result<f64> {
    if errors.len() < 3 || errors.windows(2).any(|w| !(w[1].0 < w[0].0)) || errors.iter().any(|e| !(e.0 > 0.0)) {
        return Err(Error::InsufficientFitData);
    }
    if errors.iter().any(|e| !(e.1 > 0.0) || !e.1.is_finite()) || errors.iter().all(|e| e.1 <= ROUNDOFF_FLOOR) {
        return Err(Error::DegenerateFit);
    }
    let m = errors.len() as f64;
    let xs: Vec<f64> = errors.iter().map(|e| e.0.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Pass iff `measured <= threshold`.
    Upper,
    /// Pass iff `measured >= threshold`.
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// `null` in JSON when the check could not be evaluated.
    pub measured: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Check {
    pub fn upper(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::build(name.into(), measured, threshold, Bound::Upper)
    }

    pub fn lower(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::build(name.into(), measured, threshold, Bound::Lower)
    }

    fn build(name: String, measured: f64, threshold: f64, bound: Bound) -> Self {
        let pass = match bound {
            Bound::Upper => measured <= threshold,
            Bound::Lower => measured >= threshold,
        };
        Self { name, measured, threshold, bound, pass, error: None }
    }

    fn from_result(name: String, r: Result<f64>, threshold: f64, bound: Bound) -> Self {
        match r {
            Ok(m) => Self::build(name, m, threshold, bound),
            Err(e) => Self { name, measured: f64::NAN, threshold, bound, pass: false, error: Some(e.to_string()) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySummary {
    pub c_tilde: f64,
    pub c1: f64,
    pub c2: f64,
    pub f_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub params: ProblemParams,
    pub mu0: f64,
    pub families: Vec<FamilySummary>,
    pub checks: Vec<Check>,
    pub overall: bool,
}

impl VerificationReport {
    pub fn new(params: ProblemParams, mu0: f64, families: Vec<FamilySummary>, checks: Vec<Check>) -> Self {
        let overall = checks.iter().all(|c| c.pass);
        Self { params, mu0, families, checks, overall }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV with header `name,measured,threshold,bound,pass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "name,measured,threshold,bound,pass")?;
        for c in &self.checks {
            let bound = match c.bound {
                Bound::Upper => "upper",
                Bound::Lower => "lower",
            };
            writeln!(
                w,
                "{},{},{},{},{}",
                c.name,
                crate::ode::fmt17(c.measured),
                crate::ode::fmt17(c.threshold),
                bound,
                c.pass
            )?;
        }
        Ok(())
    }
}

pub const RESIDUAL_TOL: f64 = 1e-9;
pub const INTEGRATION_TOL: f64 = 1e-10;
pub const TRAJECTORY_ERROR_TOL: f64 = 1e-6;
pub const DEFECT_TOL: f64 = 1e-8;
pub const MAX_LOCATION_TOL: f64 = 1e-6;
pub const SHOOTING_TOL: f64 = 1e-6;
pub const LIMIT_TOL: f64 = 1e-6;
pub const RATIO_TOL: f64 = 1e-10;
pub const ENERGY_TOL: f64 = 1e-10;
pub const FD_ORDER_MIN: f64 = 1.9;
/// Half-width of the integrated window around the maximum.
pub const TRAJECTORY_HALF_WIDTH: f64 = 10.0;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Observed order of the analytic first derivative against centered differences at `r`.
fn derivative_fd_order(fam: &SynchronizedFamily, r: f64) -> Result<f64> {
    let exact = fam.profile.derivatives(r)?.du;
    let errs: Vec<(f64, f64)> = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
        .iter()
        .map(|&h| Ok((h * r, (fd_derivative(|s| fam.profile.value(s), r, h * r, FdOrder::First)? - exact).abs())))
        .collect::<Result<_>>()?;
    convergence_order(&errs)
}

/// Checks for one family. `reference` is the unperturbed family the
/// integrated and shot trajectories are compared against (the integration
/// starts from the state of `fam`).
fn family_checks(idx: usize, fam: &SynchronizedFamily, reference: &SynchronizedFamily, grid: &RadialGrid) -> Vec<Check> {
    let p = *fam.params();
    let d = fam.profile.derived;
    let mu0 = fam.mu0();
    let t0 = mu0.ln();
    let name = |s: &str| format!("family{idx}.{s}");
    let mut checks = Vec::new();

    let consts = verify_constants_system(fam.c1, fam.c2, &p).map(|(a, b)| a.max(b));
    checks.push(Check::from_result(name("constants_residual"), consts, 1e-12, Bound::Upper));
    checks.push(Check::upper(name("ratio_identity"), rel(fam.c1 / fam.c2, fam.root.c_tilde), 1e-13));

    let pts = grid.points();
    checks.push(Check::from_result(
        name("radial_residual"),
        radial_system_residual(fam, pts).map(|(a, b)| a.max(b)),
        RESIDUAL_TOL,
        Bound::Upper,
    ));
    for (label, tau) in [("weighted_residual_tau1", d.tau1), ("weighted_residual_tau2", d.tau2)] {
        checks.push(Check::from_result(
            name(label),
            weighted_system_residual(fam, tau, pts).map(|(a, b)| a.max(b)),
            RESIDUAL_TOL,
            Bound::Upper,
        ));
    }
    let times: Vec<f64> = pts.iter().map(|r| r.ln()).collect();
    checks.push(Check::from_result(
        name("ef_residual"),
        ef_system_residual(fam, &times).map(|(a, b)| a.max(b)),
        RESIDUAL_TOL,
        Bound::Upper,
    ));
    checks.push(Check::from_result(
        name("derivative_fd_order"),
        derivative_fd_order(fam, mu0),
        FD_ORDER_MIN,
        Bound::Lower,
    ));

    match asymptotic_limits(fam) {
        Ok(a) => {
            let base0 = reference.c1 * d.amplitude * mu0.powf(-d.kappa);
            let base_inf = reference.c1 * d.amplitude * mu0.powf(d.kappa);
            checks.push(Check::upper(name("limit_at_zero"), rel(a.u0, base0), LIMIT_TOL));
            checks.push(Check::upper(name("limit_at_infinity"), rel(a.u_inf, base_inf), LIMIT_TOL));
            let ratio = fam.c1 / fam.c2;
            checks.push(Check::upper(
                name("limit_ratio"),
                rel(a.l_minus, ratio).max(rel(a.l_plus, ratio)),
                RATIO_TOL,
            ));
        }
        Err(e) => {
            for label in ["limit_at_zero", "limit_at_infinity", "limit_ratio"] {
                let tol = if label == "limit_ratio" { RATIO_TOL } else { LIMIT_TOL };
                checks.push(Check::from_result(name(label), Err(e.clone()), tol, Bound::Upper));
            }
        }
    }

    if p.nu == 0.0 {
        let energy = times
            .iter()
            .map(|&t| {
                let s = exact_ef_solution(fam, t);
                scalar_energy(s.y_u, s.p_u, &p).abs()
            })
            .fold(0.0f64, f64::max);
        checks.push(Check::upper(name("scalar_energy"), energy, ENERGY_TOL));
    }

    let start = exact_ef_solution(fam, t0);
    let traj = integrate_two_sided(&start, t0 - TRAJECTORY_HALF_WIDTH, t0 + TRAJECTORY_HALF_WIDTH, &p, INTEGRATION_TOL);
    let traj_err = traj.as_ref().map_err(|e| e.clone()).and_then(|tr| {
        if tr.termination != crate::ode::Termination::Completed {
            return Err(Error::IncompleteTrajectory { termination: tr.termination.to_string() });
        }
        Ok(tr
            .states
            .iter()
            .map(|s| {
                let e = exact_ef_solution(reference, s.t);
                (s.y_u - e.y_u).abs().max((s.y_v - e.y_v).abs())
            })
            .fold(0.0f64, f64::max))
    });
    checks.push(Check::from_result(name("integration_error"), traj_err, TRAJECTORY_ERROR_TOL, Bound::Upper));
    let c_tilde = fam.root.c_tilde;
    checks.push(Check::from_result(
        name("proportionality_defect"),
        traj.clone().and_then(|tr| proportionality_defect(&tr, c_tilde)),
        DEFECT_TOL,
        Bound::Upper,
    ));
    let quotient = traj.clone().and_then(|tr| {
        let (first, last) = (tr.states.first().ok_or(Error::EmptyTrajectory)?, tr.states.last().ok_or(Error::EmptyTrajectory)?);
        Ok(rel(first.y_u / first.y_v, c_tilde).max(rel(last.y_u / last.y_v, c_tilde)))
    });
    checks.push(Check::from_result(name("quotient_limits"), quotient, LIMIT_TOL, Bound::Upper));
    // crosses the maximum rather than starting on it
    let left = exact_ef_solution(fam, t0 - TRAJECTORY_HALF_WIDTH);
    let maxima = integrate(&left, t0 + TRAJECTORY_HALF_WIDTH, &p, INTEGRATION_TOL).and_then(|tr| simultaneous_max_check(&tr));
    checks.push(Check::from_result(
        name("simultaneous_max_gap"),
        maxima.clone().map(|(a, b)| (a - b).abs()),
        MAX_LOCATION_TOL,
        Bound::Upper,
    ));
    checks.push(Check::from_result(
        name("max_location"),
        maxima.map(|(a, b)| (a - t0).abs().max((b - t0).abs())),
        MAX_LOCATION_TOL,
        Bound::Upper,
    ));

    // the exact maximum of the sampled closed form
    let target = exact_ef_solution(reference, t0).y_u;
    let shot = shoot_synchronized(&p, &fam.root, &ShootingConfig::default()).map(|a| rel(a, target));
    checks.push(Check::from_result(name("shooting_recovery"), shot, SHOOTING_TOL, Bound::Upper));
    checks
}

fn summary(fam: &SynchronizedFamily) -> FamilySummary {
    FamilySummary { c_tilde: fam.root.c_tilde, c1: fam.c1, c2: fam.c2, f_prime: fam.root.f_prime }
}

/// Runs every check over the families of `p` at scale `mu0`.
pub fn full_verification(p: &ProblemParams, mu0: f64) -> Result<VerificationReport> {
    let families = classify(p, mu0)?;
    Ok(verify_families(p, mu0, &families, &families))
}

/// Report for `families`, compared against the closed forms of `reference`
/// (same length and order). Passing modified families exercises the failure path.
pub fn verify_families(
    p: &ProblemParams,
    mu0: f64,
    families: &[SynchronizedFamily],
    reference: &[SynchronizedFamily],
) -> VerificationReport {
    let grid = RadialGrid::default();
    let mut checks: Vec<Check> = families
        .par_iter()
        .zip(reference.par_iter())
        .enumerate()
        .map(|(i, (f, r))| family_checks(i, f, r, &grid))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    checks.insert(0, Check::lower("family_count", families.len() as f64, 1.0));
    VerificationReport::new(*p, mu0, families.iter().map(summary).collect(), checks)
}
