//! Emden-Fowler form of the radial system. With `y(t) = r^delta u(r)`,
//! `t = log r`, the radial equations become the autonomous system
//!
//! ```text
//! y_u'' = kappa^2 y_u - y_u^{2*-1} - nu alpha y_u^{alpha-1} y_v^beta
//! y_v'' = kappa^2 y_v - y_v^{2*-1} - nu beta  y_u^alpha   y_v^{beta-1}
//! ```
//!
//! Positive entire solutions are homoclinic orbits of the origin. This module
//! holds the vector field, closed-form orbits of synchronized families, an
//! adaptive Dormand-Prince 5(4) integrator, shooting for the orbit amplitude
//! and the residual checks of the three equivalent formulations.

use std::io::Write;

use serde::Serialize;

use crate::coupling::{CouplingRoot, SynchronizedFamily};
use crate::error::{Error, Result};
use crate::params::ProblemParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EFState {
    pub t: f64,
    pub y_u: f64,
    pub p_u: f64,
    pub y_v: f64,
    pub p_v: f64,
}

impl EFState {
    pub fn new(t: f64, y_u: f64, p_u: f64, y_v: f64, p_v: f64) -> Self {
        Self { t, y_u, p_u, y_v, p_v }
    }

    fn vector(&self) -> [f64; 4] {
        [self.y_u, self.p_u, self.y_v, self.p_v]
    }

    fn from_vector(t: f64, y: [f64; 4]) -> Self {
        Self::new(t, y[0], y[1], y[2], y[3])
    }

    fn is_finite(&self) -> bool {
        self.vector().iter().all(|v| v.is_finite()) && self.t.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Blowup,
    Extinction,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Termination::Completed => "completed",
            Termination::Blowup => "blowup",
            Termination::Extinction => "extinction",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EFTrajectory {
    pub states: Vec<EFState>,
    pub step_stats: StepStats,
    pub termination: Termination,
    /// Parameters of the vector field that generated the states.
    pub params: ProblemParams,
}

impl EFTrajectory {
    /// CSV with header `t,y_u,p_u,y_v,p_v`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,y_u,p_u,y_v,p_v")?;
        for s in &self.states {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt17(s.t),
                fmt17(s.y_u),
                fmt17(s.p_u),
                fmt17(s.y_v),
                fmt17(s.p_v)
            )?;
        }
        Ok(())
    }

    fn require_completed(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        if self.termination != Termination::Completed {
            return Err(Error::IncompleteTrajectory { termination: self.termination.to_string() });
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `(kappa_u^2, kappa_v^2) = (delta^2 - gamma1, delta^2 - gamma2)`.
fn kappa_squared(p: &ProblemParams) -> (f64, f64) {
    let d2 = p.delta() * p.delta();
    (d2 - p.gamma1, d2 - p.gamma2)
}

/// Vector field evaluated at a state with nonnegative components.
fn field(y: &[f64; 4], p: &ProblemParams) -> [f64; 4] {
    let (ku2, kv2) = kappa_squared(p);
    let (yu, yv) = (y[0].max(0.0), y[2].max(0.0));
    let e = p.two_star() - 1.0;
    // Common factor first: with alpha = beta the two terms are then bitwise
    // equal on the diagonal y_u = y_v, which the flow must preserve exactly.
    let (coupling_u, coupling_v) = if p.nu == 0.0 {
        (0.0, 0.0)
    } else {
        let common = p.nu * yu.powf(p.alpha - 1.0) * yv.powf(p.beta - 1.0);
        (common * (p.alpha * yv), common * (p.beta * yu))
    };
    [
        y[1],
        ku2 * yu - yu.powf(e) - coupling_u,
        y[3],
        kv2 * yv - yv.powf(e) - coupling_v,
    ]
}

/// `(y_u', y_u'', y_v', y_v'')` at a state.
pub fn ef_rhs(state: &EFState, p: &ProblemParams) -> Result<[f64; 4]> {
    if state.y_u < 0.0 {
        return Err(Error::NegativeComponent { name: "y_u", value: state.y_u });
    }
    if state.y_v < 0.0 {
        return Err(Error::NegativeComponent { name: "y_v", value: state.y_v });
    }
    if !state.is_finite() {
        return Err(Error::NonFiniteState { t: state.t });
    }
    Ok(field(&state.vector(), p))
}

/// Energy `(y')^2 / 2 - kappa^2 y^2 / 2 + y^{2*} / 2*` of one decoupled component;
/// conserved by the scalar equation and zero on its homoclinic orbit.
pub fn scalar_energy(y: f64, dy: f64, p: &ProblemParams) -> f64 {
    let (k2, _) = kappa_squared(p);
    let ts = p.two_star();
    0.5 * dy * dy - 0.5 * k2 * y * y + y.abs().powf(ts) / ts
}

/// Closed-form orbit of a synchronized family:
/// `y_u(t) = c1 A (2 cosh(kappa (t - t0) / delta))^{-delta}`, `t0 = log mu0`,
/// which equals `c1 A e^{kappa s} (1 + e^{2 kappa s / delta})^{-delta}`.
pub fn exact_ef_solution(fam: &SynchronizedFamily, t: f64) -> EFState {
    let d = &fam.profile.derived;
    let s = t - fam.mu0().ln();
    let x = d.kappa * s / d.delta;
    // ln(2 cosh x) without overflow
    let ln_2cosh = x.abs() + (-2.0 * x.abs()).exp().ln_1p();
    let shape = d.amplitude * (-d.delta * ln_2cosh).exp();
    let slope = -d.kappa * x.tanh();
    EFState::new(t, fam.c1 * shape, fam.c1 * shape * slope, fam.c2 * shape, fam.c2 * shape * slope)
}

/// States of the closed-form orbit at the given times.
pub fn exact_trajectory(fam: &SynchronizedFamily, times: &[f64]) -> EFTrajectory {
    EFTrajectory {
        states: times.iter().map(|&t| exact_ef_solution(fam, t)).collect(),
        step_stats: StepStats::default(),
        termination: Termination::Completed,
        params: *fam.params(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Relative local error tolerance per unit step; since steps never exceed
    /// 1 this also bounds the error of each step.
    pub tol: f64,
    pub blowup: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl IntegratorConfig {
    pub fn new(tol: f64) -> Self {
        Self { tol, blowup: 1e8, h_min: 1e-14, max_steps: 5_000_000 }
    }
}

/// Largest step. With the error-per-unit-step norm this keeps the local
/// error of every step below `tol` times the solution scale.
const H_MAX: f64 = 1.0;

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b_hat
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &[f64; 4], terms: &[(f64, &[f64; 4])], h: f64) -> [f64; 4] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..4 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One Dormand-Prince step. Returns the fifth-order solution, its derivative
/// (first stage of the next step) and the embedded error estimate.
fn dp_step(y: &[f64; 4], k1: &[f64; 4], h: f64, p: &ProblemParams) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let k2 = field(&axpy(y, &[(A21, k1)], h), p);
    let k3 = field(&axpy(y, &[(A31, k1), (A32, &k2)], h), p);
    let k4 = field(&axpy(y, &[(A41, k1), (A42, &k2), (A43, &k3)], h), p);
    let k5 = field(&axpy(y, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)], h), p);
    let k6 = field(&axpy(y, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h), p);
    let y_new = axpy(y, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
    let k7 = field(&y_new, p);
    let mut err = [0.0; 4];
    for i in 0..4 {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y_new, k7, err)
}

/// Error norm relative to the size of each `(y, y')` pair. The pair scale keeps
/// the norm meaningful where `y'` vanishes at a maximum. Callers divide by the
/// step length (error per unit step).
fn error_norm(y: &[f64; 4], y_new: &[f64; 4], err: &[f64; 4], tol: f64) -> f64 {
    let mut worst = 0.0f64;
    for pair in [0usize, 2] {
        let scale = [y[pair], y[pair + 1], y_new[pair], y_new[pair + 1]]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let e = err[pair].abs().max(err[pair + 1].abs());
        if e == 0.0 {
            continue;
        }
        worst = worst.max(e / (tol * scale.max(f64::MIN_POSITIVE)));
    }
    worst
}

/// What to do with a freshly accepted state.
enum Verdict {
    Continue,
    Stop(Termination),
}

fn default_events(s: &EFState, cfg: &IntegratorConfig) -> Verdict {
    if s.y_u < 0.0 || s.y_v < 0.0 {
        Verdict::Stop(Termination::Extinction)
    } else if s.y_u.abs() > cfg.blowup || s.y_v.abs() > cfg.blowup {
        Verdict::Stop(Termination::Blowup)
    } else {
        Verdict::Continue
    }
}

/// Forward integration in `t` from `t0` to `t1 > t0`.
fn integrate_forward<E>(
    y0: [f64; 4],
    t0: f64,
    t1: f64,
    p: &ProblemParams,
    cfg: &IntegratorConfig,
    mut events: E,
) -> Result<(Vec<EFState>, StepStats, Termination)>
where
    E: FnMut(&EFState) -> Verdict,
{
    let mut states = vec![EFState::from_vector(t0, y0)];
    let mut stats = StepStats::default();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = field(&y, p);
    let span = t1 - t0;
    let mut h = (0.5 * cfg.tol.powf(0.25)).min(span).min(H_MAX);
    let mut err_prev = 1e-4f64;
    const SAFETY: f64 = 0.9;
    const BETA: f64 = 0.04;
    // local error per unit step behaves like h^4
    let expo = 0.25 - 0.75 * BETA;

    while t < t1 {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t1;
        let step = if last { t1 - t } else { h };
        let (y_new, k7, err) = dp_step(&y, &k1, step, p);
        let en = error_norm(&y, &y_new, &err, cfg.tol) / step;
        if !en.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            h *= 0.2;
            if h < cfg.h_min {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            continue;
        }
        if en <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + step };
            y = y_new;
            k1 = k7;
            let mut state = EFState::from_vector(t, y);
            let verdict = events(&state);
            if let Verdict::Stop(term) = verdict {
                if term == Termination::Extinction {
                    state.y_u = state.y_u.max(0.0);
                    state.y_v = state.y_v.max(0.0);
                }
                states.push(state);
                return Ok((states, stats, term));
            }
            states.push(state);
            let fac = en.max(1e-10).powf(expo) / err_prev.powf(BETA) / SAFETY;
            h = (step / fac.clamp(0.1, 5.0)).min(H_MAX);
            err_prev = en.max(1e-4);
        } else {
            stats.rejected += 1;
            let fac = en.powf(expo) / SAFETY;
            h = step / fac.min(5.0);
            if h < cfg.h_min {
                return Err(Error::StepSizeUnderflow { t, h });
            }
        }
    }
    Ok((states, stats, Termination::Completed))
}

fn reversed(y: [f64; 4]) -> [f64; 4] {
    [y[0], -y[1], y[2], -y[3]]
}

fn integrate_with<E>(
    initial: &EFState,
    t_end: f64,
    p: &ProblemParams,
    cfg: &IntegratorConfig,
    mut events: E,
) -> Result<EFTrajectory>
where
    E: FnMut(&EFState) -> Verdict,
{
    if !(cfg.tol > 0.0) || !cfg.tol.is_finite() {
        return Err(Error::InvalidTolerance { tol: cfg.tol });
    }
    if !initial.is_finite() || !t_end.is_finite() {
        return Err(Error::NonFiniteState { t: initial.t });
    }
    let t0 = initial.t;
    if t_end == t0 {
        return Ok(EFTrajectory {
            states: vec![*initial],
            step_stats: StepStats::default(),
            termination: Termination::Completed,
            params: *p,
        });
    }
    let (states, step_stats, termination) = if t_end > t0 {
        integrate_forward(initial.vector(), t0, t_end, p, cfg, events)?
    } else {
        // t -> -t leaves the system invariant with y' -> -y'.
        let (states, stats, term) = integrate_forward(reversed(initial.vector()), -t0, -t_end, p, cfg, |s| {
            events(&EFState::from_vector(-s.t, reversed(s.vector())))
        })?;
        let states = states
            .into_iter()
            .map(|s| EFState::from_vector(-s.t, reversed(s.vector())))
            .collect();
        (states, stats, term)
    };
    Ok(EFTrajectory { states, step_stats, termination, params: *p })
}

/// Adaptive Dormand-Prince 5(4) integration from `initial.t` to `t_end`
/// (either direction). Stops early with `Blowup` when a component exceeds
/// `1e8` and with `Extinction` when one turns negative.
pub fn integrate(initial: &EFState, t_end: f64, p: &ProblemParams, tol: f64) -> Result<EFTrajectory> {
    integrate_config(initial, t_end, p, &IntegratorConfig::new(tol))
}

pub fn integrate_config(initial: &EFState, t_end: f64, p: &ProblemParams, cfg: &IntegratorConfig) -> Result<EFTrajectory> {
    integrate_with(initial, t_end, p, cfg, |s| default_events(s, cfg))
}

/// Integrates both halves from the state at `t_mid` and joins them into one
/// increasing-time trajectory on `[t_lo, t_hi]`.
pub fn integrate_two_sided(
    mid: &EFState,
    t_lo: f64,
    t_hi: f64,
    p: &ProblemParams,
    tol: f64,
) -> Result<EFTrajectory> {
    let back = integrate(mid, t_lo, p, tol)?;
    let fwd = integrate(mid, t_hi, p, tol)?;
    let termination = if back.termination != Termination::Completed {
        back.termination
    } else {
        fwd.termination
    };
    let mut states: Vec<EFState> = back.states.into_iter().rev().collect();
    states.extend(fwd.states.into_iter().skip(1));
    Ok(EFTrajectory {
        states,
        step_stats: StepStats {
            accepted: back.step_stats.accepted + fwd.step_stats.accepted,
            rejected: back.step_stats.rejected + fwd.step_stats.rejected,
        },
        termination,
        params: *p,
    })
}

/// Settings for the amplitude shooting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingConfig {
    /// Bracket for `y_u(0)`; `None` means `[y_eq / 2, 4 y_eq]` around the
    /// nonzero equilibrium `y_eq` of the equation restricted to `y_u = C y_v`.
    pub window: Option<(f64, f64)>,
    /// Integration horizon; `None` means `60 / kappa`.
    pub t_max: Option<f64>,
    pub decay: f64,
    pub blowup: f64,
    pub ode_tol: f64,
    /// Bisection stops at this relative bracket width.
    pub rel_width: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            window: None,
            t_max: None,
            decay: 1e-8,
            blowup: 1e8,
            ode_tol: 1e-12,
            rel_width: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShotOutcome {
    /// The orbit crosses zero: amplitude too large.
    Overshoot,
    /// The orbit turns back (or blows up) before decaying: amplitude too small.
    Undershoot,
    Decayed,
}

fn shoot_once(a: f64, c_tilde: f64, p: &ProblemParams, cfg: &ShootingConfig, t_max: f64) -> Result<ShotOutcome> {
    let mut icfg = IntegratorConfig::new(cfg.ode_tol);
    icfg.blowup = cfg.blowup;
    let mut outcome = None;
    let start = EFState::new(0.0, a, 0.0, a / c_tilde, 0.0);
    let traj = integrate_with(&start, t_max, p, &icfg, |s| {
        if s.y_u < 0.0 || s.y_v < 0.0 {
            outcome = Some(ShotOutcome::Overshoot);
            Verdict::Stop(Termination::Extinction)
        } else if s.y_u > cfg.blowup || s.y_v > cfg.blowup {
            outcome = Some(ShotOutcome::Undershoot);
            Verdict::Stop(Termination::Blowup)
        } else if s.p_u > 0.0 || s.p_v > 0.0 {
            outcome = Some(ShotOutcome::Undershoot);
            Verdict::Stop(Termination::Completed)
        } else {
            Verdict::Continue
        }
    })?;
    if let Some(o) = outcome {
        return Ok(o);
    }
    let last = traj.states.last().ok_or(Error::EmptyTrajectory)?;
    if last.y_u.abs() <= cfg.decay && last.y_v.abs() <= cfg.decay {
        Ok(ShotOutcome::Decayed)
    } else {
        Ok(ShotOutcome::Undershoot)
    }
}

/// On `y_u = C y_v` the first equation reads `y'' = kappa^2 y - K y^{2*-1}` with
/// `K = 1 + nu alpha C^{-beta}`; its positive equilibrium is `(kappa^2 / K)^{1/(2*-2)}`.
fn restricted_equilibrium(p: &ProblemParams, c_tilde: f64, kappa: f64) -> f64 {
    let k = 1.0 + p.nu * p.alpha * c_tilde.powf(-p.beta);
    (kappa * kappa / k).powf(1.0 / (p.two_star() - 2.0))
}

/// Amplitude `a* = y_u(0)` of the homoclinic orbit with a simultaneous maximum
/// at `t = 0` and `y_v = y_u / C`. Bisects the dichotomy between orbits that
/// cross zero and orbits that turn back.
pub fn shoot_synchronized(p: &ProblemParams, root: &CouplingRoot, search: &ShootingConfig) -> Result<f64> {
    let d = p.derived()?;
    let c = root.c_tilde;
    if !(c > 0.0) {
        return Err(Error::NonPositiveArgument { s: c });
    }
    let f = crate::coupling::coupling_f(c, p)?;
    if f.abs() > crate::coupling::ROOT_RESIDUAL_TOL * crate::coupling::local_scale(c, p) {
        return Err(Error::RootResidualTooLarge { c_tilde: c, residual: f.abs() });
    }
    let t_max = search.t_max.unwrap_or(60.0 / d.kappa);
    let (mut lo, mut hi) = match search.window {
        Some(w) => w,
        None => {
            let y_eq = restricted_equilibrium(p, c, d.kappa);
            (0.5 * y_eq, 4.0 * y_eq)
        }
    };
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::BracketNotFound { lo, hi });
    }
    match (shoot_once(lo, c, p, search, t_max)?, shoot_once(hi, c, p, search, t_max)?) {
        (ShotOutcome::Undershoot, ShotOutcome::Overshoot) => {}
        (ShotOutcome::Decayed, _) => return Ok(lo),
        (_, ShotOutcome::Decayed) => return Ok(hi),
        _ => return Err(Error::BracketNotFound { lo, hi }),
    }
    while hi - lo > search.rel_width * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot_once(mid, c, p, search, t_max)? {
            ShotOutcome::Overshoot => hi = mid,
            ShotOutcome::Undershoot => lo = mid,
            ShotOutcome::Decayed => return Ok(mid),
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `sup |y_u - C y_v| / sup y_u` over a completed trajectory.
pub fn proportionality_defect(traj: &EFTrajectory, c_tilde: f64) -> Result<f64> {
    traj.require_completed()?;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for s in &traj.states {
        num = num.max((s.y_u - c_tilde * s.y_v).abs());
        den = den.max(s.y_u.abs());
    }
    Ok(num / den.max(f64::MIN_POSITIVE))
}

/// Vertex of the parabola through three (possibly unevenly spaced) samples.
fn parabola_vertex(t: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (t[1] - t[0]);
    let d2 = (y[2] - y[1]) / (t[2] - t[1]);
    let curv = (d2 - d1) / (t[2] - t[0]);
    if curv == 0.0 {
        return t[1];
    }
    0.5 * (t[0] + t[1]) - d1 / (2.0 * curv)
}

/// Substep length used when locating a maximum between two stored states.
const REFINE_STEP: f64 = 5e-3;

/// Time where the slope of one component vanishes inside `[a, b]` (adjacent
/// states), located by bisection on single Dormand-Prince steps from `a`.
fn refine_slope_zero(a: &EFState, b: &EFState, slope_index: usize, p: &ProblemParams) -> Option<f64> {
    let y = a.vector();
    let k1 = field(&y, p);
    let h_total = b.t - a.t;
    let slope_at = |h: f64| -> f64 {
        if h == 0.0 {
            return y[slope_index];
        }
        // short substeps keep the local error far below the sampling error
        let m = (h.abs() / REFINE_STEP).ceil().max(1.0) as usize;
        let dh = h / m as f64;
        let (mut z, mut k) = (y, k1);
        for _ in 0..m {
            let (z_new, k_new, _) = dp_step(&z, &k, dh, p);
            z = z_new;
            k = k_new;
        }
        z[slope_index]
    };
    let (mut lo, mut hi) = (0.0, h_total);
    let (g_lo, g_hi) = (slope_at(lo), b.vector()[slope_index]);
    if g_lo == 0.0 {
        return Some(a.t);
    }
    if g_lo.signum() == g_hi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g = slope_at(mid);
        if g == 0.0 {
            return Some(a.t + mid);
        }
        if g.signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(a.t + 0.5 * (lo + hi))
}

fn argmax_time(traj: &EFTrajectory, component: &'static str) -> Result<f64> {
    let (value_index, slope_index) = if component == "y_u" { (0, 1) } else { (2, 3) };
    let vals: Vec<f64> = traj.states.iter().map(|s| s.vector()[value_index]).collect();
    let k = vals
        .iter()
        .enumerate()
        .fold(0usize, |best, (i, v)| if *v > vals[best] { i } else { best });
    if k == 0 || k + 1 == vals.len() {
        return Err(Error::MaximumOnBoundary { component });
    }
    let s = &traj.states;
    let guess = parabola_vertex([s[k - 1].t, s[k].t, s[k + 1].t], [vals[k - 1], vals[k], vals[k + 1]]);
    let increasing = s[0].t < s[s.len() - 1].t;
    // slope changes sign in the step before or after the sample maximum
    for (i, j) in [(k - 1, k), (k, k + 1)] {
        let (a, b) = if increasing { (&s[i], &s[j]) } else { (&s[j], &s[i]) };
        if let Some(t) = refine_slope_zero(a, b, slope_index, &traj.params) {
            return Ok(t);
        }
    }
    Ok(guess)
}

/// Times of the maxima of `y_u` and `y_v`: parabolic interpolation of the
/// sampled maximum, sharpened by locating the zero of the slope with single
/// integrator steps from the neighbouring state.
pub fn simultaneous_max_check(traj: &EFTrajectory) -> Result<(f64, f64)> {
    traj.require_completed()?;
    Ok((argmax_time(traj, "y_u")?, argmax_time(traj, "y_v")?))
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidGrid);
    }
    Ok(())
}

/// Sum of terms over the largest term magnitude, floored at 1.
fn normalized(terms: &[f64]) -> f64 {
    let sum: f64 = terms.iter().sum();
    let scale = terms.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    sum.abs() / scale
}

/// Pointwise residual of the radial system `(r^{n-1} u')' + r^{n-1}(...) = 0`
/// divided by `r^{n-1}` and normalized by the largest term (floored at 1).
/// Returns the maxima over the grid for both equations.
pub fn radial_system_residual(fam: &SynchronizedFamily, grid: &[f64]) -> Result<(f64, f64)> {
    check_grid(grid)?;
    let p = fam.params();
    let gamma = p.gamma()?;
    let n1 = p.n as f64 - 1.0;
    let e = p.two_star() - 1.0;
    let (mut ru, mut rv) = (0.0f64, 0.0f64);
    for &r in grid {
        let d = fam.profile.derivatives(r)?;
        let (u, du, d2u) = (fam.c1 * d.u, fam.c1 * d.du, fam.c1 * d.d2u);
        let (v, dv, d2v) = (fam.c2 * d.u, fam.c2 * d.du, fam.c2 * d.d2u);
        let cu = p.nu * p.alpha * u.powf(p.alpha - 1.0) * v.powf(p.beta);
        let cv = p.nu * p.beta * u.powf(p.alpha) * v.powf(p.beta - 1.0);
        ru = ru.max(normalized(&[d2u, n1 * du / r, gamma * u / (r * r), u.powf(e), cu]));
        rv = rv.max(normalized(&[d2v, n1 * dv / r, gamma * v / (r * r), v.powf(e), cv]));
    }
    Ok((ru, rv))
}

/// Residual of the weighted form for `u_tau = r^tau u`:
/// `(r^{n-1-2 tau} u_tau')' + r^{n-1-2* tau}(u_tau^{2*-1} + nu alpha u_tau^{alpha-1} v_tau^beta) = 0`,
/// divided by `r^{n-1-2 tau}` and normalized like [`radial_system_residual`].
/// The Hardy term disappears only when `tau` solves `tau^2 - (n-2) tau + gamma = 0`.
pub fn weighted_system_residual(fam: &SynchronizedFamily, tau: f64, grid: &[f64]) -> Result<(f64, f64)> {
    if !fam.profile.derived.is_tau_root(tau) {
        return Err(Error::TauNotARoot { tau });
    }
    check_grid(grid)?;
    let p = fam.params();
    let n = p.n as f64;
    let ts = p.two_star();
    let (mut ru, mut rv) = (0.0f64, 0.0f64);
    for &r in grid {
        let wd = fam.profile.weighted_derivatives(r, tau)?;
        let (w, dw, d2w) = (wd.u, wd.du, wd.d2u);
        let weight = r.powf(-(ts - 2.0) * tau);
        let (u, du, d2u) = (fam.c1 * w, fam.c1 * dw, fam.c1 * d2w);
        let (v, dv, d2v) = (fam.c2 * w, fam.c2 * dw, fam.c2 * d2w);
        let cu = p.nu * p.alpha * u.powf(p.alpha - 1.0) * v.powf(p.beta);
        let cv = p.nu * p.beta * u.powf(p.alpha) * v.powf(p.beta - 1.0);
        let drift = (n - 1.0 - 2.0 * tau) / r;
        ru = ru.max(normalized(&[d2u, drift * du, weight * u.powf(ts - 1.0), weight * cu]));
        rv = rv.max(normalized(&[d2v, drift * dv, weight * v.powf(ts - 1.0), weight * cv]));
    }
    Ok((ru, rv))
}

/// Residual of the Emden-Fowler system along closed-form states, using the
/// analytic second derivative of the orbit. Normalized like the other residuals.
pub fn ef_system_residual(fam: &SynchronizedFamily, times: &[f64]) -> Result<(f64, f64)> {
    let p = fam.params();
    let d = &fam.profile.derived;
    let e = p.two_star() - 1.0;
    let k2 = d.kappa * d.kappa;
    let (mut ru, mut rv) = (0.0f64, 0.0f64);
    for &t in times {
        let s = exact_ef_solution(fam, t);
        let x = d.kappa * (t - fam.mu0().ln()) / d.delta;
        let (th, sech2) = (x.tanh(), 1.0 / x.cosh().powi(2));
        let curvature = k2 * th * th - k2 / d.delta * sech2;
        let (yu, yv) = (s.y_u, s.y_v);
        let cu = p.nu * p.alpha * yu.powf(p.alpha - 1.0) * yv.powf(p.beta);
        let cv = p.nu * p.beta * yu.powf(p.alpha) * yv.powf(p.beta - 1.0);
        ru = ru.max(normalized(&[curvature * yu, -k2 * yu, yu.powf(e), cu]));
        rv = rv.max(normalized(&[curvature * yv, -k2 * yv, yv.powf(e), cv]));
    }
    Ok((ru, rv))
}
