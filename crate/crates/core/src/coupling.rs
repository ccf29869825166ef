//! The coupling function `f(s) = s^{2*-2} + nu alpha s^{alpha-2} - 1 - nu beta s^alpha`,
//! isolation of its positive roots, and the map from a root to the constants
//! `(c1, c2)` of a synchronized solution.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ProblemParams;
use crate::scalar::ScalarProfile;

/// Tolerance on `|f(C)|` (relative to the local term scale) for a usable root.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-12;
/// Tolerance on each equation of the constants system.
pub const CONSTANTS_RESIDUAL_TOL: f64 = 1e-12;

fn check_arg(s: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::NonPositiveArgument { s });
    }
    Ok(())
}

pub fn coupling_f(s: f64, p: &ProblemParams) -> Result<f64> {
    check_arg(s)?;
    let ts = p.two_star();
    Ok(s.powf(ts - 2.0) + p.nu * p.alpha * s.powf(p.alpha - 2.0) - 1.0 - p.nu * p.beta * s.powf(p.alpha))
}

pub fn coupling_f_prime(s: f64, p: &ProblemParams) -> Result<f64> {
    check_arg(s)?;
    let ts = p.two_star();
    Ok((ts - 2.0) * s.powf(ts - 3.0) + p.nu * p.alpha * (p.alpha - 2.0) * s.powf(p.alpha - 3.0)
        - p.nu * p.beta * p.alpha * s.powf(p.alpha - 1.0))
}

fn coupling_f_second(s: f64, p: &ProblemParams) -> f64 {
    let ts = p.two_star();
    let a = p.alpha;
    (ts - 2.0) * (ts - 3.0) * s.powf(ts - 4.0) + p.nu * a * (a - 2.0) * (a - 3.0) * s.powf(a - 4.0)
        - p.nu * p.beta * a * (a - 1.0) * s.powf(a - 2.0)
}

/// Largest magnitude among the four terms of `f(s)`, floored at 1.
pub fn local_scale(s: f64, p: &ProblemParams) -> f64 {
    let ts = p.two_star();
    [
        s.powf(ts - 2.0),
        p.nu * p.alpha * s.powf(p.alpha - 2.0),
        1.0,
        p.nu * p.beta * s.powf(p.alpha),
    ]
    .into_iter()
    .fold(1.0, f64::max)
}

/// Limit of `f` at an end of `(0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EndpointLimit {
    PositiveInfinity,
    NegativeInfinity,
    Finite(f64),
}

impl EndpointLimit {
    fn sign(self) -> f64 {
        match self {
            EndpointLimit::PositiveInfinity => 1.0,
            EndpointLimit::NegativeInfinity => -1.0,
            EndpointLimit::Finite(v) => v.signum() * (v != 0.0) as u8 as f64,
        }
    }
}

/// Limit of `f(s)` as `s -> 0+`: `+inf` if `alpha < 2`, `nu alpha - 1` if
/// `alpha = 2`, `-1` otherwise (and `-1` in the decoupled case).
pub fn limit_at_zero(p: &ProblemParams) -> EndpointLimit {
    if p.nu == 0.0 || p.alpha > 2.0 {
        EndpointLimit::Finite(-1.0)
    } else if p.alpha < 2.0 {
        EndpointLimit::PositiveInfinity
    } else {
        EndpointLimit::Finite(p.nu * p.alpha - 1.0)
    }
}

/// Limit of `f(s)` as `s -> inf`. The leading power is `s^{2*-2} = s^{alpha + beta - 2}`
/// against `-nu beta s^alpha`, so the sign is decided by `beta` versus 2.
pub fn limit_at_infinity(p: &ProblemParams) -> EndpointLimit {
    if p.nu == 0.0 || p.beta > 2.0 {
        return EndpointLimit::PositiveInfinity;
    }
    if p.beta < 2.0 {
        return EndpointLimit::NegativeInfinity;
    }
    let lead = 1.0 - p.nu * p.beta;
    if lead > 0.0 {
        EndpointLimit::PositiveInfinity
    } else if lead < 0.0 {
        EndpointLimit::NegativeInfinity
    } else if p.alpha > 2.0 {
        EndpointLimit::PositiveInfinity
    } else if p.alpha < 2.0 {
        EndpointLimit::Finite(-1.0)
    } else {
        EndpointLimit::Finite(p.nu * p.alpha - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSearch {
    pub s_lo: f64,
    pub s_hi: f64,
    pub grid_points: usize,
    /// Bisection stops when the bracket is narrower than this (relative to `max(1, s)`).
    pub bracket_width: f64,
    /// `|s f'(s)| <= threshold * local_scale(s)` marks a root as tangential.
    pub degeneracy_threshold: f64,
    /// `|f| <= threshold * local_scale` at a local minimum of `|f|` without a
    /// sign change marks a tangential candidate.
    pub tangency_residual: f64,
}

impl Default for RootSearch {
    fn default() -> Self {
        Self {
            s_lo: 1e-8,
            s_hi: 1e8,
            grid_points: 4096,
            bracket_width: 1e-13,
            degeneracy_threshold: 1e-8,
            tangency_residual: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingRoot {
    pub c_tilde: f64,
    pub f_residual: f64,
    pub f_prime: f64,
    pub is_degenerate: bool,
}

impl CouplingRoot {
    /// Evaluates residual and slope at `s`.
    pub fn at(s: f64, p: &ProblemParams, degeneracy_threshold: f64) -> Result<Self> {
        let f = coupling_f(s, p)?;
        let fp = coupling_f_prime(s, p)?;
        Ok(Self {
            c_tilde: s,
            f_residual: f.abs(),
            f_prime: fp,
            is_degenerate: (s * fp).abs() <= degeneracy_threshold * local_scale(s, p),
        })
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Bisection on a sign-changing bracket followed by Newton steps that are
/// only accepted while they stay inside the bracket.
fn polish_bracket<F, G>(f: &F, fp: &G, mut lo: f64, mut hi: f64, width: f64) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    for _ in 0..400 {
        if hi - lo <= width * lo.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let fx = f(x);
        if fx == 0.0 {
            break;
        }
        let d = fp(x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - fx / d;
        if !(next >= lo && next <= hi) {
            break;
        }
        if f(next).abs() > fx.abs() {
            break;
        }
        let done = (next - x).abs() <= 4.0 * f64::EPSILON * x.abs();
        x = next;
        if done {
            break;
        }
    }
    x
}

/// All positive roots of `f` in `[s_lo, s_hi]`, ascending. Sign changes on a
/// log grid are bisected and Newton-polished; local minima of `|f|` that touch
/// zero without a sign change are reported with `is_degenerate = true`.
pub fn find_positive_roots(p: &ProblemParams, opts: &RootSearch) -> Result<Vec<CouplingRoot>> {
    check_arg(opts.s_lo)?;
    check_arg(opts.s_hi)?;
    if opts.s_hi <= opts.s_lo || opts.grid_points < 3 {
        return Err(Error::InvalidRange(format!(
            "root window [{}, {}] with {} points",
            opts.s_lo, opts.s_hi, opts.grid_points
        )));
    }
    let probe = log_grid(opts.s_lo, opts.s_hi, 64);
    if probe.iter().all(|&s| coupling_f(s, p).is_ok_and(|v| v.abs() <= opts.tangency_residual * local_scale(s, p))) {
        return Err(Error::VanishingCoupling);
    }
    let isolated = isolate_roots(
        |s| coupling_f(s, p).unwrap_or(f64::NAN),
        |s| coupling_f_prime(s, p).unwrap_or(f64::NAN),
        |s| coupling_f_second(s, p),
        |s| local_scale(s, p),
        opts,
    );
    let mut roots = Vec::with_capacity(isolated.len());
    for (s, tangential) in isolated {
        let mut r = CouplingRoot::at(s, p, opts.degeneracy_threshold)?;
        r.is_degenerate |= tangential;
        roots.push(r);
    }

    if roots.is_empty() {
        let (l0, linf) = (limit_at_zero(p), limit_at_infinity(p));
        if l0.sign() * linf.sign() < 0.0 {
            log::warn!(
                "f has opposite end limits ({l0:?}, {linf:?}) but no sign change in [{}, {}]; roots may lie outside the window",
                opts.s_lo,
                opts.s_hi
            );
        } else {
            log::warn!("no sign change of f in [{}, {}]; end limits {l0:?}, {linf:?}", opts.s_lo, opts.s_hi);
        }
    }
    Ok(roots)
}

/// Root isolation for a smooth function on a log grid. Returns `(s, tangential)`
/// pairs, ascending and deduplicated.
fn isolate_roots<F, G, H, S>(f: F, fp: G, fpp: H, scale: S, opts: &RootSearch) -> Vec<(f64, bool)>
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
    S: Fn(f64) -> f64,
{
    let grid = log_grid(opts.s_lo, opts.s_hi, opts.grid_points);
    let values: Vec<f64> = grid.par_iter().map(|&s| f(s)).collect();

    let mut out: Vec<(f64, bool)> = Vec::new();
    for i in 0..grid.len() {
        if values[i] == 0.0 {
            out.push((grid[i], false));
            continue;
        }
        if i + 1 < grid.len() && values[i + 1] != 0.0 && values[i].signum() != values[i + 1].signum() {
            out.push((polish_bracket(&f, &fp, grid[i], grid[i + 1], opts.bracket_width), false));
        }
        if i > 0 && i + 1 < grid.len() {
            let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
            let same_sign = a.signum() == b.signum() && b.signum() == c.signum();
            if same_sign && b.abs() <= a.abs() && b.abs() <= c.abs() {
                let (dlo, dhi) = (fp(grid[i - 1]), fp(grid[i + 1]));
                if dlo.signum() != dhi.signum() {
                    let s = polish_bracket(&fp, &fpp, grid[i - 1], grid[i + 1], opts.bracket_width);
                    if f(s).abs() <= opts.tangency_residual * scale(s) {
                        out.push((s, true));
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.dedup_by(|b, a| {
        let same = (a.0 - b.0).abs() <= 1e-12 * a.0.max(1.0);
        if same {
            a.1 |= b.1;
        }
        same
    });
    out
}

/// `(c1, c2)` from a root `C`: `c2 = (1 + nu beta C^alpha)^{-1/(2*-2)}`, `c1 = C c2`.
/// Both equations of the constants system are checked afterwards.
pub fn constants_from_root(root: &CouplingRoot, p: &ProblemParams) -> Result<(f64, f64)> {
    let s = root.c_tilde;
    let f = coupling_f(s, p)?;
    if f.abs() > ROOT_RESIDUAL_TOL * local_scale(s, p) {
        return Err(Error::RootResidualTooLarge { c_tilde: s, residual: f.abs() });
    }
    let c2 = (1.0 + p.nu * p.beta * s.powf(p.alpha)).powf(-1.0 / (p.two_star() - 2.0));
    let c1 = s * c2;
    let (res1, res2) = verify_constants_system(c1, c2, p)?;
    if res1 > CONSTANTS_RESIDUAL_TOL || res2 > CONSTANTS_RESIDUAL_TOL {
        return Err(Error::ConstantsResidual { res1, res2 });
    }
    Ok((c1, c2))
}

/// Absolute residuals of
/// `c1^{2*-2} + nu alpha c1^{alpha-2} c2^beta = 1` and
/// `c2^{2*-2} + nu beta c1^alpha c2^{beta-2} = 1`.
pub fn verify_constants_system(c1: f64, c2: f64, p: &ProblemParams) -> Result<(f64, f64)> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::NonPositiveConstants { c1, c2 });
    }
    let e = p.two_star() - 2.0;
    let (a, b, nu) = (p.alpha, p.beta, p.nu);
    let res1 = (c1.powf(e) + nu * a * c1.powf(a - 2.0) * c2.powf(b) - 1.0).abs();
    let res2 = (c2.powf(e) + nu * b * c1.powf(a) * c2.powf(b - 2.0) - 1.0).abs();
    Ok((res1, res2))
}

/// One synchronized solution `(c1 U_mu0, c2 U_mu0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynchronizedFamily {
    pub root: CouplingRoot,
    pub c1: f64,
    pub c2: f64,
    pub profile: ScalarProfile,
}

impl SynchronizedFamily {
    pub fn params(&self) -> &ProblemParams {
        &self.profile.params
    }

    pub fn mu0(&self) -> f64 {
        self.profile.mu
    }

    /// `(u, v)` at radius `r`.
    pub fn values(&self, r: f64) -> Result<(f64, f64)> {
        let w = self.profile.value(r)?;
        Ok((self.c1 * w, self.c2 * w))
    }

    /// Same family with both constants multiplied by `factor`. The result is
    /// no longer a solution unless `factor == 1`; used to exercise failing checks.
    pub fn with_scaled_amplitude(&self, factor: f64) -> Self {
        Self { c1: self.c1 * factor, c2: self.c2 * factor, ..*self }
    }
}

/// Every synchronized family for `p`, one per non-degenerate positive root of `f`.
pub fn classify(p: &ProblemParams, mu0: f64) -> Result<Vec<SynchronizedFamily>> {
    classify_with(p, mu0, &RootSearch::default())
}

pub fn classify_with(p: &ProblemParams, mu0: f64, opts: &RootSearch) -> Result<Vec<SynchronizedFamily>> {
    p.gamma()?;
    let profile = ScalarProfile::new(p, mu0)?;
    let roots = find_positive_roots(p, opts)?;
    let mut families = Vec::with_capacity(roots.len());
    for root in roots {
        if root.is_degenerate {
            log::warn!("tangential root C = {} excluded from classification", root.c_tilde);
            continue;
        }
        let (c1, c2) = constants_from_root(&root, p)?;
        families.push(SynchronizedFamily { root, c1, c2, profile });
    }
    Ok(families)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u32, nu: f64, alpha: f64) -> ProblemParams {
        ProblemParams::symmetric(n, 0.0, nu, alpha).unwrap()
    }

    #[test]
    fn f_examples() {
        assert_eq!(coupling_f(1.0, &p(4, 1.0, 2.0)).unwrap(), 0.0);
        assert_eq!(coupling_f(1.0, &p(3, 1.0, 3.0)).unwrap(), 0.0);
        let dec = p(5, 0.0, 5.0 / 3.0);
        assert_eq!(coupling_f(1.0, &dec).unwrap(), 0.0);
        let mut prev = coupling_f(0.01, &dec).unwrap();
        for k in 1..200 {
            let v = coupling_f(0.01 * 1.05f64.powi(k), &dec).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(matches!(coupling_f(0.0, &dec), Err(Error::NonPositiveArgument { .. })));
        assert!(coupling_f_prime(-1.0, &dec).is_err());
    }

    #[test]
    fn f_prime_examples() {
        assert_eq!(coupling_f_prime(1.0, &p(4, 1.0, 2.0)).unwrap(), -2.0);
        assert_eq!(coupling_f_prime(1.0, &p(4, 0.0, 2.0)).unwrap(), 2.0);
    }

    #[test]
    fn root_examples() {
        let roots = find_positive_roots(&p(4, 1.0, 2.0), &RootSearch::default()).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].c_tilde - 1.0).abs() < 1e-14);

        let roots = find_positive_roots(&p(3, 1.0, 3.0), &RootSearch::default()).unwrap();
        let expected = [(3.0 - 5f64.sqrt()) / 2.0, 1.0, (3.0 + 5f64.sqrt()) / 2.0];
        assert_eq!(roots.len(), 3);
        for (r, e) in roots.iter().zip(expected) {
            assert!((r.c_tilde - e).abs() < 1e-13, "{} vs {e}", r.c_tilde);
            assert!(!r.is_degenerate);
        }

        let roots = find_positive_roots(&p(5, 0.0, 5.0 / 3.0), &RootSearch::default()).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].c_tilde - 1.0).abs() < 1e-14);
    }

    #[test]
    fn triple_root_is_flagged() {
        // n = 3, alpha = beta = 3: f = (s^2 - 1)(s^2 - 3 nu s + 1); at nu = 2/3
        // this is (s - 1)^3 (s + 1).
        let q = ProblemParams::symmetric(3, 0.0, 2.0 / 3.0, 3.0).unwrap();
        let roots = find_positive_roots(&q, &RootSearch::default()).unwrap();
        assert!(!roots.is_empty());
        assert!(roots.iter().all(|r| (r.c_tilde - 1.0).abs() < 1e-4));
        assert!(roots.iter().all(|r| r.is_degenerate));
        assert!(classify(&q, 1.0).unwrap().is_empty());
    }

    #[test]
    fn touching_zero_without_sign_change_is_tangential() {
        let f = |s: f64| (s - 2.0).powi(2) * (s + 1.0);
        let fp = |s: f64| 2.0 * (s - 2.0) * (s + 1.0) + (s - 2.0).powi(2);
        let fpp = |s: f64| 2.0 * (s + 1.0) + 4.0 * (s - 2.0);
        let opts = RootSearch { s_lo: 1e-3, s_hi: 1e3, ..RootSearch::default() };
        let out = isolate_roots(f, fp, fpp, |_| 1.0, &opts);
        assert_eq!(out.len(), 1);
        assert!((out[0].0 - 2.0).abs() < 1e-9);
        assert!(out[0].1);
    }

    #[test]
    fn constants_examples() {
        let q = p(4, 1.0, 2.0);
        let root = CouplingRoot::at(1.0, &q, 1e-8).unwrap();
        let (c1, c2) = constants_from_root(&root, &q).unwrap();
        let e = 1.0 / 3f64.sqrt();
        assert!((c1 - e).abs() < 1e-15 && (c2 - e).abs() < 1e-15);

        let q = p(3, 1.0, 3.0);
        let (c1, c2) = constants_from_root(&CouplingRoot::at(1.0, &q, 1e-8).unwrap(), &q).unwrap();
        assert!((c1 - 0.5f64.sqrt()).abs() < 1e-15 && (c2 - 0.5f64.sqrt()).abs() < 1e-15);

        let q = p(4, 0.0, 2.0);
        let (c1, c2) = constants_from_root(&CouplingRoot::at(1.0, &q, 1e-8).unwrap(), &q).unwrap();
        assert_eq!((c1, c2), (1.0, 1.0));

        let bad = CouplingRoot::at(1.5, &p(4, 1.0, 2.0), 1e-8).unwrap();
        assert!(matches!(constants_from_root(&bad, &p(4, 1.0, 2.0)), Err(Error::RootResidualTooLarge { .. })));
    }

    #[test]
    fn constants_system_examples() {
        let e = 1.0 / 3f64.sqrt();
        let (r1, r2) = verify_constants_system(e, e, &p(4, 1.0, 2.0)).unwrap();
        assert!(r1 <= 1e-15 && r2 <= 1e-15);
        assert_eq!(verify_constants_system(1.0, 1.0, &p(4, 0.0, 2.0)).unwrap(), (0.0, 0.0));
        assert_eq!(verify_constants_system(1.0, 1.0, &p(4, 1.0, 2.0)).unwrap(), (2.0, 2.0));
        assert!(verify_constants_system(0.0, 1.0, &p(4, 1.0, 2.0)).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&p(3, 1.0, 3.0), 1.0).unwrap().len(), 3);
        assert_eq!(classify(&p(4, 1.0, 2.0), 1.0).unwrap().len(), 1);
        let fams = classify(&p(4, 0.0, 2.0), 1.0).unwrap();
        assert_eq!(fams.len(), 1);
        assert_eq!((fams[0].c1, fams[0].c2), (1.0, 1.0));
        let uneq = ProblemParams::new(4, 0.1, 0.2, 1.0, 2.0, 2.0).unwrap();
        assert!(matches!(classify(&uneq, 1.0), Err(Error::UnequalGamma { .. })));
    }

    #[test]
    fn endpoint_limits_match_evaluation() {
        let cases = [
            p(3, 1.0, 3.0),
            p(4, 1.0, 2.0),
            p(4, 0.3, 2.0),
            p(5, 1.0, 5.0 / 3.0),
            p(3, 1.0, 1.5),
            p(3, 1.0, 4.5),
            p(6, 2.0, 1.2),
            p(4, 0.0, 2.0),
        ];
        for q in cases {
            let near0 = coupling_f(1e-8, &q).unwrap();
            match limit_at_zero(&q) {
                EndpointLimit::PositiveInfinity => assert!(near0 > 1.0, "{q:?}"),
                EndpointLimit::NegativeInfinity => assert!(near0 < -1.0, "{q:?}"),
                EndpointLimit::Finite(v) => assert!((near0 - v).abs() < 1e-6, "{q:?}"),
            }
            let far = coupling_f(1e8, &q).unwrap();
            match limit_at_infinity(&q) {
                EndpointLimit::PositiveInfinity => assert!(far > 1.0, "{q:?}"),
                EndpointLimit::NegativeInfinity => assert!(far < -1.0, "{q:?}"),
                EndpointLimit::Finite(v) => assert!((far - v).abs() < 1e-6, "{q:?}"),
            }
        }
    }
}
