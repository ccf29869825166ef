//! Closed-form radial objects: the Terracini profile (Aubin-Talenti bubble when
//! gamma = 0), its radial derivatives, the Kelvin transform, the weighted
//! transform `r^tau u`, the translated Hardy weight and limit extraction.

use serde::Serialize;

use crate::coupling::SynchronizedFamily;
use crate::error::{Error, Result};
use crate::params::{DerivedConstants, ProblemParams};

/// Smallest radius accepted by the profile evaluators.
pub const MIN_RADIUS: f64 = 1e-300;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic `1 / (1 + e^-x)` and its complement, both without cancellation.
fn logistic_pair(x: f64) -> (f64, f64) {
    if x >= 0.0 {
        let e = (-x).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = x.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveRadius { r });
    }
    if r < MIN_RADIUS {
        return Err(Error::RadiusUnderflow { r });
    }
    Ok(())
}

/// Value and first two radial derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialDerivatives {
    pub u: f64,
    pub du: f64,
    pub d2u: f64,
}

/// The Terracini solution `U_mu(r) = mu^{(2-n)/2} U(r / mu)` with
/// `U(r) = A / (r^tau1 (1 + r^q)^delta)`, `q = 2 kappa / delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProfile {
    pub params: ProblemParams,
    pub mu: f64,
    pub derived: DerivedConstants,
}

impl ScalarProfile {
    pub fn new(params: &ProblemParams, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidScale { mu });
        }
        Ok(Self { params: *params, mu, derived: params.derived()? })
    }

    /// Profile of the decoupled scalar equation for `(n, gamma)`.
    pub fn scalar(n: u32, gamma: f64, mu: f64) -> Result<Self> {
        let p = ProblemParams::symmetric(n, gamma, 0.0, crate::params::critical_exponent(n)? / 2.0)?;
        Self::new(&p, mu)
    }

    pub fn n(&self) -> u32 {
        self.derived.n
    }

    /// `mu^{-delta}`, the scale prefactor.
    fn prefactor(&self) -> f64 {
        self.mu.powf(-self.derived.delta)
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        let d = &self.derived;
        let rho = r / self.mu;
        let ln_rho = rho.ln();
        let x = d.profile_exponent() * ln_rho;
        let core = if x.abs() < 700.0 {
            rho.powf(-d.tau1) * (1.0 + x.exp()).powf(-d.delta)
        } else {
            (-d.tau1 * ln_rho - d.delta * softplus(x)).exp()
        };
        Ok(d.amplitude * self.prefactor() * core)
    }

    /// Closed-form `u`, `u'`, `u''`.
    ///
    /// With `w = rho^q / (1 + rho^q)` and `g = -tau1 - 2 kappa w`:
    /// `u' = u g / r`, `u'' = u (g^2 - g - (4 kappa^2 / delta) w (1 - w)) / r^2`.
    pub fn derivatives(&self, r: f64) -> Result<RadialDerivatives> {
        self.log_form(r, 0.0)
    }

    /// Closed-form derivatives of `r^tau U_mu(r)`. Same formulas with
    /// `g + tau` in place of `g`, which avoids the cancellation of
    /// `u' + tau u / r` near the origin when `tau = tau1`.
    pub fn weighted_derivatives(&self, r: f64, tau: f64) -> Result<RadialDerivatives> {
        self.log_form(r, tau)
    }

    fn log_form(&self, r: f64, tau: f64) -> Result<RadialDerivatives> {
        let u = r.powf(tau) * self.value(r)?;
        let d = &self.derived;
        let x = d.profile_exponent() * (r / self.mu).ln();
        let (w, one_minus_w) = logistic_pair(x);
        let g = (tau - d.tau1) - 2.0 * d.kappa * w;
        let curvature = 4.0 * d.kappa * d.kappa / d.delta * w * one_minus_w;
        Ok(RadialDerivatives {
            u,
            du: u * g / r,
            d2u: u * (g * g - g - curvature) / (r * r),
        })
    }

    /// `lim_{r -> 0} r^tau1 U_mu(r) = A mu^{-kappa}`.
    pub fn limit_at_zero(&self) -> f64 {
        self.derived.amplitude * self.mu.powf(-self.derived.kappa)
    }

    /// `lim_{r -> inf} r^tau2 U_mu(r) = A mu^{kappa}`.
    pub fn limit_at_infinity(&self) -> f64 {
        self.derived.amplitude * self.mu.powf(self.derived.kappa)
    }
}

/// Radial Kelvin transform `r^{2-n} u(1/r)`.
pub fn kelvin_transform<F>(u: F, n: u32, r: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    check_radius(r)?;
    Ok(r.powf(2.0 - n as f64) * u(1.0 / r)?)
}

/// `r^tau u(r)`.
pub fn weighted_transform<F>(u: F, tau: f64, r: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    check_radius(r)?;
    Ok(r.powf(tau) * u(r)?)
}

/// Sampled range of `r^{n-2} K[u](r)` over a log grid on `[r_lo, r_hi]`.
pub fn kelvin_decay_bounds(profile: &ScalarProfile, r_lo: f64, r_hi: f64, samples: usize) -> Result<(f64, f64)> {
    let n = profile.n();
    let grid = crate::verify::RadialGrid::log_uniform(r_lo, r_hi, samples)?;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &r in grid.points() {
        let c = r.powf(n as f64 - 2.0) * kelvin_transform(|s| profile.value(s), n, r)?;
        lo = lo.min(c);
        hi = hi.max(c);
    }
    Ok((lo, hi))
}

/// `|x|^{n-2} K[u_{x0}](x)` for the profile translated to `x0`, i.e.
/// `U_mu(|x / |x|^2 - x0|)`. Stays bounded as `|x| -> inf` when `x0 != 0`.
pub fn translated_kelvin_compensated(profile: &ScalarProfile, x: &[f64], x0: &[f64]) -> Result<f64> {
    check_lengths(x, x0)?;
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    let dist2: f64 = x.iter().zip(x0).map(|(xi, ci)| (xi / norm2 - ci).powi(2)).sum();
    profile.value(dist2.sqrt())
}

fn check_lengths(x: &[f64], x0: &[f64]) -> Result<()> {
    if x.len() != x0.len() {
        return Err(Error::DimensionMismatch { left: x.len(), right: x0.len() });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `f_{x0}(x) = |x - x0 |x|^2|^2 = |x|^2 (1 - 2<x, x0> + |x0|^2 |x|^2)`.
pub fn hardy_weight_f(x: &[f64], x0: &[f64]) -> Result<f64> {
    check_lengths(x, x0)?;
    let xx = dot(x, x);
    Ok(xx * (1.0 - 2.0 * dot(x, x0) + dot(x0, x0) * xx))
}

/// `d f_{x0} / d x_1 = 2 x_1 (1 - 2<x, x0> + 2 |x0|^2 |x|^2)`, valid when `x0_1 = 0`.
pub fn hardy_weight_dx1(x: &[f64], x0: &[f64]) -> Result<f64> {
    check_lengths(x, x0)?;
    if x0.is_empty() {
        return Err(Error::DimensionMismatch { left: 0, right: 1 });
    }
    if x0[0] != 0.0 {
        return Err(Error::PointOffHyperplane { x0_1: x0[0] });
    }
    Ok(2.0 * x[0] * (1.0 - 2.0 * dot(x, x0) + 2.0 * dot(x0, x0) * dot(x, x)))
}

/// Limits of the weighted components at both ends of `(0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticData {
    pub u0: f64,
    pub v0: f64,
    pub u_inf: f64,
    pub v_inf: f64,
    pub l_minus: f64,
    pub l_plus: f64,
}

/// Relative agreement demanded between the two final extrapolants.
pub const EXTRAPOLATION_TOL: f64 = 1e-6;

/// Two-level Richardson extrapolation of `g(r_k)` where
/// `g(r) = L (1 + a r^q + b r^{2q} + ...)` along a geometric sequence `r_k`
/// with ratio `ratio < 1` towards the limit point.
fn richardson_two_level(samples: &[f64], ratio_pow_q: f64) -> Result<f64> {
    let level1: Vec<f64> = samples
        .windows(2)
        .map(|w| (w[1] - ratio_pow_q * w[0]) / (1.0 - ratio_pow_q))
        .collect();
    let rho2 = ratio_pow_q * ratio_pow_q;
    let level2: Vec<f64> = level1
        .windows(2)
        .map(|w| (w[1] - rho2 * w[0]) / (1.0 - rho2))
        .collect();
    let (a, b) = match level2.as_slice() {
        [.., a, b] => (*a, *b),
        _ => return Err(Error::NonConvergence { a: f64::NAN, b: f64::NAN }),
    };
    if (a - b).abs() > EXTRAPOLATION_TOL * b.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NonConvergence { a, b });
    }
    Ok(b)
}

/// Estimates `lim r^tau1 u` at `0+` along `r = 10^-k` and `lim r^tau2 u` at
/// infinity along `r = 10^k`, `k = 4..=8`.
pub fn asymptotic_limits(fam: &SynchronizedFamily) -> Result<AsymptoticData> {
    let profile = &fam.profile;
    let d = &profile.derived;
    let ratio_pow_q = 10f64.powf(-d.profile_exponent());
    let ks = 4..=8;
    let inner: Vec<f64> = ks
        .clone()
        .map(|k| {
            let r = 10f64.powi(-k);
            weighted_transform(|s| profile.value(s), d.tau1, r)
        })
        .collect::<Result<_>>()?;
    let outer: Vec<f64> = ks
        .map(|k| {
            let r = 10f64.powi(k);
            weighted_transform(|s| profile.value(s), d.tau2, r)
        })
        .collect::<Result<_>>()?;
    let base0 = richardson_two_level(&inner, ratio_pow_q)?;
    let base_inf = richardson_two_level(&outer, ratio_pow_q)?;
    let (u0, v0) = (fam.c1 * base0, fam.c2 * base0);
    let (u_inf, v_inf) = (fam.c1 * base_inf, fam.c2 * base_inf);
    Ok(AsymptoticData { u0, v0, u_inf, v_inf, l_minus: u0 / v0, l_plus: u_inf / v_inf })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bubble4(r: f64) -> f64 {
        8f64.sqrt() / (1.0 + r * r)
    }

    fn talenti(n: u32, r: f64) -> f64 {
        let nf = n as f64;
        ((nf * (nf - 2.0)).sqrt() / (1.0 + r * r)).powf((nf - 2.0) / 2.0)
    }

    #[test]
    fn value_examples() {
        let p4 = ScalarProfile::scalar(4, 0.0, 1.0).unwrap();
        assert!((p4.value(1.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        for &r in &[1e-6, 0.01, 0.5, 1.0, 3.0, 100.0, 1e6] {
            let v = p4.value(r).unwrap();
            assert!((v - bubble4(r)).abs() <= 1e-14 * bubble4(r));
            for n in 3..=6 {
                let pn = ScalarProfile::scalar(n, 0.0, 1.0).unwrap();
                let t = talenti(n, r);
                assert!((pn.value(r).unwrap() - t).abs() <= 1e-13 * t, "n={n} r={r}");
            }
        }
        let p3 = ScalarProfile::scalar(3, 0.1875, 1.0).unwrap();
        let a = crate::params::amplitude(3, 0.1875).unwrap();
        assert!((p3.value(1.0).unwrap() - a * 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        let p = ScalarProfile::scalar(3, 0.1, 1.0).unwrap();
        assert!(matches!(p.value(0.0), Err(Error::NonPositiveRadius { .. })));
        assert!(matches!(p.value(-1.0), Err(Error::NonPositiveRadius { .. })));
        assert!(matches!(p.value(1e-310), Err(Error::RadiusUnderflow { .. })));
        assert!(p.value(1e-300).unwrap().is_finite());
        assert!(matches!(p.derivatives(0.0), Err(Error::NonPositiveRadius { .. })));
        assert!(ScalarProfile::scalar(3, 0.1, 0.0).is_err());
    }

    #[test]
    fn bubble_slope_vanishes_at_origin() {
        let p = ScalarProfile::scalar(4, 0.0, 1.0).unwrap();
        let d = p.derivatives(1e-9).unwrap();
        assert!(d.du.abs() < 1e-7);
        assert!((d.d2u - (-2.0 * 8f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn kelvin_examples() {
        let p = ScalarProfile::scalar(4, 0.0, 1.0).unwrap();
        for &r in &[0.1, 1.0, 10.0] {
            let u = |s: f64| p.value(s);
            let k = |s: f64| kelvin_transform(u, 4, s);
            let kk = kelvin_transform(k, 4, r).unwrap();
            let direct = p.value(r).unwrap();
            assert!((kk - direct).abs() <= 1e-12 * direct);
            let selfk = kelvin_transform(u, 4, r).unwrap();
            assert!((selfk - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn weighted_examples() {
        let p = ScalarProfile::scalar(3, 0.1875, 1.0).unwrap();
        let u = |s: f64| p.value(s);
        for &r in &[0.3, 1.0, 7.0] {
            assert_eq!(weighted_transform(u, 0.0, r).unwrap(), p.value(r).unwrap());
        }
        let a = p.derived.amplitude;
        let near = weighted_transform(u, p.derived.tau1, 1e-12).unwrap();
        assert!((near - a).abs() < 1e-6 * a);
        let q = ScalarProfile::scalar(4, 0.0, 1.0).unwrap();
        let far = weighted_transform(|s| q.value(s), q.derived.tau2, 1e6).unwrap();
        assert!((far - q.derived.amplitude).abs() <= 1e-4 * q.derived.amplitude);
    }

    #[test]
    fn hardy_weight_examples() {
        let x = [0.3, -1.2, 0.7];
        let zero = [0.0; 3];
        let xx = 0.09 + 1.44 + 0.49;
        assert!((hardy_weight_f(&x, &zero).unwrap() - xx).abs() < 1e-15);
        assert_eq!(hardy_weight_f(&zero, &[0.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(hardy_weight_dx1(&[0.0, 1.0, 1.0], &[0.0, 0.5, 0.5]).unwrap(), 0.0);
        assert!(matches!(hardy_weight_f(&x, &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(hardy_weight_dx1(&x, &[0.1, 1.0, 0.0]), Err(Error::PointOffHyperplane { .. })));
        // factored form |x - x0 |x|^2|^2 agrees with the expansion
        let x0 = [0.0, 0.4, -0.9];
        let direct: f64 = x.iter().zip(&x0).map(|(a, c)| (a - c * xx).powi(2)).sum();
        assert!((hardy_weight_f(&x, &x0).unwrap() - direct).abs() < 1e-13 * direct);
    }

    #[test]
    fn richardson_recovers_power_series_limit() {
        let q = 0.8;
        let g = |r: f64| 3.0 * (1.0 + r.powf(q)).powf(-1.5);
        let samples: Vec<f64> = (4..=8).map(|k| g(10f64.powi(-k))).collect();
        let l = richardson_two_level(&samples, 10f64.powf(-q)).unwrap();
        assert!((l - 3.0).abs() < 1e-9);
    }
}
