//! Problem parameters `(n, gamma, nu, alpha, beta)` and the scalar constants
//! derived from them.

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance for the linear constraint `alpha + beta = 2*`.
pub const EXPONENT_SUM_TOL: f64 = 1e-12;

/// `Lambda_n = ((n - 2) / 2)^2`, the best constant in Hardy's inequality.
pub fn hardy_constant(n: u32) -> Result<f64> {
    check_dimension(n)?;
    let delta = (n as f64 - 2.0) / 2.0;
    Ok(delta * delta)
}

/// `2* = 2n / (n - 2)`.
pub fn critical_exponent(n: u32) -> Result<f64> {
    check_dimension(n)?;
    Ok(2.0 * n as f64 / (n as f64 - 2.0))
}

/// The two roots `tau1 <= tau2` of `tau^2 - (n - 2) tau + gamma = 0`.
///
/// `tau1` is formed as `gamma / (delta + kappa)` so it stays accurate for small gamma.
pub fn tau_exponents(n: u32, gamma: f64) -> Result<(f64, f64)> {
    let (delta, kappa) = delta_kappa(n, gamma)?;
    let tau2 = delta + kappa;
    Ok((gamma / tau2, tau2))
}

/// `A(n, gamma) = (n (n - 2 - 2 tau1)^2 / (n - 2))^((n - 2) / 4)`, with `n - 2 - 2 tau1 = 2 kappa`.
pub fn amplitude(n: u32, gamma: f64) -> Result<f64> {
    let (_, kappa) = delta_kappa(n, gamma)?;
    let nf = n as f64;
    Ok((nf * 4.0 * kappa * kappa / (nf - 2.0)).powf((nf - 2.0) / 4.0))
}

fn check_dimension(n: u32) -> Result<()> {
    if n < 3 {
        return Err(Error::DimensionTooSmall { n });
    }
    Ok(())
}

fn check_gamma(n: u32, gamma: f64) -> Result<f64> {
    let lambda_n = hardy_constant(n)?;
    if !gamma.is_finite() || gamma < 0.0 || gamma >= lambda_n {
        return Err(Error::GammaOutOfRange { gamma, lambda_n });
    }
    Ok(lambda_n)
}

fn delta_kappa(n: u32, gamma: f64) -> Result<(f64, f64)> {
    let lambda_n = check_gamma(n, gamma)?;
    let delta = (n as f64 - 2.0) / 2.0;
    Ok((delta, (lambda_n - gamma).sqrt()))
}

/// Parameters of the doubly critical system. Two Hardy coefficients are kept
/// so the unequal-weight variant can be represented; everything that
/// classifies solutions requires them to coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemParams {
    pub n: u32,
    pub gamma1: f64,
    pub gamma2: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ProblemParams {
    pub fn new(n: u32, gamma1: f64, gamma2: f64, nu: f64, alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [
            ("gamma1", gamma1),
            ("gamma2", gamma2),
            ("nu", nu),
            ("alpha", alpha),
            ("beta", beta),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFiniteParameter { name });
            }
        }
        let two_star = critical_exponent(n)?;
        check_gamma(n, gamma1)?;
        check_gamma(n, gamma2)?;
        if nu < 0.0 {
            return Err(Error::NegativeCoupling { nu });
        }
        if alpha <= 1.0 {
            return Err(Error::ExponentTooSmall { name: "alpha", value: alpha });
        }
        if beta <= 1.0 {
            return Err(Error::ExponentTooSmall { name: "beta", value: beta });
        }
        if (alpha + beta - two_star).abs() > EXPONENT_SUM_TOL {
            return Err(Error::ExponentSum { sum: alpha + beta, two_star });
        }
        Ok(Self { n, gamma1, gamma2, nu, alpha, beta })
    }

    /// Single Hardy coefficient, `beta` explicitly supplied.
    pub fn with_beta(n: u32, gamma: f64, nu: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(n, gamma, gamma, nu, alpha, beta)
    }

    /// Single Hardy coefficient, `beta = 2* - alpha`.
    pub fn symmetric(n: u32, gamma: f64, nu: f64, alpha: f64) -> Result<Self> {
        let two_star = critical_exponent(n)?;
        Self::new(n, gamma, gamma, nu, alpha, two_star - alpha)
    }

    pub fn two_star(&self) -> f64 {
        2.0 * self.n as f64 / (self.n as f64 - 2.0)
    }

    pub fn delta(&self) -> f64 {
        (self.n as f64 - 2.0) / 2.0
    }

    pub fn is_single_gamma(&self) -> bool {
        self.gamma1 == self.gamma2
    }

    /// The common Hardy coefficient; errors when the two differ.
    pub fn gamma(&self) -> Result<f64> {
        if !self.is_single_gamma() {
            return Err(Error::UnequalGamma { gamma1: self.gamma1, gamma2: self.gamma2 });
        }
        Ok(self.gamma1)
    }

    /// Derived constants for the common gamma.
    pub fn derived(&self) -> Result<DerivedConstants> {
        DerivedConstants::new(self.n, self.gamma()?)
    }

    /// Same parameters with a different coupling strength.
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::new(self.n, self.gamma1, self.gamma2, nu, self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub n: u32,
    pub gamma: f64,
    pub two_star: f64,
    pub lambda_n: f64,
    pub delta: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub amplitude: f64,
    /// `sqrt(Lambda_n - gamma) = delta - tau1`.
    pub kappa: f64,
}

impl DerivedConstants {
    pub fn new(n: u32, gamma: f64) -> Result<Self> {
        let (tau1, tau2) = tau_exponents(n, gamma)?;
        let (delta, kappa) = delta_kappa(n, gamma)?;
        Ok(Self {
            n,
            gamma,
            two_star: critical_exponent(n)?,
            lambda_n: hardy_constant(n)?,
            delta,
            tau1,
            tau2,
            amplitude: amplitude(n, gamma)?,
            kappa,
        })
    }

    /// Exponent `2 - 4 tau1 / (n - 2)` of the Terracini profile, stored as `2 kappa / delta`.
    pub fn profile_exponent(&self) -> f64 {
        2.0 * self.kappa / self.delta
    }

    /// Whether `tau` solves `tau^2 - (n - 2) tau + gamma = 0` to a relative tolerance.
    pub fn is_tau_root(&self, tau: f64) -> bool {
        let scale = 1.0 + tau * tau + (self.n as f64 - 2.0) * tau.abs() + self.gamma;
        let q = tau * tau - (self.n as f64 - 2.0) * tau + self.gamma;
        q.abs() <= 1e-12 * scale
    }
}
