//! Synchronized solutions of the doubly critical Hardy-Sobolev system
//!
//! ```text
//! -Delta u - gamma u / |x|^2 = u^{2*-1} + nu alpha u^{alpha-1} v^beta
//! -Delta v - gamma v / |x|^2 = v^{2*-1} + nu beta  u^alpha v^{beta-1}
//! ```
//!
//! with `alpha + beta = 2* = 2n / (n - 2)`: closed-form profiles, the algebraic
//! classification of synchronized pairs, the Emden-Fowler ODE picture and a
//! verification harness.

pub mod cli;
pub mod coupling;
pub mod error;
pub mod ode;
pub mod params;
pub mod scalar;
pub mod verify;

pub use coupling::{classify, CouplingRoot, SynchronizedFamily};
pub use error::{Error, Result};
pub use params::{DerivedConstants, ProblemParams};
pub use scalar::ScalarProfile;
pub use verify::{full_verification, VerificationReport};
