//! Pseudo-spectral laboratory for forced dissipative flows on the
//! doubly-periodic torus `[0, 2π)²`.
//!
//! Two equations are implemented with the stiff linear part integrated
//! exactly:
//!
//! * damped, viscous critical SQG,
//!   `∂_t θ + (R⊥θ)·∇θ + γ(I + Λ)θ - νΔθ = f`;
//! * 2D incompressible Navier-Stokes with Kolmogorov (Stokes-eigenfunction)
//!   forcing, `∂_t u + νAu + B(u, u) = f`.
//!
//! On top of the solvers sit trajectory diagnostics (energy budgets, the
//! long-time-averaged dissipation rate `ε(ν) = ν⟨‖∇θ‖²⟩`), empirical
//! stationary-statistics checks against cylindrical test functionals, and
//! scripted experiments: the exact `ε = ν⁻¹λ⁻¹‖f‖²` law on the Kolmogorov
//! steady branch, its vanishing counterpart for damped SQG under a ν-sweep,
//! coarse-graining flux scaling, and the δ(t) enstrophy-gap decay study.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod nonlinear;
pub mod spectral;
pub mod statistics;

pub use error::{Error, Result};
