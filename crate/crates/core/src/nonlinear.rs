//! Quadratic structures: the projected Navier-Stokes bilinear term, the SQG
//! transport term, coarse-graining flux remainders, the `[Λ, ∇φ]·R⊥θ`
//! commutator and the Kolmogorov / steady-Euler force construction.
//!
//! Advection terms are evaluated pseudo-spectrally in divergence form with
//! the 2/3 dealiasing rule, so for band-limited inputs they coincide with the
//! Galerkin truncation and inherit its exact orthogonality properties. Flux
//! quantities (`ρ_ε`, its identity with the double-increment integral `r_ε`)
//! are physical-space diagnostics: inputs are dealiased but the pointwise
//! products are left untruncated, matching the quadrature route they are
//! compared against.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{
    kernel_table, lambda_pow, mollify, riesz_perp, Grid, PhysicalField,
    PhysicalVectorField, SpectralField, VelocityField,
};

/// `B(u, v) = P(u·∇v)` for divergence-free `u`, `v`, computed as
/// `P ∂_j(u_j v_i)` with dealiased products.
pub fn nse_bilinear(u: &VelocityField, v: &VelocityField) -> Result<VelocityField> {
    u.require_divergence_free()?;
    v.require_divergence_free()?;
    let grid = u.grid().clone();
    let mut ud = u.clone();
    ud.dealias();
    let mut vd = v.clone();
    vd.dealias();

    let u1 = ud.u1.to_physical();
    let u2 = ud.u2.to_physical();
    let v1 = vd.u1.to_physical();
    let v2 = vd.u2.to_physical();

    let advect = |comp: &[f64]| -> SpectralField {
        let f1: Vec<f64> = u1.iter().zip(comp).map(|(a, b)| a * b).collect();
        let f2: Vec<f64> = u2.iter().zip(comp).map(|(a, b)| a * b).collect();
        let s1 = SpectralField::from_physical(&grid, &f1);
        let s2 = SpectralField::from_physical(&grid, &f2);
        let mut div = divergence(&s1, &s2);
        div.dealias();
        div.zero_mean();
        div
    };

    let w1 = advect(&v1);
    let w2 = advect(&v2);
    Ok(crate::spectral::leray_project(&w1, &w2))
}

/// `∂₁ s1 + ∂₂ s2` in spectral space.
fn divergence(s1: &SpectralField, s2: &SpectralField) -> SpectralField {
    let d1 = s1.map_modes(|k1, _| Complex64::new(0.0, k1 as f64));
    let d2 = s2.map_modes(|_, k2| Complex64::new(0.0, k2 as f64));
    &d1 + &d2
}

/// Relative residual of the identity `AB(u,u) = B(u, Au) - B(Au, u)`,
/// normalized by the combined magnitude of its three terms. Returns 0 when
/// all terms vanish (e.g. single-shell `u`).
pub fn stokes_identity_residual(u: &VelocityField) -> Result<f64> {
    let b = nse_bilinear(u, u)?;
    let ab = b.stokes();
    let au = u.stokes();
    let b_u_au = nse_bilinear(u, &au)?;
    let b_au_u = nse_bilinear(&au, u)?;
    let scale = ab.l2_norm() + b_u_au.l2_norm() + b_au_u.l2_norm();
    // all three terms vanish (modulo transform roundoff) for single-shell u
    let roundoff_floor = 1e-10 * u.l2_norm() * au.l2_norm();
    if scale <= roundoff_floor {
        return Ok(0.0);
    }
    let mut resid = ab.clone();
    resid.add_assign_scaled(&b_u_au, -1.0);
    resid.add_assign_scaled(&b_au_u, 1.0);
    Ok(resid.l2_norm() / scale)
}

/// SQG transport term `u·∇θ` with `u = R⊥θ`, in divergence form with
/// dealiased products. The output is mean-free and `L²`-orthogonal to `θ`.
pub fn sqg_transport(theta: &SpectralField) -> Result<SpectralField> {
    let mut th = theta.clone();
    th.dealias();
    let u = riesz_perp(&th)?;
    Ok(transport_of(&u, &th))
}

/// `∇·(u θ)` for a given divergence-free velocity (dealiased inputs assumed).
pub(crate) fn transport_of(u: &VelocityField, theta: &SpectralField) -> SpectralField {
    let grid = theta.grid().clone();
    let u1 = u.u1.to_physical();
    let u2 = u.u2.to_physical();
    let thp = theta.to_physical();
    let f1: Vec<f64> = u1.iter().zip(&thp).map(|(a, b)| a * b).collect();
    let f2: Vec<f64> = u2.iter().zip(&thp).map(|(a, b)| a * b).collect();
    let s1 = SpectralField::from_physical(&grid, &f1);
    let s2 = SpectralField::from_physical(&grid, &f2);
    let mut out = divergence(&s1, &s2);
    out.dealias();
    out.zero_mean();
    out
}

/// Coarse-graining flux remainder
/// `ρ_ε(u, θ) = J_ε(u θ) - J_ε(u) J_ε(θ)` with `u = R⊥θ`, componentwise,
/// returned in physical space. `ρ_0 = 0`.
pub fn flux_rho(theta: &SpectralField, eps: f64) -> Result<PhysicalVectorField> {
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::NegativeMollifierWidth(eps));
    }
    let mut th = theta.clone();
    th.dealias();
    let grid = th.grid().clone();
    if eps == 0.0 {
        let zeros = || PhysicalField::new(&grid, vec![0.0; grid.len()]);
        return Ok(PhysicalVectorField {
            v1: zeros(),
            v2: zeros(),
        });
    }
    let u = riesz_perp(&th)?;
    let u1 = u.u1.to_physical();
    let u2 = u.u2.to_physical();
    let thp = th.to_physical();

    let j_of_product = |a: &[f64]| -> Vec<f64> {
        let prod: Vec<f64> = a.iter().zip(&thp).map(|(x, y)| x * y).collect();
        let spec = SpectralField::from_physical(&grid, &prod);
        mollify(&spec, eps).expect("eps validated").to_physical()
    };
    let j_u1th = j_of_product(&u1);
    let j_u2th = j_of_product(&u2);
    let j_u1 = mollify(&u.u1, eps)?.to_physical();
    let j_u2 = mollify(&u.u2, eps)?.to_physical();
    let j_th = mollify(&th, eps)?.to_physical();

    let combine = |juth: &[f64], ju: &[f64]| -> PhysicalField {
        let vals: Vec<f64> = juth
            .iter()
            .zip(ju.iter().zip(&j_th))
            .map(|(&a, (&b, &c))| a - b * c)
            .collect();
        PhysicalField::new(&grid, vals)
    };
    Ok(PhysicalVectorField {
        v1: combine(&j_u1th, &j_u1),
        v2: combine(&j_u2th, &j_u2),
    })
}

/// Default number of kernel-quadrature points per axis used by
/// [`flux_identity_residual`].
pub const FLUX_QUADRATURE_POINTS: usize = 64;

/// `L²` residual of the identity
/// `ρ_ε(u, θ) = r_ε(u, θ) - (u - J_ε u)(θ - J_ε θ)` where
/// `r_ε(x) = ∫ j(z) δ_{εz}u(x) δ_{εz}θ(x) dz` is evaluated with an `m × m`
/// midpoint tensor quadrature over the kernel support and the increments
/// `δ_{εz}w(x) = w(x - εz) - w(x)` by exact spectral interpolation.
///
/// The identity is exact in the continuum; the returned residual is pure
/// kernel-quadrature error and decreases as `m` grows.
pub fn flux_identity_residual_with(
    theta: &SpectralField,
    eps: f64,
    m: usize,
) -> Result<f64> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::NegativeMollifierWidth(eps));
    }
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "kernel quadrature needs at least 2 points per axis, got {m}"
        )));
    }
    let mut th = theta.clone();
    th.dealias();
    let grid = th.grid().clone();
    let len = grid.len();
    let u = riesz_perp(&th)?;
    let u1 = u.u1.to_physical();
    let u2 = u.u2.to_physical();
    let thp = th.to_physical();

    let mass = kernel_table().mass;
    let h = 2.0 / m as f64;
    let mut r1 = vec![0.0f64; len];
    let mut r2 = vec![0.0f64; len];
    for p in 0..m {
        let z1 = -1.0 + (p as f64 + 0.5) * h;
        for q in 0..m {
            let z2 = -1.0 + (q as f64 + 0.5) * h;
            let w = crate::spectral::bump_raw(z1, z2) / mass * h * h;
            if w == 0.0 {
                continue;
            }
            let th_s = shifted_physical(&th, eps * z1, eps * z2);
            let u1_s = shifted_physical(&u.u1, eps * z1, eps * z2);
            let u2_s = shifted_physical(&u.u2, eps * z1, eps * z2);
            for i in 0..len {
                let dth = th_s[i] - thp[i];
                r1[i] += w * (u1_s[i] - u1[i]) * dth;
                r2[i] += w * (u2_s[i] - u2[i]) * dth;
            }
        }
    }

    let rho = flux_rho(&th, eps)?;
    let ju1 = mollify(&u.u1, eps)?.to_physical();
    let ju2 = mollify(&u.u2, eps)?.to_physical();
    let jth = mollify(&th, eps)?.to_physical();

    let mut acc = 0.0f64;
    for i in 0..len {
        let corr1 = (u1[i] - ju1[i]) * (thp[i] - jth[i]);
        let corr2 = (u2[i] - ju2[i]) * (thp[i] - jth[i]);
        let d1 = rho.v1.values()[i] - r1[i] + corr1;
        let d2 = rho.v2.values()[i] - r2[i] + corr2;
        acc += d1 * d1 + d2 * d2;
    }
    Ok((acc / len as f64).sqrt())
}

/// [`flux_identity_residual_with`] at the default quadrature resolution.
pub fn flux_identity_residual(theta: &SpectralField, eps: f64) -> Result<f64> {
    flux_identity_residual_with(theta, eps, FLUX_QUADRATURE_POINTS)
}

/// Sample `w(x - s)` on the grid via the spectral phase shift
/// `ŵ(k) e^{-i k·s}` (exact trigonometric interpolation).
pub(crate) fn shifted_physical(w: &SpectralField, s1: f64, s2: f64) -> Vec<f64> {
    let grid = w.grid();
    let n = grid.n();
    let phase1: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, -(grid.wavenumber(i) as f64) * s1))
        .collect();
    let phase2: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, -(grid.wavenumber(j) as f64) * s2))
        .collect();
    let mut coeffs = w.coeffs().to_vec();
    for i in 0..n {
        for j in 0..n {
            coeffs[i * n + j] *= phase1[i] * phase2[j];
        }
    }
    grid.inverse(&coeffs)
}

/// Commutator `C_φ(θ) = [Λ, ∇φ]·R⊥θ = Λ(∇φ·u) - ∇φ·Λu` with `u = R⊥θ`,
/// dealiased products; linear in `θ` and bounded on `L²` for fixed smooth `φ`.
pub fn commutator(phi: &SpectralField, theta: &SpectralField) -> Result<SpectralField> {
    let grid = theta.grid().clone();
    if grid.n() != phi.grid().n() {
        return Err(Error::GridMismatch(phi.grid().n(), grid.n()));
    }
    let mut th = theta.clone();
    th.dealias();
    let mut ph = phi.clone();
    ph.dealias();

    let u = riesz_perp(&th)?;
    let grad1 = ph
        .map_modes(|k1, _| Complex64::new(0.0, k1 as f64))
        .to_physical();
    let grad2 = ph
        .map_modes(|_, k2| Complex64::new(0.0, k2 as f64))
        .to_physical();
    let u1 = u.u1.to_physical();
    let u2 = u.u2.to_physical();
    let lu1 = lambda_pow(&u.u1, 1.0)?.to_physical();
    let lu2 = lambda_pow(&u.u2, 1.0)?.to_physical();

    let a: Vec<f64> = (0..grid.len())
        .map(|i| grad1[i] * u1[i] + grad2[i] * u2[i])
        .collect();
    let b: Vec<f64> = (0..grid.len())
        .map(|i| grad1[i] * lu1[i] + grad2[i] * lu2[i])
        .collect();

    let mut a_spec = SpectralField::from_physical(&grid, &a);
    a_spec.dealias();
    let la = lambda_pow(&a_spec, 1.0)?;
    let mut b_spec = SpectralField::from_physical(&grid, &b);
    b_spec.dealias();
    Ok(&la - &b_spec)
}

/// Residual of the commutator representation
/// `(θ R⊥θ, ∇φ) = ½ (Λ^{-1}θ, C_φ(θ))`, an exact identity for resolved
/// fields; the return value is the absolute difference of the two sides.
pub fn commutator_identity_residual(
    phi: &SpectralField,
    theta: &SpectralField,
) -> Result<f64> {
    let grid = theta.grid().clone();
    let mut th = theta.clone();
    th.dealias();
    let mut ph = phi.clone();
    ph.dealias();

    let u = riesz_perp(&th)?;
    let thp = th.to_physical();
    let u1 = u.u1.to_physical();
    let u2 = u.u2.to_physical();
    let grad1 = ph
        .map_modes(|k1, _| Complex64::new(0.0, k1 as f64))
        .to_physical();
    let grad2 = ph
        .map_modes(|_, k2| Complex64::new(0.0, k2 as f64))
        .to_physical();

    // trilinear grid quadrature, exact for band-limited inputs
    let lhs: f64 = (0..grid.len())
        .map(|i| thp[i] * (u1[i] * grad1[i] + u2[i] * grad2[i]))
        .sum::<f64>()
        / grid.len() as f64;

    let psi = lambda_pow(&th, -1.0)?;
    let c = commutator(&ph, &th)?;
    let rhs = 0.5 * psi.inner(&c);
    Ok((lhs - rhs).abs())
}

/// Output of [`kolmogorov_force`].
#[derive(Debug, Clone)]
pub struct KolmogorovForce {
    /// `f = B(u₁ + u₂, u₁ + u₂)`, an eigenfunction of the Stokes operator.
    pub f: VelocityField,
    /// Eigenvalue `λ = k1² + k2²`.
    pub lambda: f64,
    /// Relative residual `‖Af - λf‖ / ‖f‖` (0 when degenerate).
    pub eigen_residual: f64,
    /// Set when the amplitudes produce `f = 0`.
    pub degenerate: bool,
    /// The generating steady Euler flow `u₁ + u₂`.
    pub euler_flow: VelocityField,
}

/// Build a Kolmogorov force from two Stokes eigenfunctions with orthogonal
/// spectral support: stream functions
/// `ψ₁ = α₁ sin(k1 x₁) + β₁ cos(k1 x₁)` and
/// `ψ₂ = α₂ sin(k2 x₂) + β₂ cos(k2 x₂)`. Then `u = ∇⊥ψ₁ + ∇⊥ψ₂` solves the
/// steady Euler equation with force `f = B(u, u)`, and `Af = (k1² + k2²) f`.
pub fn kolmogorov_force(
    grid: &Grid,
    k1: i32,
    k2: i32,
    amps1: [f64; 2],
    amps2: [f64; 2],
) -> Result<KolmogorovForce> {
    if k1 < 1 || k2 < 1 || k1 == k2 {
        return Err(Error::InvalidParameter(format!(
            "kolmogorov_force needs distinct mode numbers >= 1, got ({k1}, {k2})"
        )));
    }
    let cutoff = grid.dealias_cutoff();
    if k1 > cutoff || k2 > cutoff {
        return Err(Error::InvalidParameter(format!(
            "modes ({k1}, {k2}) exceed the dealias cutoff {cutoff}"
        )));
    }
    let mut psi1 = SpectralField::zeros(grid);
    psi1.add_sin(k1, 0, amps1[0]);
    psi1.add_cos(k1, 0, amps1[1]);
    let mut psi2 = SpectralField::zeros(grid);
    psi2.add_sin(0, k2, amps2[0]);
    psi2.add_cos(0, k2, amps2[1]);
    let u = &VelocityField::from_stream(&psi1) + &VelocityField::from_stream(&psi2);

    let f = nse_bilinear(&u, &u)?;
    let lambda = (k1 * k1 + k2 * k2) as f64;
    let fnorm = f.l2_norm();
    let degenerate = fnorm < 1e-14 * (1.0 + u.l2_sq());
    let eigen_residual = if degenerate {
        0.0
    } else {
        let mut resid = f.stokes();
        resid.add_assign_scaled(&f, -lambda);
        resid.l2_norm() / fnorm
    };
    Ok(KolmogorovForce {
        f,
        lambda,
        eigen_residual,
        degenerate,
        euler_flow: u,
    })
}

/// Single-shell Kolmogorov force `f = c (sin(k x₂), 0)` with `‖f‖_{L²}`
/// equal to `l2_amplitude`; an eigenfunction of the Stokes operator with
/// `λ = k²`.
pub fn eigenmode_force(grid: &Grid, k: i32, l2_amplitude: f64) -> Result<VelocityField> {
    if k < 1 || k > grid.dealias_cutoff() {
        return Err(Error::InvalidParameter(format!(
            "eigenmode wavenumber {k} outside [1, {}]",
            grid.dealias_cutoff()
        )));
    }
    let mut f1 = SpectralField::zeros(grid);
    f1.add_sin(0, k, l2_amplitude * 2.0f64.sqrt());
    Ok(VelocityField {
        u1: f1,
        u2: SpectralField::zeros(grid),
    })
}
