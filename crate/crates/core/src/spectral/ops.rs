//! Linear Fourier-multiplier operators: fractional Laplacian powers, Riesz
//! transforms, the Leray projection, mollification and norms.

use std::sync::OnceLock;

use num_complex::Complex64;

use super::field::{PhysicalField, SpectralField, VelocityField};
use crate::error::{Error, Result};

/// `Λ^s = (-Δ)^{s/2}`: multiply `θ̂(k)` by `|k|^s`. For `s > 0` the zero
/// mode is annihilated (`|0|^s = 0`); for `s < 0` the inverse is undefined
/// on constants, so the input must be mean-free and the zero mode is left
/// untouched (it is zero).
pub fn lambda_pow(field: &SpectralField, s: f64) -> Result<SpectralField> {
    if s < 0.0 {
        field.require_mean_free()?;
    }
    Ok(field.map_modes(|k1, k2| {
        let kk = (k1 * k1 + k2 * k2) as f64;
        if kk == 0.0 {
            Complex64::new(if s > 0.0 { 0.0 } else { 1.0 }, 0.0)
        } else {
            Complex64::new(kk.sqrt().powf(s), 0.0)
        }
    }))
}

/// Damping operator `D = I + Λ` applied spectrally.
pub fn damping(field: &SpectralField) -> SpectralField {
    field.map_modes(|k1, k2| {
        let kk = (k1 * k1 + k2 * k2) as f64;
        Complex64::new(1.0 + kk.sqrt(), 0.0)
    })
}

/// `u = R⊥θ = ∇⊥ Λ^{-1} θ`, the divergence-free SQG velocity.
///
/// Componentwise multipliers `û1 = -i k2/|k| θ̂`, `û2 = i k1/|k| θ̂`; the map
/// is an `L²` isometry on mean-free fields.
pub fn riesz_perp(theta: &SpectralField) -> Result<VelocityField> {
    theta.require_mean_free()?;
    let u1 = theta.map_modes(|k1, k2| {
        let kk = ((k1 * k1 + k2 * k2) as f64).sqrt();
        if kk == 0.0 {
            Complex64::default()
        } else {
            Complex64::new(0.0, -(k2 as f64) / kk)
        }
    });
    let u2 = theta.map_modes(|k1, k2| {
        let kk = ((k1 * k1 + k2 * k2) as f64).sqrt();
        if kk == 0.0 {
            Complex64::default()
        } else {
            Complex64::new(0.0, (k1 as f64) / kk)
        }
    });
    Ok(VelocityField { u1, u2 })
}

/// Leray projection onto divergence-free fields: per mode,
/// `P_k v = (v · k⊥/|k|) k⊥/|k|`. Idempotent; annihilates gradients.
pub fn leray_project(v1: &SpectralField, v2: &SpectralField) -> VelocityField {
    let grid = v1.grid().clone();
    let n = grid.n();
    debug_assert_eq!(n, v2.grid().n());
    let mut p1 = SpectralField::zeros(&grid);
    let mut p2 = SpectralField::zeros(&grid);
    for i in 0..n {
        let k1 = grid.wavenumber(i) as f64;
        for j in 0..n {
            let k2 = grid.wavenumber(j) as f64;
            let kk = k1 * k1 + k2 * k2;
            if kk == 0.0 {
                continue;
            }
            let idx = i * n + j;
            // k⊥/|k| = (-k2, k1)/|k|
            let knorm = kk.sqrt();
            let e1 = -k2 / knorm;
            let e2 = k1 / knorm;
            let along = v1.coeffs()[idx] * e1 + v2.coeffs()[idx] * e2;
            p1.coeffs_mut()[idx] = along * e1;
            p2.coeffs_mut()[idx] = along * e2;
        }
    }
    VelocityField { u1: p1, u2: p2 }
}

// ---------------------------------------------------------------------------
// Mollifier
// ---------------------------------------------------------------------------

/// Quadrature resolution used to tabulate the mollifier kernel once per
/// process. The kernel is C^∞ with compact support, so midpoint quadrature
/// converges faster than any power of the step.
const KERNEL_TABLE_POINTS: usize = 4096;

/// The kernel: `exp(-1/(1-|z|²))` on `|z| < 1`, zero outside, before
/// normalization to unit mass.
#[inline]
pub(crate) fn bump_raw(z1: f64, z2: f64) -> f64 {
    let r2 = z1 * z1 + z2 * z2;
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

pub(crate) struct KernelTable {
    /// Midpoint abscissae on [-1, 1].
    pub xs: Vec<f64>,
    /// Marginal `g(x1) = ∫ j(x1, x2) dx2` of the normalized kernel,
    /// scaled so that the discrete mass `(2/M) Σ g_i` is exactly 1.
    pub marginal: Vec<f64>,
    /// Discrete 2D mass of the raw bump at table resolution; `j = raw / mass`.
    pub mass: f64,
}

impl KernelTable {
    fn build() -> Self {
        let m = KERNEL_TABLE_POINTS;
        let h = 2.0 / m as f64;
        let xs: Vec<f64> = (0..m).map(|i| -1.0 + (i as f64 + 0.5) * h).collect();
        let mut marginal = vec![0.0f64; m];
        for (i, &x1) in xs.iter().enumerate() {
            let mut acc = 0.0;
            for &x2 in &xs {
                acc += bump_raw(x1, x2);
            }
            marginal[i] = acc * h;
        }
        let mass: f64 = marginal.iter().sum::<f64>() * h;
        for g in &mut marginal {
            *g /= mass;
        }
        Self { xs, marginal, mass }
    }

    /// Fourier transform `ĵ(ξ)` of the normalized kernel evaluated at
    /// `|ξ| = r` (radially symmetric). `ĵ(0) = 1` exactly; `|ĵ| <= 1`.
    pub fn jhat(&self, r: f64) -> f64 {
        let h = 2.0 / self.xs.len() as f64;
        self.xs
            .iter()
            .zip(&self.marginal)
            .map(|(&x, &g)| g * (r * x).cos())
            .sum::<f64>()
            * h
    }
}

pub(crate) fn kernel_table() -> &'static KernelTable {
    static TABLE: OnceLock<KernelTable> = OnceLock::new();
    TABLE.get_or_init(KernelTable::build)
}

/// `J_ε`: convolution with `ε^{-2} j(x/ε)` for the standard bump kernel,
/// realized as multiplication by `ĵ(ε k)`. `eps = 0` is the identity.
/// Contractive and self-adjoint on `L²`.
pub fn mollify(field: &SpectralField, eps: f64) -> Result<SpectralField> {
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::NegativeMollifierWidth(eps));
    }
    if eps == 0.0 {
        return Ok(field.clone());
    }
    let table = kernel_table();
    // one radial evaluation per distinct |k|²
    let grid = field.grid();
    let n = grid.n();
    let max_ksq = {
        let half = (n / 2) as i64;
        (2 * half * half) as usize
    };
    let mut cache: Vec<f64> = vec![f64::NAN; max_ksq + 1];
    let mut out = field.clone();
    for i in 0..n {
        let k1 = grid.wavenumber(i) as i64;
        for j in 0..n {
            let k2 = grid.wavenumber(j) as i64;
            let ksq = (k1 * k1 + k2 * k2) as usize;
            let mut v = cache[ksq];
            if v.is_nan() {
                v = table.jhat(eps * (ksq as f64).sqrt());
                cache[ksq] = v;
            }
            out.coeffs_mut()[i * n + j] *= v;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

/// Norm selector for [`norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L2,
    /// Grid-sampled Lᵖ, `p >= 1`.
    Lp(f64),
    LInf,
    /// `(Σ (1+|k|) |θ̂|²)^{1/2}`.
    H12,
    /// Homogeneous H¹, i.e. `‖∇θ‖_{L²}`.
    GradL2,
}

pub fn norm(field: &SpectralField, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::L2 => Ok(field.l2_norm()),
        NormKind::Lp(p) => field.lp_norm(p),
        NormKind::LInf => Ok(field.linf_norm()),
        NormKind::H12 => Ok(field.h12_sq().sqrt()),
        NormKind::GradL2 => Ok(field.grad_sq().sqrt()),
    }
}

// ---------------------------------------------------------------------------
// Nonlocal-calculus density
// ---------------------------------------------------------------------------

/// Result of [`cordoba_density`]: the physical-space density and a flag set
/// when the input did not meet the resolution precondition.
#[derive(Debug, Clone)]
pub struct CordobaDensity {
    pub density: PhysicalField,
    pub under_resolved: bool,
}

/// Spectral-tail threshold above which a field counts as under-resolved.
pub const RESOLUTION_TAIL_TOL: f64 = 1e-8;

/// Density `D[φ] = 2 φ Λφ - Λ(φ²)` of the pointwise identity
/// `2 φ Λφ = Λ(φ²) + D[φ]`; nonnegative (up to dealiasing tolerance) because
/// it integrates the squared increment `(φ(x) - φ(y))²` against a positive
/// kernel.
pub fn cordoba_density(phi: &SpectralField) -> Result<CordobaDensity> {
    let under_resolved = phi.tail_energy_fraction() > RESOLUTION_TAIL_TOL;
    let grid = phi.grid().clone();

    let mut phi_d = phi.clone();
    phi_d.dealias();
    let lam_phi = lambda_pow(&phi_d, 1.0)?;

    let phi_phys = phi_d.to_physical();
    let lam_phys = lam_phi.to_physical();

    // 2 φ Λφ, dealiased
    let prod: Vec<f64> = phi_phys
        .iter()
        .zip(&lam_phys)
        .map(|(&a, &b)| 2.0 * a * b)
        .collect();
    let mut prod_spec = SpectralField::from_physical(&grid, &prod);
    prod_spec.dealias();

    // Λ(φ²), dealiased
    let sq: Vec<f64> = phi_phys.iter().map(|&a| a * a).collect();
    let mut sq_spec = SpectralField::from_physical(&grid, &sq);
    sq_spec.dealias();
    let lam_sq = lambda_pow(&sq_spec, 1.0)?;

    let density_spec = &prod_spec - &lam_sq;
    Ok(CordobaDensity {
        density: PhysicalField::new(&grid, density_spec.to_physical()),
        under_resolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::grid::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cos_x1(grid: &Grid) -> SpectralField {
        let mut f = SpectralField::zeros(grid);
        f.add_cos(1, 0, 1.0);
        f
    }

    #[test]
    fn lambda_fixes_unit_shell() {
        let grid = Grid::new(32).unwrap();
        let f = cos_x1(&grid);
        let lf = lambda_pow(&f, 1.0).unwrap();
        let diff: f64 = f
            .coeffs()
            .iter()
            .zip(lf.coeffs())
            .map(|(a, b)| (a - b).norm())
            .sum();
        assert!(diff < 1e-14, "Λ cos x1 should equal cos x1");
    }

    #[test]
    fn lambda_half_scales_shell_two() {
        let grid = Grid::new(32).unwrap();
        let mut f = SpectralField::zeros(&grid);
        f.add_sin(0, 2, 1.0);
        let lf = lambda_pow(&f, 0.5).unwrap();
        let expected = f.scaled(2.0f64.sqrt());
        let diff: f64 = expected
            .coeffs()
            .iter()
            .zip(lf.coeffs())
            .map(|(a, b)| (a - b).norm())
            .sum();
        assert!(diff < 1e-14);
    }

    #[test]
    fn lambda_inverse_on_shell_three() {
        let grid = Grid::new(32).unwrap();
        let mut f = SpectralField::zeros(&grid);
        f.add_cos(3, 0, 1.0);
        let lf = lambda_pow(&f, -1.0).unwrap();
        let expected = f.scaled(1.0 / 3.0);
        let diff: f64 = expected
            .coeffs()
            .iter()
            .zip(lf.coeffs())
            .map(|(a, b)| (a - b).norm())
            .sum();
        assert!(diff < 1e-14);
    }

    #[test]
    fn lambda_negative_rejects_nonzero_mean() {
        let grid = Grid::new(16).unwrap();
        let mut f = SpectralField::zeros(&grid);
        f.add_cos(1, 0, 1.0);
        f.coeffs_mut()[0] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            lambda_pow(&f, -1.0),
            Err(Error::NotMeanFree { .. })
        ));
        // nonnegative powers don't care
        assert!(lambda_pow(&f, 1.0).is_ok());
    }

    #[test]
    fn riesz_of_cos_x1() {
        let grid = Grid::new(32).unwrap();
        let u = riesz_perp(&cos_x1(&grid)).unwrap();
        // expected (0, -sin x1)
        let mut expected2 = SpectralField::zeros(&grid);
        expected2.add_sin(1, 0, -1.0);
        assert!(u.u1.l2_norm() < 1e-14);
        let diff = (&u.u2 - &expected2).l2_norm();
        assert!(diff < 1e-14);
    }

    #[test]
    fn riesz_of_cos_x2() {
        let grid = Grid::new(32).unwrap();
        let mut f = SpectralField::zeros(&grid);
        f.add_cos(0, 1, 1.0);
        let u = riesz_perp(&f).unwrap();
        let mut expected1 = SpectralField::zeros(&grid);
        expected1.add_sin(0, 1, 1.0);
        let diff = (&u.u1 - &expected1).l2_norm();
        assert!(diff < 1e-14);
        assert!(u.u2.l2_norm() < 1e-14);
    }

    #[test]
    fn riesz_is_isometric_and_divergence_free() {
        let grid = Grid::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let theta = SpectralField::random_band_limited(&grid, 10, -1.0, &mut rng);
        let u = riesz_perp(&theta).unwrap();
        assert!(u.divergence_residual() < 1e-12);
        let ratio = u.l2_norm() / theta.l2_norm();
        assert!((ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leray_annihilates_gradients() {
        let grid = Grid::new(32).unwrap();
        // ∇(cos x1 cos x2)
        let mut q = SpectralField::zeros(&grid);
        q.add_cos(1, 1, 0.5);
        q.add_cos(1, -1, 0.5);
        let g1 = q.map_modes(|k1, _| Complex64::new(0.0, k1 as f64));
        let g2 = q.map_modes(|_, k2| Complex64::new(0.0, k2 as f64));
        let p = leray_project(&g1, &g2);
        assert!(p.l2_norm() < 1e-14);
    }

    #[test]
    fn leray_fixes_divergence_free_and_is_idempotent() {
        let grid = Grid::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let v1 = SpectralField::random_band_limited(&grid, 9, -1.0, &mut rng);
        let v2 = SpectralField::random_band_limited(&grid, 9, -1.0, &mut rng);
        let p = leray_project(&v1, &v2);
        assert!(p.divergence_residual() < 1e-12);
        let pp = leray_project(&p.u1, &p.u2);
        let diff = (&pp.u1 - &p.u1).l2_norm() + (&pp.u2 - &p.u2).l2_norm();
        assert!(diff < 1e-12 * (1.0 + p.l2_norm()));

        let psi = SpectralField::random_band_limited(&grid, 9, -1.5, &mut rng);
        let w = VelocityField::from_stream(&psi);
        let pw = leray_project(&w.u1, &w.u2);
        let fix = (&pw.u1 - &w.u1).l2_norm() + (&pw.u2 - &w.u2).l2_norm();
        assert!(fix < 1e-12 * (1.0 + w.l2_norm()));
    }

    #[test]
    fn mollifier_width_zero_is_identity() {
        let grid = Grid::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let f = SpectralField::random_band_limited(&grid, 8, -1.0, &mut rng);
        let g = mollify(&f, 0.0).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn mollifier_rejects_negative_width() {
        let grid = Grid::new(16).unwrap();
        let f = SpectralField::zeros(&grid);
        assert!(mollify(&f, -0.1).is_err());
    }

    #[test]
    fn mollifier_damps_single_mode_by_kernel_transform() {
        let grid = Grid::new(32).unwrap();
        let f = cos_x1(&grid);
        let eps = 0.1;
        let g = mollify(&f, eps).unwrap();
        let factor = g.coeff(1, 0).re / f.coeff(1, 0).re;
        // independent quadrature of the kernel transform at |ξ| = eps
        let oracle = quadrature_jhat(eps);
        assert!(factor > 0.0 && factor <= 1.0);
        assert!(
            (factor - oracle).abs() < 1e-10,
            "multiplier {factor} vs quadrature {oracle}"
        );
    }

    /// Direct 2D quadrature of ĵ(ξ) at ξ = (r, 0), independent of the
    /// marginal-table path used by `mollify`.
    fn quadrature_jhat(r: f64) -> f64 {
        let m = 2000usize;
        let h = 2.0 / m as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..m {
            let x1 = -1.0 + (i as f64 + 0.5) * h;
            for j in 0..m {
                let x2 = -1.0 + (j as f64 + 0.5) * h;
                let w = bump_raw(x1, x2);
                num += w * (r * x1).cos();
                den += w;
            }
        }
        num / den
    }

    #[test]
    fn mollifier_is_contractive_and_self_adjoint() {
        let grid = Grid::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = SpectralField::random_band_limited(&grid, 10, -0.7, &mut rng);
        let b = SpectralField::random_band_limited(&grid, 10, -0.7, &mut rng);
        let ja = mollify(&a, 0.3).unwrap();
        let jb = mollify(&b, 0.3).unwrap();
        assert!(ja.l2_norm() <= a.l2_norm() * (1.0 + 1e-14));
        let lhs = ja.inner(&b);
        let rhs = a.inner(&jb);
        assert!((lhs - rhs).abs() < 1e-12 * a.l2_norm() * b.l2_norm());
    }

    #[test]
    fn mollifier_commutes_with_lambda() {
        let grid = Grid::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let f = SpectralField::random_band_limited(&grid, 10, -1.0, &mut rng);
        let a = mollify(&lambda_pow(&f, 0.5).unwrap(), 0.2).unwrap();
        let b = lambda_pow(&mollify(&f, 0.2).unwrap(), 0.5).unwrap();
        assert!((&a - &b).l2_norm() < 1e-13 * f.l2_norm());
    }

    #[test]
    fn cordoba_density_of_cos_is_one() {
        let grid = Grid::new(32).unwrap();
        let d = cordoba_density(&cos_x1(&grid)).unwrap();
        assert!(!d.under_resolved);
        for &v in d.density.values() {
            assert!((v - 1.0).abs() < 1e-10, "density should be 1, got {v}");
        }
    }

    #[test]
    fn cordoba_density_of_zero_is_zero() {
        let grid = Grid::new(16).unwrap();
        let d = cordoba_density(&SpectralField::zeros(&grid)).unwrap();
        assert!(d.density.min().abs() < 1e-15 && d.density.max().abs() < 1e-15);
    }

    #[test]
    fn cordoba_density_nonnegative_on_random_resolved_fields() {
        let grid = Grid::new(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let f = SpectralField::random_band_limited(&grid, 8, -2.0, &mut rng);
            let d = cordoba_density(&f).unwrap();
            assert!(!d.under_resolved);
            let floor = -1e-8 * f.l2_sq();
            assert!(
                d.density.min() >= floor,
                "min {} below floor {floor}",
                d.density.min()
            );
        }
    }

    #[test]
    fn cordoba_flags_under_resolved_input() {
        let grid = Grid::new(16).unwrap();
        let mut f = SpectralField::zeros(&grid);
        f.add_cos(7, 0, 1.0); // beyond the dealias cutoff of 5
        let d = cordoba_density(&f).unwrap();
        assert!(d.under_resolved);
    }

    #[test]
    fn norm_selector_dispatches() {
        let grid = Grid::new(32).unwrap();
        let f = cos_x1(&grid);
        assert!((norm(&f, NormKind::L2).unwrap().powi(2) - 0.5).abs() < 1e-14);
        assert!((norm(&f, NormKind::H12).unwrap().powi(2) - 1.0).abs() < 1e-14);
        assert!((norm(&f, NormKind::LInf).unwrap() - 1.0).abs() < 1e-12);
        assert!(norm(&f, NormKind::Lp(0.9)).is_err());
    }
}
