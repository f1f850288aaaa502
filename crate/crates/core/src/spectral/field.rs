//! Scalar and vector fields on the torus, stored as Fourier coefficients.

use num_complex::Complex64;
use rand::Rng;

use super::grid::Grid;
use crate::error::{Error, Result};

/// Relative tolerance used when checking structural invariants
/// (mean-free, Hermitian symmetry, divergence-free).
pub const STRUCT_TOL: f64 = 1e-12;

/// Real scalar field on the torus held as complex Fourier coefficients.
///
/// Invariants maintained by construction: Hermitian symmetry
/// `coeff(-k) = conj(coeff(k))` (the field is real valued) and, for all
/// evolved quantities, a vanishing mean `coeff(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    /// Transform physical samples into coefficients.
    pub fn from_physical(grid: &Grid, values: &[f64]) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: grid.forward(values),
        }
    }

    /// Sample a closure on the grid and transform.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                let (x1, x2) = grid.point(i, j);
                values.push(f(x1, x2));
            }
        }
        Self::from_physical(grid, &values)
    }

    pub(crate) fn from_coeffs(grid: &Grid, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.len());
        Self {
            grid: grid.clone(),
            coeffs,
        }
    }

    /// Random mean-free field band-limited to `max(|k1|,|k2|) <= kmax`,
    /// with coefficient magnitudes `~ |k|^spectral_slope`.
    pub fn random_band_limited(
        grid: &Grid,
        kmax: i32,
        spectral_slope: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut field = Self::zeros(grid);
        for k1 in -kmax..=kmax {
            for k2 in -kmax..=kmax {
                // visit each Hermitian pair once
                if (k1, k2) <= (0, 0) {
                    continue;
                }
                let ksq = (k1 * k1 + k2 * k2) as f64;
                let mag = ksq.sqrt().powf(spectral_slope);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let c = Complex64::from_polar(mag, phase);
                field.set_mode_pair(k1, k2, c);
            }
        }
        field
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, k1: i32, k2: i32) -> Complex64 {
        self.coeffs[self.grid.mode_idx(k1, k2)]
    }

    /// Set `coeff(k) = c` and `coeff(-k) = conj(c)` in one call.
    pub fn set_mode_pair(&mut self, k1: i32, k2: i32, c: Complex64) {
        let i = self.grid.mode_idx(k1, k2);
        let j = self.grid.mode_idx(-k1, -k2);
        self.coeffs[i] = c;
        if j != i {
            self.coeffs[j] = c.conj();
        } else {
            self.coeffs[i] = Complex64::new(c.re, 0.0);
        }
    }

    /// Add `amp * cos(k·x)` to the field.
    pub fn add_cos(&mut self, k1: i32, k2: i32, amp: f64) {
        let i = self.grid.mode_idx(k1, k2);
        let j = self.grid.mode_idx(-k1, -k2);
        let half = Complex64::new(0.5 * amp, 0.0);
        self.coeffs[i] += half;
        if j != i {
            self.coeffs[j] += half;
        } else {
            self.coeffs[i] += half;
        }
    }

    /// Add `amp * sin(k·x)` to the field.
    pub fn add_sin(&mut self, k1: i32, k2: i32, amp: f64) {
        let i = self.grid.mode_idx(k1, k2);
        let j = self.grid.mode_idx(-k1, -k2);
        // sin(k·x) = (e^{ik·x} - e^{-ik·x}) / (2i)
        let half = Complex64::new(0.0, -0.5 * amp);
        self.coeffs[i] += half;
        if j != i {
            self.coeffs[j] -= half;
        }
        // k = -k only for the zero/Nyquist self-paired modes, where sin ≡ 0
        // on the grid; adding nothing there is the consistent choice.
    }

    pub fn to_physical(&self) -> Vec<f64> {
        self.grid.inverse(&self.coeffs)
    }

    /// Mean value of the field, `coeff(0)`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn zero_mean(&mut self) {
        self.coeffs[0] = Complex64::default();
    }

    /// `|mean| / max(1, l2)`: used to enforce the mean-free precondition.
    pub fn relative_mean(&self) -> f64 {
        self.coeffs[0].norm() / self.l2_norm().max(1e-300)
    }

    pub fn require_mean_free(&self) -> Result<()> {
        let m = self.coeffs[0].norm();
        if m > STRUCT_TOL * self.l2_norm().max(1.0) {
            return Err(Error::NotMeanFree { mean: m });
        }
        Ok(())
    }

    /// `‖θ‖²_{L²}` with the normalized measure `(2π)^{-2} dx`; by Parseval
    /// this is `Σ_k |θ̂(k)|²`.
    pub fn l2_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    /// `‖θ‖²_{H^{1/2}} = Σ_k (1 + |k|) |θ̂(k)|²`, i.e. `(Dθ, θ)` for the
    /// damping operator `D = I + Λ`.
    pub fn h12_sq(&self) -> f64 {
        self.weighted_sq(|kk| 1.0 + kk.sqrt())
    }

    /// `‖∇θ‖²_{L²} = Σ_k |k|² |θ̂(k)|²` (homogeneous H¹).
    pub fn grad_sq(&self) -> f64 {
        self.weighted_sq(|kk| kk)
    }

    fn weighted_sq(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let n = self.grid.n();
        let mut acc = 0.0;
        for i in 0..n {
            let k1 = self.grid.wavenumber(i) as f64;
            for j in 0..n {
                let k2 = self.grid.wavenumber(j) as f64;
                let c = self.coeffs[i * n + j];
                if c != Complex64::default() {
                    acc += weight(k1 * k1 + k2 * k2) * c.norm_sqr();
                }
            }
        }
        acc
    }

    /// `(a, b)_{L²}` with the normalized measure: `Σ_k â(k) conj(b̂(k))`.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.grid.n(), other.grid.n());
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    /// Grid-sampled `L^p` norm (normalized measure). Exact for trigonometric
    /// polynomials when `p` is 2; otherwise a quadrature value whose error is
    /// controlled by resolution.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p < 1.0 || !p.is_finite() {
            return Err(Error::InvalidLpExponent(p));
        }
        let phys = self.to_physical();
        let mean_pow: f64 =
            phys.iter().map(|v| v.abs().powf(p)).sum::<f64>() / phys.len() as f64;
        Ok(mean_pow.powf(1.0 / p))
    }

    /// Grid-sampled `L^∞` norm (a lower bound on the true sup).
    pub fn linf_norm(&self) -> f64 {
        self.to_physical()
            .iter()
            .fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    /// Multiply every coefficient by `m(k1, k2)`.
    pub fn map_modes(&self, m: impl Fn(i32, i32) -> Complex64) -> Self {
        let n = self.grid.n();
        let mut out = self.clone();
        for i in 0..n {
            let k1 = self.grid.wavenumber(i);
            for j in 0..n {
                let k2 = self.grid.wavenumber(j);
                out.coeffs[i * n + j] *= m(k1, k2);
            }
        }
        out
    }

    /// Zero every mode with `max(|k1|, |k2|) > cutoff`.
    pub fn dealias(&mut self) {
        let cutoff = self.grid.dealias_cutoff();
        let n = self.grid.n();
        for i in 0..n {
            let k1 = self.grid.wavenumber(i).abs();
            for j in 0..n {
                let k2 = self.grid.wavenumber(j).abs();
                if k1.max(k2) > cutoff {
                    self.coeffs[i * n + j] = Complex64::default();
                }
            }
        }
    }

    /// Largest deviation from Hermitian symmetry relative to the field scale.
    pub fn hermitian_residual(&self) -> f64 {
        let n = self.grid.n();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let a = self.coeffs[i * n + j];
                scale = scale.max(a.norm());
                let ic = (n - i) % n;
                let jc = (n - j) % n;
                let b = self.coeffs[ic * n + jc];
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst / scale.max(1e-300)
    }

    /// Fraction of the `L²` energy carried by modes beyond the dealiasing
    /// cutoff; a proxy for spectral resolution.
    pub fn tail_energy_fraction(&self) -> f64 {
        let cutoff = self.grid.dealias_cutoff();
        let n = self.grid.n();
        let mut tail = 0.0;
        let mut total = 0.0;
        for i in 0..n {
            let k1 = self.grid.wavenumber(i).abs();
            for j in 0..n {
                let k2 = self.grid.wavenumber(j).abs();
                let e = self.coeffs[i * n + j].norm_sqr();
                total += e;
                if k1.max(k2) > cutoff {
                    tail += e;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn add_assign_scaled(&mut self, other: &Self, s: f64) {
        debug_assert_eq!(self.grid.n(), other.grid.n());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * s;
        }
    }
}

impl std::ops::Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.add_assign_scaled(rhs, 1.0);
        out
    }
}

impl std::ops::Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.add_assign_scaled(rhs, -1.0);
        out
    }
}

/// Divergence-free two-component velocity field.
///
/// Every mode satisfies `k · û(k) = 0`, equivalently `û(k)` is parallel to
/// `k⊥/|k|`, so the field is representable by scalar shell coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub u1: SpectralField,
    pub u2: SpectralField,
}

impl VelocityField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            u1: SpectralField::zeros(grid),
            u2: SpectralField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u1.grid()
    }

    /// Velocity from a scalar stream function: `u = ∇⊥ψ = (-∂₂ψ, ∂₁ψ)`.
    pub fn from_stream(psi: &SpectralField) -> Self {
        let u1 = psi.map_modes(|_, k2| Complex64::new(0.0, -(k2 as f64)));
        let u2 = psi.map_modes(|k1, _| Complex64::new(0.0, k1 as f64));
        Self { u1, u2 }
    }

    /// `max_k |k·û(k)|` relative to `max_k |k||û(k)|`.
    pub fn divergence_residual(&self) -> f64 {
        let grid = self.grid();
        let n = grid.n();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..n {
            let k1 = grid.wavenumber(i) as f64;
            for j in 0..n {
                let k2 = grid.wavenumber(j) as f64;
                let a = self.u1.coeffs()[i * n + j];
                let b = self.u2.coeffs()[i * n + j];
                let div = (a * k1 + b * k2).norm();
                let mag = (k1 * k1 + k2 * k2).sqrt() * (a.norm() + b.norm());
                worst = worst.max(div);
                scale = scale.max(mag);
            }
        }
        worst / scale.max(1e-300)
    }

    pub fn require_divergence_free(&self) -> Result<()> {
        let r = self.divergence_residual();
        if r > STRUCT_TOL * 10.0 {
            return Err(Error::NotDivergenceFree { residual: r });
        }
        Ok(())
    }

    pub fn l2_sq(&self) -> f64 {
        self.u1.l2_sq() + self.u2.l2_sq()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    /// `‖u‖²_{H¹} = (u, Au) = Σ_k |k|² |û(k)|²`.
    pub fn h1_sq(&self) -> f64 {
        self.u1.grad_sq() + self.u2.grad_sq()
    }

    /// `‖Au‖²_{L²} = Σ_k |k|⁴ |û(k)|²`.
    pub fn stokes_sq(&self) -> f64 {
        self.u1.weighted_sq(|kk| kk * kk) + self.u2.weighted_sq(|kk| kk * kk)
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.u1.inner(&other.u1) + self.u2.inner(&other.u2)
    }

    /// Stokes operator `A = -PΔ`: on divergence-free fields the multiplier
    /// `|k|²` componentwise.
    pub fn stokes(&self) -> Self {
        let m = |k1: i32, k2: i32| Complex64::new((k1 * k1 + k2 * k2) as f64, 0.0);
        Self {
            u1: self.u1.map_modes(m),
            u2: self.u2.map_modes(m),
        }
    }

    /// Pointwise maximum speed on the grid.
    pub fn max_speed(&self) -> f64 {
        let p1 = self.u1.to_physical();
        let p2 = self.u2.to_physical();
        p1.iter()
            .zip(&p2)
            .fold(0.0f64, |a, (&v, &w)| a.max((v * v + w * w).sqrt()))
    }

    pub fn is_finite(&self) -> bool {
        self.u1.is_finite() && self.u2.is_finite()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            u1: self.u1.scaled(s),
            u2: self.u2.scaled(s),
        }
    }

    pub fn add_assign_scaled(&mut self, other: &Self, s: f64) {
        self.u1.add_assign_scaled(&other.u1, s);
        self.u2.add_assign_scaled(&other.u2, s);
    }

    pub fn dealias(&mut self) {
        self.u1.dealias();
        self.u2.dealias();
    }
}

impl std::ops::Add for &VelocityField {
    type Output = VelocityField;
    fn add(self, rhs: &VelocityField) -> VelocityField {
        let mut out = self.clone();
        out.add_assign_scaled(rhs, 1.0);
        out
    }
}

impl std::ops::Sub for &VelocityField {
    type Output = VelocityField;
    fn sub(self, rhs: &VelocityField) -> VelocityField {
        let mut out = self.clone();
        out.add_assign_scaled(rhs, -1.0);
        out
    }
}

/// Real field held as physical grid samples (quadrature-side quantities).
#[derive(Debug, Clone)]
pub struct PhysicalField {
    grid: Grid,
    values: Vec<f64>,
}

impl PhysicalField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, &v| a.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
    }

    /// `L²` norm with the normalized measure (grid quadrature).
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64)
            .sqrt()
    }
}

/// Two-component physical field; carries flux-type quantities.
#[derive(Debug, Clone)]
pub struct PhysicalVectorField {
    pub v1: PhysicalField,
    pub v2: PhysicalField,
}

impl PhysicalVectorField {
    pub fn l2_norm(&self) -> f64 {
        let a = self.v1.l2_norm();
        let b = self.v2.l2_norm();
        (a * a + b * b).sqrt()
    }
}
