//! Cylindrical test functionals and empirical stationary-statistics checks.
//!
//! A cylindrical functional evaluates a state only through finitely many
//! mollified inner products, `Ψ(θ) = ψ((J_εθ, w₁), ..., (J_εθ, w_N))`, and
//! its gradient is the explicit combination
//! `Ψ'(θ) = Σ_k ∂ψ/∂y_k (y(θ)) J_ε w_k`. Time averages of
//! `(N^{(ν)}(θ), Ψ'(θ))` telescope to a boundary term, which is the
//! computable core of the stationarity condition; the energy-shell
//! inequality and the dissipation-balance defect are empirical sample
//! averages over trajectory windows.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{TimeAverage, Trajectory};
use crate::error::{Error, Result};
use crate::integrator::SqgState;
use crate::nonlinear::sqg_transport;
use crate::spectral::{mollify, riesz_perp, Grid, SpectralField};

/// Smooth profile `ψ: R^N -> R` with its gradient.
#[derive(Debug, Clone)]
pub enum PsiProfile {
    Constant(f64),
    /// `ψ(y) = ½ Σ y_k²` (the energy-type family).
    Quadratic,
    /// `ψ(y) = ½ Σ c_k y_k²`.
    QuadraticWeighted(Vec<f64>),
    /// `ψ(y) = Σ a_k sin(y_k)`; bounded, handy for telescoping checks.
    Sinusoid(Vec<f64>),
}

impl PsiProfile {
    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            PsiProfile::Constant(c) => *c,
            PsiProfile::Quadratic => 0.5 * y.iter().map(|v| v * v).sum::<f64>(),
            PsiProfile::QuadraticWeighted(c) => {
                0.5 * y.iter().zip(c).map(|(v, w)| w * v * v).sum::<f64>()
            }
            PsiProfile::Sinusoid(a) => y.iter().zip(a).map(|(v, w)| w * v.sin()).sum(),
        }
    }

    pub fn grad(&self, y: &[f64]) -> Vec<f64> {
        match self {
            PsiProfile::Constant(_) => vec![0.0; y.len()],
            PsiProfile::Quadratic => y.to_vec(),
            PsiProfile::QuadraticWeighted(c) => {
                y.iter().zip(c).map(|(v, w)| w * v).collect()
            }
            PsiProfile::Sinusoid(a) => {
                y.iter().zip(a).map(|(v, w)| w * v.cos()).collect()
            }
        }
    }
}

/// `Ψ(θ) = ψ((J_εθ, w₁), ..., (J_εθ, w_N))` with smooth test fields `w_k`.
#[derive(Debug, Clone)]
pub struct CylindricalFunctional {
    eps: f64,
    /// Mollified test fields `J_ε w_k`; by self-adjointness
    /// `(J_εθ, w_k) = (θ, J_ε w_k)`.
    jw: Vec<SpectralField>,
    psi: PsiProfile,
}

impl CylindricalFunctional {
    pub fn new(eps: f64, test_fields: &[SpectralField], psi: PsiProfile) -> Result<Self> {
        if eps < 0.0 || !eps.is_finite() {
            return Err(Error::NegativeMollifierWidth(eps));
        }
        if test_fields.is_empty() {
            return Err(Error::InvalidParameter(
                "a cylindrical functional needs at least one test field".into(),
            ));
        }
        let jw = test_fields
            .iter()
            .map(|w| mollify(w, eps))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { eps, jw, psi })
    }

    /// The default family: the first `n_fields` low Fourier modes
    /// (cos/sin pairs ordered by shell) mollified at width `eps`, with the
    /// quadratic profile `ψ(y) = ½ Σ y_k²`.
    pub fn default_family(grid: &Grid, n_fields: usize, eps: f64) -> Result<Self> {
        let modes = low_modes(n_fields.div_ceil(2));
        let mut fields = Vec::with_capacity(n_fields);
        'outer: for (k1, k2) in modes {
            for sin in [false, true] {
                let mut w = SpectralField::zeros(grid);
                if sin {
                    w.add_sin(k1, k2, 1.0);
                } else {
                    w.add_cos(k1, k2, 1.0);
                }
                fields.push(w);
                if fields.len() == n_fields {
                    break 'outer;
                }
            }
        }
        Self::new(eps, &fields, PsiProfile::Quadratic)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.jw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jw.is_empty()
    }

    pub fn psi(&self) -> &PsiProfile {
        &self.psi
    }

    pub fn with_psi(mut self, psi: PsiProfile) -> Self {
        self.psi = psi;
        self
    }

    /// Evaluation coordinates `y(θ) = ((J_εθ, w₁), ..., (J_εθ, w_N))`.
    pub fn coordinates(&self, theta: &SpectralField) -> Vec<f64> {
        self.jw.iter().map(|w| theta.inner(w)).collect()
    }

    /// `Ψ(θ)`.
    pub fn value(&self, theta: &SpectralField) -> f64 {
        self.psi.value(&self.coordinates(theta))
    }

    /// `Ψ'(θ) = Σ_k ∂ψ/∂y_k (y(θ)) J_ε w_k` as a field.
    pub fn gradient_field(&self, theta: &SpectralField) -> SpectralField {
        let y = self.coordinates(theta);
        let coeffs = self.psi.grad(&y);
        let mut out = SpectralField::zeros(theta.grid());
        for (c, w) in coeffs.iter().zip(&self.jw) {
            if *c != 0.0 {
                out.add_assign_scaled(w, *c);
            }
        }
        out
    }
}

/// Ordered list of representative low modes (one per Hermitian pair).
fn low_modes(count: usize) -> Vec<(i32, i32)> {
    let mut modes: Vec<(i32, i32)> = Vec::new();
    let kmax = 8i32;
    for k1 in 0..=kmax {
        for k2 in -kmax..=kmax {
            if (k1, k2) > (0, 0) {
                modes.push((k1, k2));
            }
        }
    }
    modes.sort_by_key(|&(a, b)| (a * a + b * b, a, b));
    modes.truncate(count);
    modes
}

/// `N^{(ν)}(θ) = R⊥θ·∇θ + γ(I+Λ)θ - νΔθ - f`; with `nu = 0` this is the
/// inviscid functional.
pub fn nonlinear_functional(
    theta: &SpectralField,
    nu: f64,
    gamma: f64,
    forcing: &SpectralField,
) -> Result<SpectralField> {
    let transport = sqg_transport(theta)?;
    let mut out = transport;
    let n = theta.grid().n();
    let grid = theta.grid().clone();
    let coeffs = out.coeffs_mut();
    for i in 0..n {
        let k1 = grid.wavenumber(i) as f64;
        for j in 0..n {
            let k2 = grid.wavenumber(j) as f64;
            let idx = i * n + j;
            let kk = k1 * k1 + k2 * k2;
            let lin = gamma * (1.0 + kk.sqrt()) + nu * kk;
            coeffs[idx] += theta.coeffs()[idx] * lin - forcing.coeffs()[idx];
        }
    }
    Ok(out)
}

/// The three parts of `(N^{(ν)}(θ), Ψ'(θ))`:
/// `F₁ = γ(θ, DΨ') - (f, Ψ')`, `F₂ = (θ, -ΔΨ')`,
/// `F₃ = -(θ R⊥θ, ∇Ψ')`, combining as `F₁ + ν F₂ + F₃`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FParts {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

impl FParts {
    pub fn combine(&self, nu: f64) -> f64 {
        self.f1 + nu * self.f2 + self.f3
    }
}

pub fn decompose_f(
    theta: &SpectralField,
    functional: &CylindricalFunctional,
    gamma: f64,
    forcing: &SpectralField,
) -> Result<FParts> {
    let grid = theta.grid().clone();
    let psi_prime = functional.gradient_field(theta);

    // F1 and F2 via spectral weights
    let n = grid.n();
    let mut damped = 0.0;
    let mut laplace = 0.0;
    for i in 0..n {
        let k1 = grid.wavenumber(i) as f64;
        for j in 0..n {
            let k2 = grid.wavenumber(j) as f64;
            let idx = i * n + j;
            let kk = k1 * k1 + k2 * k2;
            let cross = (theta.coeffs()[idx] * psi_prime.coeffs()[idx].conj()).re;
            damped += (1.0 + kk.sqrt()) * cross;
            laplace += kk * cross;
        }
    }
    let f1 = gamma * damped - forcing.inner(&psi_prime);
    let f2 = laplace;

    // F3 by trilinear grid quadrature
    let mut th = theta.clone();
    th.dealias();
    let u = riesz_perp(&th)?;
    let thp = th.to_physical();
    let u1 = u.u1.to_physical();
    let u2 = u.u2.to_physical();
    let g1 = psi_prime
        .map_modes(|k1, _| num_complex::Complex64::new(0.0, k1 as f64))
        .to_physical();
    let g2 = psi_prime
        .map_modes(|_, k2| num_complex::Complex64::new(0.0, k2 as f64))
        .to_physical();
    let f3 = -(0..grid.len())
        .map(|i| thp[i] * (u1[i] * g1[i] + u2[i] * g2[i]))
        .sum::<f64>()
        / grid.len() as f64;

    Ok(FParts { f1, f2, f3 })
}

/// Direct assembly of `(N^{(ν)}(θ), Ψ'(θ))` (the second route, used to
/// cross-check the F-decomposition).
pub fn nps_direct(
    theta: &SpectralField,
    functional: &CylindricalFunctional,
    nu: f64,
    gamma: f64,
    forcing: &SpectralField,
) -> Result<f64> {
    let n_field = nonlinear_functional(theta, nu, gamma, forcing)?;
    Ok(n_field.inner(&functional.gradient_field(theta)))
}

// ---------------------------------------------------------------------------
// Stationarity along trajectories
// ---------------------------------------------------------------------------

/// Observer that records `Ψ(θ(t))` and `(N^{(ν)}(θ(t)), Ψ'(θ(t)))` along a
/// run, for the telescoping stationarity check.
pub struct FunctionalTracker {
    functional: CylindricalFunctional,
    nu: f64,
    gamma: f64,
    forcing: SpectralField,
    pub psi_series: Vec<(f64, f64)>,
    pub nps_series: Vec<(f64, f64)>,
}

impl FunctionalTracker {
    pub fn new(
        functional: CylindricalFunctional,
        nu: f64,
        gamma: f64,
        forcing: SpectralField,
    ) -> Self {
        Self {
            functional,
            nu,
            gamma,
            forcing,
            psi_series: Vec::new(),
            nps_series: Vec::new(),
        }
    }

    pub fn observe(&mut self, state: &SqgState) {
        let psi = self.functional.value(&state.theta);
        let nps = nps_direct(
            &state.theta,
            &self.functional,
            self.nu,
            self.gamma,
            &self.forcing,
        )
        .expect("tracker fields validated at construction");
        self.psi_series.push((state.t, psi));
        self.nps_series.push((state.t, nps));
    }

    pub fn report(&self) -> Result<StationarityReport> {
        stationarity_report(&self.psi_series, &self.nps_series)
    }
}

/// Outcome of the telescoping check along one trajectory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StationarityReport {
    /// `(1/T) ∫ (N^{(ν)}(θ), Ψ'(θ)) ds` — the stationarity residual itself;
    /// it equals minus the boundary term and vanishes as `T` grows for
    /// bounded `Ψ`.
    pub residual: f64,
    /// `(1/T)[Ψ(θ(T)) - Ψ(θ(0))]`.
    pub boundary_term: f64,
    /// `|residual + boundary_term|`: the identity defect (pure time
    /// integration error).
    pub telescope_defect: f64,
    pub max_abs_psi: f64,
    pub duration: f64,
}

pub fn stationarity_report(
    psi_series: &[(f64, f64)],
    nps_series: &[(f64, f64)],
) -> Result<StationarityReport> {
    if psi_series.len() < 2 || psi_series.len() != nps_series.len() {
        return Err(Error::InvalidParameter(
            "stationarity check needs matched series with >= 2 samples".into(),
        ));
    }
    let t0 = psi_series.first().expect("nonempty").0;
    let t1 = psi_series.last().expect("nonempty").0;
    let duration = t1 - t0;
    if duration <= 0.0 {
        return Err(Error::EmptyWindow { start: t0, end: t1 });
    }
    let mut avg = TimeAverage::new();
    for &(t, v) in nps_series {
        avg.push(t, v);
    }
    let residual = avg.mean();
    let boundary_term =
        (psi_series.last().expect("nonempty").1 - psi_series[0].1) / duration;
    let max_abs_psi = psi_series.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
    Ok(StationarityReport {
        residual,
        boundary_term,
        telescope_defect: (residual + boundary_term).abs(),
        max_abs_psi,
        duration,
    })
}

// ---------------------------------------------------------------------------
// Energy-shell condition (c) and the dissipation-balance defect
// ---------------------------------------------------------------------------

/// Empirical value of condition (c) on an `H^{1/2}`-shell: the sample mean
/// of `γ‖θ‖²_{H^{1/2}} + ν‖∇θ‖² - (f, θ)` restricted to samples with
/// `E₁ <= ‖θ‖_{H^{1/2}} <= E₂` (mass outside the shell contributes zero).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShellConditionResult {
    pub value: f64,
    pub samples_in_shell: usize,
    pub samples_total: usize,
    pub empty_shell: bool,
}

pub fn energy_condition_c(
    trajectory: &Trajectory,
    window_start: f64,
    shell: (f64, f64),
) -> Result<ShellConditionResult> {
    let (e1, e2) = shell;
    if !(e1 <= e2) {
        return Err(Error::InvalidParameter(format!(
            "shell bounds must satisfy E1 <= E2, got [{e1}, {e2}]"
        )));
    }
    let recs = trajectory.window(window_start);
    let meta = &trajectory.meta;
    let mut acc = 0.0;
    let mut hits = 0usize;
    for r in recs {
        let h12 = r.h12sq.sqrt();
        if h12 >= e1 && h12 <= e2 {
            acc += meta.gamma * r.h12sq + meta.nu * r.gradsq - r.inject;
            hits += 1;
        }
    }
    let total = recs.len();
    Ok(ShellConditionResult {
        value: if total > 0 { acc / total as f64 } else { 0.0 },
        samples_in_shell: hits,
        samples_total: total,
        empty_shell: hits == 0,
    })
}

/// Time average of `γ‖θ‖²_{H^{1/2}} - (f, θ)` over a trailing window. By the
/// energy balance this equals `-ν⟨‖∇θ‖²⟩` minus the L² drift, and the
/// inviscid-limit theorem drives it to zero as `ν -> 0`.
pub fn dissipation_balance_defect(
    trajectory: &Trajectory,
    window_start: f64,
) -> Result<f64> {
    let recs = trajectory.window(window_start);
    if recs.len() < 2 {
        let end = trajectory
            .records
            .last()
            .map(|r| r.t)
            .unwrap_or(window_start);
        return Err(Error::EmptyWindow {
            start: window_start,
            end,
        });
    }
    let gamma = trajectory.meta.gamma;
    let mut avg = TimeAverage::new();
    for r in recs {
        avg.push(r.t, gamma * r.h12sq - r.inject);
    }
    Ok(avg.mean())
}

// ---------------------------------------------------------------------------
// Empirical measures
// ---------------------------------------------------------------------------

/// Uniformly weighted sample states over a window: all μ-integrals are
/// sample means. Integrating a constant observable returns the constant.
#[derive(Debug, Clone, Default)]
pub struct EmpiricalMeasure {
    states: Vec<SpectralField>,
}

impl EmpiricalMeasure {
    pub fn new() -> Self {
        Self { states: Vec::new() }
    }

    pub fn push(&mut self, state: SpectralField) {
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `∫ Φ dμ` as the sample mean of the observable.
    pub fn integrate(&self, observable: impl Fn(&SpectralField) -> f64) -> f64 {
        if self.states.is_empty() {
            return 0.0;
        }
        self.states.iter().map(observable).sum::<f64>() / self.states.len() as f64
    }

    /// Condition (b) residual: `∫ (N^{(ν)}(θ), Ψ'(θ)) dμ`.
    pub fn condition_b_residual(
        &self,
        functional: &CylindricalFunctional,
        nu: f64,
        gamma: f64,
        forcing: &SpectralField,
    ) -> Result<f64> {
        if self.states.is_empty() {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for th in &self.states {
            acc += nps_direct(th, functional, nu, gamma, forcing)?;
        }
        Ok(acc / self.states.len() as f64)
    }
}

// ---------------------------------------------------------------------------
// Machine-readable check reports
// ---------------------------------------------------------------------------

/// One entry of the JSON verification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    pub value: f64,
    pub tolerance: f64,
    pub verdict: String,
}

impl CheckReport {
    /// Pass when `value <= tolerance`.
    pub fn at_most(
        check: impl Into<String>,
        window: Option<(f64, f64)>,
        value: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            check: check.into(),
            window,
            value,
            tolerance,
            verdict: if value <= tolerance { "pass" } else { "fail" }.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{run_sqg_observed, SqgProblem, SqgRun};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        Grid::new(32).unwrap()
    }

    fn cos_x1(grid: &Grid) -> SpectralField {
        let mut f = SpectralField::zeros(grid);
        f.add_cos(1, 0, 1.0);
        f
    }

    #[test]
    fn functional_value_depends_only_on_coordinates() {
        let grid = grid();
        let func = CylindricalFunctional::default_family(&grid, 8, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = SpectralField::random_band_limited(&grid, 5, -1.0, &mut rng);
        // perturb far outside the span of the test fields
        let mut theta2 = theta.clone();
        theta2.add_cos(9, 9, 3.0);
        assert_eq!(
            func.coordinates(&theta),
            func.coordinates(&theta2),
            "coordinates must ignore modes outside the family"
        );
        assert_eq!(func.value(&theta), func.value(&theta2));
    }

    #[test]
    fn constant_profile_has_zero_gradient_parts() {
        let grid = grid();
        let func = CylindricalFunctional::default_family(&grid, 6, 0.05)
            .unwrap()
            .with_psi(PsiProfile::Constant(4.2));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = SpectralField::random_band_limited(&grid, 6, -1.0, &mut rng);
        let forcing = cos_x1(&grid);
        let parts = decompose_f(&theta, &func, 1.0, &forcing).unwrap();
        assert_eq!(parts.f1, 0.0);
        assert_eq!(parts.f2, 0.0);
        assert_eq!(parts.f3, 0.0);
        assert!(func.gradient_field(&theta).l2_norm() == 0.0);
    }

    #[test]
    fn nonlinear_functional_vanishes_on_steady_linear_state() {
        let grid = grid();
        let (nu, gamma) = (0.1, 1.0);
        let theta_star = cos_x1(&grid);
        let forcing = theta_star.scaled(2.0 * gamma + nu);
        let n = nonlinear_functional(&theta_star, nu, gamma, &forcing).unwrap();
        assert!(n.l2_norm() < 1e-10, "steady residual {}", n.l2_norm());

        let zero = SpectralField::zeros(&grid);
        let n0 = nonlinear_functional(&zero, nu, gamma, &zero).unwrap();
        assert_eq!(n0.l2_norm(), 0.0);
    }

    #[test]
    fn viscous_inviscid_difference_is_laplacian() {
        let grid = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta = SpectralField::random_band_limited(&grid, 8, -1.0, &mut rng);
        let forcing = cos_x1(&grid);
        let nu = 0.07;
        let nv = nonlinear_functional(&theta, nu, 1.0, &forcing).unwrap();
        let n0 = nonlinear_functional(&theta, 0.0, 1.0, &forcing).unwrap();
        let diff = &nv - &n0;
        // -νΔθ has spectral weight ν|k|²
        let expected = theta.map_modes(|k1, k2| {
            num_complex::Complex64::new(nu * ((k1 * k1 + k2 * k2) as f64), 0.0)
        });
        assert!((&diff - &expected).l2_norm() < 1e-12 * expected.l2_norm().max(1.0));
    }

    #[test]
    fn recombination_identity() {
        let grid = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let forcing = SpectralField::random_band_limited(&grid, 4, -1.5, &mut rng);
        for psi in [
            PsiProfile::Quadratic,
            PsiProfile::QuadraticWeighted(vec![0.3; 8]),
            PsiProfile::Sinusoid(vec![1.1; 8]),
        ] {
            let func = CylindricalFunctional::default_family(&grid, 8, 0.15)
                .unwrap()
                .with_psi(psi);
            let theta = SpectralField::random_band_limited(&grid, 7, -1.0, &mut rng);
            let (nu, gamma) = (0.03, 0.9);
            let parts = decompose_f(&theta, &func, gamma, &forcing).unwrap();
            let direct = nps_direct(&theta, &func, nu, gamma, &forcing).unwrap();
            let scale = direct.abs().max(theta.l2_sq()).max(1e-12);
            assert!(
                (parts.combine(nu) - direct).abs() < 1e-10 * scale,
                "recombination {} vs direct {direct}",
                parts.combine(nu)
            );
        }
    }

    #[test]
    fn f3_matches_commutator_route() {
        // single test field, quadratic ψ: F₃ = -y₁ (θ R⊥θ, ∇J_εw₁), matched
        // against the commutator representation of the same pairing.
        let grid = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut w = SpectralField::zeros(&grid);
        w.add_cos(1, 2, 1.0);
        let eps = 0.1;
        let func =
            CylindricalFunctional::new(eps, std::slice::from_ref(&w), PsiProfile::Quadratic)
                .unwrap();
        let theta = SpectralField::random_band_limited(&grid, 7, -1.2, &mut rng);
        let forcing = SpectralField::zeros(&grid);
        let parts = decompose_f(&theta, &func, 0.0, &forcing).unwrap();

        let jw = mollify(&w, eps).unwrap();
        let y1 = theta.inner(&jw);
        let psi_inv = crate::spectral::lambda_pow(&theta, -1.0).unwrap();
        let c = crate::nonlinear::commutator(&jw, &theta).unwrap();
        let pairing_via_commutator = 0.5 * psi_inv.inner(&c);
        let f3_via_commutator = -y1 * pairing_via_commutator;
        assert!(
            (parts.f3 - f3_via_commutator).abs() < 1e-8 * theta.l2_sq().max(1.0),
            "F3 {} vs commutator route {f3_via_commutator}",
            parts.f3
        );
    }

    #[test]
    fn stationarity_telescopes_along_a_run() {
        let grid = grid();
        let (nu, gamma) = (0.05, 1.0);
        let mut forcing = SpectralField::zeros(&grid);
        forcing.add_cos(1, 0, 0.8);
        forcing.add_sin(2, 1, 0.4);
        let problem = SqgProblem {
            grid: grid.clone(),
            nu,
            gamma,
            dt: 1e-3,
            forcing: forcing.clone(),
        };
        let func = CylindricalFunctional::default_family(&grid, 8, 0.1).unwrap();
        let mut tracker = FunctionalTracker::new(func, nu, gamma, forcing);
        let run = SqgRun {
            problem,
            theta0: SpectralField::zeros(&grid),
            t_end: 2.0,
            sample_stride: 1,
        };
        run_sqg_observed(&run, |s| tracker.observe(s)).unwrap();
        let rep = tracker.report().unwrap();
        let scale = rep.max_abs_psi.max(1e-12);
        assert!(
            rep.telescope_defect < 1e-6 * scale,
            "telescope defect {} vs scale {scale}",
            rep.telescope_defect
        );
    }

    #[test]
    fn stationarity_residual_is_zero_on_steady_trajectory() {
        let psi: Vec<(f64, f64)> = (0..20).map(|i| (0.1 * i as f64, 3.0)).collect();
        let nps: Vec<(f64, f64)> = (0..20).map(|i| (0.1 * i as f64, 0.0)).collect();
        let rep = stationarity_report(&psi, &nps).unwrap();
        assert_eq!(rep.residual, 0.0);
        assert_eq!(rep.boundary_term, 0.0);
        assert_eq!(rep.telescope_defect, 0.0);
    }

    #[test]
    fn shell_condition_flags_empty_shell() {
        let grid = grid();
        let (nu, gamma) = (0.05, 1.0);
        let forcing = cos_x1(&grid);
        let problem = SqgProblem {
            grid: grid.clone(),
            nu,
            gamma,
            dt: 2e-3,
            forcing,
        };
        let run = SqgRun {
            problem,
            theta0: SpectralField::zeros(&grid),
            t_end: 3.0,
            sample_stride: 5,
        };
        let out = crate::integrator::run_sqg(&run).unwrap();
        // shell far above ‖f‖_{L²}/γ is empty for converged runs
        let f_l2 = out.trajectory.meta.forcing_norms.l2;
        let above = 10.0 * f_l2 / gamma;
        let res = energy_condition_c(&out.trajectory, 1.0, (above, above * 2.0)).unwrap();
        assert!(res.empty_shell);
        assert_eq!(res.value, 0.0);

        // full shell: the global inequality value, nonpositive up to
        // integration tolerance on settled runs
        let res = energy_condition_c(&out.trajectory, 1.0, (0.0, f64::INFINITY)).unwrap();
        assert!(!res.empty_shell);
        assert!(res.value <= 1e-6, "condition (c) value {}", res.value);
    }

    #[test]
    fn defect_matches_balance_restatement() {
        let grid = grid();
        let (nu, gamma) = (0.04, 0.8);
        let mut forcing = SpectralField::zeros(&grid);
        forcing.add_cos(1, 1, 0.6);
        let problem = SqgProblem {
            grid: grid.clone(),
            nu,
            gamma,
            dt: 1e-3,
            forcing,
        };
        let run = SqgRun {
            problem,
            theta0: SpectralField::zeros(&grid),
            t_end: 2.0,
            sample_stride: 1,
        };
        let out = crate::integrator::run_sqg(&run).unwrap();
        let traj = &out.trajectory;
        let start = 0.5;
        let defect = dissipation_balance_defect(traj, start).unwrap();
        // defect = -ν⟨‖∇θ‖²⟩ - Δ‖θ‖²/(2T) up to integration error
        let recs = traj.window(start);
        let mut grad = TimeAverage::new();
        for r in recs {
            grad.push(r.t, r.gradsq);
        }
        let span = recs.last().unwrap().t - recs[0].t;
        let drift = (recs.last().unwrap().l2sq - recs[0].l2sq) / (2.0 * span);
        let restated = -nu * grad.mean() - drift;
        assert!(
            (defect - restated).abs() < 1e-5 * defect.abs().max(1e-3),
            "defect {defect} vs restatement {restated}"
        );
    }

    #[test]
    fn empirical_measure_integrates_constants_exactly() {
        let grid = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut measure = EmpiricalMeasure::new();
        for _ in 0..7 {
            measure.push(SpectralField::random_band_limited(&grid, 5, -1.0, &mut rng));
        }
        assert_eq!(measure.integrate(|_| 2.75), 2.75);
        assert_eq!(measure.len(), 7);
    }

    #[test]
    fn steady_measure_satisfies_condition_b() {
        let grid = grid();
        let (nu, gamma) = (0.1, 1.0);
        let theta_star = cos_x1(&grid);
        let forcing = theta_star.scaled(2.0 * gamma + nu);
        let mut measure = EmpiricalMeasure::new();
        for _ in 0..3 {
            measure.push(theta_star.clone());
        }
        let func = CylindricalFunctional::default_family(&grid, 8, 0.1).unwrap();
        let resid = measure
            .condition_b_residual(&func, nu, gamma, &forcing)
            .unwrap();
        assert!(resid.abs() < 1e-10, "condition (b) residual {resid}");
    }

    #[test]
    fn check_report_serializes() {
        let rep = CheckReport::at_most("idb_residual", Some((0.0, 1.0)), 1e-12, 1e-8);
        assert!(rep.passed());
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"check\":\"idb_residual\""));
        assert!(json.contains("\"verdict\":\"pass\""));
    }
}
