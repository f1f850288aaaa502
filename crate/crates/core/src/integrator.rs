//! Time advancement for both equations.
//!
//! One scheme serves both: the stiff linear symbol is integrated exactly
//! (multiplication by `e^{-L dt}` with the constant force folded in through
//! the `φ₁` function), while the advection term gets a second-order Heun
//! corrector under the integrating factor. Steady states of the linear part
//! are therefore exact fixed points of the discrete map, and single-mode
//! decay reproduces `e^{-Lt}` to rounding.
//!
//! The advective CFL number `dt · max|u| · n / 2π` is held at or below 0.5
//! by transparent substepping.

use num_complex::Complex64;

use crate::diagnostics::{
    EquationKind, FieldNorms, Trajectory, TrajectoryMeta, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::spectral::{Grid, SpectralField, TransformScratch, VelocityField};

/// Advective CFL target enforced by substepping.
pub const CFL_TARGET: f64 = 0.5;

/// Cumulative energy channels integrated alongside a run (trapezoidal in
/// time within each step). All three are nonnegative and nondecreasing for
/// `γ, ν >= 0` and a sign-definite injection.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyChannels {
    /// `∫ (f, ·) dt`.
    pub injected: f64,
    /// `∫ ν ‖∇·‖² dt`.
    pub dissipated_viscous: f64,
    /// `∫ γ ‖·‖²_{H^{1/2}} dt` (SQG only).
    pub dissipated_damping: f64,
    /// `∫ |balance residual| dt`.
    pub residual_abs: f64,
}

/// Outcome of one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    /// Balance residual of the last substep.
    pub residual: f64,
    /// Number of CFL substeps taken.
    pub substeps: usize,
    /// Maximum speed seen at the start of the step.
    pub max_speed: f64,
}

// ---------------------------------------------------------------------------
// SQG
// ---------------------------------------------------------------------------

/// Damped, viscous critical SQG:
/// `∂_t θ + (R⊥θ)·∇θ + γ(I + Λ)θ - νΔθ = f`.
#[derive(Debug, Clone)]
pub struct SqgProblem {
    pub grid: Grid,
    pub nu: f64,
    pub gamma: f64,
    /// Nominal step; internally subdivided when the CFL bound demands it.
    pub dt: f64,
    pub forcing: SpectralField,
}

impl SqgProblem {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidTimeStep(self.dt));
        }
        if self.nu < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "nu and gamma must be nonnegative, got nu = {}, gamma = {}",
                self.nu, self.gamma
            )));
        }
        if self.forcing.grid().n() != self.grid.n() {
            return Err(Error::GridMismatch(self.forcing.grid().n(), self.grid.n()));
        }
        self.forcing.require_mean_free()
    }
}

#[derive(Debug, Clone)]
pub struct SqgState {
    pub t: f64,
    pub theta: SpectralField,
    pub channels: EnergyChannels,
}

impl SqgState {
    pub fn new(theta0: SpectralField) -> Self {
        Self {
            t: 0.0,
            theta: theta0,
            channels: EnergyChannels::default(),
        }
    }
}

/// Per-mode tables and scratch buffers reused across steps.
pub struct SqgWorkspace {
    scratch: TransformScratch,
    /// Riesz multipliers: `û1 = i m1 θ̂`, `û2 = i m2 θ̂`.
    m1: Vec<f64>,
    m2: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    kabs: Vec<f64>,
    ksq: Vec<f64>,
    keep: Vec<bool>,
    /// Linear symbol `γ(1+|k|) + ν|k|²`, zero-mode damping included.
    lsym: Vec<f64>,
    /// Cached integrating factors for the current substep length.
    cached_dt: f64,
    efac: Vec<f64>,
    phi1dt: Vec<f64>,
    fhat: Vec<Complex64>,
    spec_n1: Vec<Complex64>,
    spec_n2: Vec<Complex64>,
    spec_star: Vec<Complex64>,
    spec_a: Vec<Complex64>,
    spec_b: Vec<Complex64>,
    phys_u1: Vec<f64>,
    phys_u2: Vec<f64>,
    phys_th: Vec<f64>,
}

impl SqgWorkspace {
    pub fn new(problem: &SqgProblem) -> Result<Self> {
        problem.validate()?;
        let grid = &problem.grid;
        let n = grid.n();
        let len = grid.len();
        let cutoff = grid.dealias_cutoff();
        let mut m1 = vec![0.0; len];
        let mut m2 = vec![0.0; len];
        let mut k1v = vec![0.0; len];
        let mut k2v = vec![0.0; len];
        let mut kabs = vec![0.0; len];
        let mut ksq = vec![0.0; len];
        let mut keep = vec![false; len];
        let mut lsym = vec![0.0; len];
        for i in 0..n {
            let k1 = grid.wavenumber(i);
            for j in 0..n {
                let k2 = grid.wavenumber(j);
                let idx = i * n + j;
                let kk = (k1 * k1 + k2 * k2) as f64;
                let kn = kk.sqrt();
                k1v[idx] = k1 as f64;
                k2v[idx] = k2 as f64;
                kabs[idx] = kn;
                ksq[idx] = kk;
                keep[idx] = k1.abs().max(k2.abs()) <= cutoff;
                lsym[idx] = problem.gamma * (1.0 + kn) + problem.nu * kk;
                if kk > 0.0 {
                    m1[idx] = -(k2 as f64) / kn;
                    m2[idx] = (k1 as f64) / kn;
                }
            }
        }
        Ok(Self {
            scratch: grid.scratch(),
            m1,
            m2,
            k1: k1v,
            k2: k2v,
            kabs,
            ksq,
            keep,
            lsym,
            cached_dt: f64::NAN,
            efac: vec![0.0; len],
            phi1dt: vec![0.0; len],
            fhat: problem.forcing.coeffs().to_vec(),
            spec_n1: vec![Complex64::default(); len],
            spec_n2: vec![Complex64::default(); len],
            spec_star: vec![Complex64::default(); len],
            spec_a: vec![Complex64::default(); len],
            spec_b: vec![Complex64::default(); len],
            phys_u1: vec![0.0; len],
            phys_u2: vec![0.0; len],
            phys_th: vec![0.0; len],
        })
    }

    fn ensure_factors(&mut self, dt: f64) {
        if self.cached_dt == dt {
            return;
        }
        for idx in 0..self.lsym.len() {
            let l = self.lsym[idx];
            self.efac[idx] = (-l * dt).exp();
            // dt φ₁(L dt) = (1 - e^{-L dt}) / L, -> dt as L -> 0
            self.phi1dt[idx] = if l * dt > 1e-12 {
                -(-l * dt).exp_m1() / l
            } else {
                dt * (1.0 - 0.5 * l * dt)
            };
        }
        self.cached_dt = dt;
    }

    /// Nonlinear RHS `N(θ) = -∇·(uθ)` with `u = R⊥θ`, dealiased; also
    /// returns the maximum speed when requested (for the CFL bound).
    fn rhs(
        &mut self,
        grid: &Grid,
        theta: &[Complex64],
        into_second: bool,
        want_speed: bool,
    ) -> f64 {
        let len = theta.len();
        for idx in 0..len {
            let t = theta[idx];
            // u = i m θ
            self.spec_a[idx] = Complex64::new(-t.im * self.m1[idx], t.re * self.m1[idx]);
            self.spec_b[idx] = Complex64::new(-t.im * self.m2[idx], t.re * self.m2[idx]);
        }
        grid.inverse_into(&self.spec_a, &mut self.phys_u1, &mut self.scratch);
        grid.inverse_into(&self.spec_b, &mut self.phys_u2, &mut self.scratch);
        grid.inverse_into(theta, &mut self.phys_th, &mut self.scratch);
        let mut speed = 0.0f64;
        if want_speed {
            for i in 0..len {
                let s = self.phys_u1[i] * self.phys_u1[i]
                    + self.phys_u2[i] * self.phys_u2[i];
                if s > speed {
                    speed = s;
                }
            }
            speed = speed.sqrt();
        }
        for i in 0..len {
            self.phys_u1[i] *= self.phys_th[i];
            self.phys_u2[i] *= self.phys_th[i];
        }
        grid.forward_into(&self.phys_u1, &mut self.spec_a, &mut self.scratch);
        grid.forward_into(&self.phys_u2, &mut self.spec_b, &mut self.scratch);
        let out = if into_second {
            &mut self.spec_n2
        } else {
            &mut self.spec_n1
        };
        for idx in 0..len {
            if self.keep[idx] {
                let div = Complex64::new(0.0, self.k1[idx]) * self.spec_a[idx]
                    + Complex64::new(0.0, self.k2[idx]) * self.spec_b[idx];
                out[idx] = -div;
            } else {
                out[idx] = Complex64::default();
            }
        }
        out[0] = Complex64::default();
        speed
    }

    /// `(‖θ‖², ‖θ‖²_{H^{1/2}}, ‖∇θ‖², (f,θ))` in one pass.
    fn budget_scalars(&self, theta: &[Complex64]) -> (f64, f64, f64, f64) {
        let mut l2 = 0.0;
        let mut h12 = 0.0;
        let mut grad = 0.0;
        let mut inj = 0.0;
        for idx in 0..theta.len() {
            let t = theta[idx];
            let e = t.norm_sqr();
            l2 += e;
            h12 += (1.0 + self.kabs[idx]) * e;
            grad += self.ksq[idx] * e;
            let f = self.fhat[idx];
            inj += f.re * t.re + f.im * t.im;
        }
        (l2, h12, grad, inj)
    }
}

/// Advance one nominal step of the SQG equation, substepping under the CFL
/// limit. Exact on the linear subsystem with constant forcing; Heun
/// (second order) on the transport term.
pub fn step_sqg(
    state: &mut SqgState,
    problem: &SqgProblem,
    ws: &mut SqgWorkspace,
) -> Result<StepReport> {
    let grid = &problem.grid;
    let n = grid.n() as f64;
    state.theta.zero_mean();

    let speed = ws.rhs(grid, state.theta.coeffs(), false, true);
    let substeps = ((problem.dt * speed * n / std::f64::consts::TAU) / CFL_TARGET)
        .ceil()
        .max(1.0) as usize;
    let dt = problem.dt / substeps as f64;
    ws.ensure_factors(dt);

    let mut residual = 0.0;
    for sub in 0..substeps {
        if sub > 0 {
            ws.rhs(grid, state.theta.coeffs(), false, false);
        }
        let (l2_a, h12_a, grad_a, inj_a) = ws.budget_scalars(state.theta.coeffs());

        // predictor: θ* = E(θ + dt N1) + dtφ₁ f
        {
            let theta = state.theta.coeffs();
            for idx in 0..theta.len() {
                ws.spec_star[idx] = ws.efac[idx] * (theta[idx] + ws.spec_n1[idx] * dt)
                    + ws.fhat[idx] * ws.phi1dt[idx];
            }
        }
        let star = std::mem::take(&mut ws.spec_star);
        ws.rhs(grid, &star, true, false);
        ws.spec_star = star;

        // corrector: θ <- E(θ + dt/2 N1) + dtφ₁ f + dt/2 N2
        {
            let theta = state.theta.coeffs_mut();
            let half = 0.5 * dt;
            for idx in 0..theta.len() {
                theta[idx] = ws.efac[idx] * (theta[idx] + ws.spec_n1[idx] * half)
                    + ws.fhat[idx] * ws.phi1dt[idx]
                    + ws.spec_n2[idx] * half;
            }
            theta[0] = Complex64::default();
        }

        let (l2_b, h12_b, grad_b, inj_b) = ws.budget_scalars(state.theta.coeffs());
        if !l2_b.is_finite() {
            return Err(Error::NumericalBlowup { t: state.t });
        }
        let h12_m = 0.5 * (h12_a + h12_b);
        let grad_m = 0.5 * (grad_a + grad_b);
        let inj_m = 0.5 * (inj_a + inj_b);
        residual = 0.5 * (l2_b - l2_a) / dt + problem.gamma * h12_m
            + problem.nu * grad_m
            - inj_m;
        state.channels.injected += dt * inj_m;
        state.channels.dissipated_viscous += dt * problem.nu * grad_m;
        state.channels.dissipated_damping += dt * problem.gamma * h12_m;
        state.channels.residual_abs += dt * residual.abs();
        state.t += dt;
    }

    Ok(StepReport {
        residual,
        substeps,
        max_speed: speed,
    })
}

/// Trapezoidal residual of the energy balance
/// `d/2dt ‖θ‖² + γ‖θ‖²_{H^{1/2}} + ν‖∇θ‖² = (f, θ)`
/// between two consecutive states.
pub fn energy_budget_sqg(
    before: &SqgState,
    after: &SqgState,
    problem: &SqgProblem,
) -> f64 {
    let dt = after.t - before.t;
    let avg = |f: fn(&SpectralField) -> f64| {
        0.5 * (f(&before.theta) + f(&after.theta))
    };
    let inj = 0.5
        * (problem.forcing.inner(&before.theta) + problem.forcing.inner(&after.theta));
    0.5 * (after.theta.l2_sq() - before.theta.l2_sq()) / dt
        + problem.gamma * avg(SpectralField::h12_sq)
        + problem.nu * avg(SpectralField::grad_sq)
        - inj
}

/// A full SQG run specification.
#[derive(Debug, Clone)]
pub struct SqgRun {
    pub problem: SqgProblem,
    pub theta0: SpectralField,
    pub t_end: f64,
    /// Steps between diagnostic samples.
    pub sample_stride: usize,
}

pub struct SqgRunOutput {
    pub trajectory: Trajectory,
    pub state: SqgState,
}

/// Result of a run that distinguishes numerical failure (partial trajectory
/// retained for snapshotting) from configuration errors.
pub enum SqgOutcome {
    Completed(SqgRunOutput),
    Aborted { trajectory: Trajectory, t: f64 },
}

pub fn run_sqg(run: &SqgRun) -> Result<SqgRunOutput> {
    run_sqg_observed(run, |_| {})
}

/// Run with a per-sample observer (used by the statistics layer).
pub fn run_sqg_observed(
    run: &SqgRun,
    observe: impl FnMut(&SqgState),
) -> Result<SqgRunOutput> {
    match run_sqg_outcome(run, observe)? {
        SqgOutcome::Completed(out) => Ok(out),
        SqgOutcome::Aborted { t, .. } => Err(Error::NumericalBlowup { t }),
    }
}

/// Like [`run_sqg_observed`] but a numerical abort returns the trajectory
/// sampled so far instead of discarding it.
pub fn run_sqg_outcome(
    run: &SqgRun,
    mut observe: impl FnMut(&SqgState),
) -> Result<SqgOutcome> {
    let problem = &run.problem;
    problem.validate()?;
    if run.theta0.grid().n() != problem.grid.n() {
        return Err(Error::GridMismatch(
            run.theta0.grid().n(),
            problem.grid.n(),
        ));
    }
    if run.sample_stride == 0 {
        return Err(Error::InvalidParameter("sample_stride must be >= 1".into()));
    }
    let mut ws = SqgWorkspace::new(problem)?;
    let mut theta0 = run.theta0.clone();
    theta0.zero_mean();

    let meta = TrajectoryMeta {
        equation: EquationKind::Sqg,
        nu: problem.nu,
        gamma: problem.gamma,
        lambda: None,
        grid_n: problem.grid.n(),
        dt: problem.dt,
        sample_stride: run.sample_stride,
        forcing_norms: FieldNorms::of_scalar(&problem.forcing),
        initial_norms: FieldNorms::of_scalar(&theta0),
    };
    let mut state = SqgState::new(theta0);
    let nsteps = (run.t_end / problem.dt - 1e-9).ceil().max(0.0) as usize;
    let mut records = Vec::with_capacity(nsteps / run.sample_stride + 2);
    records.push(sqg_record(&state, &mut ws, &problem.grid, 0.0));
    observe(&state);

    for step in 1..=nsteps {
        match step_sqg(&mut state, problem, &mut ws) {
            Ok(report) => {
                if step % run.sample_stride == 0 || step == nsteps {
                    records.push(sqg_record(
                        &state,
                        &mut ws,
                        &problem.grid,
                        report.residual,
                    ));
                    observe(&state);
                }
            }
            Err(Error::NumericalBlowup { t }) => {
                return Ok(SqgOutcome::Aborted {
                    trajectory: Trajectory { meta, records },
                    t,
                });
            }
            Err(e) => return Err(e),
        }
    }

    Ok(SqgOutcome::Completed(SqgRunOutput {
        trajectory: Trajectory { meta, records },
        state,
    }))
}

fn sqg_record(
    state: &SqgState,
    ws: &mut SqgWorkspace,
    grid: &Grid,
    residual: f64,
) -> TrajectoryRecord {
    let (l2sq, h12sq, gradsq, inject) = ws.budget_scalars(state.theta.coeffs());
    grid.inverse_into(state.theta.coeffs(), &mut ws.phys_th, &mut ws.scratch);
    let mut linf = 0.0f64;
    let mut l1 = 0.0f64;
    for &v in &ws.phys_th {
        linf = linf.max(v.abs());
        l1 += v.abs();
    }
    l1 /= ws.phys_th.len() as f64;
    TrajectoryRecord {
        t: state.t,
        l2sq,
        h12sq,
        gradsq,
        linf,
        l1,
        inject,
        residual,
        delta: None,
        mu: None,
    }
}

// ---------------------------------------------------------------------------
// NSE
// ---------------------------------------------------------------------------

/// 2D incompressible Navier-Stokes, `∂_t u + νAu + B(u,u) = f`.
#[derive(Debug, Clone)]
pub struct NseProblem {
    pub grid: Grid,
    pub nu: f64,
    pub dt: f64,
    pub forcing: VelocityField,
}

impl NseProblem {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidTimeStep(self.dt));
        }
        if self.nu < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "nu must be nonnegative, got {}",
                self.nu
            )));
        }
        if self.forcing.grid().n() != self.grid.n() {
            return Err(Error::GridMismatch(self.forcing.grid().n(), self.grid.n()));
        }
        self.forcing.require_divergence_free()
    }
}

#[derive(Debug, Clone)]
pub struct NseState {
    pub t: f64,
    pub u: VelocityField,
    pub channels: EnergyChannels,
}

impl NseState {
    pub fn new(u0: VelocityField) -> Self {
        Self {
            t: 0.0,
            u: u0,
            channels: EnergyChannels::default(),
        }
    }
}

pub struct NseWorkspace {
    scratch: TransformScratch,
    k1: Vec<f64>,
    k2: Vec<f64>,
    ksq: Vec<f64>,
    kabs: Vec<f64>,
    /// Unit vectors `k⊥/|k|` for the Leray projection.
    e1: Vec<f64>,
    e2: Vec<f64>,
    keep: Vec<bool>,
    lsym: Vec<f64>,
    cached_dt: f64,
    efac: Vec<f64>,
    phi1dt: Vec<f64>,
    f1hat: Vec<Complex64>,
    f2hat: Vec<Complex64>,
    n1_a: Vec<Complex64>,
    n1_b: Vec<Complex64>,
    n2_a: Vec<Complex64>,
    n2_b: Vec<Complex64>,
    star_a: Vec<Complex64>,
    star_b: Vec<Complex64>,
    spec_a: Vec<Complex64>,
    spec_b: Vec<Complex64>,
    spec_c: Vec<Complex64>,
    phys_u1: Vec<f64>,
    phys_u2: Vec<f64>,
    phys_q: Vec<f64>,
}

impl NseWorkspace {
    pub fn new(problem: &NseProblem) -> Result<Self> {
        problem.validate()?;
        let grid = &problem.grid;
        let n = grid.n();
        let len = grid.len();
        let cutoff = grid.dealias_cutoff();
        let mut k1v = vec![0.0; len];
        let mut k2v = vec![0.0; len];
        let mut ksq = vec![0.0; len];
        let mut kabs = vec![0.0; len];
        let mut e1 = vec![0.0; len];
        let mut e2 = vec![0.0; len];
        let mut keep = vec![false; len];
        let mut lsym = vec![0.0; len];
        for i in 0..n {
            let k1 = grid.wavenumber(i);
            for j in 0..n {
                let k2 = grid.wavenumber(j);
                let idx = i * n + j;
                let kk = (k1 * k1 + k2 * k2) as f64;
                k1v[idx] = k1 as f64;
                k2v[idx] = k2 as f64;
                ksq[idx] = kk;
                kabs[idx] = kk.sqrt();
                keep[idx] = k1.abs().max(k2.abs()) <= cutoff;
                lsym[idx] = problem.nu * kk;
                if kk > 0.0 {
                    let kn = kk.sqrt();
                    e1[idx] = -(k2 as f64) / kn;
                    e2[idx] = (k1 as f64) / kn;
                }
            }
        }
        Ok(Self {
            scratch: grid.scratch(),
            k1: k1v,
            k2: k2v,
            ksq,
            kabs,
            e1,
            e2,
            keep,
            lsym,
            cached_dt: f64::NAN,
            efac: vec![0.0; len],
            phi1dt: vec![0.0; len],
            f1hat: problem.forcing.u1.coeffs().to_vec(),
            f2hat: problem.forcing.u2.coeffs().to_vec(),
            n1_a: vec![Complex64::default(); len],
            n1_b: vec![Complex64::default(); len],
            n2_a: vec![Complex64::default(); len],
            n2_b: vec![Complex64::default(); len],
            star_a: vec![Complex64::default(); len],
            star_b: vec![Complex64::default(); len],
            spec_a: vec![Complex64::default(); len],
            spec_b: vec![Complex64::default(); len],
            spec_c: vec![Complex64::default(); len],
            phys_u1: vec![0.0; len],
            phys_u2: vec![0.0; len],
            phys_q: vec![0.0; len],
        })
    }

    fn ensure_factors(&mut self, dt: f64) {
        if self.cached_dt == dt {
            return;
        }
        for idx in 0..self.lsym.len() {
            let l = self.lsym[idx];
            self.efac[idx] = (-l * dt).exp();
            self.phi1dt[idx] = if l * dt > 1e-12 {
                -(-l * dt).exp_m1() / l
            } else {
                dt * (1.0 - 0.5 * l * dt)
            };
        }
        self.cached_dt = dt;
    }

    /// `N(u) = -P ∇·(u ⊗ u)`, dealiased; optionally the max speed.
    fn rhs(
        &mut self,
        grid: &Grid,
        u1: &[Complex64],
        u2: &[Complex64],
        into_second: bool,
        want_speed: bool,
    ) -> f64 {
        let len = u1.len();
        grid.inverse_into(u1, &mut self.phys_u1, &mut self.scratch);
        grid.inverse_into(u2, &mut self.phys_u2, &mut self.scratch);
        let mut speed = 0.0f64;
        if want_speed {
            for i in 0..len {
                let s = self.phys_u1[i] * self.phys_u1[i]
                    + self.phys_u2[i] * self.phys_u2[i];
                if s > speed {
                    speed = s;
                }
            }
            speed = speed.sqrt();
        }
        // q11, q12, q22
        for i in 0..len {
            self.phys_q[i] = self.phys_u1[i] * self.phys_u1[i];
        }
        grid.forward_into(&self.phys_q, &mut self.spec_a, &mut self.scratch);
        for i in 0..len {
            self.phys_q[i] = self.phys_u1[i] * self.phys_u2[i];
        }
        grid.forward_into(&self.phys_q, &mut self.spec_b, &mut self.scratch);
        for i in 0..len {
            self.phys_q[i] = self.phys_u2[i] * self.phys_u2[i];
        }
        grid.forward_into(&self.phys_q, &mut self.spec_c, &mut self.scratch);

        let (na, nb) = if into_second {
            (&mut self.n2_a, &mut self.n2_b)
        } else {
            (&mut self.n1_a, &mut self.n1_b)
        };
        for idx in 0..len {
            if self.keep[idx] && self.ksq[idx] > 0.0 {
                let ik1 = Complex64::new(0.0, self.k1[idx]);
                let ik2 = Complex64::new(0.0, self.k2[idx]);
                // w = ∇·(u ⊗ u)
                let w1 = ik1 * self.spec_a[idx] + ik2 * self.spec_b[idx];
                let w2 = ik1 * self.spec_b[idx] + ik2 * self.spec_c[idx];
                // Leray projection, then negate
                let along = w1 * self.e1[idx] + w2 * self.e2[idx];
                na[idx] = -along * self.e1[idx];
                nb[idx] = -along * self.e2[idx];
            } else {
                na[idx] = Complex64::default();
                nb[idx] = Complex64::default();
            }
        }
        speed
    }

    /// `(‖u‖², Σ(1+|k|)|û|², ‖u‖²_{H¹}, (f,u))` in one pass.
    fn budget_scalars(&self, u1: &[Complex64], u2: &[Complex64]) -> (f64, f64, f64, f64) {
        let mut l2 = 0.0;
        let mut h12 = 0.0;
        let mut h1 = 0.0;
        let mut inj = 0.0;
        for idx in 0..u1.len() {
            let e = u1[idx].norm_sqr() + u2[idx].norm_sqr();
            l2 += e;
            h12 += (1.0 + self.kabs[idx]) * e;
            h1 += self.ksq[idx] * e;
            let fa = self.f1hat[idx];
            let fb = self.f2hat[idx];
            inj += fa.re * u1[idx].re + fa.im * u1[idx].im + fb.re * u2[idx].re
                + fb.im * u2[idx].im;
        }
        (l2, h12, h1, inj)
    }
}

/// Advance one nominal NSE step (CFL-substepped IMEX Heun with exact
/// viscous factor). Divergence-freeness is preserved mode by mode.
pub fn step_nse(
    state: &mut NseState,
    problem: &NseProblem,
    ws: &mut NseWorkspace,
) -> Result<StepReport> {
    let grid = &problem.grid;
    let n = grid.n() as f64;
    state.u.u1.zero_mean();
    state.u.u2.zero_mean();

    let speed = ws.rhs(
        grid,
        state.u.u1.coeffs(),
        state.u.u2.coeffs(),
        false,
        true,
    );
    let substeps = ((problem.dt * speed * n / std::f64::consts::TAU) / CFL_TARGET)
        .ceil()
        .max(1.0) as usize;
    let dt = problem.dt / substeps as f64;
    ws.ensure_factors(dt);

    let mut residual = 0.0;
    for sub in 0..substeps {
        if sub > 0 {
            ws.rhs(
                grid,
                state.u.u1.coeffs(),
                state.u.u2.coeffs(),
                false,
                false,
            );
        }
        let (l2_a, _h12_a, h1_a, inj_a) =
            ws.budget_scalars(state.u.u1.coeffs(), state.u.u2.coeffs());

        {
            let ua = state.u.u1.coeffs();
            let ub = state.u.u2.coeffs();
            for idx in 0..ua.len() {
                ws.star_a[idx] = ws.efac[idx] * (ua[idx] + ws.n1_a[idx] * dt)
                    + ws.f1hat[idx] * ws.phi1dt[idx];
                ws.star_b[idx] = ws.efac[idx] * (ub[idx] + ws.n1_b[idx] * dt)
                    + ws.f2hat[idx] * ws.phi1dt[idx];
            }
        }
        let sa = std::mem::take(&mut ws.star_a);
        let sb = std::mem::take(&mut ws.star_b);
        ws.rhs(grid, &sa, &sb, true, false);
        ws.star_a = sa;
        ws.star_b = sb;

        {
            let half = 0.5 * dt;
            let ua = state.u.u1.coeffs_mut();
            for idx in 0..ua.len() {
                ua[idx] = ws.efac[idx] * (ua[idx] + ws.n1_a[idx] * half)
                    + ws.f1hat[idx] * ws.phi1dt[idx]
                    + ws.n2_a[idx] * half;
            }
            ua[0] = Complex64::default();
            let ub = state.u.u2.coeffs_mut();
            for idx in 0..ub.len() {
                ub[idx] = ws.efac[idx] * (ub[idx] + ws.n1_b[idx] * half)
                    + ws.f2hat[idx] * ws.phi1dt[idx]
                    + ws.n2_b[idx] * half;
            }
            ub[0] = Complex64::default();
        }

        let (l2_b, _h12_b, h1_b, inj_b) =
            ws.budget_scalars(state.u.u1.coeffs(), state.u.u2.coeffs());
        if !l2_b.is_finite() {
            return Err(Error::NumericalBlowup { t: state.t });
        }
        let h1_m = 0.5 * (h1_a + h1_b);
        let inj_m = 0.5 * (inj_a + inj_b);
        residual = 0.5 * (l2_b - l2_a) / dt + problem.nu * h1_m - inj_m;
        state.channels.injected += dt * inj_m;
        state.channels.dissipated_viscous += dt * problem.nu * h1_m;
        state.channels.residual_abs += dt * residual.abs();
        state.t += dt;
    }

    Ok(StepReport {
        residual,
        substeps,
        max_speed: speed,
    })
}

/// Trapezoidal residual of `d/2dt ‖u‖² + ν‖u‖²_{H¹} = (f, u)` between two
/// consecutive states.
pub fn energy_budget_nse(
    before: &NseState,
    after: &NseState,
    problem: &NseProblem,
) -> f64 {
    let dt = after.t - before.t;
    let h1 = 0.5 * (before.u.h1_sq() + after.u.h1_sq());
    let inj = 0.5
        * (problem.forcing.inner(&before.u) + problem.forcing.inner(&after.u));
    0.5 * (after.u.l2_sq() - before.u.l2_sq()) / dt + problem.nu * h1 - inj
}

#[derive(Debug, Clone)]
pub struct NseRun {
    pub problem: NseProblem,
    pub u0: VelocityField,
    pub t_end: f64,
    pub sample_stride: usize,
    /// Forcing eigenvalue; enables the δ/μ diagnostics.
    pub lambda: Option<f64>,
}

pub struct NseRunOutput {
    pub trajectory: Trajectory,
    pub state: NseState,
}

pub fn run_nse(run: &NseRun) -> Result<NseRunOutput> {
    run_nse_observed(run, |_| {})
}

pub fn run_nse_observed(
    run: &NseRun,
    mut observe: impl FnMut(&NseState),
) -> Result<NseRunOutput> {
    let problem = &run.problem;
    problem.validate()?;
    if run.u0.grid().n() != problem.grid.n() {
        return Err(Error::GridMismatch(run.u0.grid().n(), problem.grid.n()));
    }
    run.u0.require_divergence_free()?;
    if run.sample_stride == 0 {
        return Err(Error::InvalidParameter("sample_stride must be >= 1".into()));
    }
    let mut ws = NseWorkspace::new(problem)?;
    let mut u0 = run.u0.clone();
    u0.u1.zero_mean();
    u0.u2.zero_mean();

    let meta = TrajectoryMeta {
        equation: EquationKind::Nse,
        nu: problem.nu,
        gamma: 0.0,
        lambda: run.lambda,
        grid_n: problem.grid.n(),
        dt: problem.dt,
        sample_stride: run.sample_stride,
        forcing_norms: FieldNorms::of_velocity(&problem.forcing),
        initial_norms: FieldNorms::of_velocity(&u0),
    };
    let mut state = NseState::new(u0);
    let nsteps = (run.t_end / problem.dt - 1e-9).ceil().max(0.0) as usize;
    let mut records = Vec::with_capacity(nsteps / run.sample_stride + 2);
    records.push(nse_record(&state, &mut ws, &problem.grid, 0.0, run.lambda));
    observe(&state);

    for step in 1..=nsteps {
        let report = step_nse(&mut state, problem, &mut ws)?;
        if step % run.sample_stride == 0 || step == nsteps {
            records.push(nse_record(
                &state,
                &mut ws,
                &problem.grid,
                report.residual,
                run.lambda,
            ));
            observe(&state);
        }
    }

    Ok(NseRunOutput {
        trajectory: Trajectory { meta, records },
        state,
    })
}

fn nse_record(
    state: &NseState,
    ws: &mut NseWorkspace,
    grid: &Grid,
    residual: f64,
    lambda: Option<f64>,
) -> TrajectoryRecord {
    let (l2sq, h12sq, h1sq, inject) =
        ws.budget_scalars(state.u.u1.coeffs(), state.u.u2.coeffs());
    grid.inverse_into(state.u.u1.coeffs(), &mut ws.phys_u1, &mut ws.scratch);
    grid.inverse_into(state.u.u2.coeffs(), &mut ws.phys_u2, &mut ws.scratch);
    let mut linf = 0.0f64;
    let mut l1 = 0.0f64;
    for i in 0..ws.phys_u1.len() {
        let s = (ws.phys_u1[i] * ws.phys_u1[i] + ws.phys_u2[i] * ws.phys_u2[i]).sqrt();
        linf = linf.max(s);
        l1 += s;
    }
    l1 /= ws.phys_u1.len() as f64;
    let delta = lambda.map(|lam| h1sq - lam * l2sq);
    let mu = if l2sq > 0.0 { Some(h1sq / l2sq) } else { Some(1.0) };
    TrajectoryRecord {
        t: state.t,
        l2sq,
        h12sq,
        gradsq: h1sq,
        linf,
        l1,
        inject,
        residual,
        delta,
        mu,
    }
}
