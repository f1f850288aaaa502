//! Trajectory records, long-time averaging and dissipation-rate estimates.
//!
//! Long-time limits are replaced by finite-horizon Cesàro means carrying an
//! explicit convergence verdict; statistical checks downstream only trust
//! windows whose verdict is `converged`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{SpectralField, VelocityField};

/// Which equation produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquationKind {
    Sqg,
    Nse,
}

/// L¹/L²/L^∞ norms of a field, used for envelope bookkeeping.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl FieldNorms {
    pub fn of_scalar(f: &SpectralField) -> Self {
        Self {
            l1: f.lp_norm(1.0).expect("p = 1 is valid"),
            l2: f.l2_norm(),
            linf: f.linf_norm(),
        }
    }

    pub fn of_velocity(u: &VelocityField) -> Self {
        // pointwise speed |u|
        let p1 = u.u1.to_physical();
        let p2 = u.u2.to_physical();
        let mags: Vec<f64> = p1
            .iter()
            .zip(&p2)
            .map(|(&a, &b)| (a * a + b * b).sqrt())
            .collect();
        let len = mags.len() as f64;
        Self {
            l1: mags.iter().sum::<f64>() / len,
            l2: (mags.iter().map(|m| m * m).sum::<f64>() / len).sqrt(),
            linf: mags.iter().fold(0.0f64, |a, &m| a.max(m)),
        }
    }

    pub fn zero() -> Self {
        Self {
            l1: 0.0,
            l2: 0.0,
            linf: 0.0,
        }
    }
}

/// One diagnostic sample along a trajectory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    /// `‖·‖²_{L²}`.
    pub l2sq: f64,
    /// `Σ (1+|k|)|θ̂|²` (for NSE the same weight applied componentwise).
    pub h12sq: f64,
    /// `‖∇·‖²_{L²}`, the dissipation integrand.
    pub gradsq: f64,
    /// Grid-sampled sup norm (speed for NSE).
    pub linf: f64,
    /// Grid-sampled L¹ norm.
    pub l1: f64,
    /// Injection `(f, ·)_{L²}`.
    pub inject: f64,
    /// Energy-balance residual of the latest step.
    pub residual: f64,
    /// `‖u‖²_{H¹} - λ‖u‖²_{L²}` (NSE with Kolmogorov forcing only).
    pub delta: Option<f64>,
    /// Rayleigh quotient `‖u‖²_{H¹} / ‖u‖²_{L²}` (NSE only), `>= 1`.
    pub mu: Option<f64>,
}

/// Run-level constants attached to a trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub equation: EquationKind,
    pub nu: f64,
    pub gamma: f64,
    /// Forcing eigenvalue, when the force is a Stokes eigenfunction.
    pub lambda: Option<f64>,
    pub grid_n: usize,
    pub dt: f64,
    pub sample_stride: usize,
    pub forcing_norms: FieldNorms,
    pub initial_norms: FieldNorms,
}

/// A sampled trajectory with its run constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        match (self.records.first(), self.records.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Records with `t >= start`.
    pub fn window(&self, start: f64) -> &[TrajectoryRecord] {
        let idx = self.records.partition_point(|r| r.t < start);
        &self.records[idx..]
    }

    /// Time series of one observable over a window.
    pub fn series(
        &self,
        start: f64,
        value: impl Fn(&TrajectoryRecord) -> f64,
    ) -> Vec<(f64, f64)> {
        self.window(start).iter().map(|r| (r.t, value(r))).collect()
    }
}

// ---------------------------------------------------------------------------
// Time averaging
// ---------------------------------------------------------------------------

/// Incremental trapezoidal time average with a Cesàro history.
///
/// The mean is accumulated as deviations from the first value, so the
/// running mean of a constant series equals that constant exactly.
#[derive(Debug, Clone)]
pub struct TimeAverage {
    t0: f64,
    v0: f64,
    last: Option<(f64, f64)>,
    sum_dt: f64,
    sum_dev: f64,
    cesaro: Vec<(f64, f64)>,
    count: usize,
}

impl TimeAverage {
    pub fn new() -> Self {
        Self {
            t0: 0.0,
            v0: 0.0,
            last: None,
            sum_dt: 0.0,
            sum_dev: 0.0,
            cesaro: Vec::new(),
            count: 0,
        }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        match self.last {
            None => {
                self.t0 = t;
                self.v0 = v;
                self.cesaro.push((t, v));
            }
            Some((tp, vp)) => {
                let dt = t - tp;
                self.sum_dt += dt;
                self.sum_dev += dt * (0.5 * (v + vp) - self.v0);
                self.cesaro.push((t, self.mean()));
            }
        }
        self.last = Some((t, v));
        self.count += 1;
    }

    pub fn mean(&self) -> f64 {
        if self.sum_dt == 0.0 {
            self.v0
        } else {
            self.v0 + self.sum_dev / self.sum_dt
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn elapsed(&self) -> f64 {
        self.sum_dt
    }

    pub fn start_time(&self) -> f64 {
        self.t0
    }

    pub fn cesaro_curve(&self) -> &[(f64, f64)] {
        &self.cesaro
    }
}

impl Default for TimeAverage {
    fn default() -> Self {
        Self::new()
    }
}

/// Verdict on whether a finite-horizon Cesàro mean has settled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub mean: f64,
    /// max - min of the Cesàro curve over the final half of the window.
    pub tail_oscillation: f64,
    pub converged: bool,
    pub samples: usize,
}

/// Oscillation threshold: the tail of the Cesàro curve must stay within 5%
/// of the final mean, plus an absolute floor for decayed-to-zero series.
pub const CONVERGENCE_REL_TOL: f64 = 0.05;
pub const CONVERGENCE_ABS_FLOOR: f64 = 1e-12;

/// Cesàro-mean convergence check for a sampled series; needs >= 10 samples.
pub fn average_convergence(series: &[(f64, f64)]) -> Result<ConvergenceReport> {
    if series.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "average_convergence needs at least 10 samples, got {}",
            series.len()
        )));
    }
    let mut avg = TimeAverage::new();
    for &(t, v) in series {
        avg.push(t, v);
    }
    let mean = avg.mean();
    let curve = avg.cesaro_curve();
    let t_start = curve.first().expect("nonempty").0;
    let t_end = curve.last().expect("nonempty").0;
    let half = t_start + 0.5 * (t_end - t_start);
    let tail: Vec<f64> = curve
        .iter()
        .filter(|(t, _)| *t >= half)
        .map(|&(_, m)| m)
        .collect();
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &m| {
            (a.min(m), b.max(m))
        });
    let tail_oscillation = if tail.is_empty() { 0.0 } else { hi - lo };
    let converged =
        tail_oscillation <= CONVERGENCE_REL_TOL * mean.abs() + CONVERGENCE_ABS_FLOOR;
    Ok(ConvergenceReport {
        mean,
        tail_oscillation,
        converged,
        samples: series.len(),
    })
}

// ---------------------------------------------------------------------------
// Dissipation-rate estimate
// ---------------------------------------------------------------------------

/// Finite-horizon estimate of `ε = ν ⟨‖∇·‖²⟩`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpsilonEstimate {
    /// `ν (T - T₀)^{-1} ∫_{T₀}^{T} ‖∇·‖² dt` by trapezoid.
    pub mean: f64,
    /// Proxy for `ν limsup`: the largest trailing-window average.
    pub limsup_proxy: f64,
    pub window: (f64, f64),
}

/// Long-time-averaged energy dissipation rate over `[window_start, T]`.
pub fn epsilon_estimate(
    trajectory: &Trajectory,
    nu: f64,
    window_start: f64,
) -> Result<EpsilonEstimate> {
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
    let t_end = recs.last().expect("nonempty").t;

    let mut avg = TimeAverage::new();
    for r in recs {
        avg.push(r.t, r.gradsq);
    }
    let mean = nu * avg.mean();

    // trailing means accumulated from the end
    let mut limsup = f64::NEG_INFINITY;
    let mut integral = 0.0;
    for pair in recs.windows(2).rev() {
        let (a, b) = (pair[0], pair[1]);
        integral += 0.5 * (a.gradsq + b.gradsq) * (b.t - a.t);
        let span = t_end - a.t;
        if span > 0.0 {
            limsup = limsup.max(nu * integral / span);
        }
    }
    Ok(EpsilonEstimate {
        mean,
        limsup_proxy: limsup,
        window: (recs[0].t, t_end),
    })
}

// ---------------------------------------------------------------------------
// Support envelopes
// ---------------------------------------------------------------------------

/// Measured norm maxima along an SQG trajectory against the predicted
/// envelopes: pointwise `‖θ(t)‖_{L^p} <= A_p = ‖θ₀‖_{L^p} + ‖f‖_{L^p}/γ`
/// for p ∈ {1, 2, ∞}, and the time-averaged bound
/// `γ ⟨‖θ‖²_{H^{1/2}}⟩ + ν ⟨‖∇θ‖²⟩ <= ‖f‖²_{L²}/γ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportEnvelope {
    pub max_h12: f64,
    pub max_l1: f64,
    pub max_l2: f64,
    pub max_linf: f64,
    pub bound_l1: f64,
    pub bound_l2: f64,
    pub bound_linf: f64,
    /// `γ⟨h12²⟩ + ν⟨‖∇θ‖²⟩` over the trailing window.
    pub h12_time_avg_lhs: f64,
    /// `‖f‖²_{L²}/γ`.
    pub h12_time_avg_rhs: f64,
    /// Worst pointwise envelope excess over all p and samples (<= 0 when
    /// every bound holds).
    pub worst_excess: f64,
}

pub fn support_envelope(
    trajectory: &Trajectory,
    window_start: f64,
) -> Result<SupportEnvelope> {
    let meta = &trajectory.meta;
    if meta.equation != EquationKind::Sqg {
        return Err(Error::InvalidParameter(
            "support_envelope applies to SQG trajectories".into(),
        ));
    }
    if meta.gamma <= 0.0 {
        return Err(Error::InvalidParameter(
            "support envelopes need gamma > 0".into(),
        ));
    }
    if trajectory.records.is_empty() {
        return Err(Error::EmptyWindow {
            start: 0.0,
            end: 0.0,
        });
    }
    let mut max_h12: f64 = 0.0;
    let mut max_l1: f64 = 0.0;
    let mut max_l2: f64 = 0.0;
    let mut max_linf: f64 = 0.0;
    for r in &trajectory.records {
        max_h12 = max_h12.max(r.h12sq.sqrt());
        max_l1 = max_l1.max(r.l1);
        max_l2 = max_l2.max(r.l2sq.sqrt());
        max_linf = max_linf.max(r.linf);
    }
    let gamma = meta.gamma;
    let f = &meta.forcing_norms;
    let ic = &meta.initial_norms;
    let bound_l1 = ic.l1 + f.l1 / gamma;
    let bound_l2 = ic.l2 + f.l2 / gamma;
    let bound_linf = ic.linf + f.linf / gamma;

    let recs = trajectory.window(window_start);
    let lhs = if recs.len() >= 2 {
        let mut h12 = TimeAverage::new();
        let mut grad = TimeAverage::new();
        for r in recs {
            h12.push(r.t, r.h12sq);
            grad.push(r.t, r.gradsq);
        }
        gamma * h12.mean() + meta.nu * grad.mean()
    } else {
        0.0
    };

    let worst_excess = (max_l1 - bound_l1)
        .max(max_l2 - bound_l2)
        .max(max_linf - bound_linf);

    Ok(SupportEnvelope {
        max_h12,
        max_l1,
        max_l2,
        max_linf,
        bound_l1,
        bound_l2,
        bound_linf,
        h12_time_avg_lhs: lhs,
        h12_time_avg_rhs: f.l2 * f.l2 / gamma,
        worst_excess,
    })
}

/// The energy-balance rearrangement behind the ε estimate:
/// `ν⟨‖∇θ‖²⟩ = ⟨(f,θ)⟩ - γ⟨‖θ‖²_{H^{1/2}}⟩ - Δ‖θ‖²_{L²}/(2T)`.
/// Returns `(lhs, rhs)` computed from the recorded channels.
pub fn epsilon_balance_sides(
    trajectory: &Trajectory,
    window_start: f64,
) -> Result<(f64, f64)> {
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
    let meta = &trajectory.meta;
    let mut grad = TimeAverage::new();
    let mut inject = TimeAverage::new();
    let mut h12 = TimeAverage::new();
    for r in recs {
        grad.push(r.t, r.gradsq);
        inject.push(r.t, r.inject);
        h12.push(r.t, r.h12sq);
    }
    let span = recs.last().expect("nonempty").t - recs[0].t;
    let drift = (recs.last().expect("nonempty").l2sq - recs[0].l2sq) / (2.0 * span);
    let lhs = meta.nu * grad.mean();
    let rhs = inject.mean() - meta.gamma * h12.mean() - drift;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_trajectory(gradsq: f64, n: usize, dt: f64) -> Trajectory {
        let records = (0..n)
            .map(|i| TrajectoryRecord {
                t: i as f64 * dt,
                l2sq: 1.0,
                h12sq: 2.0,
                gradsq,
                linf: 1.0,
                l1: 0.8,
                inject: 0.0,
                residual: 0.0,
                delta: None,
                mu: None,
            })
            .collect();
        Trajectory {
            meta: TrajectoryMeta {
                equation: EquationKind::Sqg,
                nu: 0.1,
                gamma: 1.0,
                lambda: None,
                grid_n: 16,
                dt,
                sample_stride: 1,
                forcing_norms: FieldNorms::zero(),
                initial_norms: FieldNorms {
                    l1: 0.8,
                    l2: 1.0,
                    linf: 1.0,
                },
            },
            records,
        }
    }

    #[test]
    fn constant_series_mean_is_exact() {
        let mut avg = TimeAverage::new();
        let c = 0.1234567890123;
        for i in 0..100 {
            avg.push(i as f64 * 0.017, c);
        }
        assert_eq!(avg.mean(), c);
    }

    #[test]
    fn convergence_verdicts() {
        // constant: converged, zero oscillation
        let series: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 2.5)).collect();
        let rep = average_convergence(&series).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.tail_oscillation, 0.0);
        assert_eq!(rep.mean, 2.5);

        // sinusoid around a mean: Cesàro converges once T >> 1/ω
        let series: Vec<(f64, f64)> = (0..4000)
            .map(|i| {
                let t = i as f64 * 0.05;
                (t, 3.0 + 0.5 * (2.0 * t).sin())
            })
            .collect();
        let rep = average_convergence(&series).unwrap();
        assert!(rep.converged, "oscillation {}", rep.tail_oscillation);
        assert!((rep.mean - 3.0).abs() < 0.01);

        // linear growth: diverging mean
        let series: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, i as f64)).collect();
        let rep = average_convergence(&series).unwrap();
        assert!(!rep.converged);

        // too few samples
        let series: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 0.0)).collect();
        assert!(average_convergence(&series).is_err());
    }

    #[test]
    fn epsilon_of_constant_gradsq() {
        let traj = flat_trajectory(4.0, 101, 0.1);
        let est = epsilon_estimate(&traj, 0.1, 2.0).unwrap();
        assert!((est.mean - 0.4).abs() < 1e-12);
        assert!((est.limsup_proxy - 0.4).abs() < 1e-12);
    }

    #[test]
    fn epsilon_rejects_empty_window() {
        let traj = flat_trajectory(1.0, 10, 0.1);
        assert!(matches!(
            epsilon_estimate(&traj, 0.1, 100.0),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn epsilon_of_decaying_eigenmode_matches_closed_form() {
        // gradsq(t) = e^{-2rt}: ν/T ∫₀ᵀ e^{-2rt} dt = ν (1 - e^{-2rT})/(2rT)
        let r = 0.7;
        let nu = 0.05;
        let dt = 1e-3;
        let n = 2001;
        let records: Vec<TrajectoryRecord> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                TrajectoryRecord {
                    t,
                    l2sq: (-2.0 * r * t).exp(),
                    h12sq: 0.0,
                    gradsq: (-2.0 * r * t).exp(),
                    linf: 0.0,
                    l1: 0.0,
                    inject: 0.0,
                    residual: 0.0,
                    delta: None,
                    mu: None,
                }
            })
            .collect();
        let mut traj = flat_trajectory(0.0, 2, dt);
        traj.records = records;
        let est = epsilon_estimate(&traj, nu, 0.0).unwrap();
        let t_total = (n - 1) as f64 * dt;
        let exact = nu * (1.0 - (-2.0 * r * t_total).exp()) / (2.0 * r * t_total);
        assert!(
            (est.mean - exact).abs() / exact < 1e-6,
            "estimate {} vs exact {exact}",
            est.mean
        );
    }

    #[test]
    fn support_envelope_flags_nothing_for_flat_run() {
        let traj = flat_trajectory(0.5, 50, 0.1);
        let env = support_envelope(&traj, 1.0).unwrap();
        assert!(env.worst_excess <= 1e-12);
        assert_eq!(env.max_l2, 1.0);
    }
}
