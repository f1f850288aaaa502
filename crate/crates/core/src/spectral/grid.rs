//! Uniform grid on the 2π-periodic torus and its Fourier transforms.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// N x N collocation grid on `[0, 2π)²` with shared FFT plans.
///
/// Integer wavenumbers run over `{-n/2+1, ..., n/2}` per dimension; storage
/// index `i` maps to `k = i` for `i <= n/2` and `k = i - n` otherwise.
/// Physical samples and Fourier coefficients are stored row-major with the
/// first coordinate slowest: entry `i * n + j` is `x = (2πi/n, 2πj/n)` in
/// physical space and `(k1(i), k2(j))` in spectral space.
///
/// All fields in this crate are real valued, so the transforms exploit
/// Hermitian symmetry: rows are packed two at a time into one complex FFT
/// and only the non-redundant half of the columns is transformed.
///
/// Cloning is cheap; the plans and wavenumber table are shared.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    dealias_fraction: f64,
    wavenumbers: Arc<Vec<i32>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Reusable buffers for the real transforms; one per simulation loop.
#[derive(Clone)]
pub struct TransformScratch {
    /// (n/2 + 1) x n staging area for the half-column pass.
    half: Vec<Complex64>,
    /// One packed row.
    row: Vec<Complex64>,
    /// rustfft scratch.
    fft: Vec<Complex64>,
}

impl TransformScratch {
    fn for_grid(grid: &Grid) -> Self {
        let n = grid.n;
        let scratch_len = grid
            .fwd
            .get_inplace_scratch_len()
            .max(grid.inv.get_inplace_scratch_len());
        Self {
            half: vec![Complex64::default(); (n / 2 + 1) * n],
            row: vec![Complex64::default(); n],
            fft: vec![Complex64::default(); scratch_len],
        }
    }
}

impl Grid {
    /// Grid with the standard 2/3 dealiasing rule.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_dealias_fraction(n, 2.0 / 3.0)
    }

    pub fn with_dealias_fraction(n: usize, dealias_fraction: f64) -> Result<Self> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidGridSize(n));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::InvalidDealiasFraction(dealias_fraction));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let wavenumbers = (0..n)
            .map(|i| if i <= n / 2 { i as i32 } else { i as i32 - n as i32 })
            .collect();
        Ok(Self {
            n,
            dealias_fraction,
            wavenumbers: Arc::new(wavenumbers),
            fwd,
            inv,
        })
    }

    /// Points per dimension.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points (and coefficients).
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Largest retained |k_i| under the dealiasing rule: modes with
    /// `max(|k1|, |k2|) > cutoff` are zeroed after every product.
    pub fn dealias_cutoff(&self) -> i32 {
        (self.dealias_fraction * self.n as f64 / 2.0).floor() as i32
    }

    /// Integer wavenumber along either dimension for storage index `i`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i32 {
        self.wavenumbers[i]
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Storage index of the mode `(k1, k2)` (wavenumbers taken mod n).
    pub fn mode_idx(&self, k1: i32, k2: i32) -> usize {
        let n = self.n as i32;
        let i = k1.rem_euclid(n) as usize;
        let j = k2.rem_euclid(n) as usize;
        self.idx(i, j)
    }

    /// Physical coordinates of grid point `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        let h = std::f64::consts::TAU / self.n as f64;
        (i as f64 * h, j as f64 * h)
    }

    /// Grid spacing `2π / n`.
    pub fn spacing(&self) -> f64 {
        std::f64::consts::TAU / self.n as f64
    }

    pub fn scratch(&self) -> TransformScratch {
        TransformScratch::for_grid(self)
    }

    /// Physical samples -> Fourier coefficients (θ̂(k) = mean of θ e^{-ik·x}).
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.len()];
        let mut scratch = self.scratch();
        self.forward_into(values, &mut out, &mut scratch);
        out
    }

    /// Fourier coefficients -> physical samples (real part of the sum).
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut scratch = self.scratch();
        self.inverse_into(coeffs, &mut out, &mut scratch);
        out
    }

    /// Allocation-free forward transform of a real field.
    ///
    /// Rows are packed in pairs `v_{2r} + i v_{2r+1}` (one complex FFT per
    /// pair), then only columns `k2 <= n/2` are transformed; the remaining
    /// coefficients follow from `F(-k) = conj(F(k))`.
    pub fn forward_into(
        &self,
        values: &[f64],
        out: &mut [Complex64],
        scratch: &mut TransformScratch,
    ) {
        let n = self.n;
        assert_eq!(values.len(), n * n, "physical field size mismatch");
        assert_eq!(out.len(), n * n, "coefficient array size mismatch");
        let half_cols = n / 2 + 1;

        // Row pass, two rows per complex FFT. Unpack directly into the
        // transposed staging buffer `half[k2 * n + i]`, keeping k2 <= n/2.
        for r in 0..n / 2 {
            let a = 2 * r;
            let b = 2 * r + 1;
            for j in 0..n {
                scratch.row[j] = Complex64::new(values[a * n + j], values[b * n + j]);
            }
            self.fwd
                .process_with_scratch(&mut scratch.row, &mut scratch.fft);
            for k in 0..half_cols {
                let zk = scratch.row[k];
                let zm = scratch.row[(n - k) % n].conj();
                let fa = (zk + zm) * 0.5;
                let fb = Complex64::new(0.0, -0.5) * (zk - zm);
                scratch.half[k * n + a] = fa;
                scratch.half[k * n + b] = fb;
            }
        }

        // Column pass on the non-redundant half.
        for k2 in 0..half_cols {
            self.fwd.process_with_scratch(
                &mut scratch.half[k2 * n..(k2 + 1) * n],
                &mut scratch.fft,
            );
        }

        // Scatter with Hermitian completion and 1/n² normalization.
        let scale = 1.0 / (n * n) as f64;
        for k2 in 0..half_cols {
            let mirror = k2 != 0 && k2 != n / 2;
            for k1 in 0..n {
                let v = scratch.half[k2 * n + k1] * scale;
                out[k1 * n + k2] = v;
                if mirror {
                    out[((n - k1) % n) * n + (n - k2)] = v.conj();
                }
            }
        }
    }

    /// Allocation-free inverse transform onto a real field. The coefficient
    /// array must be Hermitian (real-valued field); only the non-redundant
    /// half is read.
    pub fn inverse_into(
        &self,
        coeffs: &[Complex64],
        out: &mut [f64],
        scratch: &mut TransformScratch,
    ) {
        let n = self.n;
        assert_eq!(coeffs.len(), n * n, "coefficient array size mismatch");
        assert_eq!(out.len(), n * n, "physical field size mismatch");
        let half_cols = n / 2 + 1;

        // Gather columns k2 <= n/2, transposed, and transform along k1.
        for k2 in 0..half_cols {
            for k1 in 0..n {
                scratch.half[k2 * n + k1] = coeffs[k1 * n + k2];
            }
            self.inv.process_with_scratch(
                &mut scratch.half[k2 * n..(k2 + 1) * n],
                &mut scratch.fft,
            );
        }

        // Row pass, two rows per inverse FFT: pack H(a, ·) + i H(b, ·) using
        // the Hermitian extension H(i, n-k2) = conj(H(i, k2)).
        for r in 0..n / 2 {
            let a = 2 * r;
            let b = 2 * r + 1;
            for k2 in 0..half_cols {
                let ha = scratch.half[k2 * n + a];
                let hb = scratch.half[k2 * n + b];
                scratch.row[k2] = ha + Complex64::new(0.0, 1.0) * hb;
            }
            for k2 in half_cols..n {
                let ha = scratch.half[(n - k2) * n + a].conj();
                let hb = scratch.half[(n - k2) * n + b].conj();
                scratch.row[k2] = ha + Complex64::new(0.0, 1.0) * hb;
            }
            self.inv
                .process_with_scratch(&mut scratch.row, &mut scratch.fft);
            for j in 0..n {
                out[a * n + j] = scratch.row[j].re;
                out[b * n + j] = scratch.row[j].im;
            }
        }
    }

    /// In-place unnormalized complex 2D transform; reference path for tests
    /// and for non-Hermitian data.
    pub(crate) fn fft2_inplace(&self, data: &mut [Complex64], forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fwd } else { &self.inv };
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        let mut run_rows = |buf: &mut [Complex64]| {
            for row in buf.chunks_exact_mut(n) {
                plan.process_with_scratch(row, &mut scratch);
            }
        };
        run_rows(data);
        transpose_square(data, n);
        run_rows(data);
        transpose_square(data, n);
    }
}

/// Blocked in-place transpose of a square row-major matrix.
fn transpose_square(data: &mut [Complex64], n: usize) {
    const BLOCK: usize = 32;
    for ib in (0..n).step_by(BLOCK) {
        for jb in (ib..n).step_by(BLOCK) {
            let imax = (ib + BLOCK).min(n);
            let jmax = (jb + BLOCK).min(n);
            for i in ib..imax {
                let jstart = if ib == jb { i + 1 } else { jb };
                for j in jstart..jmax {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.dealias_fraction == other.dealias_fraction
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("dealias_fraction", &self.dealias_fraction)
            .finish()
    }
}
