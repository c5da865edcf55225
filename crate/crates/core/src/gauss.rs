//! Complex Gaussian kernels: Hermitian matrices, jittered Cholesky
//! factorization, circularly-symmetric log-densities, and the truncated DFT
//! used to parameterize Toeplitz covariances by a nonnegative spectrum.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative jitter ladder for [`cholesky_psd`], in units of `trace / dim`.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Default largest relative jitter tried before giving up.
pub const DEFAULT_MAX_JITTER: f64 = 1e-8;

const HERMITIAN_TOL: f64 = 1e-12;

/// Square complex matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<Complex64>);

impl HermitianMatrix {
    /// Validates squareness and Hermitian symmetry (relative 1e-12), then
    /// stores the exactly-symmetrized matrix.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let asym = max_asymmetry(&m);
        if !asym.is_finite() || asym > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        Ok(Self::symmetrize(m))
    }

    /// `(M + M^H) / 2`, for matrices that are Hermitian up to roundoff by
    /// construction.
    pub fn symmetrize(m: DMatrix<Complex64>) -> Self {
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            out[(i, i)] = Complex64::new(out[(i, i)].re, 0.0);
            for j in 0..i {
                let avg = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
                out[(i, j)] = avg;
                out[(j, i)] = avg.conj();
            }
        }
        HermitianMatrix(out)
    }

    pub fn identity(dim: usize) -> Self {
        HermitianMatrix(DMatrix::identity(dim, dim))
    }

    /// Real symmetric matrix promoted to complex.
    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    /// Trailing `m x m` block, i.e. `S^T C S` for the selection matrix that
    /// keeps the last `m` coordinates.
    pub fn trailing_block(&self, m: usize) -> Result<Self> {
        let n = self.dim();
        if m == 0 || m > n {
            return Err(Error::invalid(format!(
                "trailing block of size {m} from dimension {n}"
            )));
        }
        let off = n - m;
        Ok(HermitianMatrix(self.0.view((off, off), (m, m)).into_owned()))
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..self.dim() {
            m[(i, i)].re += shift;
        }
        HermitianMatrix(m)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.0.clone().symmetric_eigenvalues().iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation of any diagonal from its mean, relative to the
    /// largest entry magnitude. Zero for an exactly Toeplitz matrix.
    pub fn toeplitz_deviation(&self) -> f64 {
        let n = self.dim();
        let scale = self.0.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut worst = 0.0_f64;
        for lag in 0..n {
            let first = self.0[(lag, 0)];
            for i in lag..n {
                worst = worst.max((self.0[(i, i - lag)] - first).norm());
            }
        }
        worst / scale
    }
}

fn max_asymmetry(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..=i {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

/// Lower-triangular Cholesky factor `L` with `L L^H = C + jitter * I`.
///
/// Stored packed by rows so that forward substitution walks contiguous
/// memory.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    packed: Vec<Complex64>,
    inv_diag: Vec<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Absolute diagonal shift that was needed for the factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    fn row(&self, i: usize) -> &[Complex64] {
        let start = i * (i + 1) / 2;
        &self.packed[start..start + i + 1]
    }

    pub fn lower(&self) -> DMatrix<Complex64> {
        let mut l = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i).iter().enumerate() {
                l[(i, j)] = *v;
            }
        }
        l
    }

    /// `ln det(L L^H)`.
    pub fn log_det(&self) -> f64 {
        -2.0 * self.inv_diag.iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L z = b` in place.
    pub fn forward_substitute(&self, z: &mut [Complex64]) {
        debug_assert_eq!(z.len(), self.dim);
        for i in 0..self.dim {
            let row = self.row(i);
            let mut acc = z[i];
            for (l, zj) in row[..i].iter().zip(&z[..i]) {
                acc -= l * zj;
            }
            z[i] = acc * self.inv_diag[i];
        }
    }

    /// Solves `L^H x = z` in place.
    pub fn backward_substitute(&self, x: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        for i in (0..self.dim).rev() {
            x[i] *= self.inv_diag[i];
            let xi = x[i];
            let row = self.row(i);
            for (l, xj) in row[..i].iter().zip(&mut x[..i]) {
                *xj -= l.conj() * xi;
            }
        }
    }

    /// `(L L^H)^{-1} b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.forward_substitute(&mut x);
        self.backward_substitute(&mut x);
        x
    }

    /// `r^H (L L^H)^{-1} r`, using `scratch` as workspace.
    pub fn mahalanobis_sqr(&self, r: &[Complex64], scratch: &mut Vec<Complex64>) -> f64 {
        scratch.clear();
        scratch.extend_from_slice(r);
        self.forward_substitute(scratch);
        scratch.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Cholesky factorization with trace-relative jitter escalation.
///
/// Tries `eps` from [`JITTER_LADDER`] (times `trace / dim`), stopping at the
/// first that succeeds; rungs above `max_jitter_rel` are skipped.
pub fn cholesky_psd(cov: &HermitianMatrix, max_jitter_rel: f64) -> Result<CholeskyFactor> {
    let dim = cov.dim();
    if dim == 0 {
        return Err(Error::invalid("empty covariance"));
    }
    let scale = cov.trace() / dim as f64;
    if scale.is_finite() && scale > 0.0 {
        for rel in JITTER_LADDER.iter().copied().filter(|r| *r <= max_jitter_rel) {
            let jitter = rel * scale;
            if let Some(f) = try_cholesky(cov.matrix(), jitter) {
                return Ok(f);
            }
        }
    }
    Err(Error::NotPositiveDefinite {
        min_eigenvalue: cov.min_eigenvalue(),
        max_jitter: max_jitter_rel * scale.max(0.0),
    })
}

fn try_cholesky(a: &DMatrix<Complex64>, jitter: f64) -> Option<CholeskyFactor> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)].re).fold(0.0, f64::max) + jitter;
    let floor = f64::EPSILON * max_diag;
    let mut packed = vec![Complex64::new(0.0, 0.0); n * (n + 1) / 2];
    let mut inv_diag = vec![0.0; n];
    for i in 0..n {
        let ri = i * (i + 1) / 2;
        for j in 0..=i {
            let rj = j * (j + 1) / 2;
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= packed[ri + k] * packed[rj + k].conj();
            }
            if i == j {
                let d = acc.re + jitter;
                if !(d > floor) || !d.is_finite() {
                    return None;
                }
                let s = d.sqrt();
                packed[ri + i] = Complex64::new(s, 0.0);
                inv_diag[i] = 1.0 / s;
            } else {
                packed[ri + j] = acc * inv_diag[j];
            }
        }
    }
    Some(CholeskyFactor {
        dim: n,
        packed,
        inv_diag,
        jitter,
    })
}

/// Circularly-symmetric complex Gaussian with its covariance pre-factored.
#[derive(Debug, Clone)]
pub struct ComplexGaussian {
    mean: Vec<Complex64>,
    factor: CholeskyFactor,
    log_norm: f64,
}

impl ComplexGaussian {
    pub fn new(mean: Vec<Complex64>, cov: &HermitianMatrix, max_jitter_rel: f64) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        let factor = cholesky_psd(cov, max_jitter_rel)?;
        let log_norm = -(mean.len() as f64) * PI.ln() - factor.log_det();
        Ok(Self {
            mean,
            factor,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[Complex64] {
        &self.mean
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// Log-density at `x`, reusing `scratch` across calls.
    pub fn log_pdf_with(&self, x: &[Complex64], scratch: &mut Vec<Complex64>) -> f64 {
        scratch.clear();
        scratch.extend(x.iter().zip(&self.mean).map(|(a, m)| a - m));
        self.factor.forward_substitute(scratch);
        self.log_norm - scratch.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn log_pdf(&self, x: &[Complex64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.log_pdf_with(x, &mut Vec::with_capacity(x.len())))
    }
}

/// `ln N_C(x; mean, cov)` evaluated through a Cholesky factor.
pub fn log_pdf_complex_gaussian(
    x: &[Complex64],
    mean: &[Complex64],
    cov: &HermitianMatrix,
) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            found: x.len(),
        });
    }
    ComplexGaussian::new(mean.to_vec(), cov, DEFAULT_MAX_JITTER)?.log_pdf(x)
}

/// `ln sum_i exp(v_i)`, stable for large magnitudes.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Pairwise (cascade) summation; the result depends only on the input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Normalizes log-weights in place into probabilities; returns the
/// log-normalizer.
pub fn softmax_in_place(v: &mut [f64]) -> f64 {
    let lse = log_sum_exp(v);
    for x in v.iter_mut() {
        *x = (*x - lse).exp();
    }
    lse
}

/// First `N` columns of the unnormalized `2N`-point DFT matrix.
///
/// `Q` is `2N x N` with `Q[k][n] = exp(-2 pi i k n / 2N)`, so that
/// `Q^H diag(c) Q` is `N x N` Hermitian Toeplitz for real `c`, and PSD for
/// `c >= 0`. With this convention `Q^H Q = 2N I`.
#[derive(Debug, Clone)]
pub struct DftSelector {
    n: usize,
    q: DMatrix<Complex64>,
}

impl DftSelector {
    pub fn new(obs_len: usize, pred_len: usize) -> Result<Self> {
        let n = obs_len + pred_len;
        if n == 0 {
            return Err(Error::invalid("DFT selector needs Mo + Np >= 1"));
        }
        let q = DMatrix::from_fn(2 * n, n, |k, col| {
            Complex64::from_polar(1.0, -PI * ((k * col) % (2 * n)) as f64 / n as f64)
        });
        Ok(Self { n, q })
    }

    /// Trajectory dimension `N = Mo + Np`.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Spectrum length `2N`.
    pub fn spectrum_len(&self) -> usize {
        2 * self.n
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.q
    }

    /// Circulant generator `g[d] = sum_k c_k exp(2 pi i k d / 2N)`, so that
    /// `(Q^H diag(c) Q)[m][n] = g[(m - n) mod 2N]`.
    pub fn generator(&self, spectrum: &[f64]) -> Vec<Complex64> {
        let len = self.spectrum_len();
        (0..len)
            .map(|d| {
                spectrum
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| Complex64::from_polar(c, PI * ((k * d) % len) as f64 / self.n as f64))
                    .sum()
            })
            .collect()
    }

    /// `Q^H diag(c) Q`.
    pub fn covariance(&self, spectrum: &[f64]) -> Result<HermitianMatrix> {
        if spectrum.len() != self.spectrum_len() {
            return Err(Error::DimensionMismatch {
                expected: self.spectrum_len(),
                found: spectrum.len(),
            });
        }
        let g = self.generator(spectrum);
        let len = self.spectrum_len();
        let m = DMatrix::from_fn(self.n, self.n, |i, j| g[(i + len - j) % len]);
        Ok(HermitianMatrix::symmetrize(m))
    }

    /// Real spectrum of a Hermitian circulant generator:
    /// `c_k = (1/2N) sum_d g[d] exp(-2 pi i k d / 2N)`.
    pub fn spectrum_of(&self, generator: &[Complex64]) -> Vec<f64> {
        let len = self.spectrum_len();
        (0..len)
            .map(|k| {
                let s: Complex64 = generator
                    .iter()
                    .enumerate()
                    .map(|(d, g)| g * Complex64::from_polar(1.0, -PI * ((k * d) % len) as f64 / self.n as f64))
                    .sum();
                s.re / len as f64
            })
            .collect()
    }
}

/// Constructor matching the operation name used across the crate.
pub fn build_dft_selector(obs_len: usize, pred_len: usize) -> Result<DftSelector> {
    DftSelector::new(obs_len, pred_len)
}
