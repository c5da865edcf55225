//! Complex Gaussian mixture models over channel trajectories.
//!
//! Means and covariances use the reverse-chronological filter layout, so an
//! observation of the first `Mo` time samples corresponds to the trailing
//! `Mo` coordinates of every component.

mod em;
mod io;
mod kmeans;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::chanmodel::NoisyObservation;
use crate::error::{Error, Result};
use crate::gauss::{softmax_in_place, ComplexGaussian, DftSelector, HermitianMatrix, DEFAULT_MAX_JITTER};

pub use self::em::{fit_em, fit_em_observed, EmOptions, FitReport};
pub use self::io::{load_model, read_model, save_model, write_model, MODEL_MAGIC};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Covariance parameterization of the mixture components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    Full,
    /// `C_k = Q^H diag(c_k) Q` with a nonnegative spectrum `c_k`.
    Toeplitz,
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Full => "full",
            Structure::Toeplitz => "toeplitz",
        })
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Structure::Full),
            "toeplitz" => Ok(Structure::Toeplitz),
            other => Err(Error::invalid(format!("unknown covariance structure {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariances {
    Full(Vec<HermitianMatrix>),
    /// One spectrum of length `2 * dim` per component.
    Toeplitz(Vec<Vec<f64>>),
}

/// A fitted mixture `sum_k pi_k N_C(h; mu_k, C_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<Vec<Complex64>>,
    covariances: Covariances,
}

impl GmmModel {
    /// Validates weights on the simplex, consistent dimensions, PSD full
    /// covariances, and nonnegative spectra.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<Complex64>>, covariances: Covariances) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if means.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: means.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("mixture weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::invalid("zero-dimensional mixture"));
        }
        for m in &means {
            if m.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.len(),
                });
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::invalid("non-finite mean"));
            }
        }
        match &covariances {
            Covariances::Full(covs) => {
                if covs.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        found: covs.len(),
                    });
                }
                for c in covs {
                    if c.dim() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            found: c.dim(),
                        });
                    }
                    let min = c.min_eigenvalue();
                    if !(min >= -1e-10 * c.trace().abs() / dim as f64) {
                        return Err(Error::NotPositiveDefinite {
                            min_eigenvalue: min,
                            max_jitter: 0.0,
                        });
                    }
                }
            }
            Covariances::Toeplitz(spectra) => {
                if spectra.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        found: spectra.len(),
                    });
                }
                for s in spectra {
                    if s.len() != 2 * dim {
                        return Err(Error::DimensionMismatch {
                            expected: 2 * dim,
                            found: s.len(),
                        });
                    }
                    if s.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
                        return Err(Error::invalid("Toeplitz spectrum must be finite and nonnegative"));
                    }
                }
            }
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn structure(&self) -> Structure {
        match self.covariances {
            Covariances::Full(_) => Structure::Full,
            Covariances::Toeplitz(_) => Structure::Toeplitz,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<Complex64>] {
        &self.means
    }

    pub fn covariances(&self) -> &Covariances {
        &self.covariances
    }

    /// Dense covariance of component `k`; Toeplitz spectra are expanded.
    pub fn covariance(&self, k: usize) -> HermitianMatrix {
        match &self.covariances {
            Covariances::Full(c) => c[k].clone(),
            Covariances::Toeplitz(s) => DftSelector::new(self.dim(), 0)
                .and_then(|sel| sel.covariance(&s[k]))
                .expect("spectrum length validated at construction"),
        }
    }

    pub fn covariance_matrices(&self) -> Vec<HermitianMatrix> {
        (0..self.num_components()).map(|k| self.covariance(k)).collect()
    }

    /// Component densities of the full trajectory vector.
    pub fn densities(&self) -> Result<MixtureDensity> {
        let comps = self
            .means
            .iter()
            .zip(self.covariance_matrices())
            .map(|(m, c)| ComplexGaussian::new(m.clone(), &c, DEFAULT_MAX_JITTER))
            .collect::<Result<Vec<_>>>()?;
        Ok(MixtureDensity::new(&self.weights, comps))
    }

    /// Component densities of `y = S^T h + n` for the trailing `obs_len`
    /// coordinates and white noise of variance `noise_var`.
    pub fn observation_densities(&self, obs_len: usize, noise_var: f64) -> Result<MixtureDensity> {
        if obs_len == 0 || obs_len > self.dim() {
            return Err(Error::invalid(format!(
                "observation length {obs_len} for model dimension {}",
                self.dim()
            )));
        }
        let off = self.dim() - obs_len;
        let comps = self
            .means
            .iter()
            .zip(self.covariance_matrices())
            .map(|(m, c)| {
                let cy = c.trailing_block(obs_len)?.shifted(noise_var);
                ComplexGaussian::new(m[off..].to_vec(), &cy, DEFAULT_MAX_JITTER)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MixtureDensity::new(&self.weights, comps))
    }
}

/// Weighted set of factored component densities.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    log_weights: Vec<f64>,
    comps: Vec<ComplexGaussian>,
}

impl MixtureDensity {
    pub fn new(weights: &[f64], comps: Vec<ComplexGaussian>) -> Self {
        Self {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            comps,
        }
    }

    pub fn num_components(&self) -> usize {
        self.comps.len()
    }

    pub fn dim(&self) -> usize {
        self.comps[0].dim()
    }

    pub fn components(&self) -> &[ComplexGaussian] {
        &self.comps
    }

    /// Fills `out` with `ln pi_k + ln N(x; mu_k, C_k)`.
    pub fn log_joint(&self, x: &[Complex64], out: &mut Vec<f64>, scratch: &mut Vec<Complex64>) {
        out.clear();
        out.extend(
            self.log_weights
                .iter()
                .zip(&self.comps)
                .map(|(lw, c)| if *lw == f64::NEG_INFINITY { *lw } else { lw + c.log_pdf_with(x, scratch) }),
        );
    }

    /// Posterior component probabilities; returns them with `ln p(x)`.
    pub fn responsibilities(&self, x: &[Complex64]) -> Result<(Vec<f64>, f64)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut out = Vec::with_capacity(self.comps.len());
        self.log_joint(x, &mut out, &mut Vec::with_capacity(x.len()));
        let lse = softmax_in_place(&mut out);
        Ok((out, lse))
    }
}

/// `p(k | h)` for a clean trajectory vector in filter order.
pub fn responsibilities_clean(model: &GmmModel, h: &[Complex64]) -> Result<Vec<f64>> {
    if h.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: h.len(),
        });
    }
    Ok(model.densities()?.responsibilities(h)?.0)
}

/// `p(k | y)` for a noisy observation of the trailing `obs_len` coordinates.
pub fn responsibilities_noisy(model: &GmmModel, y: &NoisyObservation, obs_len: usize) -> Result<Vec<f64>> {
    if !(y.noise_var > 0.0) {
        return Err(Error::invalid(format!("noise variance must be positive, got {}", y.noise_var)));
    }
    if y.len() != obs_len {
        return Err(Error::DimensionMismatch {
            expected: obs_len,
            found: y.len(),
        });
    }
    Ok(model
        .observation_densities(obs_len, y.noise_var)?
        .responsibilities(&y.values)?
        .0)
}

/// Projects a Hermitian matrix onto the family `Q^H diag(c) Q`, `c >= 0`.
///
/// Diagonals are averaged into a Toeplitz first column, which is embedded in
/// a Hermitian circulant generator of length `2N`. The one free entry of the
/// generator (lag `N`) is set to maximize the smallest spectral value; any
/// remaining negative values are clamped to zero.
pub fn toeplitz_project(cov: &HermitianMatrix, sel: &DftSelector) -> Result<Vec<f64>> {
    let n = sel.dim();
    if cov.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: cov.dim(),
        });
    }
    let m = cov.matrix();
    let len = 2 * n;
    let mut generator = vec![Complex64::new(0.0, 0.0); len];
    for lag in 0..n {
        let sum: Complex64 = (lag..n).map(|i| m[(i, i - lag)]).sum();
        let avg = sum / (n - lag) as f64;
        if lag == 0 {
            generator[0] = Complex64::new(avg.re, 0.0);
        } else {
            generator[lag] = avg;
            generator[len - lag] = avg.conj();
        }
    }
    let mut spectrum = sel.spectrum_of(&generator);
    // Lag-N entry x shifts c_k by (-1)^k x / 2N.
    let min_even = spectrum.iter().step_by(2).copied().fold(f64::INFINITY, f64::min);
    let min_odd = spectrum.iter().skip(1).step_by(2).copied().fold(f64::INFINITY, f64::min);
    let shift = 0.5 * (min_odd - min_even);
    for (k, c) in spectrum.iter_mut().enumerate() {
        *c += if k % 2 == 0 { shift } else { -shift };
        if !(*c > 0.0) {
            *c = 0.0;
        }
    }
    Ok(spectrum)
}
