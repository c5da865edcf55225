//! GMM channel predictor and the classical LMMSE baselines.
//!
//! All filters act on observations in filter order (newest sample first) and
//! target `h[Mo-1+l]`, which sits at position `Np - l` of the trajectory
//! vector.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::chanmodel::{Dataset, NoisyObservation, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::gauss::{cholesky_psd, HermitianMatrix, DEFAULT_MAX_JITTER};
use crate::gmm::{GmmModel, MixtureDensity};
use crate::special::bessel_j0;

const NOISE_MATCH_TOL: f64 = 1e-12;

/// Zero-based position of `h[Mo-1+l]` in the trajectory vector.
pub fn target_position(obs_len: usize, pred_len: usize, ell: usize) -> Result<usize> {
    if obs_len == 0 || ell == 0 || ell > pred_len {
        return Err(Error::invalid(format!(
            "prediction step {ell} outside 1..={pred_len} (Mo={obs_len})"
        )));
    }
    Ok(pred_len - ell)
}

/// The unit vector `e_l` of length `Mo + Np`.
pub fn index_selector(obs_len: usize, pred_len: usize, ell: usize) -> Result<Vec<f64>> {
    let p = target_position(obs_len, pred_len, ell)?;
    let mut e = vec![0.0; obs_len + pred_len];
    e[p] = 1.0;
    Ok(e)
}

/// An affine predictor `w y + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseFilter {
    pub weights: Vec<Complex64>,
    pub bias: Complex64,
}

impl LmmseFilter {
    pub fn apply(&self, y: &[Complex64]) -> Complex64 {
        self.weights.iter().zip(y).map(|(w, y)| w * y).sum::<Complex64>() + self.bias
    }
}

/// Filters `e_l^T C S (S^T C S + sigma^2 I)^{-1}` for every step in `ells`,
/// with biases `e_l^T mu - w S^T mu` when a mean is given. One factorization
/// serves all steps.
pub fn lmmse_filters(
    cov: &HermitianMatrix,
    mean: Option<&[Complex64]>,
    obs_len: usize,
    ells: &[usize],
    noise_var: f64,
) -> Result<Vec<LmmseFilter>> {
    let dim = cov.dim();
    if obs_len == 0 || obs_len >= dim {
        return Err(Error::invalid(format!("Mo={obs_len} for trajectory dimension {dim}")));
    }
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::invalid(format!("noise variance {noise_var}")));
    }
    let pred_len = dim - obs_len;
    let off = pred_len;
    let inner = cov.trailing_block(obs_len)?.shifted(noise_var);
    let factor = cholesky_psd(&inner, DEFAULT_MAX_JITTER)?;
    let m = cov.matrix();
    ells.iter()
        .map(|&ell| {
            let p = target_position(obs_len, pred_len, ell)?;
            let cross: Vec<Complex64> = (0..obs_len).map(|i| m[(off + i, p)]).collect();
            let weights: Vec<Complex64> = factor.solve(&cross).iter().map(|a| a.conj()).collect();
            let bias = match mean {
                Some(mu) => {
                    let fit: Complex64 = weights.iter().zip(&mu[off..]).map(|(w, u)| w * u).sum();
                    mu[p] - fit
                }
                None => Complex64::new(0.0, 0.0),
            };
            Ok(LmmseFilter { weights, bias })
        })
        .collect()
}

/// Precomputed per-component filters for one noise level and a set of steps.
#[derive(Debug, Clone)]
pub struct PredictorBank {
    obs_len: usize,
    pred_len: usize,
    ells: Vec<usize>,
    noise_var: f64,
    /// `filters[k][i]` serves component `k` and step `ells[i]`.
    filters: Vec<Vec<LmmseFilter>>,
    /// Observation marginals; absent for single-component models.
    density: Option<MixtureDensity>,
}

impl PredictorBank {
    /// Builds filters for every component and step in `ells`.
    ///
    /// `noise_var` may be zero for noiseless observations; the observation
    /// marginals are then repaired by jitter when singular.
    pub fn build(model: &GmmModel, obs_len: usize, ells: &[usize], noise_var: f64) -> Result<Self> {
        let dim = model.dim();
        if obs_len == 0 || obs_len >= dim {
            return Err(Error::invalid(format!("Mo={obs_len} for model dimension {dim}")));
        }
        if ells.is_empty() {
            return Err(Error::invalid("no prediction steps requested"));
        }
        let pred_len = dim - obs_len;
        for &ell in ells {
            target_position(obs_len, pred_len, ell)?;
        }
        let filters = (0..model.num_components())
            .into_par_iter()
            .map(|k| lmmse_filters(&model.covariance(k), Some(&model.means()[k]), obs_len, ells, noise_var))
            .collect::<Result<Vec<_>>>()?;
        let density = if model.num_components() > 1 {
            Some(model.observation_densities(obs_len, noise_var)?)
        } else {
            None
        };
        Ok(Self {
            obs_len,
            pred_len,
            ells: ells.to_vec(),
            noise_var,
            filters,
            density,
        })
    }

    pub fn obs_len(&self) -> usize {
        self.obs_len
    }

    pub fn pred_len(&self) -> usize {
        self.pred_len
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn ells(&self) -> &[usize] {
        &self.ells
    }

    pub fn num_components(&self) -> usize {
        self.filters.len()
    }

    pub fn filter(&self, k: usize, ell: usize) -> Result<&LmmseFilter> {
        Ok(&self.filters[k][self.step_index(ell)?])
    }

    fn step_index(&self, ell: usize) -> Result<usize> {
        self.ells
            .iter()
            .position(|&l| l == ell)
            .ok_or_else(|| Error::invalid(format!("bank has no filters for step {ell}")))
    }

    fn check(&self, y: &NoisyObservation) -> Result<()> {
        let (a, b) = (self.noise_var, y.noise_var);
        if (a - b).abs() > NOISE_MATCH_TOL * a.abs().max(b.abs()) {
            return Err(Error::NoiseVarianceMismatch {
                bank: a,
                observation: b,
            });
        }
        if y.len() != self.obs_len {
            return Err(Error::DimensionMismatch {
                expected: self.obs_len,
                found: y.len(),
            });
        }
        Ok(())
    }

    /// `p(k | y)` under the bank's noise level.
    pub fn responsibilities(&self, y: &NoisyObservation) -> Result<Vec<f64>> {
        self.check(y)?;
        match &self.density {
            Some(d) => Ok(d.responsibilities(&y.values)?.0),
            None => Ok(vec![1.0]),
        }
    }

    /// Per-component conditional means `w_k y + b_k`.
    pub fn component_predictions(&self, y: &NoisyObservation, ell: usize) -> Result<Vec<Complex64>> {
        self.check(y)?;
        let i = self.step_index(ell)?;
        Ok(self.filters.iter().map(|f| f[i].apply(&y.values)).collect())
    }

    /// The prediction together with the responsibilities that weighted it.
    pub fn predict_detailed(&self, y: &NoisyObservation, ell: usize) -> Result<(Complex64, Vec<f64>)> {
        let resp = self.responsibilities(y)?;
        let parts = self.component_predictions(y, ell)?;
        let h = resp.iter().zip(&parts).map(|(p, h)| h * *p).sum();
        Ok((h, resp))
    }

    pub fn predict(&self, y: &NoisyObservation, ell: usize) -> Result<Complex64> {
        Ok(self.predict_detailed(y, ell)?.0)
    }
}

/// Builds a bank for a single step.
pub fn build_bank(model: &GmmModel, obs_len: usize, ell: usize, noise_var: f64) -> Result<PredictorBank> {
    PredictorBank::build(model, obs_len, &[ell], noise_var)
}

/// `sum_k p(k|y) (w_k y + b_k)` from a precomputed bank.
pub fn predict_gmm(bank: &PredictorBank, y: &NoisyObservation, ell: usize) -> Result<Complex64> {
    bank.predict(y, ell)
}

/// The same estimate without precomputation: each component's conditional
/// mean `e_l^T mu + e_l^T C S A^{-1} (y - S^T mu)` is solved per call.
pub fn predict_direct(model: &GmmModel, obs_len: usize, y: &NoisyObservation, ell: usize) -> Result<Complex64> {
    let dim = model.dim();
    if obs_len == 0 || obs_len >= dim || y.len() != obs_len {
        return Err(Error::DimensionMismatch {
            expected: obs_len,
            found: y.len(),
        });
    }
    let p = target_position(obs_len, dim - obs_len, ell)?;
    let off = dim - obs_len;
    let resp = if model.num_components() > 1 {
        model.observation_densities(obs_len, y.noise_var)?.responsibilities(&y.values)?.0
    } else {
        vec![1.0]
    };
    let mut out = Complex64::new(0.0, 0.0);
    for (k, r) in resp.iter().enumerate() {
        let cov = model.covariance(k);
        let mu = &model.means()[k];
        let inner = cov.trailing_block(obs_len)?.shifted(y.noise_var);
        let factor = cholesky_psd(&inner, DEFAULT_MAX_JITTER)?;
        let resid: Vec<Complex64> = y.values.iter().zip(&mu[off..]).map(|(a, b)| a - b).collect();
        let x = factor.solve(&resid);
        let m = cov.matrix();
        let cond: Complex64 = (0..obs_len).map(|i| m[(p, off + i)] * x[i]).sum::<Complex64>() + mu[p];
        out += cond * *r;
    }
    Ok(out)
}

/// `C_s = (1/J) sum_j h_j h_j^H` in filter order, without mean removal.
pub fn sample_covariance(ds: &Dataset) -> Result<HermitianMatrix> {
    if ds.is_empty() {
        return Err(Error::invalid("sample covariance of an empty dataset"));
    }
    let dim = ds.dim();
    let data = ds.filter_order_samples();
    let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
    for row in data.chunks_exact(dim) {
        for a in 0..dim {
            let xa = row[a];
            for b in 0..=a {
                acc[(a, b)] += xa * row[b].conj();
            }
        }
    }
    let inv = 1.0 / ds.len() as f64;
    for a in 0..dim {
        for b in 0..=a {
            let v = acc[(a, b)] * inv;
            acc[(a, b)] = v;
            acc[(b, a)] = v.conj();
        }
    }
    Ok(HermitianMatrix::symmetrize(acc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    Sample,
    Jakes { velocity_mps: f64 },
}

/// Covariance behind one of the zero-mean LMMSE baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineCov {
    pub kind: BaselineKind,
    pub cov: HermitianMatrix,
}

impl BaselineCov {
    pub fn sample(train: &Dataset) -> Result<Self> {
        Ok(Self {
            kind: BaselineKind::Sample,
            cov: sample_covariance(train)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    /// Zero-mean LMMSE filters for the given steps.
    pub fn filters(&self, obs_len: usize, ells: &[usize], noise_var: f64) -> Result<Vec<LmmseFilter>> {
        lmmse_filters(&self.cov, None, obs_len, ells, noise_var)
    }

    /// Single-step zero-mean LMMSE filter.
    pub fn predictor(&self, obs_len: usize, ell: usize, noise_var: f64) -> Result<LmmseFilter> {
        Ok(self.filters(obs_len, &[ell], noise_var)?.remove(0))
    }
}

/// Real symmetric Toeplitz matrix with entries `J0(2 pi |i-j| ts fc v / c)`.
pub fn jakes_covariance(
    obs_len: usize,
    pred_len: usize,
    symbol_duration_s: f64,
    carrier_hz: f64,
    velocity_mps: f64,
) -> Result<BaselineCov> {
    if !(velocity_mps >= 0.0 && velocity_mps.is_finite()) {
        return Err(Error::invalid(format!("velocity {velocity_mps}")));
    }
    if !(symbol_duration_s > 0.0 && carrier_hz > 0.0) {
        return Err(Error::invalid("symbol duration and carrier frequency must be positive"));
    }
    let dim = obs_len + pred_len;
    if dim == 0 {
        return Err(Error::invalid("empty Jakes covariance"));
    }
    let step = std::f64::consts::TAU * symbol_duration_s * carrier_hz * velocity_mps / SPEED_OF_LIGHT;
    let lags: Vec<f64> = (0..dim).map(|m| bessel_j0(step * m as f64)).collect();
    let m = DMatrix::from_fn(dim, dim, |i, j| Complex64::new(lags[i.abs_diff(j)], 0.0));
    Ok(BaselineCov {
        kind: BaselineKind::Jakes { velocity_mps },
        cov: HermitianMatrix::symmetrize(m),
    })
}

/// `v (1 + sign * pct / 100)`, with `sign` taken as +1 or -1.
pub fn perturb_velocity(velocity_mps: f64, pct: f64, sign: f64) -> f64 {
    velocity_mps * (1.0 + sign.signum() * pct / 100.0)
}
