//! Channel trajectories: synthetic generation, observation noise,
//! dataset normalization, and phase-drift correction.

mod io;

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub use self::io::{load_dataset, load_observation, read_dataset, save_dataset, save_observation, write_dataset};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default number of sinusoids in the fading generator.
pub const DEFAULT_PATHS: usize = 64;

/// RNG stream used for observation noise; generation uses stream 0.
const NOISE_STREAM: u64 = 1;

/// Converts km/h to m/s.
pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Chronological channel coefficients `h[0], ..., h[N-1]` of one terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub coeffs: Vec<Complex64>,
    pub symbol_duration_s: f64,
    pub velocity_mps: Option<f64>,
}

impl Trajectory {
    pub fn new(coeffs: Vec<Complex64>, symbol_duration_s: f64, velocity_mps: Option<f64>) -> Result<Self> {
        if !(symbol_duration_s > 0.0 && symbol_duration_s.is_finite()) {
            return Err(Error::invalid(format!("symbol duration {symbol_duration_s}")));
        }
        if let Some(v) = velocity_mps {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("velocity {v}")));
            }
        }
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("trajectory contains non-finite coefficients"));
        }
        Ok(Self {
            coeffs,
            symbol_duration_s,
            velocity_mps,
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Coefficients in the filter layout `[h[N-1], ..., h[0]]`.
    pub fn reversed(&self) -> Vec<Complex64> {
        self.coeffs.iter().rev().copied().collect()
    }
}

/// A set of equal-length trajectories split into `Mo` observed and `Np`
/// predicted coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub obs_len: usize,
    pub pred_len: usize,
    pub normalized: bool,
    /// Carrier frequency the trajectories were generated or measured at.
    pub carrier_hz: Option<f64>,
    /// Number of leading trajectories that form the training split.
    pub split: Option<usize>,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, obs_len: usize, pred_len: usize) -> Result<Self> {
        if obs_len == 0 || pred_len == 0 {
            return Err(Error::invalid("Mo and Np must be positive"));
        }
        let dim = obs_len + pred_len;
        if let Some(first) = trajectories.first() {
            let ts = first.symbol_duration_s;
            for t in &trajectories {
                if t.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: t.len(),
                    });
                }
                if t.symbol_duration_s != ts {
                    return Err(Error::invalid("trajectories disagree on symbol duration"));
                }
            }
        }
        Ok(Self {
            trajectories,
            obs_len,
            pred_len,
            normalized: false,
            carrier_hz: None,
            split: None,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// `Mo + Np`.
    pub fn dim(&self) -> usize {
        self.obs_len + self.pred_len
    }

    pub fn symbol_duration_s(&self) -> Option<f64> {
        self.trajectories.first().map(|t| t.symbol_duration_s)
    }

    /// Row-major `J x (Mo+Np)` matrix of reverse-chronological vectors.
    pub fn filter_order_samples(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len() * self.dim());
        for t in &self.trajectories {
            out.extend(t.coeffs.iter().rev());
        }
        out
    }

    /// Same trajectories with a different observation/prediction split.
    pub fn with_window(&self, obs_len: usize, pred_len: usize) -> Result<Self> {
        if obs_len + pred_len != self.dim() || obs_len == 0 || pred_len == 0 {
            return Err(Error::invalid(format!(
                "window Mo={obs_len} Np={pred_len} does not fit trajectories of length {}",
                self.dim()
            )));
        }
        let mut ds = self.clone();
        ds.obs_len = obs_len;
        ds.pred_len = pred_len;
        Ok(ds)
    }

    fn subset(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            trajectories: self.trajectories[range].to_vec(),
            split: None,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            trajectories: Vec::new(),
            obs_len: self.obs_len,
            pred_len: self.pred_len,
            normalized: self.normalized,
            carrier_hz: self.carrier_hz,
            split: self.split,
        }
    }

    /// Training part of a split dataset.
    pub fn train(&self) -> Result<Self> {
        let s = self.split_index()?;
        Ok(self.subset(0..s))
    }

    /// Held-out part of a split dataset.
    pub fn test(&self) -> Result<Self> {
        let s = self.split_index()?;
        Ok(self.subset(s..self.len()))
    }

    fn split_index(&self) -> Result<usize> {
        match self.split {
            Some(s) if s <= self.len() => Ok(s),
            Some(s) => Err(Error::invalid(format!("split {s} beyond {} trajectories", self.len()))),
            None => Err(Error::invalid("dataset has no recorded train/test split")),
        }
    }

    /// Mean of `||h||^2` over the dataset.
    pub fn mean_energy(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.trajectories.iter().map(Trajectory::energy).sum::<f64>() / self.len() as f64
    }
}

/// Scales every trajectory by one common factor so that the mean of
/// `||h||^2` equals `Mo + Np`.
pub fn normalize_dataset(ds: Dataset) -> Result<Dataset> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot normalize an empty dataset"));
    }
    let energy = ds.mean_energy();
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::invalid("dataset energy is zero; normalization undefined"));
    }
    let scale = (ds.dim() as f64 / energy).sqrt();
    let mut ds = ds;
    for t in &mut ds.trajectories {
        for z in &mut t.coeffs {
            *z *= scale;
        }
    }
    ds.normalized = true;
    Ok(ds)
}

/// Clarke/Jakes sum-of-sinusoids fading generator.
///
/// `h[m] = P^{-1/2} sum_p exp(i (2 pi f_D cos(a_p) m T_S + phi_p))` with
/// `f_D = f_c v / c` and i.i.d. uniform angles and phases, giving unit
/// expected power and autocorrelation `J0(2 pi f_D m T_S)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingGenerator {
    pub carrier_hz: f64,
    pub symbol_duration_s: f64,
    pub n_paths: usize,
}

impl FadingGenerator {
    pub fn new(carrier_hz: f64, symbol_duration_s: f64, n_paths: usize) -> Result<Self> {
        if !(carrier_hz > 0.0 && carrier_hz.is_finite()) {
            return Err(Error::invalid(format!("carrier frequency {carrier_hz}")));
        }
        if !(symbol_duration_s > 0.0 && symbol_duration_s.is_finite()) {
            return Err(Error::invalid(format!("symbol duration {symbol_duration_s}")));
        }
        if n_paths == 0 {
            return Err(Error::invalid("at least one path is required"));
        }
        Ok(Self {
            carrier_hz,
            symbol_duration_s,
            n_paths,
        })
    }

    pub fn doppler_hz(&self, velocity_mps: f64) -> f64 {
        self.carrier_hz * velocity_mps / SPEED_OF_LIGHT
    }

    /// One trajectory of `len` samples at a fixed speed.
    pub fn trajectory(&self, velocity_mps: f64, len: usize, seed: u64) -> Result<Trajectory> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.trajectory_with(velocity_mps, len, &mut rng)
    }

    fn trajectory_with(&self, velocity_mps: f64, len: usize, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
        if len == 0 {
            return Err(Error::invalid("trajectory length must be positive"));
        }
        if !(velocity_mps >= 0.0 && velocity_mps.is_finite()) {
            return Err(Error::invalid(format!("velocity {velocity_mps}")));
        }
        let step = TAU * self.doppler_hz(velocity_mps) * self.symbol_duration_s;
        let paths: Vec<(f64, f64)> = (0..self.n_paths)
            .map(|_| {
                let angle = rng.random::<f64>() * TAU;
                let phase = rng.random::<f64>() * TAU;
                (step * angle.cos(), phase)
            })
            .collect();
        let gain = 1.0 / (self.n_paths as f64).sqrt();
        let coeffs = (0..len)
            .map(|m| {
                let t = m as f64;
                paths
                    .iter()
                    .map(|&(w, phi)| Complex64::from_polar(1.0, w * t + phi))
                    .sum::<Complex64>()
                    * gain
            })
            .collect();
        Trajectory::new(coeffs, self.symbol_duration_s, Some(velocity_mps))
    }

    /// `count` trajectories of length `Mo + Np` with speeds drawn uniformly
    /// from `velocity_range_mps`. Trajectory `j` uses seed `seed + j`, so the
    /// output does not depend on the thread count.
    pub fn dataset(
        &self,
        count: usize,
        obs_len: usize,
        pred_len: usize,
        velocity_range_mps: (f64, f64),
        seed: u64,
    ) -> Result<Dataset> {
        let (lo, hi) = velocity_range_mps;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid(format!("velocity range [{lo}, {hi}]")));
        }
        let len = obs_len + pred_len;
        let trajectories = (0..count)
            .into_par_iter()
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(j as u64));
                let v = lo + (hi - lo) * rng.random::<f64>();
                self.trajectory_with(v, len, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ds = Dataset::new(trajectories, obs_len, pred_len)?;
        ds.carrier_hz = Some(self.carrier_hz);
        Ok(ds)
    }
}

/// One-shot form of [`FadingGenerator::trajectory`].
pub fn generate_trajectory(
    carrier_hz: f64,
    symbol_duration_s: f64,
    velocity_mps: f64,
    len: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Trajectory> {
    FadingGenerator::new(carrier_hz, symbol_duration_s, n_paths)?.trajectory(velocity_mps, len, seed)
}

/// Noisy observation `y = h_Mo + n` in filter order: `values[0]` is the
/// newest observed sample `h[Mo-1] + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyObservation {
    pub values: Vec<Complex64>,
    pub noise_var: f64,
}

impl NoisyObservation {
    /// `noise_var == 0` marks a noiseless observation.
    pub fn new(values: Vec<Complex64>, noise_var: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("observation is empty"));
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::invalid(format!("noise variance {noise_var}")));
        }
        Ok(Self { values, noise_var })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `sigma^2 = 10^(-snr_db / 10)`; `+inf` dB gives zero.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Observes the first `obs_len` samples of `traj` in AWGN at `snr_db`.
///
/// The output is flipped into filter order. Real and imaginary noise parts
/// each have variance `sigma^2 / 2`.
pub fn add_awgn(traj: &Trajectory, obs_len: usize, snr_db: f64, seed: u64) -> Result<NoisyObservation> {
    if obs_len == 0 || obs_len > traj.len() {
        return Err(Error::invalid(format!(
            "observation length {obs_len} for trajectory of length {}",
            traj.len()
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::invalid("SNR is NaN"));
    }
    let noise_var = noise_variance(snr_db);
    let clean = traj.coeffs[..obs_len].iter().rev();
    let values = if noise_var == 0.0 {
        clean.copied().collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(NOISE_STREAM);
        let sd = (noise_var / 2.0).sqrt();
        clean
            .map(|h| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                h + Complex64::new(re * sd, im * sd)
            })
            .collect()
    };
    NoisyObservation::new(values, noise_var)
}

/// Phase of `h` unwrapped by accumulating jumps larger than pi.
fn unwrapped_phase(coeffs: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(coeffs.len());
    let mut prev_raw = 0.0;
    let mut acc = 0.0;
    for (m, z) in coeffs.iter().enumerate() {
        let raw = z.arg();
        if m == 0 {
            acc = raw;
        } else {
            let mut d = raw - prev_raw;
            while d > PI {
                d -= TAU;
            }
            while d <= -PI {
                d += TAU;
            }
            acc += d;
        }
        prev_raw = raw;
        out.push(acc);
    }
    out
}

/// Least-squares slope of `phase` against the sample index.
pub fn phase_slope(coeffs: &[Complex64]) -> f64 {
    let phase = unwrapped_phase(coeffs);
    let n = phase.len();
    if n < 2 {
        return 0.0;
    }
    let mean_m = (n - 1) as f64 / 2.0;
    let mean_p = phase.iter().sum::<f64>() / n as f64;
    let (num, den) = phase.iter().enumerate().fold((0.0, 0.0), |(num, den), (m, p)| {
        let dm = m as f64 - mean_m;
        (num + dm * (p - mean_p), den + dm * dm)
    });
    num / den
}

/// Removes a linear phase drift fitted by least squares to the unwrapped
/// phase. The intercept is kept.
pub fn phase_detrend(traj: &Trajectory) -> Result<Trajectory> {
    if let Some(m) = traj.coeffs.iter().position(|z| z.norm() == 0.0) {
        return Err(Error::invalid(format!("zero-magnitude sample at index {m}")));
    }
    let slope = phase_slope(&traj.coeffs);
    let coeffs = traj
        .coeffs
        .iter()
        .enumerate()
        .map(|(m, z)| z * Complex64::from_polar(1.0, -slope * m as f64))
        .collect();
    Ok(Trajectory {
        coeffs,
        ..traj.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_velocity_freezes_channel() {
        let t = generate_trajectory(3.5e9, 5e-4, 0.0, 30, 64, 9).unwrap();
        for z in &t.coeffs {
            assert!((z - t.coeffs[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn single_path_has_unit_modulus() {
        let t = generate_trajectory(3.5e9, 5e-4, 20.0, 50, 1, 4).unwrap();
        assert!(t.coeffs.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn generator_rejects_bad_parameters() {
        assert!(generate_trajectory(3.5e9, 5e-4, 1.0, 0, 64, 0).is_err());
        assert!(generate_trajectory(3.5e9, 0.0, 1.0, 10, 64, 0).is_err());
        assert!(generate_trajectory(-1.0, 5e-4, 1.0, 10, 64, 0).is_err());
        assert!(generate_trajectory(3.5e9, 5e-4, -1.0, 10, 64, 0).is_err());
    }

    #[test]
    fn generation_is_seeded() {
        let g = FadingGenerator::new(3.5e9, 5e-4, 16).unwrap();
        let a = g.dataset(20, 4, 1, (1.0, 10.0), 5).unwrap();
        let b = g.dataset(20, 4, 1, (1.0, 10.0), 5).unwrap();
        assert_eq!(a, b);
        // trajectory j depends only on seed + j
        let shifted = g.dataset(19, 4, 1, (1.0, 10.0), 6).unwrap();
        assert_eq!(shifted.trajectories[..], a.trajectories[1..]);
    }

    #[test]
    fn normalize_scales_by_common_factor() {
        let dim = 3;
        let coeffs = vec![c(2.0f64.sqrt(), 0.0); dim];
        let t = Trajectory::new(coeffs, 1e-3, None).unwrap();
        let ds = Dataset::new(vec![t], 2, 1).unwrap();
        let n = normalize_dataset(ds).unwrap();
        assert!(n.normalized);
        for z in &n.trajectories[0].coeffs {
            assert!((z.re - 1.0).abs() < 1e-15);
        }
        let again = normalize_dataset(n.clone()).unwrap();
        for (a, b) in again.trajectories[0].coeffs.iter().zip(&n.trajectories[0].coeffs) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn normalize_random_dataset_hits_target_energy() {
        let g = FadingGenerator::new(2e9, 1e-3, 8).unwrap();
        let mut ds = g.dataset(200, 5, 2, (0.0, 30.0), 1).unwrap();
        for (j, t) in ds.trajectories.iter_mut().enumerate() {
            for z in &mut t.coeffs {
                *z *= 1.0 + j as f64 * 0.01;
            }
        }
        let n = normalize_dataset(ds).unwrap();
        assert!((n.mean_energy() - 7.0).abs() <= 1e-9 * 7.0);
    }

    #[test]
    fn normalize_rejects_zero_and_empty() {
        let t = Trajectory::new(vec![c(0.0, 0.0); 3], 1e-3, None).unwrap();
        assert!(normalize_dataset(Dataset::new(vec![t], 2, 1).unwrap()).is_err());
        assert!(normalize_dataset(Dataset::new(vec![], 2, 1).unwrap()).is_err());
    }

    #[test]
    fn awgn_variance_and_ordering() {
        assert!((noise_variance(20.0) - 0.01).abs() < 1e-15);
        let t = Trajectory::new((0..6).map(|m| c(m as f64, -(m as f64))).collect(), 1e-3, None).unwrap();
        let y = add_awgn(&t, 4, f64::INFINITY, 0).unwrap();
        assert_eq!(y.noise_var, 0.0);
        assert_eq!(y.values, vec![c(3.0, -3.0), c(2.0, -2.0), c(1.0, -1.0), c(0.0, 0.0)]);
        assert!(add_awgn(&t, 7, 10.0, 0).is_err());
    }

    #[test]
    fn awgn_empirical_variance() {
        let len = 1000;
        let t = Trajectory::new(vec![c(0.0, 0.0); len], 1e-3, None).unwrap();
        let mut total = 0.0;
        let mut re2 = 0.0;
        let draws = 1000;
        for s in 0..draws {
            let y = add_awgn(&t, len, 0.0, s).unwrap();
            total += y.values.iter().map(|z| z.norm_sqr()).sum::<f64>();
            re2 += y.values.iter().map(|z| z.re * z.re).sum::<f64>();
        }
        let n = (len * draws as usize) as f64;
        assert!((total / n - 1.0).abs() < 0.01, "variance {}", total / n);
        assert!((re2 / n - 0.5).abs() < 0.01);
    }

    #[test]
    fn detrend_removes_linear_phase() {
        let t = Trajectory::new((0..40).map(|m| Complex64::from_polar(1.0, 0.3 * m as f64)).collect(), 1e-3, None)
            .unwrap();
        let d = phase_detrend(&t).unwrap();
        for z in &d.coeffs {
            assert!((z - c(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn detrend_leaves_driftless_input() {
        let t = Trajectory::new(vec![c(0.5, 0.5), c(0.5, -0.5), c(0.5, 0.5), c(0.5, -0.5), c(0.5, 0.5)], 1e-3, None)
            .unwrap();
        let d = phase_detrend(&t).unwrap();
        for (a, b) in d.coeffs.iter().zip(&t.coeffs) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn detrend_of_drifting_smooth_signal() {
        let coeffs: Vec<_> = (0..60)
            .map(|m| {
                let t = m as f64;
                let g = Complex64::from_polar(1.0 + 0.3 * (0.05 * t).sin(), 0.4 * (0.07 * t).cos());
                g * Complex64::from_polar(1.0, 0.1 * t)
            })
            .collect();
        let t = Trajectory::new(coeffs, 1e-3, None).unwrap();
        let d = phase_detrend(&t).unwrap();
        assert!(phase_slope(&d.coeffs).abs() < 1e-9);
        let twice = phase_detrend(&d).unwrap();
        for (a, b) in twice.coeffs.iter().zip(&d.coeffs) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn detrend_rejects_zero_sample() {
        let t = Trajectory::new(vec![c(1.0, 0.0), c(0.0, 0.0)], 1e-3, None).unwrap();
        assert!(phase_detrend(&t).is_err());
    }

    #[test]
    fn train_test_split() {
        let g = FadingGenerator::new(2e9, 1e-3, 8).unwrap();
        let mut ds = g.dataset(10, 3, 1, (0.0, 5.0), 0).unwrap();
        assert!(ds.train().is_err());
        ds.split = Some(7);
        assert_eq!(ds.train().unwrap().len(), 7);
        assert_eq!(ds.test().unwrap().trajectories[..], ds.trajectories[7..]);
    }
}
