//! Monte-Carlo evaluation of predictors over SNR, mixture size, and
//! prediction step.
//!
//! Noise for test trajectory `t` is drawn from a seed that depends only on
//! the sweep seed and `t`, so every method and every SNR point sees the same
//! underlying noise realization (scaled to the noise level).

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::chanmodel::{add_awgn, noise_variance, Dataset, NoisyObservation, Trajectory};
use crate::error::{Error, Result};
use crate::gauss::pairwise_sum;
use crate::gmm::{fit_em, load_model, save_model, EmOptions, FitReport, GmmModel, Structure};
use crate::predict::{jakes_covariance, perturb_velocity, BaselineCov, LmmseFilter, PredictorBank};

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// One test case handed to a predictor.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub index: usize,
    pub trajectory: &'a Trajectory,
    pub observation: &'a NoisyObservation,
}

/// A predictor prepared for one noise level and prediction step.
pub trait Predictor: Sync {
    /// Squared error against `truth`. Predictors that average over several
    /// hypotheses (e.g. both signs of a velocity error) return the mean.
    fn squared_error(&self, sample: &Sample<'_>, truth: Complex64) -> Result<f64>;
}

/// Adapts a plain prediction function.
pub struct FnPredictor<F>(pub F);

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&Sample<'_>) -> Result<Complex64> + Sync,
{
    fn squared_error(&self, sample: &Sample<'_>, truth: Complex64) -> Result<f64> {
        Ok(((self.0)(sample)? - truth).norm_sqr())
    }
}

/// A named prediction method that can be specialized to a noise level.
pub trait Method: Sync {
    fn name(&self) -> &str;

    fn prepare(&self, obs_len: usize, ell: usize, noise_var: f64) -> Result<Box<dyn Predictor + '_>>;
}

struct BankPredictor {
    bank: PredictorBank,
    ell: usize,
}

impl Predictor for BankPredictor {
    fn squared_error(&self, s: &Sample<'_>, truth: Complex64) -> Result<f64> {
        Ok((self.bank.predict(s.observation, self.ell)? - truth).norm_sqr())
    }
}

/// The mixture predictor; a fresh bank is built per noise level, the model
/// is never refitted.
pub struct GmmMethod {
    pub name: String,
    pub model: Arc<GmmModel>,
}

impl Method for GmmMethod {
    fn name(&self) -> &str {
        &self.name
    }

    fn prepare(&self, obs_len: usize, ell: usize, noise_var: f64) -> Result<Box<dyn Predictor + '_>> {
        Ok(Box::new(BankPredictor {
            bank: PredictorBank::build(&self.model, obs_len, &[ell], noise_var)?,
            ell,
        }))
    }
}

struct FilterPredictor(LmmseFilter);

impl Predictor for FilterPredictor {
    fn squared_error(&self, s: &Sample<'_>, truth: Complex64) -> Result<f64> {
        Ok((self.0.apply(&s.observation.values) - truth).norm_sqr())
    }
}

/// Zero-mean LMMSE with a fixed covariance (sample covariance baseline).
pub struct CovarianceMethod {
    pub name: String,
    pub cov: BaselineCov,
}

impl Method for CovarianceMethod {
    fn name(&self) -> &str {
        &self.name
    }

    fn prepare(&self, obs_len: usize, ell: usize, noise_var: f64) -> Result<Box<dyn Predictor + '_>> {
        Ok(Box::new(FilterPredictor(self.cov.predictor(obs_len, ell, noise_var)?)))
    }
}

/// Jakes LMMSE built from each test trajectory's own speed, optionally
/// perturbed by `error_pct`; with an error, the squared errors for `+` and
/// `-` perturbations are averaged.
pub struct JakesMethod {
    pub name: String,
    pub carrier_hz: f64,
    pub error_pct: f64,
}

struct JakesPredictor {
    carrier_hz: f64,
    error_pct: f64,
    obs_len: usize,
    ell: usize,
    noise_var: f64,
}

impl Predictor for JakesPredictor {
    fn squared_error(&self, s: &Sample<'_>, truth: Complex64) -> Result<f64> {
        let v = s.trajectory.velocity_mps.ok_or_else(|| {
            Error::invalid(format!("test trajectory {} has no recorded velocity", s.index))
        })?;
        let signs: &[f64] = if self.error_pct == 0.0 { &[1.0] } else { &[1.0, -1.0] };
        let mut total = 0.0;
        for &sign in signs {
            let vv = perturb_velocity(v, self.error_pct, sign);
            let cov = jakes_covariance(self.obs_len, self.ell, s.trajectory.symbol_duration_s, self.carrier_hz, vv)?;
            let f = cov.predictor(self.obs_len, self.ell, self.noise_var)?;
            total += (f.apply(&s.observation.values) - truth).norm_sqr();
        }
        Ok(total / signs.len() as f64)
    }
}

impl Method for JakesMethod {
    fn name(&self) -> &str {
        &self.name
    }

    fn prepare(&self, obs_len: usize, ell: usize, noise_var: f64) -> Result<Box<dyn Predictor + '_>> {
        Ok(Box::new(JakesPredictor {
            carrier_hz: self.carrier_hz,
            error_pct: self.error_pct,
            obs_len,
            ell,
            noise_var,
        }))
    }
}

/// SplitMix64 finalizer, used to derive independent per-trajectory seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Noise seed for test trajectory `index` of a sweep seeded with `seed`.
pub fn noise_seed(seed: u64, index: usize) -> u64 {
    mix64(mix64(seed) ^ index as u64)
}

/// Mean and bootstrap standard error of per-trajectory squared errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MseEstimate {
    pub mse: f64,
    pub se: f64,
    pub errors: Vec<f64>,
}

/// Standard deviation of the mean over `resamples` bootstrap resamples.
pub fn bootstrap_se(errors: &[f64], resamples: usize, seed: u64) -> f64 {
    let n = errors.len();
    if n < 2 || resamples < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| errors[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let m = means.iter().sum::<f64>() / resamples as f64;
    (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}

/// MSE of `predictor` for `h[Mo-1+l]` on `test` at `snr_db`.
pub fn evaluate_mse(
    predictor: &dyn Predictor,
    test: &Dataset,
    obs_len: usize,
    ell: usize,
    snr_db: f64,
    seed: u64,
) -> Result<MseEstimate> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if ell == 0 || obs_len + ell > test.dim() {
        return Err(Error::invalid(format!(
            "Mo={obs_len}, l={ell} does not fit test trajectories of length {}",
            test.dim()
        )));
    }
    let errors = test
        .trajectories
        .par_iter()
        .enumerate()
        .map(|(index, traj)| {
            let y = add_awgn(traj, obs_len, snr_db, noise_seed(seed, index))?;
            let sample = Sample {
                index,
                trajectory: traj,
                observation: &y,
            };
            predictor.squared_error(&sample, traj.coeffs[obs_len - 1 + ell])
        })
        .collect::<Result<Vec<f64>>>()?;
    let mse = pairwise_sum(&errors) / errors.len() as f64;
    if !mse.is_finite() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: f64::NAN,
            max_jitter: crate::gauss::DEFAULT_MAX_JITTER,
        });
    }
    let se = bootstrap_se(&errors, BOOTSTRAP_RESAMPLES, mix64(seed ^ 0x5eed));
    Ok(MseEstimate { mse, se, errors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    SnrDb,
    Components,
    Step,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::SnrDb => "snr_db",
            Axis::Components => "components",
            Axis::Step => "step",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr_db" | "snr" => Ok(Axis::SnrDb),
            "components" | "k" => Ok(Axis::Components),
            "step" => Ok(Axis::Step),
            other => Err(Error::invalid(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// MSE table: one row per axis value, one column per method.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axis: Axis,
    pub axis_values: Vec<f64>,
    pub methods: Vec<String>,
    /// `mse[row][method]`.
    pub mse: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub meta: Vec<(String, String)>,
}

impl SweepReport {
    fn new(axis: Axis, methods: Vec<String>, meta: Vec<(String, String)>) -> Self {
        Self {
            axis,
            axis_values: Vec::new(),
            methods,
            mse: Vec::new(),
            se: Vec::new(),
            meta,
        }
    }

    pub fn column(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }

    pub fn mse_of(&self, method: &str) -> Option<Vec<f64>> {
        let c = self.column(method)?;
        Some(self.mse.iter().map(|r| r[c]).collect())
    }

    pub fn se_of(&self, method: &str) -> Option<Vec<f64>> {
        let c = self.column(method)?;
        Some(self.se.iter().map(|r| r[c]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# axis={}", self.axis)?;
        for (k, v) in &self.meta {
            writeln!(w, "# {k}={v}")?;
        }
        let mut header = String::from("axis");
        for m in &self.methods {
            header.push_str(&format!(",{m},{m}_se"));
        }
        writeln!(w, "{header}")?;
        for ((x, mse), se) in self.axis_values.iter().zip(&self.mse).zip(&self.se) {
            let mut line = format!("{x}");
            for (m, s) in mse.iter().zip(se) {
                line.push_str(&format!(",{m:.9e},{s:.9e}"));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

fn evaluate_row(
    methods: &[&dyn Method],
    test: &Dataset,
    obs_len: usize,
    ell: usize,
    snr_db: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let noise_var = noise_variance(snr_db);
    let mut mse = Vec::with_capacity(methods.len());
    let mut se = Vec::with_capacity(methods.len());
    for m in methods {
        let p = m.prepare(obs_len, ell, noise_var)?;
        let est = evaluate_mse(p.as_ref(), test, obs_len, ell, snr_db, seed)?;
        log::info!("{} at {snr_db} dB, l={ell}: mse {:.6e} (se {:.2e})", m.name(), est.mse, est.se);
        mse.push(est.mse);
        se.push(est.se);
    }
    Ok((mse, se))
}

fn base_meta(test: &Dataset, obs_len: usize, seed: u64) -> Vec<(String, String)> {
    vec![
        ("mo".into(), obs_len.to_string()),
        ("np".into(), (test.dim() - obs_len).to_string()),
        ("t".into(), test.len().to_string()),
        ("seed".into(), seed.to_string()),
    ]
}

/// MSE of every method over an SNR grid.
pub fn sweep_snr(
    methods: &[&dyn Method],
    test: &Dataset,
    obs_len: usize,
    ell: usize,
    snr_grid: &[f64],
    seed: u64,
) -> Result<SweepReport> {
    let mut meta = base_meta(test, obs_len, seed);
    meta.push(("ell".into(), ell.to_string()));
    let names = methods.iter().map(|m| m.name().to_string()).collect();
    let mut report = SweepReport::new(Axis::SnrDb, names, meta);
    for &snr in snr_grid {
        let (mse, se) = evaluate_row(methods, test, obs_len, ell, snr, seed)?;
        report.axis_values.push(snr);
        report.mse.push(mse);
        report.se.push(se);
    }
    Ok(report)
}

/// Fitted models shared across sweeps, memoized in memory and optionally
/// cached on disk. Every actual EM run increments [`ModelStore::fits`].
pub struct ModelStore {
    cache_dir: Option<PathBuf>,
    pub options: EmOptions,
    memo: Mutex<HashMap<String, Arc<GmmModel>>>,
    fits: AtomicUsize,
    reports: Mutex<Vec<(usize, Structure, FitReport)>>,
}

impl ModelStore {
    pub fn new(cache_dir: Option<PathBuf>, options: EmOptions) -> Self {
        Self {
            cache_dir,
            options,
            memo: Mutex::new(HashMap::new()),
            fits: AtomicUsize::new(0),
            reports: Mutex::new(Vec::new()),
        }
    }

    /// `(K, structure, report)` of every fit performed by this store.
    pub fn fit_reports(&self) -> Vec<(usize, Structure, FitReport)> {
        self.reports.lock().expect("report log poisoned").clone()
    }

    /// Number of EM fits performed so far.
    pub fn fits(&self) -> usize {
        self.fits.load(Ordering::SeqCst)
    }

    fn key(&self, train: &Dataset, k: usize, structure: Structure) -> String {
        let o = &self.options;
        let text = format!(
            "{}|k={k}|{structure}|seed={}|iter={}|tol={:e}|minw={:e}|km={}|jit={:e}|reseed={}|reg={:e}",
            dataset_hash(train),
            o.seed,
            o.max_iter,
            o.tol_rel,
            o.min_weight,
            o.kmeans_iters,
            o.max_jitter_rel,
            o.max_reseeds,
            o.reg_covar
        );
        hex(&Sha256::digest(text.as_bytes())[..12])
    }

    fn cache_path(&self, key: &str, k: usize, structure: Structure) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|d| d.join(format!("gmm-k{k}-{structure}-{key}.cpgmm")))
    }

    /// The `k`-component model of `train`, fitting only when neither the
    /// memo nor the cache directory has it.
    pub fn get_or_fit(&self, train: &Dataset, k: usize, structure: Structure) -> Result<Arc<GmmModel>> {
        let key = self.key(train, k, structure);
        if let Some(m) = self.memo.lock().expect("model memo poisoned").get(&key) {
            return Ok(Arc::clone(m));
        }
        let path = self.cache_path(&key, k, structure);
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            match load_model(p) {
                Ok(m) => {
                    log::info!("cache hit: {}", p.display());
                    return Ok(self.remember(key, m));
                }
                Err(e) => log::warn!("ignoring unreadable cached model {}: {e}", p.display()),
            }
        }
        log::info!("fitting K={k} {structure} mixture on {} trajectories", train.len());
        let (model, report) = fit_em(train, k, structure, &self.options)?;
        self.fits.fetch_add(1, Ordering::SeqCst);
        log::info!(
            "fit finished after {} iterations (converged: {})",
            report.iterations,
            report.converged
        );
        self.reports.lock().expect("report log poisoned").push((k, structure, report));
        if let Some(p) = path {
            std::fs::create_dir_all(p.parent().expect("cache file has a parent"))?;
            save_model(&model, &p)?;
        }
        Ok(self.remember(key, model))
    }

    fn remember(&self, key: String, model: GmmModel) -> Arc<GmmModel> {
        let m = Arc::new(model);
        self.memo.lock().expect("model memo poisoned").insert(key, Arc::clone(&m));
        m
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the dataset contents (shape, symbol duration, coefficients).
/// The `Mo`/`Np` window is left out: a model of the whole trajectory vector
/// serves every window.
pub fn dataset_hash(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((ds.dim() as u64).to_le_bytes());
    h.update((ds.len() as u64).to_le_bytes());
    h.update(ds.symbol_duration_s().unwrap_or(0.0).to_le_bytes());
    for t in &ds.trajectories {
        for z in &t.coeffs {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

fn gmm_column(structure: Structure) -> &'static str {
    match structure {
        Structure::Full => "gmm",
        Structure::Toeplitz => "gmm-toeplitz",
    }
}

/// GMM MSE over the number of components; `baselines` are evaluated once
/// and repeated on every row.
#[allow(clippy::too_many_arguments)]
pub fn sweep_components(
    store: &ModelStore,
    train: &Dataset,
    test: &Dataset,
    structures: &[Structure],
    baselines: &[&dyn Method],
    obs_len: usize,
    ell: usize,
    snr_db: f64,
    k_grid: &[usize],
    seed: u64,
) -> Result<SweepReport> {
    let mut meta = base_meta(test, obs_len, seed);
    meta.push(("ell".into(), ell.to_string()));
    meta.push(("snr_db".into(), snr_db.to_string()));
    let mut names: Vec<String> = structures.iter().map(|s| gmm_column(*s).to_string()).collect();
    names.extend(baselines.iter().map(|m| m.name().to_string()));
    let mut report = SweepReport::new(Axis::Components, names, meta);
    let (base_mse, base_se) = evaluate_row(baselines, test, obs_len, ell, snr_db, seed)?;
    for &k in k_grid {
        let mut methods = Vec::with_capacity(structures.len());
        for &s in structures {
            methods.push(GmmMethod {
                name: gmm_column(s).to_string(),
                model: store.get_or_fit(train, k, s)?,
            });
        }
        let refs: Vec<&dyn Method> = methods.iter().map(|m| m as &dyn Method).collect();
        let (mut mse, mut se) = evaluate_row(&refs, test, obs_len, ell, snr_db, seed)?;
        mse.extend(&base_mse);
        se.extend(&base_se);
        report.axis_values.push(k as f64);
        report.mse.push(mse);
        report.se.push(se);
    }
    Ok(report)
}

/// MSE over the prediction step. One model per structure serves every step.
#[allow(clippy::too_many_arguments)]
pub fn sweep_step(
    store: &ModelStore,
    train: &Dataset,
    test: &Dataset,
    structures: &[Structure],
    baselines: &[&dyn Method],
    k: usize,
    obs_len: usize,
    snr_db: f64,
    ell_grid: &[usize],
    seed: u64,
) -> Result<SweepReport> {
    let mut meta = base_meta(test, obs_len, seed);
    meta.push(("k".into(), k.to_string()));
    meta.push(("snr_db".into(), snr_db.to_string()));
    let mut methods: Vec<GmmMethod> = Vec::new();
    for &s in structures {
        methods.push(GmmMethod {
            name: gmm_column(s).to_string(),
            model: store.get_or_fit(train, k, s)?,
        });
    }
    let mut refs: Vec<&dyn Method> = methods.iter().map(|m| m as &dyn Method).collect();
    refs.extend_from_slice(baselines);
    let names = refs.iter().map(|m| m.name().to_string()).collect();
    let mut report = SweepReport::new(Axis::Step, names, meta);
    for &ell in ell_grid {
        let (mse, se) = evaluate_row(&refs, test, obs_len, ell, snr_db, seed)?;
        report.axis_values.push(ell as f64);
        report.mse.push(mse);
        report.se.push(se);
    }
    Ok(report)
}

/// Writes `report` to `path`.
pub fn save_report(report: &SweepReport, path: impl AsRef<Path>) -> Result<()> {
    report.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanmodel::{normalize_dataset, FadingGenerator};
    use crate::gauss::HermitianMatrix;
    use crate::gmm::Covariances;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn white_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = 0.5f64.sqrt();
        let trajs = (0..n)
            .map(|_| {
                let coeffs = (0..dim)
                    .map(|_| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        c(re * sd, im * sd)
                    })
                    .collect();
                Trajectory::new(coeffs, 1e-3, Some(1.0)).unwrap()
            })
            .collect();
        Dataset::new(trajs, dim - 1, 1).unwrap()
    }

    #[test]
    fn oracle_has_zero_mse() {
        let ds = white_dataset(50, 4, 1);
        let oracle = FnPredictor(|s: &Sample<'_>| Ok(s.trajectory.coeffs[3]));
        let est = evaluate_mse(&oracle, &ds, 3, 1, 10.0, 0).unwrap();
        assert_eq!(est.mse, 0.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn zero_predictor_measures_energy() {
        let ds = white_dataset(10_000, 3, 2);
        let zero = FnPredictor(|_: &Sample<'_>| Ok(c(0.0, 0.0)));
        let est = evaluate_mse(&zero, &ds, 2, 1, 0.0, 0).unwrap();
        assert!((est.mse - 1.0).abs() < 0.03, "{}", est.mse);
        // SE of a mean of unit-mean exponentials is about 1/sqrt(T)
        assert!((est.se - 0.01).abs() < 0.002, "{}", est.se);
    }

    #[test]
    fn mse_matches_two_pass_formula() {
        let ds = white_dataset(10, 3, 3);
        let pred = FnPredictor(|s: &Sample<'_>| Ok(s.observation.values[0] * 0.5));
        let est = evaluate_mse(&pred, &ds, 2, 1, 5.0, 7).unwrap();
        let mut naive = 0.0;
        for (i, t) in ds.trajectories.iter().enumerate() {
            let y = add_awgn(t, 2, 5.0, noise_seed(7, i)).unwrap();
            naive += (y.values[0] * 0.5 - t.coeffs[2]).norm_sqr();
        }
        assert!((est.mse - naive / 10.0).abs() < 1e-15);
    }

    #[test]
    fn true_covariance_predictor_attains_mmse() {
        // AR(1)-like Gaussian process with known covariance
        let dim = 4;
        let rho: f64 = 0.9;
        let cov = nalgebra::DMatrix::from_fn(dim, dim, |i, j| c(rho.powi((i as i32 - j as i32).abs()), 0.0));
        let herm = HermitianMatrix::new(cov.clone()).unwrap();
        let l = cov.clone().cholesky().unwrap().l();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sd = 0.5f64.sqrt();
        let trajs = (0..20_000)
            .map(|_| {
                let z = nalgebra::DVector::from_fn(dim, |_, _| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    c(re * sd, im * sd)
                });
                let h = &l * z; // filter order
                Trajectory::new(h.iter().rev().copied().collect(), 1e-3, None).unwrap()
            })
            .collect();
        let ds = Dataset::new(trajs, dim - 1, 1).unwrap();
        let snr = 10.0;
        let s2 = noise_variance(snr);
        let model = GmmModel::new(vec![1.0], vec![vec![c(0.0, 0.0); dim]], Covariances::Full(vec![herm.clone()])).unwrap();
        let method = GmmMethod {
            name: "gmm".into(),
            model: Arc::new(model),
        };
        let p = method.prepare(dim - 1, 1, s2).unwrap();
        let est = evaluate_mse(p.as_ref(), &ds, dim - 1, 1, snr, 9).unwrap();
        let f = crate::predict::lmmse_filters(&herm, None, dim - 1, &[1], s2).unwrap().remove(0);
        let cross: Complex64 = (0..dim - 1).map(|i| f.weights[i] * cov[(1 + i, 0)]).sum();
        let mmse = 1.0 - cross.re;
        assert!((est.mse / mmse - 1.0).abs() < 0.02, "{} vs {mmse}", est.mse);
    }

    fn small_setup() -> (Dataset, Dataset) {
        let g = FadingGenerator::new(3.5e9, 5e-4, 32).unwrap();
        let train = normalize_dataset(g.dataset(600, 5, 2, (1.0, 25.0), 10).unwrap()).unwrap();
        let mut test = g.dataset(400, 5, 2, (1.0, 25.0), 5000).unwrap();
        test.normalized = true;
        (train, test)
    }

    #[test]
    fn sweeps_are_consistent_and_cache_models() {
        let (train, test) = small_setup();
        let dir = tempfile::tempdir().unwrap();
        let opts = EmOptions {
            max_iter: 20,
            ..Default::default()
        };
        let store = ModelStore::new(Some(dir.path().to_path_buf()), opts);
        let jakes = JakesMethod {
            name: "jakes-perfect".into(),
            carrier_hz: 3.5e9,
            error_pct: 0.0,
        };
        let sample = CovarianceMethod {
            name: "lmmse-sample".into(),
            cov: BaselineCov::sample(&train).unwrap(),
        };
        let baselines: [&dyn Method; 2] = [&sample, &jakes];
        let by_k = sweep_components(&store, &train, &test, &[Structure::Full], &baselines, 5, 1, 20.0, &[2, 4], 3).unwrap();
        assert_eq!(store.fits(), 2);
        for name in ["lmmse-sample", "jakes-perfect"] {
            let col = by_k.mse_of(name).unwrap();
            assert_eq!(col[0], col[1]);
        }

        let model = store.get_or_fit(&train, 4, Structure::Full).unwrap();
        assert_eq!(store.fits(), 2);
        let gmm = GmmMethod {
            name: "gmm".into(),
            model,
        };
        let by_snr = sweep_snr(&[&gmm], &test, 5, 1, &[20.0], 3).unwrap();
        assert_eq!(by_snr.mse[0][0], by_k.mse[1][0]);

        let direct = evaluate_mse(gmm.prepare(5, 1, noise_variance(20.0)).unwrap().as_ref(), &test, 5, 1, 20.0, 3).unwrap();
        assert_eq!(direct.mse, by_snr.mse[0][0]);

        // a fresh store with the same directory loads from disk
        let again = ModelStore::new(Some(dir.path().to_path_buf()), opts);
        again.get_or_fit(&train, 2, Structure::Full).unwrap();
        assert_eq!(again.fits(), 0);

        let by_step = sweep_step(&again, &train, &test, &[Structure::Full], &[], 4, 5, 20.0, &[1, 2], 3).unwrap();
        assert_eq!(again.fits(), 0);
        assert_eq!(by_step.axis_values, vec![1.0, 2.0]);
    }

    #[test]
    fn csv_layout() {
        let report = SweepReport {
            axis: Axis::SnrDb,
            axis_values: vec![-10.0, 0.0],
            methods: vec!["a".into(), "b".into()],
            mse: vec![vec![0.5, 0.25], vec![0.125, 1.0 / 3.0]],
            se: vec![vec![0.01, 0.02], vec![0.0, 0.001]],
            meta: vec![("mo".into(), "19".into())],
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# axis=snr_db");
        assert_eq!(lines[1], "# mo=19");
        assert_eq!(lines[2], "axis,a,a_se,b,b_se");
        assert_eq!(lines[3], "-10,5.000000000e-1,1.000000000e-2,2.500000000e-1,2.000000000e-2");
        assert!(lines[4].contains("3.333333333e-1"));
    }

    #[test]
    fn jakes_needs_velocity() {
        let ds = white_dataset(3, 3, 0);
        let mut no_v = ds.clone();
        no_v.trajectories.iter_mut().for_each(|t| t.velocity_mps = None);
        let m = JakesMethod {
            name: "j".into(),
            carrier_hz: 3.5e9,
            error_pct: 10.0,
        };
        let p = m.prepare(2, 1, 0.1).unwrap();
        assert!(evaluate_mse(p.as_ref(), &ds, 2, 1, 10.0, 0).is_ok());
        assert!(evaluate_mse(p.as_ref(), &no_v, 2, 1, 10.0, 0).is_err());
    }

    #[test]
    fn rejects_empty_test_set() {
        let empty = Dataset::new(vec![], 2, 1).unwrap();
        let zero = FnPredictor(|_: &Sample<'_>| Ok(c(0.0, 0.0)));
        assert!(evaluate_mse(&zero, &empty, 2, 1, 0.0, 0).is_err());
    }
}
