//! Expectation-maximization for complex Gaussian mixtures.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{kmeans, toeplitz_project, Covariances, GmmModel, MixtureDensity, Structure};
use crate::chanmodel::Dataset;
use crate::error::{Error, Result};
use crate::gauss::{pairwise_sum, softmax_in_place, ComplexGaussian, DftSelector, HermitianMatrix};

const E_CHUNK: usize = 256;

/// Responsibilities below this are left out of the M-step sums.
const RESP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once the relative log-likelihood change drops below this.
    pub tol_rel: f64,
    pub seed: u64,
    /// Components whose weight falls below this are re-seeded.
    pub min_weight: f64,
    pub kmeans_iters: usize,
    pub max_jitter_rel: f64,
    /// Re-seeds allowed per component before giving up.
    pub max_reseeds: usize,
    /// Strength of the covariance prior, relative to the mean per-entry
    /// power of the data. Zero gives plain maximum likelihood.
    pub reg_covar: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol_rel: 1e-6,
            seed: 0,
            min_weight: 1e-6,
            kmeans_iters: 10,
            max_jitter_rel: crate::gauss::DEFAULT_MAX_JITTER,
            max_reseeds: 25,
            reg_covar: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport {
    /// Number of M-steps performed.
    pub iterations: usize,
    /// Objective before each M-step, plus the final one: the data
    /// log-likelihood, plus the log prior of the covariances when
    /// `reg_covar > 0`.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
    /// Factorizations that needed diagonal jitter.
    pub jitter_events: usize,
    pub reseeds: usize,
    /// Trace indices whose parameters were re-seeded after the previous
    /// entry; EM's ascent guarantee does not cover those steps.
    pub reseed_steps: Vec<usize>,
}

impl FitReport {
    pub fn final_log_likelihood(&self) -> Option<f64> {
        self.log_likelihood_trace.last().copied()
    }

    /// True when no EM step (re-seeded steps excluded) decreased the
    /// log-likelihood by more than `rel_tol` relative.
    pub fn is_monotone(&self, rel_tol: f64) -> bool {
        self.log_likelihood_trace
            .windows(2)
            .enumerate()
            .filter(|(t, _)| !self.reseed_steps.contains(&(t + 1)))
            .all(|(_, w)| w[1] >= w[0] - rel_tol * w[0].abs())
    }
}

/// Fits a `k`-component mixture to the trajectories of `ds`.
pub fn fit_em(ds: &Dataset, k: usize, structure: Structure, opts: &EmOptions) -> Result<(GmmModel, FitReport)> {
    Fitter::new(ds, k, structure, opts)?.run(None)
}

/// Like [`fit_em`], calling `observer(iteration, model)` after every M-step.
pub fn fit_em_observed(
    ds: &Dataset,
    k: usize,
    structure: Structure,
    opts: &EmOptions,
    mut observer: impl FnMut(usize, &GmmModel),
) -> Result<(GmmModel, FitReport)> {
    Fitter::new(ds, k, structure, opts)?.run(Some(&mut observer))
}

type Observer<'o> = &'o mut dyn FnMut(usize, &GmmModel);

struct Stats {
    weight: f64,
    mean: Vec<Complex64>,
    cov: HermitianMatrix,
}

struct Fitter<'a> {
    opts: &'a EmOptions,
    structure: Structure,
    n: usize,
    dim: usize,
    k: usize,
    data: Vec<Complex64>,
    re: Vec<f64>,
    im: Vec<f64>,
    selector: Option<DftSelector>,
    /// `beta` in the covariance prior `exp(-beta tr(C^-1))`.
    prior_scale: f64,
    global_cov: HermitianMatrix,
    weights: Vec<f64>,
    means: Vec<Vec<Complex64>>,
    covs: Vec<HermitianMatrix>,
    spectra: Vec<Vec<f64>>,
    reseed_counts: Vec<usize>,
    report: FitReport,
    rng: ChaCha8Rng,
}

impl<'a> Fitter<'a> {
    fn new(ds: &Dataset, k: usize, structure: Structure, opts: &'a EmOptions) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::invalid("cannot fit a mixture to an empty dataset"));
        }
        if k == 0 || k > ds.len() {
            return Err(Error::invalid(format!("K={k} components for J={} trajectories", ds.len())));
        }
        if !ds.normalized {
            log::warn!("fitting a mixture to a dataset that is not normalized");
        }
        let dim = ds.dim();
        let data = ds.filter_order_samples();
        let re = data.iter().map(|z| z.re).collect();
        let im = data.iter().map(|z| z.im).collect();
        let selector = match structure {
            Structure::Full => None,
            Structure::Toeplitz => Some(DftSelector::new(dim, 0)?),
        };
        let mut fitter = Self {
            opts,
            structure,
            n: ds.len(),
            dim,
            k,
            data,
            re,
            im,
            selector,
            prior_scale: 0.0,
            global_cov: HermitianMatrix::identity(dim),
            weights: Vec::new(),
            means: Vec::new(),
            covs: Vec::new(),
            spectra: Vec::new(),
            reseed_counts: vec![0; k],
            report: FitReport::default(),
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
        };
        if !(opts.reg_covar >= 0.0 && opts.reg_covar.is_finite()) {
            return Err(Error::invalid(format!("reg_covar {}", opts.reg_covar)));
        }
        let ones = vec![1.0; fitter.n];
        let global = fitter.component_stats(&ones, 1, 0).cov;
        let power = global.trace() / dim as f64;
        fitter.global_cov = fitter.structured(global.shifted(opts.reg_covar * power))?.0;
        if opts.reg_covar > 0.0 {
            // Scaled by the average component size so that a typical
            // component is loaded by about `reg_covar * power`.
            fitter.prior_scale = opts.reg_covar * power * fitter.n as f64 / k as f64;
        }
        Ok(fitter)
    }

    /// Projects onto the Toeplitz family when required.
    fn structured(&self, cov: HermitianMatrix) -> Result<(HermitianMatrix, Vec<f64>)> {
        match &self.selector {
            None => Ok((cov, Vec::new())),
            Some(sel) => {
                let spec = toeplitz_project(&cov, sel)?;
                Ok((sel.covariance(&spec)?, spec))
            }
        }
    }

    fn initialize(&mut self) -> Result<()> {
        let mut centroids = kmeans::plus_plus(&self.data, self.dim, self.k, &mut self.rng);
        let labels = kmeans::lloyd(&self.data, self.dim, &mut centroids, self.opts.kmeans_iters);
        let mut resp = vec![0.0; self.n * self.k];
        for (i, &l) in labels.iter().enumerate() {
            resp[i * self.k + l] = 1.0;
        }
        self.m_step(&resp, None)
    }

    /// Weighted mean and biased covariance of component `j` under `resp`
    /// (row-major `n x k`).
    fn component_stats(&self, resp: &[f64], k: usize, j: usize) -> Stats {
        let dim = self.dim;
        let mut nk = 0.0;
        let mut mre = vec![0.0; dim];
        let mut mim = vec![0.0; dim];
        for i in 0..self.n {
            let r = resp[i * k + j];
            if r < RESP_FLOOR {
                continue;
            }
            nk += r;
            let xr = &self.re[i * dim..(i + 1) * dim];
            let xi = &self.im[i * dim..(i + 1) * dim];
            for a in 0..dim {
                mre[a] += r * xr[a];
                mim[a] += r * xi[a];
            }
        }
        if nk <= 0.0 {
            return Stats {
                weight: 0.0,
                mean: vec![Complex64::new(0.0, 0.0); dim],
                cov: HermitianMatrix::identity(dim),
            };
        }
        let inv = 1.0 / nk;
        mre.iter_mut().chain(mim.iter_mut()).for_each(|v| *v *= inv);

        let packed = dim * (dim + 1) / 2;
        let mut acc_re = vec![0.0; packed];
        let mut acc_im = vec![0.0; packed];
        let mut dr = vec![0.0; dim];
        let mut di = vec![0.0; dim];
        for i in 0..self.n {
            let r = resp[i * k + j];
            if r < RESP_FLOOR {
                continue;
            }
            let xr = &self.re[i * dim..(i + 1) * dim];
            let xi = &self.im[i * dim..(i + 1) * dim];
            for a in 0..dim {
                dr[a] = xr[a] - mre[a];
                di[a] = xi[a] - mim[a];
            }
            for a in 0..dim {
                let wr = r * dr[a];
                let wi = r * di[a];
                let base = a * (a + 1) / 2;
                let (row_re, row_im) = (&mut acc_re[base..=base + a], &mut acc_im[base..=base + a]);
                for b in 0..=a {
                    row_re[b] += wr * dr[b] + wi * di[b];
                    row_im[b] += wi * dr[b] - wr * di[b];
                }
            }
        }
        let mut cov = nalgebra::DMatrix::zeros(dim, dim);
        for a in 0..dim {
            let base = a * (a + 1) / 2;
            for b in 0..=a {
                let v = Complex64::new(acc_re[base + b] * inv, acc_im[base + b] * inv);
                cov[(a, b)] = v;
                cov[(b, a)] = v.conj();
            }
        }
        Stats {
            weight: nk,
            mean: mre.iter().zip(&mim).map(|(r, i)| Complex64::new(*r, *i)).collect(),
            cov: HermitianMatrix::symmetrize(cov),
        }
    }

    fn m_step(&mut self, resp: &[f64], sample_ll: Option<&[f64]>) -> Result<()> {
        let k = self.k;
        let stats: Vec<Stats> = (0..k)
            .into_par_iter()
            .map(|j| self.component_stats(resp, k, j))
            .collect();
        let total: f64 = stats.iter().map(|s| s.weight).sum();
        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        let mut spectra = Vec::with_capacity(k);
        let mut collapsed = Vec::new();
        for (j, s) in stats.into_iter().enumerate() {
            let w = s.weight / total;
            if !(w >= self.opts.min_weight) {
                log::debug!("component {j} collapsed to weight {w:e}");
                collapsed.push(j);
            }
            let cov = if self.prior_scale > 0.0 && s.weight > 0.0 {
                s.cov.shifted(self.prior_scale / s.weight)
            } else {
                s.cov
            };
            let (cov, spec) = self.structured(cov)?;
            weights.push(w);
            means.push(s.mean);
            covs.push(cov);
            spectra.push(spec);
        }
        self.weights = weights;
        self.means = means;
        self.covs = covs;
        self.spectra = spectra;
        self.reseed(&collapsed, sample_ll)
    }

    /// Moves each listed component onto a poorly explained sample with the
    /// global covariance and weight `1/K`, then renormalizes the weights.
    fn reseed(&mut self, components: &[usize], sample_ll: Option<&[f64]>) -> Result<()> {
        if components.is_empty() {
            return Ok(());
        }
        let mut order: Vec<usize> = (0..self.n).collect();
        match sample_ll {
            Some(ll) => order.sort_by(|a, b| ll[*a].total_cmp(&ll[*b]).then(a.cmp(b))),
            None => {
                for i in (1..self.n).rev() {
                    let j = self.rng.random_range(0..=i);
                    order.swap(i, j);
                }
            }
        }
        let (cov, spec) = self.structured(self.global_cov.clone())?;
        for (slot, &j) in components.iter().enumerate() {
            self.reseed_counts[j] += 1;
            if self.reseed_counts[j] > self.opts.max_reseeds {
                return Err(Error::ComponentCollapse { component: j });
            }
            let sample = order[slot % self.n];
            log::debug!("re-seeding component {j} at sample {sample}");
            self.means[j] = self.data[sample * self.dim..(sample + 1) * self.dim].to_vec();
            self.covs[j] = cov.clone();
            self.spectra[j] = spec.clone();
            self.weights[j] = 1.0 / self.k as f64;
            self.report.reseeds += 1;
        }
        let total: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= total);
        Ok(())
    }

    fn densities(&mut self, sample_ll: Option<&[f64]>) -> Result<MixtureDensity> {
        loop {
            let results: Vec<Result<ComplexGaussian>> = (0..self.k)
                .into_par_iter()
                .map(|j| ComplexGaussian::new(self.means[j].clone(), &self.covs[j], self.opts.max_jitter_rel))
                .collect();
            let failed: Vec<usize> = results
                .iter()
                .enumerate()
                .filter(|(_, r)| r.is_err())
                .map(|(j, _)| j)
                .collect();
            if failed.is_empty() {
                let comps: Vec<ComplexGaussian> = results.into_iter().map(|r| r.expect("checked")).collect();
                self.report.jitter_events += comps.iter().filter(|c| c.factor().jitter() > 0.0).count();
                return Ok(MixtureDensity::new(&self.weights, comps));
            }
            log::debug!("factorization failed for components {failed:?}");
            self.reseed(&failed, sample_ll)?;
        }
    }

    /// Responsibilities into `resp`, per-sample log-likelihoods into `ll`.
    fn e_step(&self, mix: &MixtureDensity, resp: &mut [f64], ll: &mut [f64]) {
        let (dim, k) = (self.dim, self.k);
        self.data
            .par_chunks(E_CHUNK * dim)
            .zip(resp.par_chunks_mut(E_CHUNK * k))
            .zip(ll.par_chunks_mut(E_CHUNK))
            .for_each(|((xs, rs), ls)| {
                let mut scratch = Vec::with_capacity(dim);
                let mut lp = Vec::with_capacity(k);
                for ((x, r), l) in xs.chunks_exact(dim).zip(rs.chunks_exact_mut(k)).zip(ls.iter_mut()) {
                    mix.log_joint(x, &mut lp, &mut scratch);
                    *l = softmax_in_place(&mut lp);
                    r.copy_from_slice(&lp);
                }
            });
    }

    /// `-beta sum_k tr(C_k^-1)`.
    fn log_prior(&self, mix: &MixtureDensity) -> f64 {
        if self.prior_scale == 0.0 {
            return 0.0;
        }
        let traces: Vec<f64> = mix
            .components()
            .par_iter()
            .map(|g| {
                let mut unit = vec![Complex64::new(0.0, 0.0); self.dim];
                let mut t = 0.0;
                for i in 0..self.dim {
                    unit.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                    unit[i] = Complex64::new(1.0, 0.0);
                    g.factor().forward_substitute(&mut unit);
                    t += unit.iter().map(|z| z.norm_sqr()).sum::<f64>();
                }
                t
            })
            .collect();
        -self.prior_scale * traces.iter().sum::<f64>()
    }

    fn snapshot(&self) -> Result<GmmModel> {
        let covariances = match self.structure {
            Structure::Full => Covariances::Full(self.covs.clone()),
            Structure::Toeplitz => Covariances::Toeplitz(self.spectra.clone()),
        };
        GmmModel::new(self.weights.clone(), self.means.clone(), covariances)
    }

    fn run(mut self, mut observer: Option<Observer<'_>>) -> Result<(GmmModel, FitReport)> {
        self.initialize()?;
        let mut resp = vec![0.0; self.n * self.k];
        let mut ll = vec![0.0; self.n];
        let mut reseeds_seen = self.report.reseeds;
        let mut have_ll = false;
        for iter in 0..=self.opts.max_iter {
            let mix = self.densities(have_ll.then_some(&ll[..]))?;
            self.e_step(&mix, &mut resp, &mut ll);
            have_ll = true;
            let total = pairwise_sum(&ll) + self.log_prior(&mix);
            if !total.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: f64::NAN,
                    max_jitter: self.opts.max_jitter_rel,
                });
            }
            log::debug!("EM iteration {iter}: log-likelihood {total:.10e}");
            if self.report.reseeds > reseeds_seen && iter > 0 {
                self.report.reseed_steps.push(self.report.log_likelihood_trace.len());
            }
            reseeds_seen = self.report.reseeds;
            if let Some(&prev) = self.report.log_likelihood_trace.last() {
                self.report.log_likelihood_trace.push(total);
                if (total - prev).abs() <= self.opts.tol_rel * prev.abs() {
                    self.report.converged = true;
                    break;
                }
            } else {
                self.report.log_likelihood_trace.push(total);
            }
            if iter == self.opts.max_iter {
                break;
            }
            self.m_step(&resp, Some(&ll))?;
            self.report.iterations += 1;
            if let Some(obs) = observer.as_mut() {
                obs(iter + 1, &self.snapshot()?);
            }
        }
        let model = self.snapshot()?;
        Ok((model, self.report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanmodel::{Dataset, Trajectory};
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dataset_from(rows: Vec<Vec<Complex64>>, mo: usize) -> Dataset {
        let np = rows[0].len() - mo;
        let trajs = rows
            .into_iter()
            .map(|mut r| {
                r.reverse(); // stored chronologically
                Trajectory::new(r, 1e-3, None).unwrap()
            })
            .collect();
        let mut ds = Dataset::new(trajs, mo, np).unwrap();
        ds.normalized = true;
        ds
    }

    fn gaussian_rows(n: usize, dim: usize, offset: Complex64, rng: &mut ChaCha8Rng) -> Vec<Vec<Complex64>> {
        let sd = 0.5f64.sqrt();
        (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        offset + c(re * sd, im * sd)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_component_is_sample_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rows = gaussian_rows(500, 4, c(0.3, -0.2), &mut rng);
        // correlate coordinates a little
        for r in &mut rows {
            r[1] = r[1] + r[0] * c(0.5, 0.2);
        }
        let ds = dataset_from(rows.clone(), 3);
        let (model, report) = fit_em(&ds, 1, Structure::Full, &EmOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);

        let n = rows.len() as f64;
        let mean: Vec<Complex64> = (0..4).map(|a| rows.iter().map(|r| r[a]).sum::<Complex64>() / n).collect();
        for (a, b) in model.means()[0].iter().zip(&mean) {
            assert!((a - b).norm() < 1e-10);
        }
        let cov = model.covariance(0);
        for a in 0..4 {
            for b in 0..4 {
                let want = rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b]).conj()).sum::<Complex64>() / n;
                assert!((cov.matrix()[(a, b)] - want).norm() < 1e-10);
            }
        }
        assert_eq!(model.weights(), &[1.0]);
    }

    #[test]
    fn covariance_prior_loads_the_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows = gaussian_rows(400, 3, c(0.1, 0.0), &mut rng);
        let ds = dataset_from(rows, 2);
        let (plain, _) = fit_em(&ds, 1, Structure::Full, &EmOptions::default()).unwrap();
        let opts = EmOptions { reg_covar: 1e-3, ..Default::default() };
        let (reg, _) = fit_em(&ds, 1, Structure::Full, &opts).unwrap();
        let power = plain.covariance(0).trace() / 3.0;
        let diff = reg.covariance(0).matrix() - plain.covariance(0).matrix();
        let want = nalgebra::DMatrix::<Complex64>::identity(3, 3) * c(1e-3 * power, 0.0);
        assert!((diff - want).norm() < 1e-12);
        assert!(fit_em(&ds, 1, Structure::Full, &EmOptions { reg_covar: -1.0, ..Default::default() }).is_err());
    }

    #[test]
    fn penalized_objective_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rows = gaussian_rows(300, 4, c(0.0, 0.0), &mut rng);
        rows.extend(gaussian_rows(300, 4, c(1.5, -1.0), &mut rng));
        // a near-degenerate cluster
        rows.extend((0..100).map(|i| vec![c(3.0, 0.0) * (1.0 + 1e-9 * i as f64); 4]));
        let ds = dataset_from(rows, 3);
        let opts = EmOptions { reg_covar: 1e-4, seed: 3, ..Default::default() };
        let (_, report) = fit_em(&ds, 4, Structure::Full, &opts).unwrap();
        assert!(report.is_monotone(1e-9), "{:?}", report.log_likelihood_trace);
        assert_eq!(report.jitter_events, 0);
    }

    #[test]
    fn reseeded_steps_are_exempt_from_monotonicity() {
        let mut report = FitReport {
            log_likelihood_trace: vec![1.0, 3.0, 2.0, 4.0],
            ..Default::default()
        };
        assert!(!report.is_monotone(1e-9));
        report.reseed_steps.push(2);
        assert!(report.is_monotone(1e-9));
    }

    #[test]
    fn recovers_two_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rows = gaussian_rows(400, 3, c(0.0, 0.0), &mut rng);
        rows.extend(gaussian_rows(400, 3, c(10.0, 0.0), &mut rng));
        let ds = dataset_from(rows, 2);
        let (model, report) = fit_em(&ds, 2, Structure::Full, &EmOptions::default()).unwrap();
        assert!(report.is_monotone(1e-9), "{:?}", report.log_likelihood_trace);
        let mut order: Vec<usize> = vec![0, 1];
        order.sort_by(|a, b| model.means()[*a][0].re.total_cmp(&model.means()[*b][0].re));
        for (slot, &j) in order.iter().enumerate() {
            let target = c(10.0 * slot as f64, 0.0);
            assert!(model.means()[j].iter().all(|m| (m - target).norm() < 0.1));
            assert!((model.weights()[j] - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn toeplitz_fit_keeps_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = gaussian_rows(300, 5, c(0.0, 0.0), &mut rng);
        rows.extend(gaussian_rows(300, 5, c(3.0, 1.0), &mut rng));
        let ds = dataset_from(rows, 4);
        let mut checked = 0;
        let (model, _) = fit_em_observed(&ds, 2, Structure::Toeplitz, &EmOptions::default(), |_, m| {
            for cov in m.covariance_matrices() {
                assert!(cov.toeplitz_deviation() < 1e-10);
                assert!(cov.min_eigenvalue() > -1e-10);
            }
            checked += 1;
        })
        .unwrap();
        assert!(checked > 0);
        assert_eq!(model.structure(), Structure::Toeplitz);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = gaussian_rows(300, 3, c(0.0, 0.0), &mut rng);
        let ds = dataset_from(rows, 2);
        let opts = EmOptions { seed: 9, ..Default::default() };
        let a = fit_em(&ds, 3, Structure::Full, &opts).unwrap();
        let b = fit_em(&ds, 3, Structure::Full, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_component_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = dataset_from(gaussian_rows(3, 2, c(0.0, 0.0), &mut rng), 1);
        assert!(fit_em(&ds, 4, Structure::Full, &EmOptions::default()).is_err());
        assert!(fit_em(&ds, 0, Structure::Full, &EmOptions::default()).is_err());
        let empty = Dataset::new(vec![], 1, 1).unwrap();
        assert!(fit_em(&empty, 1, Structure::Full, &EmOptions::default()).is_err());
    }

    #[test]
    fn duplicate_points_are_rescued_or_reported() {
        // Many exact duplicates force degenerate clusters.
        let rows: Vec<Vec<Complex64>> = (0..40)
            .map(|i| vec![c((i % 2) as f64, 0.0), c(0.0, (i % 2) as f64)])
            .collect();
        let ds = dataset_from(rows, 1);
        match fit_em(&ds, 3, Structure::Full, &EmOptions { max_iter: 20, ..Default::default() }) {
            Ok((m, report)) => {
                assert!(report.reseeds > 0 || report.jitter_events > 0);
                assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            Err(e) => assert!(e.is_numeric(), "{e}"),
        }
    }
}
