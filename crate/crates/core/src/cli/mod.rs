//! Command-line front end: `generate`, `fit`, `sweep`, `predict`.

mod config;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::chanmodel::{load_dataset, load_observation, noise_variance, normalize_dataset, save_dataset, Dataset, FadingGenerator};
use crate::error::Error;
use crate::eval::{
    dataset_hash, save_report, sweep_components, sweep_snr, sweep_step, CovarianceMethod, GmmMethod, JakesMethod,
    Method, ModelStore, SweepReport,
};
use crate::gmm::{fit_em, load_model, save_model, EmOptions, Structure};
use crate::predict::{BaselineCov, PredictorBank};

pub use self::config::{RunConfig, ALL_METHODS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Run(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Run(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "chanpred", version, about = "Gaussian-mixture channel prediction")]
pub struct Cli {
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Overrides a configuration key, e.g. `--set k=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    Snr,
    K,
    Step,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a normalized synthetic dataset with a train/test split.
    Generate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a mixture on the training split.
    Fit {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Evaluate methods on the test split along one axis.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Predict one coefficient from an observation file.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        observation: PathBuf,
        #[arg(long)]
        ell: Option<usize>,
        /// SNR of the observation in dB (`inf` for noiseless).
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
    },
}

/// Builds the effective configuration: defaults, then the config file,
/// then `--set` overrides, then `--seed`.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k, v).map_err(CliError::Config)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

fn em_options(cfg: &RunConfig) -> EmOptions {
    EmOptions {
        max_iter: cfg.max_iter,
        tol_rel: cfg.tol,
        reg_covar: cfg.reg_covar,
        seed: cfg.seed,
        ..Default::default()
    }
}

pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> CliResult<String> {
    let g = FadingGenerator::new(cfg.fc_hz, cfg.ts_s, cfg.n_paths)?;
    let total = cfg.j_train + cfg.t_test;
    let mut ds = normalize_dataset(g.dataset(total, cfg.mo, cfg.np, cfg.velocity_range_mps, cfg.seed)?)?;
    ds.split = Some(cfg.j_train);
    save_dataset(&ds, out)?;
    Ok(format!(
        "wrote {total} trajectories (train {}, test {}) MO={} NP={} to {}\n",
        cfg.j_train,
        cfg.t_test,
        cfg.mo,
        cfg.np,
        out.display()
    ))
}

fn split_dataset(path: &Path) -> CliResult<(Dataset, Dataset)> {
    let ds = load_dataset(path)?;
    if ds.split.is_none() {
        return Err(CliError::Run(Error::invalid(format!(
            "{} has no recorded train/test split; refusing to fit on possibly held-out data",
            path.display()
        ))));
    }
    Ok((ds.train()?, ds.test()?))
}

pub fn cmd_fit(cfg: &RunConfig, dataset: &Path, model_path: &Path) -> CliResult<String> {
    let (train, _) = split_dataset(dataset)?;
    let (model, report) = fit_em(&train, cfg.k, cfg.structure, &em_options(cfg))?;
    save_model(&model, model_path)?;
    let summary = format!(
        "k = {}\nstructure = {}\ndataset_sha256 = {}\niterations = {}\nconverged = {}\nfinal_log_likelihood = {}\njitter_events = {}\nreseeds = {}\n",
        cfg.k,
        cfg.structure,
        dataset_hash(&train),
        report.iterations,
        report.converged,
        report.final_log_likelihood().unwrap_or(f64::NAN),
        report.jitter_events,
        report.reseeds,
    );
    fs::write(fit_report_path(model_path), &summary)?;
    Ok(summary)
}

/// Sidecar file holding the fit summary of `model_path`.
pub fn fit_report_path(model_path: &Path) -> PathBuf {
    let mut s = model_path.as_os_str().to_owned();
    s.push(".fit.txt");
    PathBuf::from(s)
}

fn baselines(cfg: &RunConfig, train: &Dataset, carrier_hz: f64) -> CliResult<Vec<Box<dyn Method>>> {
    let mut out: Vec<Box<dyn Method>> = Vec::new();
    for name in &cfg.methods {
        match name.as_str() {
            "lmmse-sample" => out.push(Box::new(CovarianceMethod {
                name: name.clone(),
                cov: BaselineCov::sample(train)?,
            })),
            "jakes-perfect" | "jakes-10" | "jakes-20" => {
                let error_pct = match name.as_str() {
                    "jakes-10" => 10.0,
                    "jakes-20" => 20.0,
                    _ => 0.0,
                };
                out.push(Box::new(JakesMethod {
                    name: name.clone(),
                    carrier_hz,
                    error_pct,
                }));
            }
            _ => {}
        }
    }
    Ok(out)
}

fn gmm_structures(cfg: &RunConfig) -> Vec<Structure> {
    let mut s = Vec::new();
    if cfg.methods.iter().any(|m| m == "gmm") {
        s.push(Structure::Full);
    }
    if cfg.methods.iter().any(|m| m == "gmm-toeplitz") {
        s.push(Structure::Toeplitz);
    }
    s
}

pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, dataset: &Path, store: &ModelStore) -> CliResult<SweepReport> {
    let (train, test) = split_dataset(dataset)?;
    if test.is_empty() {
        return Err(CliError::Run(Error::invalid("dataset has an empty test split")));
    }
    let mo = test.obs_len;
    let carrier = test.carrier_hz.unwrap_or(cfg.fc_hz);
    let base = baselines(cfg, &train, carrier)?;
    let base_refs: Vec<&dyn Method> = base.iter().map(|b| b.as_ref()).collect();
    let structures = gmm_structures(cfg);
    let report = match axis {
        SweepAxis::Snr => {
            let mut gmms = Vec::new();
            for &s in &structures {
                gmms.push(GmmMethod {
                    name: if s == Structure::Full { "gmm" } else { "gmm-toeplitz" }.to_string(),
                    model: store.get_or_fit(&train, cfg.k, s)?,
                });
            }
            let mut refs: Vec<&dyn Method> = gmms.iter().map(|m| m as &dyn Method).collect();
            refs.extend(&base_refs);
            let mut r = sweep_snr(&refs, &test, mo, cfg.ell, &cfg.snr_grid, cfg.seed)?;
            r.meta.push(("k".into(), cfg.k.to_string()));
            r
        }
        SweepAxis::K => sweep_components(
            store, &train, &test, &structures, &base_refs, mo, cfg.ell, cfg.snr_db, &cfg.k_grid, cfg.seed,
        )?,
        SweepAxis::Step => {
            let steps = cfg.steps();
            if let Some(bad) = steps.iter().find(|&&l| l > test.pred_len) {
                return Err(CliError::Config(format!(
                    "step {bad} exceeds the dataset's NP={}",
                    test.pred_len
                )));
            }
            sweep_step(store, &train, &test, &structures, &base_refs, cfg.k, mo, cfg.snr_db, &steps, cfg.seed)?
        }
    };
    Ok(report)
}

pub fn cmd_predict(model_path: &Path, observation: &Path, ell: usize, snr_db: f64) -> CliResult<String> {
    if snr_db.is_nan() {
        return Err(CliError::Config("SNR must be a number".into()));
    }
    let model = load_model(model_path)?;
    let y = load_observation(observation, noise_variance(snr_db))?;
    if y.len() >= model.dim() {
        return Err(CliError::Run(Error::DimensionMismatch {
            expected: model.dim() - 1,
            found: y.len(),
        }));
    }
    let bank = PredictorBank::build(&model, y.len(), &[ell], y.noise_var)?;
    let (h, resp) = bank.predict_detailed(&y, ell)?;
    let mut order: Vec<usize> = (0..resp.len()).collect();
    order.sort_by(|a, b| resp[*b].total_cmp(&resp[*a]).then(a.cmp(b)));
    let mut out = format!("prediction = {} {}\n", h.re, h.im);
    for &k in order.iter().take(3) {
        out.push_str(&format!("responsibility[{k}] = {}\n", resp[k]));
    }
    Ok(out)
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let mut stdout = std::io::stdout().lock();
    match &cli.command {
        Command::Generate { out } => {
            let msg = cmd_generate(&cfg, out.as_deref().unwrap_or(&cfg.dataset))?;
            stdout.write_all(msg.as_bytes())?;
        }
        Command::Fit { dataset, model } => {
            let msg = cmd_fit(
                &cfg,
                dataset.as_deref().unwrap_or(&cfg.dataset),
                model.as_deref().unwrap_or(&cfg.model),
            )?;
            stdout.write_all(msg.as_bytes())?;
        }
        Command::Sweep { axis, dataset, report } => {
            let store = ModelStore::new(cfg.cache.clone(), em_options(&cfg));
            let r = cmd_sweep(&cfg, *axis, dataset.as_deref().unwrap_or(&cfg.dataset), &store)?;
            let path = report.as_deref().unwrap_or(&cfg.report);
            save_report(&r, path)?;
            writeln!(stdout, "wrote {} rows to {} ({} fits)", r.axis_values.len(), path.display(), store.fits())?;
        }
        Command::Predict {
            model,
            observation,
            ell,
            snr,
        } => {
            let msg = cmd_predict(
                model.as_deref().unwrap_or(&cfg.model),
                observation,
                ell.unwrap_or(cfg.ell),
                snr.unwrap_or(cfg.snr_db),
            )?;
            stdout.write_all(msg.as_bytes())?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
