//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::chanmodel::{kmh_to_mps, DEFAULT_PATHS};
use crate::gmm::Structure;

/// Settings for every subcommand. Unset keys keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mo: usize,
    pub np: usize,
    pub ts_s: f64,
    pub fc_hz: f64,
    pub velocity_range_mps: (f64, f64),
    pub n_paths: usize,
    pub j_train: usize,
    pub t_test: usize,
    pub k: usize,
    pub k_grid: Vec<usize>,
    pub structure: Structure,
    pub snr_grid: Vec<f64>,
    pub snr_db: f64,
    pub ell: usize,
    pub ell_grid: Vec<usize>,
    pub methods: Vec<String>,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub reg_covar: f64,
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub report: PathBuf,
    pub cache: Option<PathBuf>,
}

pub const ALL_METHODS: [&str; 6] = ["gmm", "gmm-toeplitz", "lmmse-sample", "jakes-perfect", "jakes-10", "jakes-20"];

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mo: 19,
            np: 1,
            ts_s: 5e-4,
            fc_hz: 3.5e9,
            velocity_range_mps: (kmh_to_mps(3.0), kmh_to_mps(100.0)),
            n_paths: DEFAULT_PATHS,
            j_train: 50_000,
            t_test: 10_000,
            k: 128,
            k_grid: vec![2, 8, 16, 32, 64, 128],
            structure: Structure::Full,
            snr_grid: (0..9).map(|i| -10.0 + 5.0 * i as f64).collect(),
            snr_db: 20.0,
            ell: 1,
            ell_grid: Vec::new(),
            methods: ALL_METHODS.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            max_iter: 500,
            tol: 1e-6,
            reg_covar: 1e-6,
            dataset: PathBuf::from("dataset.txt"),
            model: PathBuf::from("model.cpgmm"),
            report: PathBuf::from("report.csv"),
            cache: None,
        }
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("{key}: cannot parse {s:?}")))
        .collect()
}

fn one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("{key}: cannot parse {value:?}"))
}

fn pair(key: &str, value: &str) -> Result<(f64, f64), String> {
    match list::<f64>(key, value)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("{key}: expected two comma-separated numbers")),
    }
}

/// Parses `start:step:stop` or a comma-separated list.
fn grid(key: &str, value: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let (a, s, b): (f64, f64, f64) = (one(key, parts[0])?, one(key, parts[1])?, one(key, parts[2])?);
        if !(s > 0.0) || b < a {
            return Err(format!("{key}: empty range {value:?}"));
        }
        let n = ((b - a) / s + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| a + s * i as f64).collect());
    }
    list(key, value)
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "mo" => self.mo = one(key, v)?,
            "np" => self.np = one(key, v)?,
            "ts_s" => self.ts_s = one(key, v)?,
            "fc_hz" => self.fc_hz = one(key, v)?,
            "velocity_range_mps" => self.velocity_range_mps = pair(key, v)?,
            "velocity_range_kmh" => {
                let (a, b) = pair(key, v)?;
                self.velocity_range_mps = (kmh_to_mps(a), kmh_to_mps(b));
            }
            "n_paths" => self.n_paths = one(key, v)?,
            "j_train" => self.j_train = one(key, v)?,
            "t_test" => self.t_test = one(key, v)?,
            "k" => self.k = one(key, v)?,
            "k_grid" => self.k_grid = list(key, v)?,
            "structure" => self.structure = v.parse().map_err(|e| format!("{key}: {e}"))?,
            "snr_grid" => self.snr_grid = grid(key, v)?,
            "snr_db" => self.snr_db = one(key, v)?,
            "ell" => self.ell = one(key, v)?,
            "ell_grid" => self.ell_grid = list(key, v)?,
            "methods" => {
                let m: Vec<String> = list(key, v)?;
                if let Some(bad) = m.iter().find(|m| !ALL_METHODS.contains(&m.as_str())) {
                    return Err(format!("methods: unknown method {bad:?}"));
                }
                self.methods = m;
            }
            "seed" => self.seed = one(key, v)?,
            "max_iter" => self.max_iter = one(key, v)?,
            "tol" => self.tol = one(key, v)?,
            "reg_covar" => self.reg_covar = one(key, v)?,
            "dataset" => self.dataset = PathBuf::from(v),
            "model" => self.model = PathBuf::from(v),
            "report" => self.report = PathBuf::from(v),
            "cache" => self.cache = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => return Err(format!("unknown configuration key {other:?}")),
        }
        Ok(())
    }

    /// Applies every non-comment line of a config text.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            self.set(k, v).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Range checks that do not depend on input files.
    pub fn validate(&self) -> Result<(), String> {
        if self.mo == 0 || self.np == 0 {
            return Err("mo and np must be at least 1".into());
        }
        if self.ell == 0 || self.ell > self.np {
            return Err(format!("ell={} outside 1..={}", self.ell, self.np));
        }
        if let Some(bad) = self.ell_grid.iter().find(|&&l| l == 0 || l > self.np) {
            return Err(format!("ell_grid entry {bad} outside 1..={}", self.np));
        }
        if !(self.ts_s > 0.0 && self.fc_hz > 0.0) {
            return Err("ts_s and fc_hz must be positive".into());
        }
        let (lo, hi) = self.velocity_range_mps;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(format!("velocity range [{lo}, {hi}] is invalid"));
        }
        if self.n_paths == 0 || self.k == 0 || self.j_train == 0 {
            return Err("n_paths, k and j_train must be positive".into());
        }
        if self.k_grid.contains(&0) {
            return Err("k_grid entries must be positive".into());
        }
        if self.snr_grid.iter().any(|s| s.is_nan()) || self.snr_db.is_nan() {
            return Err("SNR values must be numbers".into());
        }
        if !(self.tol >= 0.0) {
            return Err("tol must be nonnegative".into());
        }
        if !(self.reg_covar >= 0.0 && self.reg_covar.is_finite()) {
            return Err("reg_covar must be a finite nonnegative number".into());
        }
        Ok(())
    }

    /// The effective step grid: `ell_grid`, or `1..=np` when unset.
    pub fn steps(&self) -> Vec<usize> {
        if self.ell_grid.is_empty() {
            (1..=self.np).collect()
        } else {
            self.ell_grid.clone()
        }
    }

    /// Canonical `key = value` rendering, accepted by [`RunConfig::apply_text`].
    pub fn render(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        let mut m = BTreeMap::new();
        m.insert("mo", self.mo.to_string());
        m.insert("np", self.np.to_string());
        m.insert("ts_s", self.ts_s.to_string());
        m.insert("fc_hz", self.fc_hz.to_string());
        m.insert(
            "velocity_range_mps",
            format!("{},{}", self.velocity_range_mps.0, self.velocity_range_mps.1),
        );
        m.insert("n_paths", self.n_paths.to_string());
        m.insert("j_train", self.j_train.to_string());
        m.insert("t_test", self.t_test.to_string());
        m.insert("k", self.k.to_string());
        m.insert("k_grid", join(&self.k_grid));
        m.insert("structure", self.structure.to_string());
        m.insert("snr_grid", join(&self.snr_grid));
        m.insert("snr_db", self.snr_db.to_string());
        m.insert("ell", self.ell.to_string());
        m.insert("ell_grid", join(&self.ell_grid));
        m.insert("methods", self.methods.join(","));
        m.insert("seed", self.seed.to_string());
        m.insert("max_iter", self.max_iter.to_string());
        m.insert("tol", self.tol.to_string());
        m.insert("reg_covar", self.reg_covar.to_string());
        m.insert("dataset", self.dataset.display().to_string());
        m.insert("model", self.model.display().to_string());
        m.insert("report", self.report.display().to_string());
        m.insert(
            "cache",
            self.cache.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        m.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
