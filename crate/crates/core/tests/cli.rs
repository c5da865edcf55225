use std::path::Path;
use std::process::{Command, Output};

use chanpred::chanmodel::{load_dataset, load_observation, noise_variance, save_dataset, FadingGenerator};
use chanpred::gmm::load_model;
use chanpred::predict::build_bank;

const CONFIG: &str = "mo = 4\nnp = 2\nj_train = 400\nt_test = 100\nk = 3\nmax_iter = 10\nseed = 5\n";
const OBS: &str = "CPOBS v1 MO=4\n0.9 0.1\n0.7 0.3\n0.5 0.5\n0.2 0.6\n";

fn chanpred(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chanpred"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = chanpred(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), CONFIG).unwrap();
    std::fs::write(dir.path().join("y.txt"), OBS).unwrap();
    ok(dir.path(), &["--config", "run.cfg", "generate"]);
    dir
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .to_string()
}

#[test]
fn exit_codes() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(chanpred(d, &["--config", "run.cfg", "sweep", "--axis", "bogus"]).status.code(), Some(2));
    assert_eq!(chanpred(d, &["--config", "run.cfg", "--set", "mo=0", "generate"]).status.code(), Some(2));
    assert_eq!(chanpred(d, &["--config", "run.cfg", "--set", "colour=blue", "fit"]).status.code(), Some(2));
    assert_eq!(chanpred(d, &["--config", "missing.cfg", "fit"]).status.code(), Some(2));
    assert_eq!(chanpred(d, &["--config", "run.cfg", "fit", "--dataset", "nope.txt"]).status.code(), Some(3));
    let out = chanpred(d, &["--config", "run.cfg", "predict", "--observation", "y.txt"]);
    assert_eq!(out.status.code(), Some(3), "predict without a model file");
}

#[test]
fn fit_refuses_unsplit_dataset() {
    let dir = setup();
    let d = dir.path();
    let g = FadingGenerator::new(3.5e9, 5e-4, 16).unwrap();
    save_dataset(&g.dataset(50, 4, 2, (1.0, 20.0), 1).unwrap(), d.join("raw.txt")).unwrap();
    let out = chanpred(d, &["--config", "run.cfg", "fit", "--dataset", "raw.txt"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split"));
    assert!(!d.join("model.cpgmm").exists());
}

#[test]
fn predict_matches_library() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--config", "run.cfg", "fit"]);
    let text = ok(d, &["--config", "run.cfg", "predict", "--observation", "y.txt", "--snr", "12", "--ell", "2"]);
    let model = load_model(d.join("model.cpgmm")).unwrap();
    let y = load_observation(d.join("y.txt"), noise_variance(12.0)).unwrap();
    let bank = build_bank(&model, 4, 2, y.noise_var).unwrap();
    let (h, resp) = bank.predict_detailed(&y, 2).unwrap();
    assert_eq!(field(&text, "prediction"), format!("{} {}", h.re, h.im));
    let best = (0..resp.len()).max_by(|a, b| resp[*a].total_cmp(&resp[*b])).unwrap();
    assert_eq!(field(&text, &format!("responsibility[{best}]")), resp[best].to_string());
    assert_eq!(text.lines().filter(|l| l.starts_with("responsibility")).count(), 3);
}

#[test]
fn single_component_has_unit_responsibility() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--config", "run.cfg", "--set", "k=1", "fit"]);
    let text = ok(d, &["--config", "run.cfg", "predict", "--observation", "y.txt", "--snr", "inf"]);
    assert_eq!(field(&text, "responsibility[0]"), "1");
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn fit_writes_summary_and_toeplitz_models_are_smaller() {
    let dir = setup();
    let d = dir.path();
    let summary = ok(d, &["--config", "run.cfg", "--set", "mo=19", "--set", "np=1", "generate"]);
    assert!(!summary.is_empty());
    ok(d, &["--config", "run.cfg", "--set", "mo=19", "--set", "np=1", "fit", "--model", "full.cpgmm"]);
    ok(d, &["--config", "run.cfg", "--set", "mo=19", "--set", "np=1", "--set", "structure=toeplitz", "fit", "--model", "toep.cpgmm"]);
    let full = std::fs::metadata(d.join("full.cpgmm")).unwrap().len();
    let toep = std::fs::metadata(d.join("toep.cpgmm")).unwrap().len();
    assert!(toep * 5 < full, "toeplitz {toep} bytes, full {full} bytes");
    let side = std::fs::read_to_string(d.join("full.cpgmm.fit.txt")).unwrap();
    assert_eq!(field(&side, "k"), "3");
    assert_eq!(field(&side, "structure"), "full");
    assert_eq!(load_model(d.join("toep.cpgmm")).unwrap().dim(), 20);
}

#[test]
fn sweep_reuses_cached_models() {
    let dir = setup();
    let d = dir.path();
    let args = ["--config", "run.cfg", "--set", "cache=models", "--set", "snr_grid=0,20", "sweep", "--axis", "snr"];
    ok(d, &args);
    let first = std::fs::read_to_string(d.join("report.csv")).unwrap();
    let cached = std::fs::read_dir(d.join("models")).unwrap().count();
    assert!(cached >= 1);
    let out = Command::new(env!("CARGO_BIN_EXE_chanpred"))
        .current_dir(d)
        .env("RUST_LOG", "info")
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cache hit"));
    assert_eq!(std::fs::read_to_string(d.join("report.csv")).unwrap(), first);
    assert_eq!(std::fs::read_dir(d.join("models")).unwrap().count(), cached);
    let ds = load_dataset(d.join("dataset.txt")).unwrap();
    assert_eq!(ds.split, Some(400));
    assert!(first.lines().any(|l| l.starts_with("axis,")));
}
