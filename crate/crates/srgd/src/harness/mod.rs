//! Experiment harness: configuration, ensemble execution, CSV output.
//!
//! An experiment is a named problem (quadratic benchmark, logistic
//! regression, or the two-layer network), a storage format, a rounding
//! mode per operation, and an ensemble size.  [`run_experiment`] builds
//! the problem, runs the ensemble on forked streams, aggregates, and
//! optionally writes `config.ini`, per-run CSVs, and `aggregate.csv`
//! into an output directory.

pub mod config;
pub mod csv;
pub mod ensemble;
pub mod presets;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{EngineError, GDConfig};
use crate::problems::{
    ensure_synthetic_corpus, load_mnist, quadratic_setting, stratified_subset, DataPaths, Dataset,
    DatasetError, MlrProblem, NnProblem, Problem, Split,
};
use crate::rng::RandomStream;

pub use config::{parse_config, ExperimentConfig, ExperimentKind};
pub use csv::{read_aggregate_csv, strip_comments, write_aggregate_csv, write_run_csv};
pub use ensemble::{aggregate, run_ensemble, AggregateRow, EnsembleResult};
pub use presets::{preset, preset_names};

/// Seed for the generated image corpus; independent of experiment seeds
/// so every experiment sees the same data.
pub const SYNTHETIC_DATA_SEED: u64 = 271_828;

/// Seed for the dense quadratic benchmark matrix; independent of
/// experiment seeds so every ensemble optimizes the same instance.
pub const QUADRATIC_INSTANCE_SEED: u64 = 9;

/// Environment variable naming the dataset directory when the config
/// does not set one.
pub const DATA_DIR_ENV: &str = "SRGD_DATA_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error("run {run} failed at iteration {iter}: {source}")]
    Run {
        run: u32,
        iter: u64,
        source: EngineError,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("runs have different trace lengths ({0} vs {1}); cannot aggregate")]
    LengthMismatch(usize, usize),
}

fn scaled_dim(dim: usize, scale: f64) -> usize {
    ((dim as f64 * scale).round() as usize).max(2)
}

fn data_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.data_dir.clone().unwrap_or_else(|| {
        std::env::var_os(DATA_DIR_ENV)
            .map_or_else(|| PathBuf::from("data/mnist"), PathBuf::from)
    })
}

fn load_splits(
    cfg: &ExperimentConfig,
    classes: Option<(u8, u8)>,
) -> Result<(Dataset, Dataset), HarnessError> {
    let dir = data_dir(cfg);
    let paths = if cfg.synthetic {
        ensure_synthetic_corpus(&dir, SYNTHETIC_DATA_SEED)?
    } else {
        let paths = DataPaths::from_dir(&dir);
        if !paths.all_present() {
            return Err(HarnessError::Config(format!(
                "no dataset files under {}; set data-dir/{} or synthetic = true",
                dir.display(),
                DATA_DIR_ENV
            )));
        }
        paths
    };
    let train = load_mnist(&paths.train_images, &paths.train_labels, Split::Train, classes)?;
    let test = load_mnist(&paths.test_images, &paths.test_labels, Split::Test, classes)?;
    Ok((train, test))
}

fn subset_train(cfg: &ExperimentConfig, train: Dataset) -> Dataset {
    let target = cfg.subset_train.or_else(|| {
        (cfg.scale < 1.0).then(|| (train.len() as f64 * cfg.scale).round() as usize)
    });
    match target {
        Some(n) => stratified_subset(&train, n.max(1)),
        None => train,
    }
}

type Built = (Box<dyn Problem>, Vec<f64>, f64);

fn build_quadratic(cfg: &ExperimentConfig) -> Built {
    let n = scaled_dim(cfg.dim, cfg.scale);
    let mut stream = RandomStream::new(QUADRATIC_INSTANCE_SEED);
    let setting = quadratic_setting(cfg.setting, n, &mut stream);
    (Box::new(setting.problem), setting.x0, setting.t)
}

fn build_mlr(cfg: &ExperimentConfig) -> Result<Built, HarnessError> {
    let (train, test) = load_splits(cfg, None)?;
    let problem = MlrProblem::new(subset_train(cfg, train), test);
    let x0 = problem.initial_weights();
    Ok((Box::new(problem), x0, 0.5))
}

fn build_nn(cfg: &ExperimentConfig) -> Result<Built, HarnessError> {
    let (train, test) = load_splits(cfg, Some((3, 8)))?;
    let problem = NnProblem::new(subset_train(cfg, train), test);
    let x0 = problem.xavier_init(cfg.seed);
    Ok((Box::new(problem), x0, 0.09375))
}

/// Builds the configured problem and returns it with the initial iterate
/// and the default stepsize used when the config leaves `t` unset.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Built, HarnessError> {
    match cfg.kind {
        ExperimentKind::RoundDemo => Err(HarnessError::Config(
            "round-demo is a single-value demonstration, not an ensemble experiment".into(),
        )),
        ExperimentKind::Bounds => Err(HarnessError::Config(
            "bounds evaluates an existing aggregate CSV; there is nothing to run".into(),
        )),
        ExperimentKind::Quadratic => Ok(build_quadratic(cfg)),
        ExperimentKind::Mlr => build_mlr(cfg),
        ExperimentKind::Nn => build_nn(cfg),
    }
}

fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    runs: &[crate::engine::RunResult],
    agg: &EnsembleResult,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    // The recorded config omits `out` so the file describes the
    // experiment, not the directory it happened to land in.
    let mut record = cfg.clone();
    record.out = None;
    let ini = dir.join("config.ini");
    fs::write(&ini, record.to_ini()).map_err(|source| HarnessError::Io { path: ini, source })?;
    for (r, run) in runs.iter().enumerate() {
        write_run_csv(&dir.join(format!("run_{r:02}.csv")), run)?;
    }
    write_aggregate_csv(&dir.join("aggregate.csv"), agg, None)
}

/// Runs the configured ensemble and aggregates it; writes output files
/// when the config names an output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EnsembleResult, HarnessError> {
    cfg.validate()?;
    let (problem, x0, default_t) = build_problem(cfg)?;
    let gd = GDConfig {
        t: cfg.t.unwrap_or(default_t),
        k_max: cfg.iters,
        format: cfg.format,
        mode_grad: cfg.mode_grad,
        mode_mul: cfg.mode_mul,
        mode_sub: cfg.mode_sub,
        seed: cfg.seed,
        diag: cfg.diag,
    };
    let runs = run_ensemble(problem.as_ref(), &x0, &gd, cfg.reps)?;
    let agg = aggregate(&runs)?;
    if let Some(out) = &cfg.out {
        write_outputs(out, cfg, &runs, &agg)?;
    }
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::mnist::write_synthetic_corpus;

    fn quick_quadratic() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Quadratic);
        cfg.dim = 40;
        cfg.iters = 25;
        cfg.reps = 3;
        cfg.seed = 7;
        cfg
    }

    #[test]
    fn quadratic_experiment_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_quadratic();
        cfg.out = Some(dir.path().join("out"));
        let agg = run_experiment(&cfg).unwrap();
        assert_eq!(agg.rows.len(), 25);
        assert_eq!(agg.final_f.len(), 3);
        for name in ["config.ini", "run_00.csv", "run_02.csv", "aggregate.csv"] {
            assert!(dir.path().join("out").join(name).is_file(), "{name} missing");
        }
        let text = std::fs::read_to_string(dir.path().join("out/config.ini")).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg_no_out(&cfg));
    }

    fn cfg_no_out(cfg: &ExperimentConfig) -> ExperimentConfig {
        // config.ini does not record the output directory it was written to.
        let mut c = cfg.clone();
        c.out = None;
        c
    }

    #[test]
    fn rerun_is_byte_identical_modulo_comments() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_quadratic();
        cfg.out = Some(dir.path().join("a"));
        run_experiment(&cfg).unwrap();
        cfg.out = Some(dir.path().join("b"));
        run_experiment(&cfg).unwrap();
        for name in ["run_00.csv", "run_01.csv", "aggregate.csv"] {
            let a = std::fs::read_to_string(dir.path().join("a").join(name)).unwrap();
            let b = std::fs::read_to_string(dir.path().join("b").join(name)).unwrap();
            assert_eq!(strip_comments(&a), strip_comments(&b), "{name} differs");
        }
    }

    #[test]
    fn round_demo_has_no_ensemble() {
        let cfg = ExperimentConfig::new(ExperimentKind::RoundDemo);
        assert!(matches!(
            run_experiment(&cfg),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn mlr_experiment_on_tiny_corpus() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_corpus(dir.path(), 5, &[6; 10], &[3; 10]).unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::Mlr);
        cfg.data_dir = Some(dir.path().to_path_buf());
        cfg.iters = 3;
        cfg.reps = 2;
        let agg = run_experiment(&cfg).unwrap();
        assert_eq!(agg.rows.len(), 3);
        let last = agg.rows.last().unwrap();
        assert!(last.test_error_mean.is_some());
        assert!(last.f_mean.is_finite());
    }

    #[test]
    fn nn_experiment_filters_digit_pair() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_corpus(dir.path(), 5, &[4; 10], &[2; 10]).unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::Nn);
        cfg.data_dir = Some(dir.path().to_path_buf());
        cfg.iters = 2;
        cfg.reps = 1;
        cfg.format = crate::format::FloatFormat::binary32();
        let agg = run_experiment(&cfg).unwrap();
        assert_eq!(agg.rows.len(), 2);
        assert!(agg.rows[0].test_error_mean.unwrap() <= 1.0);
    }

    #[test]
    fn subset_train_prefers_explicit_count() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_synthetic_corpus(dir.path(), 5, &[10; 10], &[2; 10]).unwrap();
        let train =
            load_mnist(&paths.train_images, &paths.train_labels, Split::Train, None).unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::Mlr);
        cfg.subset_train = Some(30);
        cfg.scale = 0.1;
        assert_eq!(subset_train(&cfg, train.clone()).len(), 30);
        cfg.subset_train = None;
        assert_eq!(subset_train(&cfg, train).len(), 10);
    }

    #[test]
    fn missing_real_dataset_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::Mlr);
        cfg.data_dir = Some(dir.path().to_path_buf());
        cfg.synthetic = false;
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().contains("no dataset files"), "{err}");
    }
}
