//! Seeded multi-run ensembles and their aggregation.
//!
//! Run `r` of an ensemble draws from `RandomStream::new(seed).fork(r)`,
//! so results are independent of execution order; with the `parallel`
//! feature runs execute concurrently and merge by index.  Aggregation
//! reports per-iteration means and population variances (divide by N,
//! matching how the reference spreads were computed).

use crate::engine::{run_with_callback, GDConfig, IterationTrace, RunResult};
use crate::harness::HarnessError;
use crate::problems::Problem;
use crate::rng::RandomStream;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One aggregate trace row; fields are `None` when the underlying
/// diagnostic was not recorded at the run's diagnostic level.
#[derive(Clone, Debug)]
pub struct AggregateRow {
    pub k: u64,
    pub f_mean: f64,
    pub f_var: f64,
    pub test_error_mean: Option<f64>,
    pub test_error_var: Option<f64>,
    pub grad_norm_mean: Option<f64>,
    pub tau_mean: Option<f64>,
    pub stagnation_fraction: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub rows: Vec<AggregateRow>,
    /// Final objective value of each run, in run order.
    pub final_f: Vec<f64>,
    /// Final problem metrics of each run, in run order.
    pub per_run_final: Vec<Vec<(String, f64)>>,
    pub stepsize_warning: bool,
}

fn run_one(
    problem: &dyn Problem,
    x0: &[f64],
    gd: &GDConfig,
    run: u32,
) -> Result<RunResult, HarnessError> {
    let mut stream = RandomStream::new(gd.seed).fork(run as u64);
    let mut last_k: Option<u64> = None;
    run_with_callback(problem, x0, gd, &mut stream, |tr| {
        last_k = Some(tr.k);
        true
    })
    .map_err(|source| HarnessError::Run {
        run,
        iter: last_k.map_or(0, |k| k + 1),
        source,
    })
}

/// Executes `reps` runs of the configured descent, each on its own forked
/// stream.  Results come back in run order regardless of scheduling.
pub fn run_ensemble(
    problem: &dyn Problem,
    x0: &[f64],
    gd: &GDConfig,
    reps: u32,
) -> Result<Vec<RunResult>, HarnessError> {
    #[cfg(feature = "parallel")]
    {
        (0..reps)
            .into_par_iter()
            .map(|r| run_one(problem, x0, gd, r))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..reps).map(|r| run_one(problem, x0, gd, r)).collect()
    }
}

fn mean_and_population_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn metric(tr: &IterationTrace, name: &str) -> Option<f64> {
    tr.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
}

/// Pointwise aggregation of equal-length run traces.
pub fn aggregate(runs: &[RunResult]) -> Result<EnsembleResult, HarnessError> {
    assert!(!runs.is_empty(), "nothing to aggregate");
    let len = runs[0].traces.len();
    for r in runs {
        if r.traces.len() != len {
            return Err(HarnessError::LengthMismatch(len, r.traces.len()));
        }
    }

    let mut rows = Vec::with_capacity(len);
    for i in 0..len {
        let at: Vec<&IterationTrace> = runs.iter().map(|r| &r.traces[i]).collect();
        let fs: Vec<f64> = at.iter().map(|t| t.f_value).collect();
        let (f_mean, f_var) = mean_and_population_variance(&fs);

        let tes: Option<Vec<f64>> = at.iter().map(|t| metric(t, "test_error")).collect();
        let (test_error_mean, test_error_var) = match tes {
            Some(v) => {
                let (m, var) = mean_and_population_variance(&v);
                (Some(m), Some(var))
            }
            None => (None, None),
        };

        let grads: Option<Vec<f64>> = at.iter().map(|t| t.grad_norm).collect();
        let taus: Option<Vec<f64>> = at.iter().map(|t| t.tau).collect();
        let stags: Option<Vec<bool>> = at.iter().map(|t| t.stagnation).collect();

        rows.push(AggregateRow {
            k: at[0].k,
            f_mean,
            f_var,
            test_error_mean,
            test_error_var,
            grad_norm_mean: grads.map(|v| mean_and_population_variance(&v).0),
            tau_mean: taus.map(|v| mean_and_population_variance(&v).0),
            stagnation_fraction: stags
                .map(|v| v.iter().filter(|&&s| s).count() as f64 / v.len() as f64),
        });
    }

    Ok(EnsembleResult {
        rows,
        final_f: runs.iter().map(|r| r.final_f).collect(),
        per_run_final: runs.iter().map(|r| r.final_metrics.clone()).collect(),
        stepsize_warning: runs.iter().any(|r| r.stepsize_warning),
    })
}
