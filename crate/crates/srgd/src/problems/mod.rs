//! Optimization problems with paired full- and low-precision gradient paths.

pub mod mlr;
pub mod mnist;
pub mod nn;
pub mod quadratic;

pub use mlr::MlrProblem;
pub use nn::NnProblem;
pub use mnist::{
    ensure_synthetic_corpus, load_mnist, stratified_subset, DataPaths, Dataset, DatasetError,
    Split,
};
pub use quadratic::{quadratic_setting, QuadraticProblem, QuadraticSetting, SettingId};

use crate::format::FloatFormat;
use crate::kernels::LPVector;
use crate::rng::RandomStream;
use crate::rounding::{RoundingError, RoundingMode};

/// An objective with an exact (f64) gradient path and a low-precision path
/// where every intermediate operation is rounded into the target format.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;

    /// Objective value in working precision at a representable iterate.
    fn objective(&self, x: &[f64]) -> f64;

    /// Gradient in working precision, written into `out`.
    fn gradient_exact(&self, x: &[f64], out: &mut [f64]);

    /// Gradient with every operation rounded under `mode`. The result is the
    /// computed gradient, i.e. the exact gradient plus the evaluation error.
    fn gradient_lp(
        &self,
        x: &LPVector,
        mode: RoundingMode,
        stream: &mut RandomStream,
    ) -> Result<LPVector, RoundingError>;

    /// Smoothness constant of the objective, when known.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// Constant c in the gradient-error model |sigma_i| <= c u (|grad_i| + 1),
    /// when known for this problem class.
    fn error_constant(&self, fmt: &FloatFormat) -> Option<f64> {
        let _ = fmt;
        None
    }

    /// Minimizer, when known in closed form.
    fn optimum(&self) -> Option<&[f64]> {
        None
    }

    /// Optimal objective value, when known.
    fn f_star(&self) -> Option<f64> {
        None
    }

    /// Additional evaluation metrics at an iterate (e.g. held-out error).
    fn metrics(&self, x: &[f64]) -> Vec<(String, f64)> {
        let _ = x;
        Vec::new()
    }
}
