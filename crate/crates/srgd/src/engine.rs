//! Gradient descent under the three-step rounded update.
//!
//! One iteration splits into a rounded gradient evaluation, a rounded
//! stepsize multiply, and a rounded subtraction:
//!
//! ```text
//! ĝ = fl(∇f(x̂))          mode_grad   (error σ₁)
//! w = fl(t̂ · ĝ)          mode_mul    (error δ₂)
//! x̂⁺ = fl(x̂ − w)         mode_sub    (error δ₃)
//! ```
//!
//! with an independently configured rounding mode per step.  When the
//! subtract step runs signed stochastic rounding, the companion value for
//! coordinate `i` is the computed gradient component `ĝᵢ`, which biases
//! the rounding toward the descent direction.  `t̂` is `t` rounded once
//! into the format (round-to-nearest).
//!
//! Per-iteration diagnostics detect stagnation: `τ = max_i 2^(−eᵢ)
//! |RN(t·RN(∇fᵢ))|` measures the update against the gap scale at the
//! pre-rounding value `z`, and each coordinate is classified by whether
//! its update clears half the neighbouring gaps.

use crate::format::{binade, FloatFormat};
use crate::kernels::LPVector;
use crate::problems::Problem;
use crate::rng::RandomStream;
use crate::rounding::{round_f64, RoundingError, RoundingMode};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Rounding(#[from] RoundingError),
    #[error("gradient component {index} is not finite ({value})")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl From<crate::format::FormatError> for EngineError {
    fn from(e: crate::format::FormatError) -> Self {
        EngineError::Rounding(e.into())
    }
}

/// How much per-iteration diagnostics to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DiagLevel {
    /// Objective and problem metrics only.
    Minimal,
    /// Adds gradient norm, stagnation diagnostic, scenario flags.
    Standard,
    /// Adds realized per-coordinate error shadows (doubles gradient cost).
    Debug,
}

#[derive(Clone, Debug)]
pub struct GDConfig {
    pub t: f64,
    pub k_max: u64,
    pub format: FloatFormat,
    pub mode_grad: RoundingMode,
    pub mode_mul: RoundingMode,
    pub mode_sub: RoundingMode,
    pub seed: u64,
    pub diag: DiagLevel,
}

impl GDConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !self.t.is_finite() || self.t <= 0.0 {
            return Err(EngineError::InvalidConfig(format!(
                "stepsize {} must be positive",
                self.t
            )));
        }
        for mode in [self.mode_grad, self.mode_mul, self.mode_sub] {
            mode.validate()?;
        }
        Ok(())
    }

    /// Whether `t` exceeds the theory's safe stepsize `1/(L(1+2u)²)`.
    pub fn stepsize_exceeds_safe(&self, l: f64) -> bool {
        let u = self.format.unit_roundoff();
        self.t > 1.0 / (l * (1.0 + 2.0 * u).powi(2))
    }
}

#[derive(Clone, Debug)]
pub struct GDState {
    pub x: LPVector,
    pub k: u64,
}

/// Per-coordinate step classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioFlag {
    /// Update exceeds half a gap on some side; rounding cannot pin it.
    Scenario1,
    /// Update within half a gap on both sides; stagnation territory.
    Scenario2,
    /// Computed gradient component is exactly zero.
    Converged,
}

/// Stagnation diagnostic for one iterate.
#[derive(Clone, Copy, Debug)]
pub struct TauDiagnostic {
    pub tau: f64,
    /// Coordinate attaining the maximum.
    pub index: usize,
    /// `tau ≤ u/2` and the least-significant significand bit of the
    /// argmax coordinate is 0 (a sufficient condition: updates strictly
    /// below the half-gap also pin the iterate regardless of parity).
    pub stagnation: bool,
}

/// Realized per-coordinate error decomposition of one step, recorded at
/// [`DiagLevel::Debug`].  `w`, `z`, and `d` carry the reconstruction:
/// `x̂⁺ᵢ = (x̂ᵢ − wᵢ) + dᵢ` holds bit-exactly; `sigma1`, `delta2`, and
/// `delta3` are the same errors in the additive/relative model form.
#[derive(Clone, Debug)]
pub struct DebugShadows {
    pub g_hat: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub w: Vec<f64>,
    pub delta2: Vec<f64>,
    pub z: Vec<f64>,
    pub d: Vec<f64>,
    pub delta3: Vec<f64>,
}

/// Diagnostics of one executed step, taken at the pre-step iterate.
#[derive(Clone, Debug)]
pub struct IterationTrace {
    pub k: u64,
    /// Objective in working precision at the pre-step iterate.
    pub f_value: f64,
    pub grad_norm: Option<f64>,
    pub tau: Option<f64>,
    pub tau_index: Option<usize>,
    pub stagnation: Option<bool>,
    pub scenario: Option<Vec<ScenarioFlag>>,
    pub metrics: Vec<(String, f64)>,
    pub debug: Option<DebugShadows>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub traces: Vec<IterationTrace>,
    pub final_x: LPVector,
    pub final_f: f64,
    pub final_metrics: Vec<(String, f64)>,
    /// True when `t` exceeded the safe stepsize for the problem's
    /// smoothness constant.
    pub stepsize_warning: bool,
}

/// One three-step rounded update.  Returns the advanced state and the
/// trace of the executed step.
pub fn step(
    problem: &dyn Problem,
    state: &GDState,
    cfg: &GDConfig,
    stream: &mut RandomStream,
) -> Result<(GDState, IterationTrace), EngineError> {
    let fmt = cfg.format;
    let xs = state.x.as_slice();
    let n = xs.len();

    let f_value = problem.objective(xs);
    let metrics = problem.metrics(xs);

    let ghat = problem.gradient_lp(&state.x, cfg.mode_grad, stream)?;
    let gh = ghat.as_slice();
    for (i, &v) in gh.iter().enumerate() {
        if !v.is_finite() {
            return Err(EngineError::NonFiniteGradient { index: i, value: v });
        }
    }

    let standard = cfg.diag >= DiagLevel::Standard;
    let debug = cfg.diag >= DiagLevel::Debug;

    let (grad_norm, tau) = if standard {
        let mut g_exact = vec![0.0; n];
        problem.gradient_exact(xs, &mut g_exact);
        for (i, &v) in g_exact.iter().enumerate() {
            if !v.is_finite() {
                return Err(EngineError::NonFiniteGradient { index: i, value: v });
            }
        }
        let norm = g_exact.iter().map(|g| g * g).sum::<f64>().sqrt();
        let tau = tau_from_gradient(&state.x, &g_exact, cfg.t, &fmt)?;
        (Some((norm, g_exact)), Some(tau))
    } else {
        (None, None)
    };

    let t_hat = fmt.round_nearest_even(cfg.t)?;
    let mut w = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    for i in 0..n {
        w[i] = round_f64(t_hat * gh[i], cfg.mode_mul, &fmt, stream, gh[i])?;
        x_new[i] = round_f64(xs[i] - w[i], cfg.mode_sub, &fmt, stream, gh[i])?;
    }

    let scenario = if standard {
        Some(classify_scenario(&state.x, gh, &w)?)
    } else {
        None
    };

    let shadows = if debug {
        let g_exact = &grad_norm.as_ref().unwrap().1;
        let mut sigma1 = vec![0.0; n];
        let mut delta2 = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut delta3 = vec![0.0; n];
        for i in 0..n {
            sigma1[i] = gh[i] - g_exact[i];
            let tg = cfg.t * gh[i];
            delta2[i] = if tg == 0.0 { 0.0 } else { w[i] / tg - 1.0 };
            z[i] = xs[i] - w[i];
            d[i] = x_new[i] - z[i];
            delta3[i] = if z[i] == 0.0 {
                0.0
            } else {
                x_new[i] / z[i] - 1.0
            };
        }
        Some(DebugShadows {
            g_hat: gh.to_vec(),
            sigma1,
            w,
            delta2,
            z,
            d,
            delta3,
        })
    } else {
        None
    };

    let trace = IterationTrace {
        k: state.k,
        f_value,
        grad_norm: grad_norm.as_ref().map(|(n, _)| *n),
        tau: tau.map(|t| t.tau),
        tau_index: tau.map(|t| t.index),
        stagnation: tau.map(|t| t.stagnation),
        scenario,
        metrics,
        debug: shadows,
    };
    let next = GDState {
        x: LPVector::trusted(x_new, fmt),
        k: state.k + 1,
    };
    Ok((next, trace))
}

/// Stagnation diagnostic `τ = max_i 2^(−eᵢ) |RN(t·RN(∇f(x̂)ᵢ))|`, where
/// `eᵢ` is the exponent of `zᵢ = x̂ᵢ − RN(t·RN(∇f(x̂)ᵢ))` written as
/// `|zᵢ| ∈ [2^(eᵢ−1), 2^eᵢ)`.
pub fn compute_tau(
    problem: &dyn Problem,
    x: &LPVector,
    t: f64,
) -> Result<TauDiagnostic, EngineError> {
    let mut g = vec![0.0; x.len()];
    problem.gradient_exact(x.as_slice(), &mut g);
    for (i, &v) in g.iter().enumerate() {
        if !v.is_finite() {
            return Err(EngineError::NonFiniteGradient { index: i, value: v });
        }
    }
    let fmt = x.format();
    tau_from_gradient(x, &g, t, &fmt)
}

fn tau_from_gradient(
    x: &LPVector,
    g_exact: &[f64],
    t: f64,
    fmt: &FloatFormat,
) -> Result<TauDiagnostic, EngineError> {
    let mut tau = 0.0;
    let mut index = 0;
    for (i, (&xi, &gi)) in x.as_slice().iter().zip(g_exact).enumerate() {
        let c = tau_contribution(xi, gi, t, fmt);
        if c > tau {
            tau = c;
            index = i;
        }
    }
    let stagnation = if tau == 0.0 {
        true
    } else {
        tau <= 0.5 * fmt.unit_roundoff() && fmt.lsb_is_zero(x.as_slice()[index])?
    };
    Ok(TauDiagnostic {
        tau,
        index,
        stagnation,
    })
}

fn tau_contribution(xi: f64, gi: f64, t: f64, fmt: &FloatFormat) -> f64 {
    // An update too large to quantize certainly does not stagnate.
    let gq = match fmt.round_nearest_even(gi) {
        Ok(v) => v,
        Err(_) => return f64::INFINITY,
    };
    let p = match fmt.round_nearest_even(t * gq) {
        Ok(v) => v,
        Err(_) => return f64::INFINITY,
    };
    if p == 0.0 {
        return 0.0;
    }
    let z = xi - p;
    if z.abs() < f64::MIN_POSITIVE {
        return f64::INFINITY;
    }
    let e = binade(z.abs()) + 1;
    p.abs() * 2f64.powi(-e)
}

/// Classifies each coordinate of a step by comparing the realized update
/// magnitude `|wᵢ|` against half the gap to the successor and the
/// predecessor of `x̂ᵢ`.
pub fn classify_scenario(
    x: &LPVector,
    ghat: &[f64],
    w: &[f64],
) -> Result<Vec<ScenarioFlag>, EngineError> {
    let fmt = x.format();
    let mut flags = Vec::with_capacity(x.len());
    for (i, &xi) in x.as_slice().iter().enumerate() {
        if ghat[i] == 0.0 {
            flags.push(ScenarioFlag::Converged);
            continue;
        }
        // A missing neighbour (format edge) is an unbounded gap.
        let up_gap = fmt.successor(xi).map_or(f64::INFINITY, |s| s - xi);
        let down_gap = fmt.predecessor(xi).map_or(f64::INFINITY, |p| xi - p);
        let wa = w[i].abs();
        if wa <= 0.5 * up_gap && wa <= 0.5 * down_gap {
            flags.push(ScenarioFlag::Scenario2);
        } else {
            flags.push(ScenarioFlag::Scenario1);
        }
    }
    Ok(flags)
}

/// Runs `k_max` steps from `x0` (quantized round-to-nearest into the
/// format), seeding a fresh stream from `cfg.seed`.
pub fn run(problem: &dyn Problem, x0: &[f64], cfg: &GDConfig) -> Result<RunResult, EngineError> {
    let mut stream = RandomStream::new(cfg.seed);
    run_with_stream(problem, x0, cfg, &mut stream)
}

/// Like [`run`] but drawing from a caller-provided stream, which is how
/// ensembles give each run an independent forked stream.
pub fn run_with_stream(
    problem: &dyn Problem,
    x0: &[f64],
    cfg: &GDConfig,
    stream: &mut RandomStream,
) -> Result<RunResult, EngineError> {
    run_with_callback(problem, x0, cfg, stream, |_| true)
}

/// Full-control variant: `keep_going` sees each trace and may stop the
/// run early by returning false.
pub fn run_with_callback(
    problem: &dyn Problem,
    x0: &[f64],
    cfg: &GDConfig,
    stream: &mut RandomStream,
    mut keep_going: impl FnMut(&IterationTrace) -> bool,
) -> Result<RunResult, EngineError> {
    cfg.validate()?;
    let stepsize_warning = match problem.smoothness() {
        Some(l) => cfg.stepsize_exceeds_safe(l),
        None => false,
    };
    if stepsize_warning {
        log::warn!(
            "stepsize {} exceeds the safe bound 1/(L(1+2u)^2) for L = {}",
            cfg.t,
            problem.smoothness().unwrap()
        );
    }
    let x = LPVector::quantize(x0, cfg.format, RoundingMode::NearestEven, stream)?;
    let mut state = GDState { x, k: 0 };
    let mut traces = Vec::with_capacity(cfg.k_max as usize);
    for _ in 0..cfg.k_max {
        let (next, trace) = step(problem, &state, cfg, stream)?;
        let go = keep_going(&trace);
        traces.push(trace);
        state = next;
        if !go {
            break;
        }
    }
    let final_f = problem.objective(state.x.as_slice());
    let final_metrics = problem.metrics(state.x.as_slice());
    Ok(RunResult {
        traces,
        final_x: state.x,
        final_f,
        final_metrics,
        stepsize_warning,
    })
}
