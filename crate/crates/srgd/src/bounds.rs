//! Closed-form convergence bounds and validity thresholds for rounded
//! gradient descent on smooth convex objectives.
//!
//! Every evaluator takes plain numbers so it can be applied to measured
//! traces as well as planned configurations.  The distance parameter `chi`
//! (max iterate distance to the optimum) and the gradient floor `zeta` are
//! accepted as user estimates or post-hoc measurements; bounds built from
//! measured values are diagnostic, not predictive.
//!
//! Notation: `l` is the smoothness constant, `t` the stepsize, `u` the
//! unit roundoff, `n` the dimension, `c` the gradient-evaluation error
//! constant (absolute error per coordinate at most `c*u*(|grad_i| + 1)`),
//! `a` the error-fraction parameter in `(0, 1)`, and `eps` the bias
//! parameter of the eps-shifted stochastic rounding schemes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), BoundsError> {
    if cond {
        Ok(())
    } else {
        Err(BoundsError::ParameterOutOfRange(msg()))
    }
}

fn require_positive(value: f64, name: &str) -> Result<(), BoundsError> {
    require(value.is_finite() && value > 0.0, || {
        format!("{name} = {value} must be positive and finite")
    })
}

/// Exact-arithmetic rate bound `2 L dist0_sq / (4 + L t k)`.
///
/// The guarantee behind it needs `t <= 1/L`; a violation is reported in
/// `precondition_ok` but the formula value is still returned.
#[derive(Debug, Clone, Copy)]
pub struct RateBound {
    pub value: f64,
    pub precondition_ok: bool,
}

pub fn exact_rate_bound(l: f64, t: f64, k: u64, dist0_sq: f64) -> Result<RateBound, BoundsError> {
    require_positive(l, "l")?;
    require_positive(t, "t")?;
    require(dist0_sq.is_finite() && dist0_sq >= 0.0, || {
        format!("dist0_sq = {dist0_sq} must be nonnegative")
    })?;
    Ok(RateBound {
        value: 2.0 * l * dist0_sq / (4.0 + l * t * k as f64),
        precondition_ok: t <= 1.0 / l,
    })
}

/// Largest unit roundoff `a / (c + 4a + 4)` for which a fraction `a` of
/// the gradient signal survives the three rounded steps.
pub fn u_budget(a: f64, c: f64) -> Result<f64, BoundsError> {
    require(a > 0.0 && a < 1.0, || format!("a = {a} outside (0, 1)"))?;
    require_positive(c, "c")?;
    Ok(a / (c + 4.0 * a + 4.0))
}

/// Gradient norm below which the rounded update may stop making progress
/// under nearest rounding: `(1-a)^-1 (2 + 4u + sqrt(1-a)) sqrt(n) c u`.
pub fn grad_threshold_prop(a: f64, u: f64, n: usize, c: f64) -> Result<f64, BoundsError> {
    require(a > 0.0 && a < 1.0, || format!("a = {a} outside (0, 1)"))?;
    require_positive(u, "u")?;
    require_positive(c, "c")?;
    Ok((2.0 + 4.0 * u + (1.0 - a).sqrt()) / (1.0 - a) * (n as f64).sqrt() * c * u)
}

/// Gradient norm above which the objective decreases monotonically under
/// nearest rounding: `a^-1 (2 + 4u + sqrt(a)) sqrt(n) c u`, `a` in (0, 1/2).
pub fn grad_threshold_monotone(a: f64, u: f64, n: usize, c: f64) -> Result<f64, BoundsError> {
    require(a > 0.0 && a < 0.5, || format!("a = {a} outside (0, 1/2)"))?;
    require_positive(u, "u")?;
    require_positive(c, "c")?;
    Ok((2.0 + 4.0 * u + a.sqrt()) / a * (n as f64).sqrt() * c * u)
}

/// Companion stepsize condition of the monotone-descent guarantee: the
/// unit roundoff must not exceed
/// `(1 - 2a) t ||grad_prev||^2 / (4 ||grad|| ||z||)`.
pub fn monotone_u_ceiling(
    a: f64,
    t: f64,
    grad_prev_norm: f64,
    grad_norm: f64,
    z_norm: f64,
) -> Result<f64, BoundsError> {
    require(a > 0.0 && a < 0.5, || format!("a = {a} outside (0, 1/2)"))?;
    require_positive(t, "t")?;
    require_positive(grad_norm, "grad_norm")?;
    require_positive(z_norm, "z_norm")?;
    Ok(0.25 * (1.0 - 2.0 * a) * t * grad_prev_norm * grad_prev_norm / (grad_norm * z_norm))
}

/// Variant selector for the stochastic-rounding rate bounds and their
/// gradient thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrBoundVariant {
    /// First threshold family, `a` in (0, 1/2).
    I,
    /// Second threshold family, `a` in (0, sqrt(2)/2).
    II,
}

/// Gradient threshold under unbiased stochastic rounding.
/// Variant I: `a^-1 (2 + sqrt(a)) sqrt(n) c u`; variant II: `3 a^-1 sqrt(n) c u`.
pub fn grad_threshold_sr(
    variant: SrBoundVariant,
    a: f64,
    u: f64,
    n: usize,
    c: f64,
) -> Result<f64, BoundsError> {
    require_positive(u, "u")?;
    require_positive(c, "c")?;
    let root_n = (n as f64).sqrt();
    match variant {
        SrBoundVariant::I => {
            require(a > 0.0 && a < 0.5, || format!("a = {a} outside (0, 1/2)"))?;
            Ok((2.0 + a.sqrt()) / a * root_n * c * u)
        }
        SrBoundVariant::II => {
            require(a > 0.0 && a < std::f64::consts::FRAC_1_SQRT_2, || {
                format!("a = {a} outside (0, sqrt(2)/2)")
            })?;
            Ok(3.0 / a * root_n * c * u)
        }
    }
}

/// Gradient threshold under eps-shifted stochastic rounding.
/// Variant I gains the bias term: `a^-1 (2 + sqrt(a) + 4 eps u) sqrt(n) c u`.
pub fn grad_threshold_sr_eps(
    variant: SrBoundVariant,
    a: f64,
    u: f64,
    n: usize,
    c: f64,
    eps: f64,
) -> Result<f64, BoundsError> {
    require(eps > 0.0 && eps < 1.0, || format!("eps = {eps} outside (0, 1)"))?;
    match variant {
        SrBoundVariant::I => {
            require(a > 0.0 && a < 0.5, || format!("a = {a} outside (0, 1/2)"))?;
            require_positive(u, "u")?;
            require_positive(c, "c")?;
            Ok((2.0 + a.sqrt() + 4.0 * eps * u) / a * (n as f64).sqrt() * c * u)
        }
        SrBoundVariant::II => grad_threshold_sr(SrBoundVariant::II, a, u, n, c),
    }
}

/// Gradient threshold in the small-update regime (updates below half the
/// gap to both grid neighbours) under unbiased stochastic rounding.
/// Variant I: `c u sqrt(n)/(1 - c u) + (u/t) sqrt(1/(1 - c u)) sqrt(E||x||^2)`;
/// variant II drops the evaluation-error term: `(u/t) sqrt(E||x||^2)`.
pub fn scenario2_threshold_sr(
    variant: SrBoundVariant,
    c: f64,
    u: f64,
    n: usize,
    t: f64,
    iterate_sq_mean: f64,
) -> Result<f64, BoundsError> {
    require_positive(u, "u")?;
    require_positive(t, "t")?;
    require(iterate_sq_mean >= 0.0, || {
        format!("iterate_sq_mean = {iterate_sq_mean} must be nonnegative")
    })?;
    match variant {
        SrBoundVariant::I => {
            require_positive(c, "c")?;
            require(c * u < 1.0, || format!("need c*u < 1, got {}", c * u))?;
            Ok(c * u * (n as f64).sqrt() / (1.0 - c * u)
                + u / t * (1.0 / (1.0 - c * u)).sqrt() * iterate_sq_mean.sqrt())
        }
        SrBoundVariant::II => Ok(u / t * iterate_sq_mean.sqrt()),
    }
}

/// Small-update-regime thresholds under signed eps-shifted rounding: the
/// iterate term grows by `sqrt(1 + 2 eps)`.
pub fn scenario2_threshold_signed(
    variant: SrBoundVariant,
    c: f64,
    u: f64,
    n: usize,
    t: f64,
    eps: f64,
    iterate_sq_mean: f64,
) -> Result<f64, BoundsError> {
    require(eps > 0.0 && eps < 1.0, || format!("eps = {eps} outside (0, 1)"))?;
    require_positive(u, "u")?;
    require_positive(t, "t")?;
    require(iterate_sq_mean >= 0.0, || {
        format!("iterate_sq_mean = {iterate_sq_mean} must be nonnegative")
    })?;
    let amp = (1.0 + 2.0 * eps).sqrt();
    match variant {
        SrBoundVariant::I => {
            require_positive(c, "c")?;
            require(c * u < 1.0, || format!("need c*u < 1, got {}", c * u))?;
            Ok(c * u * (n as f64).sqrt() / (1.0 - c * u)
                + u / t * (1.0 / (1.0 - c * u)).sqrt() * amp * iterate_sq_mean.sqrt())
        }
        SrBoundVariant::II => Ok(u / t * amp * iterate_sq_mean.sqrt()),
    }
}

/// Rate bound under nearest rounding with per-iteration progress factors:
/// `2 L chi^2 / (4 + L t (1-2a) sum_j (1 - alpha_j))` with
/// `alpha_j = 2 chi^2 theta_j / (t (1-2a) zeta^2)`.
///
/// `thetas[j]` is the measured objective drop lost to the final rounded
/// subtraction at iteration `j`; `zeta` a lower bound on gradient norms
/// over the window.
pub fn rounded_rate_bound(
    l: f64,
    t: f64,
    a: f64,
    chi: f64,
    zeta: f64,
    thetas: &[f64],
) -> Result<f64, BoundsError> {
    require_positive(l, "l")?;
    require_positive(t, "t")?;
    require(a > 0.0 && a < 0.5, || format!("a = {a} outside (0, 1/2)"))?;
    require_positive(chi, "chi")?;
    require_positive(zeta, "zeta")?;
    let s = 1.0 - 2.0 * a;
    let denom_sum: f64 = thetas
        .iter()
        .map(|&theta| 1.0 - 2.0 * chi * chi * theta / (t * s * zeta * zeta))
        .sum();
    Ok(2.0 * l * chi * chi / (4.0 + l * t * s * denom_sum))
}

/// Rate bounds under the stochastic schemes after `k` iterations.
///
/// Unbiased: denominators `4 + L t k (1-2a)` (variant I) and
/// `4 + L t k (1-2a^2)` (variant II).  With an eps-shift, a bias floor
/// `b in (0, 2 eps u]` strengthens them to `4 + L t k (1+2b-2a)` and
/// `4 + L t k (1+2b-2a^2)`; pass `b = None` for the unbiased forms.
pub fn sr_rate_bound(
    variant: SrBoundVariant,
    l: f64,
    t: f64,
    k: u64,
    a: f64,
    chi: f64,
    b: Option<f64>,
) -> Result<f64, BoundsError> {
    require_positive(l, "l")?;
    require_positive(t, "t")?;
    require_positive(chi, "chi")?;
    match variant {
        SrBoundVariant::I => require(a > 0.0 && a < 0.5, || format!("a = {a} outside (0, 1/2)"))?,
        SrBoundVariant::II => require(a > 0.0 && a < std::f64::consts::FRAC_1_SQRT_2, || {
            format!("a = {a} outside (0, sqrt(2)/2)")
        })?,
    }
    if let Some(b) = b {
        require(b > 0.0, || format!("b = {b} must be positive"))?;
    }
    let shift = match (variant, b) {
        (SrBoundVariant::I, None) => 1.0 - 2.0 * a,
        (SrBoundVariant::II, None) => 1.0 - 2.0 * a * a,
        (SrBoundVariant::I, Some(b)) => 1.0 + 2.0 * b - 2.0 * a,
        (SrBoundVariant::II, Some(b)) => 1.0 + 2.0 * b - 2.0 * a * a,
    };
    Ok(2.0 * l * chi * chi / (4.0 + l * t * k as f64 * shift))
}
