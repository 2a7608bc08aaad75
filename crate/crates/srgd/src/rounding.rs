//! Rounding schemes on emulated formats.
//!
//! Deterministic modes: round to nearest (ties to even), directed rounding
//! toward -inf and +inf.  Stochastic modes round `x` to one of its grid
//! neighbours `⌊x⌋, ⌈x⌉` at random:
//!
//! * `sr` rounds down with probability `p0(x) = 1 - (x-⌊x⌋)/(⌈x⌉-⌊x⌋)`,
//!   which makes the rounded value unbiased: `E[fl(x)] = x`.
//! * `sr_eps:ε` shifts that probability by `ε` away from zero:
//!   `p_ε(x) = φ(p0(x) - sign(x)·ε)` with `φ` clamping to `[0,1]`.  The
//!   rounded value gains a bias `sign(x)·ε·(⌈x⌉-⌊x⌋)` (away from zero)
//!   whenever no clamping occurs.
//! * `ssr_eps:ε` takes the shift direction from an external value `v`
//!   instead of from `x`: `p̂_ε(x,v) = φ(p0(x) + sign(v)·ε)`, giving bias
//!   `-sign(v)·ε·(⌈x⌉-⌊x⌋)`.  With `v = 0` it degrades to plain `sr`.
//!
//! Internally all stochastic modes round the magnitude `|x|` and reapply
//! the sign, with the probability shift mapped through `sign(v)·sign(x)`
//! so the result is identical to the signed definitions above for either
//! sign of `x`.  One uniform draw decides each inexact rounding event,
//! compared as `ξ ≤ p(down)`; exact inputs are returned unchanged without
//! consuming a draw.

use crate::format::{FloatFormat, FormatError, RepValue};
use crate::rng::RandomStream;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RoundingError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("epsilon {0} outside (0, 1)")]
    InvalidEpsilon(f64),
    #[error("mode {0} has no closed-form expected error")]
    UnsupportedMode(RoundingMode),
    #[error("operand formats differ: {0} vs {1}")]
    FormatMismatch(FloatFormat, FloatFormat),
    #[error("division by zero")]
    DivisionByZero,
    #[error("cannot parse rounding mode {0:?}")]
    ParseMode(String),
}

/// Rounding mode; stochastic variants carry their bias parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RoundingMode {
    /// Round to nearest, ties to even (`rn`).
    NearestEven,
    /// Round toward negative infinity (`rd`).
    Down,
    /// Round toward positive infinity (`ru`).
    Up,
    /// Unbiased stochastic rounding (`sr`).
    Sr,
    /// Stochastic rounding biased away from zero (`sr_eps:ε`).
    SrEps(f64),
    /// Stochastic rounding biased against the sign of a companion value
    /// (`ssr_eps:ε`).
    SignedSrEps(f64),
}

impl RoundingMode {
    pub fn sr_eps(eps: f64) -> Result<Self, RoundingError> {
        check_eps(eps)?;
        Ok(RoundingMode::SrEps(eps))
    }

    pub fn signed_sr_eps(eps: f64) -> Result<Self, RoundingError> {
        check_eps(eps)?;
        Ok(RoundingMode::SignedSrEps(eps))
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            RoundingMode::Sr | RoundingMode::SrEps(_) | RoundingMode::SignedSrEps(_)
        )
    }

    /// Validates any carried parameter.
    pub fn validate(&self) -> Result<(), RoundingError> {
        match self {
            RoundingMode::SrEps(e) | RoundingMode::SignedSrEps(e) => check_eps(*e),
            _ => Ok(()),
        }
    }
}

fn check_eps(eps: f64) -> Result<(), RoundingError> {
    if eps.is_finite() && eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(RoundingError::InvalidEpsilon(eps))
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundingMode::NearestEven => write!(f, "rn"),
            RoundingMode::Down => write!(f, "rd"),
            RoundingMode::Up => write!(f, "ru"),
            RoundingMode::Sr => write!(f, "sr"),
            RoundingMode::SrEps(e) => write!(f, "sr_eps:{e}"),
            RoundingMode::SignedSrEps(e) => write!(f, "ssr_eps:{e}"),
        }
    }
}

impl FromStr for RoundingMode {
    type Err = RoundingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rn" => return Ok(RoundingMode::NearestEven),
            "rd" => return Ok(RoundingMode::Down),
            "ru" => return Ok(RoundingMode::Up),
            "sr" => return Ok(RoundingMode::Sr),
            _ => {}
        }
        let parse_eps = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| RoundingError::ParseMode(s.to_string()))
        };
        if let Some(t) = s.strip_prefix("sr_eps:") {
            return RoundingMode::sr_eps(parse_eps(t)?);
        }
        if let Some(t) = s.strip_prefix("ssr_eps:") {
            return RoundingMode::signed_sr_eps(parse_eps(t)?);
        }
        Err(RoundingError::ParseMode(s.to_string()))
    }
}

/// Sign with `sign(±0) = 0`.
#[inline(always)]
fn sgn(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else if v > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Clamp to `[0, 1]`.
#[inline(always)]
fn phi(t: f64) -> f64 {
    t.clamp(0.0, 1.0)
}

/// Probability that plain stochastic rounding rounds `x` down to `⌊x⌋`.
/// Returns 1 for representable `x`.
pub fn p0(x: f64, fmt: &FloatFormat) -> Result<f64, RoundingError> {
    let floor = fmt.floor_fl(x)?;
    let ceil = fmt.ceil_fl(x)?;
    if floor == ceil {
        return Ok(1.0);
    }
    Ok(1.0 - (x - floor) / (ceil - floor))
}

/// Probability that `sr_eps:eps` rounds `x` down: `φ(p0(x) - sign(x)·eps)`.
pub fn p_eps(x: f64, eps: f64, fmt: &FloatFormat) -> Result<f64, RoundingError> {
    check_eps(eps)?;
    Ok(phi(p0(x, fmt)? - sgn(x) * eps))
}

/// Probability that `ssr_eps:eps` with companion `v` rounds `x` down:
/// `φ(p0(x) + sign(v)·eps)`.
pub fn p_hat_eps(x: f64, eps: f64, v: f64, fmt: &FloatFormat) -> Result<f64, RoundingError> {
    check_eps(eps)?;
    Ok(phi(p0(x, fmt)? + sgn(v) * eps))
}

/// Rounds `x` into the format.  `SignedSrEps` degrades to `Sr` here (its
/// companion value defaults to 0); use [`round_directed`] to supply one.
pub fn round(
    x: f64,
    mode: RoundingMode,
    fmt: &FloatFormat,
    stream: &mut RandomStream,
) -> Result<RepValue, RoundingError> {
    round_directed(x, mode, fmt, stream, 0.0)
}

/// Rounds `x` into the format, with companion value `v` steering the
/// probability shift of `SignedSrEps`.  `v` is ignored by every other mode.
pub fn round_directed(
    x: f64,
    mode: RoundingMode,
    fmt: &FloatFormat,
    stream: &mut RandomStream,
    v: f64,
) -> Result<RepValue, RoundingError> {
    let value = round_f64(x, mode, fmt, stream, v)?;
    Ok(RepValue::trusted(value, *fmt))
}

/// Raw-valued rounding core shared by the vector kernels.
#[inline]
pub(crate) fn round_f64(
    x: f64,
    mode: RoundingMode,
    fmt: &FloatFormat,
    stream: &mut RandomStream,
    v: f64,
) -> Result<f64, RoundingError> {
    if !x.is_finite() {
        return Err(FormatError::NotFinite { value: x }.into());
    }
    let y = x.abs();
    if y > fmt.x_max() {
        return Err(FormatError::Overflow {
            value: x,
            x_max: fmt.x_max(),
            format: *fmt,
        }
        .into());
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if fmt.hw_binary32() && mode == RoundingMode::NearestEven {
        let r = (x as f32) as f64;
        return Ok(if r == 0.0 { 0.0 } else { r });
    }
    let g = fmt.grid(y);
    if g.frac == 0.0 {
        return Ok(x);
    }
    // Probability of rounding the magnitude toward zero.  The shift term
    // maps the signed definitions onto the magnitude: sr_eps corresponds
    // to a companion value of -x, hence the -eps.
    let down = match mode {
        RoundingMode::NearestEven => {
            if g.frac != 0.5 {
                g.frac < 0.5
            } else {
                (g.floor_unit as u64) & 1 == 0
            }
        }
        RoundingMode::Down => x > 0.0,
        RoundingMode::Up => x < 0.0,
        RoundingMode::Sr => stream.next_uniform() <= 1.0 - g.frac,
        RoundingMode::SrEps(eps) => {
            check_eps(eps)?;
            stream.next_uniform() <= phi(1.0 - g.frac - eps)
        }
        RoundingMode::SignedSrEps(eps) => {
            check_eps(eps)?;
            stream.next_uniform() <= phi(1.0 - g.frac + sgn(v) * sgn(x) * eps)
        }
    };
    let mag = if down { g.floor_mag() } else { g.ceil_mag() };
    if mag == 0.0 {
        return Ok(0.0);
    }
    Ok(if x > 0.0 { mag } else { -mag })
}

/// Closed-form expected rounding error `E[fl(x) - x]` of the stochastic
/// modes.  Deterministic modes are an error; `SignedSrEps` uses `v = 0`
/// (see [`expected_abs_error_directed`]).
pub fn expected_abs_error(
    x: f64,
    mode: RoundingMode,
    fmt: &FloatFormat,
) -> Result<f64, RoundingError> {
    expected_abs_error_directed(x, mode, fmt, 0.0)
}

/// Closed-form expected rounding error with companion value `v`.
///
/// For `sr_eps` the three branches follow the unclamped shift
/// `η = p0(x) - sign(x)·ε`: fully clamped shifts pin the outcome to one
/// neighbour, otherwise the bias is `sign(x)·ε·(⌈x⌉-⌊x⌋)`.  The signed
/// variant is keyed on `η̂ = p0(x) + sign(v)·ε` with middle-branch bias
/// `-sign(v)·ε·(⌈x⌉-⌊x⌋)`.
pub fn expected_abs_error_directed(
    x: f64,
    mode: RoundingMode,
    fmt: &FloatFormat,
    v: f64,
) -> Result<f64, RoundingError> {
    match mode {
        RoundingMode::Sr | RoundingMode::SrEps(_) | RoundingMode::SignedSrEps(_) => {}
        _ => return Err(RoundingError::UnsupportedMode(mode)),
    }
    let floor = fmt.floor_fl(x)?;
    let ceil = fmt.ceil_fl(x)?;
    if floor == ceil {
        return Ok(0.0);
    }
    let gap = ceil - floor;
    let p0 = 1.0 - (x - floor) / gap;
    match mode {
        RoundingMode::Sr => Ok(0.0),
        RoundingMode::SrEps(eps) => {
            check_eps(eps)?;
            let eta = p0 - sgn(x) * eps;
            if eta > 1.0 {
                Ok(floor - x)
            } else if eta >= 0.0 {
                Ok(sgn(x) * eps * gap)
            } else {
                Ok(ceil - x)
            }
        }
        RoundingMode::SignedSrEps(eps) => {
            check_eps(eps)?;
            let eta = p0 + sgn(v) * eps;
            if eta > 1.0 {
                Ok(floor - x)
            } else if eta >= 0.0 {
                Ok(-sgn(v) * eps * gap)
            } else {
                Ok(ceil - x)
            }
        }
        _ => unreachable!(),
    }
}

/// Elementary operation of [`rounded_op`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Exact `f64` operation on two representable values followed by one
/// rounding; the model of machine arithmetic used throughout the crate.
pub fn rounded_op(
    a: &RepValue,
    b: &RepValue,
    op: ArithOp,
    mode: RoundingMode,
    stream: &mut RandomStream,
) -> Result<RepValue, RoundingError> {
    rounded_op_directed(a, b, op, mode, stream, 0.0)
}

/// [`rounded_op`] with a companion value for `SignedSrEps`.
pub fn rounded_op_directed(
    a: &RepValue,
    b: &RepValue,
    op: ArithOp,
    mode: RoundingMode,
    stream: &mut RandomStream,
    v: f64,
) -> Result<RepValue, RoundingError> {
    if a.format() != b.format() {
        return Err(RoundingError::FormatMismatch(a.format(), b.format()));
    }
    let fmt = a.format();
    let w = apply_op(a.value(), b.value(), op)?;
    let value = round_f64(w, mode, &fmt, stream, v)?;
    Ok(RepValue::trusted(value, fmt))
}

#[inline(always)]
pub(crate) fn apply_op(a: f64, b: f64, op: ArithOp) -> Result<f64, RoundingError> {
    match op {
        ArithOp::Add => Ok(a + b),
        ArithOp::Sub => Ok(a - b),
        ArithOp::Mul => Ok(a * b),
        ArithOp::Div => {
            if b == 0.0 {
                Err(RoundingError::DivisionByZero)
            } else {
                Ok(a / b)
            }
        }
    }
}
