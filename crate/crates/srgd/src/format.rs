//! Software emulation of low-precision binary floating-point formats.
//!
//! A format is the finite set
//!
//! ```text
//! F = {0} ∪ { ±mu · 2^(e-s) : mu, e integers }
//! ```
//!
//! where `s` is the number of significand bits (implicit bit included),
//! `mu ∈ [2^(s-1), 2^s)` for normalized values with `e` ranging over
//! `[e_min+1, e_max+1]`, and `mu ∈ (0, 2^(s-1))` with `e = e_min+1` for
//! subnormals.  Equivalently: binade `E ∈ [e_min, e_max]` holds values
//! `1.m × 2^E` with `s-1` fraction bits, IEEE-style.
//!
//! Values are carried in `f64` (the working precision).  Formats are
//! restricted to be strictly coarser than `f64` (`s ≤ 52`, exponents within
//! `±450`), which makes every grid magnitude, gap, and scaling below exact
//! in `f64`: the emulation is bit-faithful, not approximate.
//!
//! Values above the largest finite magnitude are an error; there is no
//! saturation and no infinity. Negative zero normalizes to `+0`.

use thiserror::Error;

/// Errors raised by format construction and grid navigation.
#[derive(Debug, Error)]
pub enum FormatError {
    /// `|value|` exceeds the largest finite magnitude of the format.
    #[error("|{value:e}| exceeds the largest finite value {x_max:e} of {format}")]
    Overflow {
        value: f64,
        x_max: f64,
        format: FloatFormat,
    },
    /// Format parameters outside the supported envelope.
    #[error("invalid format parameters: {0}")]
    InvalidFormat(String),
    /// A value that was required to lie on the format grid does not.
    #[error("{value:e} is not representable in {format}")]
    NotRepresentable { value: f64, format: FloatFormat },
    /// NaN or infinity where a finite value is required.
    #[error("{value} is not finite")]
    NotFinite { value: f64 },
}

/// `2^q` as an exact `f64`, `q` within the normal exponent range.
#[inline(always)]
pub(crate) fn exp2i(q: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&q));
    f64::from_bits(((1023 + q) as u64) << 52)
}

/// Binade of a positive normal `f64`: `E` with `y ∈ [2^E, 2^(E+1))`.
#[inline(always)]
pub(crate) fn binade(y: f64) -> i32 {
    debug_assert!(y >= f64::MIN_POSITIVE && y.is_finite());
    ((y.to_bits() >> 52) & 0x7FF) as i32 - 1023
}

/// Magnitude `|x|` located on the format grid.
///
/// `floor_unit * gap` is the largest grid magnitude `≤ |x|`, `gap` the grid
/// spacing of the surrounding interval, and `frac ∈ [0, 1)` the position of
/// `|x|` inside it.  All fields are exact.
#[derive(Clone, Copy, Debug)]
pub(crate) struct GridPoint {
    pub floor_unit: f64,
    pub gap: f64,
    pub frac: f64,
}

impl GridPoint {
    #[inline(always)]
    pub fn floor_mag(&self) -> f64 {
        self.floor_unit * self.gap
    }

    #[inline(always)]
    pub fn ceil_mag(&self) -> f64 {
        if self.frac == 0.0 {
            self.floor_mag()
        } else {
            (self.floor_unit + 1.0) * self.gap
        }
    }
}

/// A binary floating-point format emulated on top of `f64`.
///
/// The `x_max_v`/`x_min_v` fields cache grid constants for the rounding
/// hot path; equality is defined by the four shape parameters alone.
#[derive(Clone, Copy, Debug)]
pub struct FloatFormat {
    s: u32,
    e_min: i32,
    e_max: i32,
    subnormals: bool,
    x_max_v: f64,
    x_min_v: f64,
    hw_b32: bool,
}

impl PartialEq for FloatFormat {
    fn eq(&self, other: &Self) -> bool {
        self.s == other.s
            && self.e_min == other.e_min
            && self.e_max == other.e_max
            && self.subnormals == other.subnormals
    }
}

impl Eq for FloatFormat {}

impl FloatFormat {
    /// Custom format with `s` significand bits (implicit bit included) and
    /// normalized binades `[e_min, e_max]`.
    pub fn new(s: u32, e_min: i32, e_max: i32, subnormals: bool) -> Result<Self, FormatError> {
        if !(2..=52).contains(&s) {
            return Err(FormatError::InvalidFormat(format!(
                "significand bits s={s} outside [2, 52]"
            )));
        }
        if !(-450..=450).contains(&e_min) || !(-450..=450).contains(&e_max) || e_min >= e_max {
            return Err(FormatError::InvalidFormat(format!(
                "exponent range [{e_min}, {e_max}] invalid (need -450 <= e_min < e_max <= 450)"
            )));
        }
        Ok(Self::build(s, e_min, e_max, subnormals))
    }

    fn build(s: u32, e_min: i32, e_max: i32, subnormals: bool) -> Self {
        FloatFormat {
            s,
            e_min,
            e_max,
            subnormals,
            x_max_v: (2.0 - exp2i(1 - s as i32)) * exp2i(e_max),
            x_min_v: exp2i(e_min),
            hw_b32: s == 24 && e_min == -126 && e_max == 127 && subnormals,
        }
    }

    /// E5M2: 1 sign, 5 exponent, 2 stored significand bits.
    pub fn binary8() -> Self {
        Self::build(3, -14, 15, true)
    }

    pub fn bfloat16() -> Self {
        Self::build(8, -126, 127, true)
    }

    /// IEEE half precision.
    pub fn binary16() -> Self {
        Self::build(11, -14, 15, true)
    }

    /// IEEE single precision; in this crate the stand-in for exact
    /// arithmetic when compared against the 8- and 16-bit formats.
    pub fn binary32() -> Self {
        Self::build(24, -126, 127, true)
    }

    /// Preset lookup by name: `binary8`, `bfloat16`, `binary16`, `binary32`.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "binary8" => Some(Self::binary8()),
            "bfloat16" => Some(Self::bfloat16()),
            "binary16" => Some(Self::binary16()),
            "binary32" => Some(Self::binary32()),
            _ => None,
        }
    }

    /// Preset name, if this format is one of the presets.
    pub fn name(&self) -> Option<&'static str> {
        for name in ["binary8", "bfloat16", "binary16", "binary32"] {
            if Self::by_name(name).unwrap() == *self {
                return Some(name);
            }
        }
        None
    }

    pub fn significand_bits(&self) -> u32 {
        self.s
    }

    pub fn e_min(&self) -> i32 {
        self.e_min
    }

    pub fn e_max(&self) -> i32 {
        self.e_max
    }

    pub fn supports_subnormals(&self) -> bool {
        self.subnormals
    }

    /// Unit roundoff `u = 2^-s` (half the spacing of `[1, 2)`).
    pub fn unit_roundoff(&self) -> f64 {
        exp2i(-(self.s as i32))
    }

    /// Largest finite magnitude `(2 - 2^(1-s)) · 2^e_max`.
    #[inline(always)]
    pub fn x_max(&self) -> f64 {
        self.x_max_v
    }

    /// Smallest positive normalized magnitude `2^e_min`.
    #[inline(always)]
    pub fn x_min(&self) -> f64 {
        self.x_min_v
    }

    /// Whether round-to-nearest can be delegated to the hardware `f32`
    /// cast (exact for the binary32 preset).
    #[inline(always)]
    pub(crate) fn hw_binary32(&self) -> bool {
        self.hw_b32
    }

    /// Smallest positive value: `2^(e_min+1-s)` with subnormals, else `x_min`.
    pub fn min_positive(&self) -> f64 {
        if self.subnormals {
            exp2i(self.e_min + 1 - self.s as i32)
        } else {
            self.x_min()
        }
    }

    #[inline(always)]
    fn check_range(&self, x: f64) -> Result<(), FormatError> {
        if !x.is_finite() {
            return Err(FormatError::NotFinite { value: x });
        }
        if x.abs() > self.x_max() {
            return Err(FormatError::Overflow {
                value: x,
                x_max: self.x_max(),
                format: *self,
            });
        }
        Ok(())
    }

    /// Grid decomposition of a magnitude `0 ≤ y ≤ x_max`.
    #[inline(always)]
    pub(crate) fn grid(&self, y: f64) -> GridPoint {
        debug_assert!(y >= 0.0 && y <= self.x_max());
        let s = self.s as i32;
        let e = if y >= self.x_min() {
            binade(y)
        } else {
            self.e_min - 1
        };
        let q = if e >= self.e_min {
            e + 1 - s
        } else if self.subnormals {
            self.e_min + 1 - s
        } else {
            // Without subnormals the whole of (0, x_min) is one gap.
            self.e_min
        };
        let gap = exp2i(q);
        let units = y * exp2i(-q);
        let floor_unit = units.floor();
        GridPoint {
            floor_unit,
            gap,
            frac: units - floor_unit,
        }
    }

    /// Whether `x` lies on the grid (zero included).
    pub fn is_representable(&self, x: f64) -> bool {
        if x == 0.0 {
            return true;
        }
        if !x.is_finite() || x.abs() > self.x_max() {
            return false;
        }
        self.grid(x.abs()).frac == 0.0
    }

    /// Largest representable value `≤ x`.
    pub fn floor_fl(&self, x: f64) -> Result<f64, FormatError> {
        self.check_range(x)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        let g = self.grid(x.abs());
        if x > 0.0 {
            Ok(g.floor_mag())
        } else {
            Ok(-g.ceil_mag())
        }
    }

    /// Smallest representable value `≥ x`.
    pub fn ceil_fl(&self, x: f64) -> Result<f64, FormatError> {
        self.check_range(x)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        let g = self.grid(x.abs());
        if x > 0.0 {
            Ok(g.ceil_mag())
        } else {
            let m = g.floor_mag();
            Ok(if m == 0.0 { 0.0 } else { -m })
        }
    }

    /// Round to nearest, ties to even significand.
    pub fn round_nearest_even(&self, x: f64) -> Result<f64, FormatError> {
        self.check_range(x)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        let g = self.grid(x.abs());
        let down = if g.frac < 0.5 {
            true
        } else if g.frac > 0.5 {
            false
        } else {
            (g.floor_unit as u64) & 1 == 0
        };
        let mag = if down { g.floor_mag() } else { g.ceil_mag() };
        if mag == 0.0 {
            return Ok(0.0);
        }
        Ok(if x > 0.0 { mag } else { -mag })
    }

    /// Largest grid magnitude strictly below `y > 0` (`y` on the grid).
    fn pred_mag(&self, y: f64) -> f64 {
        let g = self.grid(y);
        debug_assert!(g.frac == 0.0);
        // Half a gap below y lands inside the correct interval even when y
        // sits at the bottom of a binade, where the spacing shrinks.
        self.grid(y - 0.5 * g.gap).floor_mag()
    }

    /// Smallest representable value `> xhat`; `xhat` must be representable.
    pub fn successor(&self, xhat: f64) -> Result<f64, FormatError> {
        self.require_representable(xhat)?;
        if xhat == 0.0 {
            return Ok(self.min_positive());
        }
        if xhat > 0.0 {
            if xhat == self.x_max() {
                return Err(FormatError::Overflow {
                    value: xhat,
                    x_max: self.x_max(),
                    format: *self,
                });
            }
            let g = self.grid(xhat);
            Ok((g.floor_unit + 1.0) * g.gap)
        } else {
            let m = self.pred_mag(-xhat);
            Ok(if m == 0.0 { 0.0 } else { -m })
        }
    }

    /// Largest representable value `< xhat`; `xhat` must be representable.
    pub fn predecessor(&self, xhat: f64) -> Result<f64, FormatError> {
        match self.successor(-xhat) {
            Ok(v) => Ok(if v == 0.0 { 0.0 } else { -v }),
            Err(FormatError::Overflow { value, x_max, format }) => Err(FormatError::Overflow {
                value: -value,
                x_max,
                format,
            }),
            Err(e) => Err(e),
        }
    }

    fn require_representable(&self, x: f64) -> Result<(), FormatError> {
        if self.is_representable(x) {
            Ok(())
        } else {
            Err(FormatError::NotRepresentable {
                value: x,
                format: *self,
            })
        }
    }

    /// Integer decomposition `|xhat| = mu · 2^(e-s)`, `mu ∈ [2^(s-1), 2^s)`
    /// for normalized values, `mu < 2^(s-1)` with `e = e_min+1` for
    /// subnormals and zero.  Returns `(sign, mu, e)` with `sign ∈ {-1,0,1}`.
    pub fn decompose(&self, xhat: f64) -> Result<(i32, u64, i32), FormatError> {
        self.require_representable(xhat)?;
        if xhat == 0.0 {
            return Ok((0, 0, self.e_min + 1));
        }
        let g = self.grid(xhat.abs());
        // gap = 2^(e-s)  =>  e = log2(gap) + s
        let e = binade(g.gap) + self.s as i32;
        Ok((if xhat > 0.0 { 1 } else { -1 }, g.floor_unit as u64, e))
    }

    /// Inverse of [`decompose`](Self::decompose).
    pub fn compose(&self, sign: i32, mu: u64, e: i32) -> Result<f64, FormatError> {
        if sign == 0 || mu == 0 {
            return Ok(0.0);
        }
        let v = sign.signum() as f64 * mu as f64 * exp2i(e - self.s as i32);
        self.require_representable(v)?;
        Ok(v)
    }

    /// Whether the least-significant significand bit of `xhat` is zero.
    pub fn lsb_is_zero(&self, xhat: f64) -> Result<bool, FormatError> {
        let (_, mu, _) = self.decompose(xhat)?;
        Ok(mu & 1 == 0)
    }
}

impl std::fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(name) = self.name() {
            write!(f, "{name}")
        } else {
            write!(
                f,
                "custom(s={}, e_min={}, e_max={}, subnormals={})",
                self.s, self.e_min, self.e_max, self.subnormals
            )
        }
    }
}

/// An `f64` value guaranteed to lie on the grid of its format.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepValue {
    value: f64,
    format: FloatFormat,
}

impl RepValue {
    pub fn new(value: f64, format: FloatFormat) -> Result<Self, FormatError> {
        if format.is_representable(value) {
            Ok(RepValue { value, format })
        } else {
            Err(FormatError::NotRepresentable { value, format })
        }
    }

    /// Constructor for values already produced by grid operations.
    #[inline(always)]
    pub(crate) fn trusted(value: f64, format: FloatFormat) -> Self {
        debug_assert!(format.is_representable(value), "{value:e} not in {format}");
        RepValue { value, format }
    }

    #[inline(always)]
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn format(&self) -> FloatFormat {
        self.format
    }
}
