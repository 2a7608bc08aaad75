//! Low-precision vector and matrix kernels.
//!
//! Every multiply and every addition is individually rounded into the
//! target format; accumulation is strict left-to-right in index order, so
//! kernel results are part of the arithmetic contract, not an
//! implementation detail.  Containers maintain the invariant that all
//! stored elements are representable, checked at construction so the inner
//! loops can trust their inputs.
//!
//! Stream discipline: scalar kernels (`dot`, `hadamard`, `axpy`) draw from
//! the caller's stream in place.  `matvec` derives one child stream from
//! the caller and forks it by row index, which makes the result identical
//! whether rows are processed sequentially or in parallel.  With the
//! `parallel` feature enabled (default), `matvec` runs rows on the rayon
//! pool; `matvec_seq` is the always-sequential path and produces
//! bit-identical output.

use crate::format::{FloatFormat, FormatError, RepValue};
use crate::rng::RandomStream;
use crate::rounding::{round_f64, RoundingError, RoundingMode};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Vector of representable values in one format.
#[derive(Clone, Debug, PartialEq)]
pub struct LPVector {
    values: Vec<f64>,
    format: FloatFormat,
}

impl LPVector {
    /// Wraps raw values, validating representability.
    pub fn from_raw(values: Vec<f64>, format: FloatFormat) -> Result<Self, FormatError> {
        for &v in &values {
            if !format.is_representable(v) {
                return Err(FormatError::NotRepresentable { value: v, format });
            }
        }
        Ok(LPVector { values, format })
    }

    /// Rounds arbitrary working-precision values into the format.
    pub fn quantize(
        values: &[f64],
        format: FloatFormat,
        mode: RoundingMode,
        stream: &mut RandomStream,
    ) -> Result<Self, RoundingError> {
        let mut out = Vec::with_capacity(values.len());
        for &v in values {
            out.push(round_f64(v, mode, &format, stream, 0.0)?);
        }
        Ok(LPVector {
            values: out,
            format,
        })
    }

    pub(crate) fn trusted(values: Vec<f64>, format: FloatFormat) -> Self {
        debug_assert!(values.iter().all(|&v| format.is_representable(v)));
        LPVector { values, format }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn format(&self) -> FloatFormat {
        self.format
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> RepValue {
        RepValue::trusted(self.values[i], self.format)
    }

    /// Replaces element `i`; the value must be representable.
    pub fn set(&mut self, i: usize, value: f64) -> Result<(), FormatError> {
        if !self.format.is_representable(value) {
            return Err(FormatError::NotRepresentable {
                value,
                format: self.format,
            });
        }
        self.values[i] = value;
        Ok(())
    }
}

/// Row-major matrix of representable values in one format.
#[derive(Clone, Debug, PartialEq)]
pub struct LPMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    format: FloatFormat,
}

impl LPMatrix {
    pub fn from_raw(
        values: Vec<f64>,
        rows: usize,
        cols: usize,
        format: FloatFormat,
    ) -> Result<Self, FormatError> {
        assert_eq!(values.len(), rows * cols, "shape mismatch");
        for &v in &values {
            if !format.is_representable(v) {
                return Err(FormatError::NotRepresentable { value: v, format });
            }
        }
        Ok(LPMatrix {
            values,
            rows,
            cols,
            format,
        })
    }

    pub fn quantize(
        values: &[f64],
        rows: usize,
        cols: usize,
        format: FloatFormat,
        mode: RoundingMode,
        stream: &mut RandomStream,
    ) -> Result<Self, RoundingError> {
        assert_eq!(values.len(), rows * cols, "shape mismatch");
        let mut out = Vec::with_capacity(values.len());
        for &v in values {
            out.push(round_f64(v, mode, &format, stream, 0.0)?);
        }
        Ok(LPMatrix {
            values: out,
            rows,
            cols,
            format,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn format(&self) -> FloatFormat {
        self.format
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Rounded inner product over raw slices (shared by `dot` and `matvec`).
#[inline]
pub(crate) fn dot_slices(
    a: &[f64],
    b: &[f64],
    fmt: &FloatFormat,
    mode: RoundingMode,
    stream: &mut RandomStream,
) -> Result<f64, RoundingError> {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let mut acc = 0.0;
    for i in 0..a.len() {
        // A zero operand rounds to an exact 0 product and leaves the
        // accumulator untouched; neither event consumes a draw, so
        // skipping is bit-identical and much faster on sparse data.
        if a[i] == 0.0 || b[i] == 0.0 {
            continue;
        }
        let p = round_f64(a[i] * b[i], mode, fmt, stream, 0.0)?;
        acc = round_f64(acc + p, mode, fmt, stream, 0.0)?;
    }
    Ok(acc)
}

/// Rounded inner product: each product and each partial sum is rounded,
/// accumulated left-to-right.
pub fn dot(
    a: &LPVector,
    b: &LPVector,
    mode: RoundingMode,
    stream: &mut RandomStream,
) -> Result<RepValue, RoundingError> {
    check_formats(a.format, b.format)?;
    let v = dot_slices(&a.values, &b.values, &a.format, mode, stream)?;
    Ok(RepValue::trusted(v, a.format))
}

/// Rounded matrix-vector product, one rounded inner product per row.
///
/// Rows run on the rayon pool when the `parallel` feature is enabled; the
/// per-row stream forking keeps the output identical to [`matvec_seq`].
pub fn matvec(
    m: &LPMatrix,
    x: &LPVector,
    mode: RoundingMode,
    stream: &mut RandomStream,
) -> Result<LPVector, RoundingError> {
    check_formats(m.format, x.format)?;
    assert_eq!(m.cols, x.len(), "shape mismatch");
    let base = stream.derive();

    #[cfg(feature = "parallel")]
    let results: Vec<Result<f64, RoundingError>> = (0..m.rows)
        .into_par_iter()
        .map(|r| {
            let mut row_stream = base.fork(r as u64);
            dot_slices(m.row(r), &x.values, &m.format, mode, &mut row_stream)
        })
        .collect();

    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<f64, RoundingError>> = (0..m.rows)
        .map(|r| {
            let mut row_stream = base.fork(r as u64);
            dot_slices(m.row(r), &x.values, &m.format, mode, &mut row_stream)
        })
        .collect();

    collect_rows(results, m.format)
}

/// Always-sequential matrix-vector product; bit-identical to [`matvec`].
pub fn matvec_seq(
    m: &LPMatrix,
    x: &LPVector,
    mode: RoundingMode,
    stream: &mut RandomStream,
) -> Result<LPVector, RoundingError> {
    check_formats(m.format, x.format)?;
    assert_eq!(m.cols, x.len(), "shape mismatch");
    let base = stream.derive();
    let results: Vec<Result<f64, RoundingError>> = (0..m.rows)
        .map(|r| {
            let mut row_stream = base.fork(r as u64);
            dot_slices(m.row(r), &x.values, &m.format, mode, &mut row_stream)
        })
        .collect();
    collect_rows(results, m.format)
}

fn collect_rows(
    results: Vec<Result<f64, RoundingError>>,
    format: FloatFormat,
) -> Result<LPVector, RoundingError> {
    let mut values = Vec::with_capacity(results.len());
    for r in results {
        values.push(r?);
    }
    Ok(LPVector::trusted(values, format))
}

/// Elementwise rounded product.
pub fn hadamard(
    a: &LPVector,
    b: &LPVector,
    mode: RoundingMode,
    stream: &mut RandomStream,
) -> Result<LPVector, RoundingError> {
    check_formats(a.format, b.format)?;
    assert_eq!(a.len(), b.len(), "length mismatch");
    let mut values = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        // Zero products are exact and draw nothing; skip the kernel call.
        if a.values[i] == 0.0 || b.values[i] == 0.0 {
            values.push(0.0);
            continue;
        }
        values.push(round_f64(a.values[i] * b.values[i], mode, &a.format, stream, 0.0)?);
    }
    Ok(LPVector::trusted(values, a.format))
}

/// Rounded `alpha * x + y`: one rounded multiply and one rounded add per
/// element.
pub fn axpy(
    alpha: RepValue,
    x: &LPVector,
    y: &LPVector,
    mode: RoundingMode,
    stream: &mut RandomStream,
) -> Result<LPVector, RoundingError> {
    check_formats(alpha.format(), x.format)?;
    check_formats(x.format, y.format)?;
    assert_eq!(x.len(), y.len(), "length mismatch");
    let a = alpha.value();
    let mut values = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        // alpha * 0 (or 0 * x) is an exact 0 and p + y then returns y
        // unchanged; both round exactly without a draw.
        if a == 0.0 || x.values[i] == 0.0 {
            values.push(y.values[i]);
            continue;
        }
        let p = round_f64(a * x.values[i], mode, &x.format, stream, 0.0)?;
        values.push(round_f64(p + y.values[i], mode, &x.format, stream, 0.0)?);
    }
    Ok(LPVector::trusted(values, x.format))
}

fn check_formats(a: FloatFormat, b: FloatFormat) -> Result<(), RoundingError> {
    if a != b {
        return Err(RoundingError::FormatMismatch(a, b));
    }
    Ok(())
}

/// Exact `f64` inner product, the working-precision reference.
pub fn dot_exact(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b8() -> FloatFormat {
        FloatFormat::binary8()
    }

    #[test]
    fn construction_validates() {
        assert!(LPVector::from_raw(vec![1.0, 1.25], b8()).is_ok());
        assert!(LPVector::from_raw(vec![1.1], b8()).is_err());
        assert!(LPMatrix::from_raw(vec![1.0, 2.0, 3.0, 4.0], 2, 2, b8()).is_ok());
        assert!(LPMatrix::from_raw(vec![1.0, 1.1, 3.0, 4.0], 2, 2, b8()).is_err());
    }

    #[test]
    fn quantize_rounds_each_element() {
        let mut s = RandomStream::new(1);
        let v = LPVector::quantize(&[1.1, -1.1, 0.0], b8(), RoundingMode::NearestEven, &mut s)
            .unwrap();
        assert_eq!(v.as_slice(), &[1.0, -1.0, 0.0]);
    }

    #[test]
    fn dot_exact_inputs_deterministic() {
        // 1.25*1.5 + 0.25*2 = 1.875 + 0.5; RN(1.875) = 2.0 (tie, mu 7 odd),
        // RN(0.5) = 0.5, RN(2.0 + 0.5) = 2.5.
        let mut s = RandomStream::new(1);
        let a = LPVector::from_raw(vec![1.25, 0.25], b8()).unwrap();
        let b = LPVector::from_raw(vec![1.5, 2.0], b8()).unwrap();
        let r = dot(&a, &b, RoundingMode::NearestEven, &mut s).unwrap();
        assert_eq!(r.value(), 2.5);
    }

    #[test]
    fn accumulation_is_left_to_right() {
        // Under round-down, 4.0 absorbs every following 0.25: gap above 4
        // is 1, so 4 + 0.25 floors back to 4.  Any reordering that sums the
        // quarters first would reach 4 + 2 = 6.
        let mut s = RandomStream::new(1);
        let n = 8;
        let mut av = vec![4.0];
        av.extend(std::iter::repeat(0.25).take(n));
        let a = LPVector::from_raw(av, b8()).unwrap();
        let b = LPVector::from_raw(vec![1.0; n + 1], b8()).unwrap();
        let r = dot(&a, &b, RoundingMode::Down, &mut s).unwrap();
        assert_eq!(r.value(), 4.0);
    }

    #[test]
    fn dot_zero_inputs() {
        let mut s = RandomStream::new(1);
        let a = LPVector::from_raw(vec![0.0; 4], b8()).unwrap();
        let b = LPVector::from_raw(vec![1.0, 2.0, 3.0, 4.0], b8()).unwrap();
        assert_eq!(dot(&a, &b, RoundingMode::Sr, &mut s).unwrap().value(), 0.0);
    }

    #[test]
    fn matvec_matches_rowwise_dots() {
        let fmt = b8();
        let m = LPMatrix::from_raw(vec![1.0, 2.0, 0.5, -1.0, 3.0, 0.25], 2, 3, fmt).unwrap();
        let x = LPVector::from_raw(vec![1.5, 0.5, 2.0], fmt).unwrap();
        let mut s1 = RandomStream::new(9);
        let y = matvec(&m, &x, RoundingMode::Sr, &mut s1).unwrap();

        // Reference: same derivation structure, explicit loop.
        let mut s2 = RandomStream::new(9);
        let base = s2.derive();
        for r in 0..2 {
            let mut rs = base.fork(r as u64);
            let d = dot_slices(m.row(r), x.as_slice(), &fmt, RoundingMode::Sr, &mut rs).unwrap();
            assert_eq!(y.as_slice()[r], d);
        }
    }

    #[test]
    fn matvec_parallel_equals_sequential() {
        let fmt = FloatFormat::bfloat16();
        let n = 64;
        let mut init = RandomStream::new(123);
        let mvals: Vec<f64> = (0..n * n)
            .map(|_| {
                let x = init.next_uniform() * 4.0 - 2.0;
                fmt.round_nearest_even(x).unwrap()
            })
            .collect();
        let xvals: Vec<f64> = (0..n)
            .map(|_| {
                let x = init.next_uniform() * 4.0 - 2.0;
                fmt.round_nearest_even(x).unwrap()
            })
            .collect();
        let m = LPMatrix::from_raw(mvals, n, n, fmt).unwrap();
        let x = LPVector::from_raw(xvals, fmt).unwrap();
        let mut s1 = RandomStream::new(77);
        let mut s2 = RandomStream::new(77);
        let par = matvec(&m, &x, RoundingMode::Sr, &mut s1).unwrap();
        let seq = matvec_seq(&m, &x, RoundingMode::Sr, &mut s2).unwrap();
        assert_eq!(par.as_slice(), seq.as_slice());
    }

    #[test]
    fn consecutive_matvecs_draw_distinct_streams() {
        let fmt = b8();
        let m = LPMatrix::from_raw(vec![1.25; 9], 3, 3, fmt).unwrap();
        let x = LPVector::from_raw(vec![1.25; 3], fmt).unwrap();
        let mut s = RandomStream::new(5);
        let y1 = matvec(&m, &x, RoundingMode::Sr, &mut s).unwrap();
        let y2 = matvec(&m, &x, RoundingMode::Sr, &mut s).unwrap();
        // Same inputs, later stream position: different stochastic draws.
        assert_ne!(y1.as_slice(), y2.as_slice());
    }

    #[test]
    fn hadamard_and_axpy() {
        let fmt = b8();
        let mut s = RandomStream::new(2);
        let a = LPVector::from_raw(vec![1.25, -2.0], fmt).unwrap();
        let b = LPVector::from_raw(vec![1.5, 0.5], fmt).unwrap();
        let h = hadamard(&a, &b, RoundingMode::NearestEven, &mut s).unwrap();
        assert_eq!(h.as_slice(), &[2.0, -1.0]);

        let alpha = RepValue::new(0.5, fmt).unwrap();
        let r = axpy(alpha, &a, &b, RoundingMode::NearestEven, &mut s).unwrap();
        // 0.5*1.25 = 0.625 -> RN 0.625; +1.5 = 2.125 -> RN 2.0.
        // 0.5*-2.0 = -1.0; +0.5 = -0.5.
        assert_eq!(r.as_slice(), &[2.0, -0.5]);
    }

    #[test]
    fn forward_error_within_standard_model_bound() {
        // |lp_dot - exact| <= gamma_n * sum|a_i b_i| with gamma_n computed
        // from 2u per rounded op (stochastic bound); checked softly over a
        // fuzz set, tolerating rare boundary cases.
        let fmt = FloatFormat::binary16();
        let u = fmt.unit_roundoff();
        let n = 32;
        let mut rng = RandomStream::new(55);
        let mut violations = 0;
        let trials = 2000;
        for t in 0..trials {
            let mode = if t % 2 == 0 {
                RoundingMode::Sr
            } else {
                RoundingMode::NearestEven
            };
            let av: Vec<f64> = (0..n)
                .map(|_| fmt.round_nearest_even(rng.next_uniform() * 2.0 - 1.0).unwrap())
                .collect();
            let bv: Vec<f64> = (0..n)
                .map(|_| fmt.round_nearest_even(rng.next_uniform() * 2.0 - 1.0).unwrap())
                .collect();
            let a = LPVector::from_raw(av.clone(), fmt).unwrap();
            let b = LPVector::from_raw(bv.clone(), fmt).unwrap();
            let lp = dot(&a, &b, mode, &mut rng).unwrap().value();
            let exact = dot_exact(&av, &bv);
            let abs_sum: f64 = av.iter().zip(&bv).map(|(x, y)| (x * y).abs()).sum();
            let tu = 2.0 * u * (n as f64 + 1.0);
            let gamma = tu / (1.0 - tu);
            if (lp - exact).abs() > gamma * abs_sum + fmt.min_positive() {
                violations += 1;
            }
        }
        assert!(
            violations * 100 <= trials,
            "{violations} of {trials} outside the forward error bound"
        );
    }
}
