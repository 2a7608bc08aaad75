//! Shared test helpers: an independent enumeration oracle for small formats.
//!
//! The oracle builds the full set of representable values by direct
//! construction (loops over binades and significands, no bit manipulation)
//! and answers grid queries by binary search.  It shares no code with the
//! library's navigation routines, so agreement is meaningful.

#![allow(dead_code)]

use srgd::FloatFormat;

/// Every finite value of `fmt`, sorted ascending.  Only sensible for small
/// formats (binary8 has 247 finite values across its 256 encodings).
pub fn enumerate_values(fmt: &FloatFormat) -> Vec<f64> {
    let s = fmt.significand_bits();
    let mut pos: Vec<f64> = Vec::new();
    if fmt.supports_subnormals() {
        for mu in 1..(1u64 << (s - 1)) {
            pos.push(mu as f64 * 2f64.powi(fmt.e_min() + 1 - s as i32));
        }
    }
    for e in fmt.e_min()..=fmt.e_max() {
        for mu in (1u64 << (s - 1))..(1u64 << s) {
            pos.push(mu as f64 * 2f64.powi(e + 1 - s as i32));
        }
    }
    let mut all: Vec<f64> = pos.iter().map(|v| -v).chain([0.0]).chain(pos.iter().copied()).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all
}

/// Grid oracle over an enumerated value set.
pub struct EnumOracle {
    pub values: Vec<f64>,
}

impl EnumOracle {
    pub fn new(fmt: &FloatFormat) -> Self {
        EnumOracle {
            values: enumerate_values(fmt),
        }
    }

    /// Largest enumerated value `<= x`.
    pub fn floor(&self, x: f64) -> f64 {
        let i = self.values.partition_point(|&v| v <= x);
        assert!(i > 0, "{x} below all values");
        self.values[i - 1]
    }

    /// Smallest enumerated value `>= x`.
    pub fn ceil(&self, x: f64) -> f64 {
        let i = self.values.partition_point(|&v| v < x);
        assert!(i < self.values.len(), "{x} above all values");
        self.values[i]
    }

    pub fn successor(&self, x: f64) -> Option<f64> {
        let i = self.values.partition_point(|&v| v <= x);
        self.values.get(i).copied()
    }

    pub fn predecessor(&self, x: f64) -> Option<f64> {
        let i = self.values.partition_point(|&v| v < x);
        i.checked_sub(1).map(|j| self.values[j])
    }

    /// Nearest value, ties to even integer significand.
    pub fn round_nearest_even(&self, x: f64, fmt: &FloatFormat) -> f64 {
        let lo = self.floor(x);
        let hi = self.ceil(x);
        if lo == hi {
            return lo;
        }
        let mid = (lo + hi) / 2.0;
        if x < mid {
            lo
        } else if x > mid {
            hi
        } else if lo == 0.0 || hi == 0.0 {
            // Zero is the even side of the gap next to it (only reachable
            // without subnormals, where [0, x_min] is a single gap).
            0.0
        } else {
            // Tie: pick the neighbour with even significand.
            let (_, mu_lo, _) = fmt.decompose(lo).unwrap();
            if mu_lo & 1 == 0 {
                lo
            } else {
                hi
            }
        }
    }
}
