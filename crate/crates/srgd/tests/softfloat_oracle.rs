//! Exhaustive agreement between grid navigation and the enumeration oracle.

mod common;

use common::EnumOracle;
use srgd::{FloatFormat, RandomStream};

#[test]
fn binary8_enumeration_has_expected_size() {
    let fmt = FloatFormat::binary8();
    let oracle = EnumOracle::new(&fmt);
    // 30 binades x 4 significands + 3 subnormals, mirrored, plus zero; the
    // 256 encodings of E5M2 spend one exponent code on infinities and NaNs.
    assert_eq!(oracle.values.len(), 2 * (30 * 4 + 3) + 1);
    assert!(oracle.values.len() <= 256);
    assert_eq!(*oracle.values.last().unwrap(), 57344.0);
    for w in oracle.values.windows(2) {
        assert!(w[0] < w[1]);
    }
    for v in &oracle.values {
        assert!(fmt.is_representable(*v), "{v} not representable");
    }
}

/// Probes: every representable point, every gap midpoint, and off-midpoint
/// interior points of every gap.
fn probe_points(oracle: &EnumOracle) -> Vec<f64> {
    let mut pts = Vec::new();
    for w in oracle.values.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        pts.push(lo);
        pts.push((lo + hi) / 2.0);
        pts.push(lo + (hi - lo) * 0.25);
        pts.push(lo + (hi - lo) * 0.75);
    }
    pts.push(*oracle.values.last().unwrap());
    pts
}

#[test]
fn binary8_grid_navigation_matches_oracle() {
    let fmt = FloatFormat::binary8();
    let oracle = EnumOracle::new(&fmt);
    for &x in &probe_points(&oracle) {
        assert_eq!(fmt.floor_fl(x).unwrap(), oracle.floor(x), "floor at {x:e}");
        assert_eq!(fmt.ceil_fl(x).unwrap(), oracle.ceil(x), "ceil at {x:e}");
        assert_eq!(
            fmt.round_nearest_even(x).unwrap(),
            oracle.round_nearest_even(x, &fmt),
            "rn at {x:e}"
        );
    }
    for &v in &oracle.values {
        match oracle.successor(v) {
            Some(s) => assert_eq!(fmt.successor(v).unwrap(), s, "successor of {v:e}"),
            None => assert!(fmt.successor(v).is_err()),
        }
        match oracle.predecessor(v) {
            Some(p) => assert_eq!(fmt.predecessor(v).unwrap(), p, "predecessor of {v:e}"),
            None => assert!(fmt.predecessor(v).is_err()),
        }
    }
}

#[test]
fn custom_format_without_subnormals_matches_oracle() {
    let fmt = FloatFormat::new(4, -6, 7, false).unwrap();
    let oracle = EnumOracle::new(&fmt);
    for &x in &probe_points(&oracle) {
        assert_eq!(fmt.floor_fl(x).unwrap(), oracle.floor(x), "floor at {x:e}");
        assert_eq!(fmt.ceil_fl(x).unwrap(), oracle.ceil(x), "ceil at {x:e}");
        assert_eq!(
            fmt.round_nearest_even(x).unwrap(),
            oracle.round_nearest_even(x, &fmt),
            "rn at {x:e}"
        );
    }
}

#[test]
fn random_probes_on_wider_formats() {
    let mut rng = RandomStream::new(0x50F7);
    for fmt in [FloatFormat::binary16(), FloatFormat::bfloat16()] {
        let oracle = EnumOracle::new(&fmt);
        for _ in 0..20_000 {
            // Log-uniform magnitudes spanning subnormal to overflow edge.
            let e = (rng.next_uniform() - 0.5) * 2.2 * (fmt.e_max() - fmt.e_min()) as f64;
            let mut x = 2f64.powf(e * 0.5) * (1.0 + rng.next_uniform());
            if rng.next_uniform() < 0.5 {
                x = -x;
            }
            if x.abs() > fmt.x_max() {
                assert!(fmt.floor_fl(x).is_err());
                continue;
            }
            assert_eq!(fmt.floor_fl(x).unwrap(), oracle.floor(x), "floor at {x:e}");
            assert_eq!(fmt.ceil_fl(x).unwrap(), oracle.ceil(x), "ceil at {x:e}");
            assert_eq!(
                fmt.round_nearest_even(x).unwrap(),
                oracle.round_nearest_even(x, &fmt),
                "rn at {x:e}"
            );
        }
    }
}

#[test]
fn rn_relative_error_within_unit_roundoff() {
    // |RN(x) - x| <= u|x| over the normalized range, fuzzed.
    let mut rng = RandomStream::new(0xBEEF);
    for fmt in [
        FloatFormat::binary8(),
        FloatFormat::bfloat16(),
        FloatFormat::binary16(),
        FloatFormat::binary32(),
    ] {
        let u = fmt.unit_roundoff();
        for _ in 0..250_000 {
            let e = fmt.e_min() as f64
                + rng.next_uniform() * (fmt.e_max() - fmt.e_min()) as f64;
            let mut x = 2f64.powf(e) * (1.0 + rng.next_uniform());
            if x > fmt.x_max() {
                x = fmt.x_max();
            }
            if rng.next_uniform() < 0.5 {
                x = -x;
            }
            let r = fmt.round_nearest_even(x).unwrap();
            assert!((r - x).abs() <= u * x.abs(), "x={x:e} r={r:e}");
        }
    }
}
