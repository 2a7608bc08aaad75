//! Property tests: structural invariants of rounding that must hold for
//! every format, mode, and input.

use proptest::prelude::*;
use srgd::rounding::{expected_abs_error_directed, round_directed};
use srgd::{FloatFormat, RandomStream, RoundingMode};

fn format_strategy() -> impl Strategy<Value = FloatFormat> {
    prop_oneof![
        Just(FloatFormat::binary8()),
        Just(FloatFormat::bfloat16()),
        Just(FloatFormat::binary16()),
        Just(FloatFormat::binary32()),
        (3u32..=10, -20i32..-2, 2i32..20, any::<bool>())
            .prop_map(|(s, lo, hi, sub)| FloatFormat::new(s, lo, hi, sub).unwrap()),
    ]
}

fn mode_strategy() -> impl Strategy<Value = RoundingMode> {
    prop_oneof![
        Just(RoundingMode::NearestEven),
        Just(RoundingMode::Down),
        Just(RoundingMode::Up),
        Just(RoundingMode::Sr),
        (0.01f64..0.99).prop_map(RoundingMode::SrEps),
        (0.01f64..0.99).prop_map(RoundingMode::SignedSrEps),
    ]
}

/// A finite input within the format's range, spanning subnormal to x_max.
fn input_in(fmt: FloatFormat) -> impl Strategy<Value = f64> {
    let span = (fmt.e_max() - fmt.e_min() + 6) as f64;
    (0.0f64..1.0, 0.0f64..1.0, any::<bool>()).prop_map(move |(t, m, neg)| {
        let e = fmt.e_min() as f64 - 4.0 + t * span;
        let mut x = 2f64.powf(e) * (1.0 + m);
        if x > fmt.x_max() {
            x = fmt.x_max() * (0.25 + 0.75 * m);
        }
        if neg {
            -x
        } else {
            x
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn result_is_a_grid_neighbour(
        fmt in format_strategy(),
        mode in mode_strategy(),
        seed in any::<u64>(),
        v in -10.0f64..10.0,
        x_and_fmt in format_strategy().prop_flat_map(|f| (input_in(f), Just(f)))
    ) {
        let (x, fmt2) = x_and_fmt;
        let _ = fmt;
        let mut s = RandomStream::new(seed);
        let r = round_directed(x, mode, &fmt2, &mut s, v).unwrap().value();
        let lo = fmt2.floor_fl(x).unwrap();
        let hi = fmt2.ceil_fl(x).unwrap();
        prop_assert!(r == lo || r == hi, "x={x:e} r={r:e} lo={lo:e} hi={hi:e}");
        // Rounding never flips sign.
        prop_assert!(r * x >= 0.0 || r == 0.0);
        // Idempotence: representable values are fixed points.
        let mut s2 = RandomStream::new(seed ^ 1);
        prop_assert_eq!(round_directed(r, mode, &fmt2, &mut s2, v).unwrap().value(), r);
    }

    #[test]
    fn directed_modes_are_reflections(
        x_and_fmt in format_strategy().prop_flat_map(|f| (input_in(f), Just(f)))
    ) {
        let (x, fmt) = x_and_fmt;
        let mut s = RandomStream::new(0);
        let rd = round_directed(x, RoundingMode::Down, &fmt, &mut s, 0.0).unwrap().value();
        let ru = round_directed(x, RoundingMode::Up, &fmt, &mut s, 0.0).unwrap().value();
        prop_assert!(rd <= x && x <= ru);
        let ru_neg = round_directed(-x, RoundingMode::Up, &fmt, &mut s, 0.0).unwrap().value();
        prop_assert_eq!(rd, -ru_neg);
    }

    #[test]
    fn same_seed_reproduces(
        mode in mode_strategy(),
        seed in any::<u64>(),
        x_and_fmt in format_strategy().prop_flat_map(|f| (input_in(f), Just(f)))
    ) {
        let (x, fmt) = x_and_fmt;
        let mut s1 = RandomStream::new(seed);
        let mut s2 = RandomStream::new(seed);
        let a = round_directed(x, mode, &fmt, &mut s1, 3.0).unwrap().value();
        let b = round_directed(x, mode, &fmt, &mut s2, 3.0).unwrap().value();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn expected_error_stays_within_neighbour_distances(
        eps in 0.01f64..0.99,
        v in -5.0f64..5.0,
        x_and_fmt in format_strategy().prop_flat_map(|f| (input_in(f), Just(f)))
    ) {
        let (x, fmt) = x_and_fmt;
        for mode in [RoundingMode::Sr, RoundingMode::SrEps(eps), RoundingMode::SignedSrEps(eps)] {
            let e = expected_abs_error_directed(x, mode, &fmt, v).unwrap();
            let lo = fmt.floor_fl(x).unwrap();
            let hi = fmt.ceil_fl(x).unwrap();
            // The mean of a distribution on {lo, hi} stays inside [lo, hi].
            prop_assert!(x + e >= lo - 1e-300 && x + e <= hi + 1e-300,
                "x={x:e} mode={mode} E={e:e}");
        }
    }
}
