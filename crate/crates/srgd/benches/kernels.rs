use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};
use srgd::{
    kernels::{matvec, matvec_seq, LPMatrix, LPVector},
    FloatFormat, RandomStream, RoundingMode,
};

fn rounding_throughput(c: &mut Criterion) {
    let n = 4096usize;
    let mut g = c.benchmark_group("round");
    g.throughput(Throughput::Elements(n as u64));
    for (label, fmt) in [
        ("binary8", FloatFormat::binary8()),
        ("bfloat16", FloatFormat::bfloat16()),
        ("binary32", FloatFormat::binary32()),
    ] {
        let mut init = RandomStream::new(7);
        let xs: Vec<f64> = (0..n).map(|_| init.next_uniform() * 8.0 - 4.0).collect();
        for mode in [RoundingMode::NearestEven, RoundingMode::Sr] {
            let mut s = RandomStream::new(11);
            g.bench_function(format!("{label}/{mode}"), |b| {
                b.iter(|| {
                    let mut acc = 0.0;
                    for &x in &xs {
                        acc += srgd::rounding::round(black_box(x), mode, &fmt, &mut s)
                            .unwrap()
                            .value();
                    }
                    black_box(acc)
                })
            });
        }
    }
    g.finish();
}

fn dot_throughput(c: &mut Criterion) {
    let n = 4096usize;
    let fmt = FloatFormat::binary8();
    let mut init = RandomStream::new(3);
    let quantized = |init: &mut RandomStream| {
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let x = init.next_uniform() * 2.0 - 1.0;
                fmt.round_nearest_even(x).unwrap()
            })
            .collect();
        LPVector::from_raw(v, fmt).unwrap()
    };
    let a = quantized(&mut init);
    let b = quantized(&mut init);
    let mut g = c.benchmark_group("dot");
    g.throughput(Throughput::Elements(2 * n as u64));
    for mode in [RoundingMode::NearestEven, RoundingMode::Sr] {
        let mut s = RandomStream::new(5);
        g.bench_function(format!("binary8/{mode}"), |bch| {
            bch.iter(|| srgd::kernels::dot(&a, &b, mode, &mut s).unwrap().value())
        });
    }
    g.finish();
}

fn matvec_parallel_vs_sequential(c: &mut Criterion) {
    let n = 256usize;
    let fmt = FloatFormat::bfloat16();
    let mut init = RandomStream::new(9);
    let mvals: Vec<f64> = (0..n * n)
        .map(|_| fmt.round_nearest_even(init.next_uniform() * 2.0 - 1.0).unwrap())
        .collect();
    let xvals: Vec<f64> = (0..n)
        .map(|_| fmt.round_nearest_even(init.next_uniform() * 2.0 - 1.0).unwrap())
        .collect();
    let m = LPMatrix::from_raw(mvals, n, n, fmt).unwrap();
    let x = LPVector::from_raw(xvals, fmt).unwrap();
    let mut g = c.benchmark_group("matvec");
    g.throughput(Throughput::Elements(2 * (n * n) as u64));
    let mut s1 = RandomStream::new(1);
    g.bench_function("parallel", |b| {
        b.iter(|| matvec(&m, &x, RoundingMode::Sr, &mut s1).unwrap())
    });
    let mut s2 = RandomStream::new(1);
    g.bench_function("sequential", |b| {
        b.iter(|| matvec_seq(&m, &x, RoundingMode::Sr, &mut s2).unwrap())
    });
    g.finish();
}

criterion_group!(
    benches,
    rounding_throughput,
    dot_throughput,
    matvec_parallel_vs_sequential
);
criterion_main!(benches);
