use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use widthlab::{
    ball_width_bruteforce_with, best_approx, fit_rate, mz_ratio_stats, BallWidthInstance,
    BruteForceOptions, RateFamily, RateModel, TrigPoly,
};

fn bench_best_approx(c: &mut Criterion) {
    let mut group = c.benchmark_group("best_approx");
    let a: Vec<f64> = (1..=32).map(|k| 1.0 / k as f64).collect();
    let b: Vec<f64> = (1..=32).map(|k| (-1f64).powi(k) / (k * k) as f64).collect();
    let f = TrigPoly::new(0.1, a, b).unwrap().sample(512);
    for q in [1.5, 2.0, 4.0] {
        group.bench_with_input(BenchmarkId::new("n16", q), &q, |bch, &q| {
            bch.iter(|| best_approx(black_box(&f), 16, q).unwrap())
        });
    }
    group.finish();
}

fn bench_bruteforce(c: &mut Criterion) {
    let mut group = c.benchmark_group("ball_width_bruteforce");
    group.sample_size(10);
    let opts = BruteForceOptions {
        restarts: 2,
        ..BruteForceOptions::default()
    };
    for (p, q) in [(1.0, 2.0), (2.0, 3.0), (3.0, 1.5)] {
        let inst = BallWidthInstance::new(4, 2, p, q).unwrap();
        group.bench_function(format!("m4_n2_p{p}_q{q}"), |bch| {
            bch.iter(|| ball_width_bruteforce_with(black_box(&inst), &opts, 1).unwrap())
        });
    }
    group.finish();
}

fn bench_mz(c: &mut Criterion) {
    let mut group = c.benchmark_group("mz_ratio_stats");
    for m in [8usize, 64] {
        group.bench_with_input(BenchmarkId::new("p3", m), &m, |bch, &m| {
            bch.iter(|| mz_ratio_stats(m, 3.0, 50, 7).unwrap())
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let model = RateModel {
        family: RateFamily::ExpRate { mu: 0.5, r: 0.5, b: 0.25 },
        c: 1.0,
    };
    let mut ns: Vec<usize> = (3..=10).flat_map(|k| [1 << k, 3 << (k - 1)]).collect();
    ns.sort_unstable();
    let pts: Vec<(f64, f64)> = ns.iter().map(|&n| (n as f64, model.eval(n as f64))).collect();
    c.bench_function("fit_rate/exp16", |bch| bch.iter(|| fit_rate(black_box(&pts)).unwrap()));
}

criterion_group!(benches, bench_best_approx, bench_bruteforce, bench_mz, bench_fit);
criterion_main!(benches);
