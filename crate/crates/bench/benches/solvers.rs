use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use treeshrink::{barycenter_lp, ibp_solve, mam_solve, IbpConfig, MamConfig};
use treeshrink_bench::random_problem;

fn barycenters(c: &mut Criterion) {
    let mut group = c.benchmark_group("barycenter");
    for &(m, r, s) in &[(4, 6, 6), (12, 2, 10), (12, 2, 100)] {
        let problem = random_problem(m, r, s, 7);
        let label = format!("{m}x{r}x{s}");
        group.bench_with_input(BenchmarkId::new("lp", &label), &problem, |b, p| b.iter(|| barycenter_lp(black_box(p)).unwrap()));
        group.bench_with_input(BenchmarkId::new("mam", &label), &problem, |b, p| {
            b.iter(|| mam_solve(black_box(p), &MamConfig::default(), None).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("ibp", &label), &problem, |b, p| {
            b.iter(|| ibp_solve(black_box(p), &IbpConfig::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, barycenters);
criterion_main!(benches);
