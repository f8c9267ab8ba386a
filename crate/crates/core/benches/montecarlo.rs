//! Falling-cat batch on the rayon pool versus one thread.

use criterion::{criterion_group, criterion_main, Criterion};

use quatmpc::mpc::ControllerKind;
use quatmpc::par::{map_indexed, map_indexed_sequential};
use quatmpc::sim::{falling_cat_scenario, monte_carlo_with};

const TRIALS: usize = 8;

fn batch(c: &mut Criterion) {
    let base = falling_cat_scenario(ControllerKind::Quaternion);
    let mut group = c.benchmark_group("falling_cat_batch");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| monte_carlo_with(&base, TRIALS, ControllerKind::Quaternion, 0, |n, f| map_indexed(n, f)).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            monte_carlo_with(&base, TRIALS, ControllerKind::Quaternion, 0, |n, f| {
                map_indexed_sequential(n, f)
            })
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
