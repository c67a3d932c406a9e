use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use curvhom::exec::Exec;
use curvhom::models::standard_model;
use curvhom::stabilizer::{manifold_isometry_dims, stabilizer_dim};

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn stabilizer(c: &mut Criterion) {
    let mut group = c.benchmark_group("stabilizer_dim");
    group.sample_size(10);
    for (p, k) in [(2, 4), (3, 5)] {
        let m = standard_model(p, k).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, format!("p{p}k{k}")), &m, |b, m| {
                b.iter(|| stabilizer_dim(m, exec).unwrap().dim)
            });
        }
    }
    group.finish();
}

fn isometry_table(c: &mut Criterion) {
    let mut group = c.benchmark_group("isometry_dims");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "p3"), |b| {
            b.iter(|| manifold_isometry_dims(3, exec).unwrap().rows.len())
        });
    }
    group.finish();
}

criterion_group!(benches, stabilizer, isometry_table);
criterion_main!(benches);
