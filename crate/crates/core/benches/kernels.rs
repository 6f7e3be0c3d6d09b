use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracneumann::mesh::build_interval_mesh;
use fracneumann::problem::{NonlinearitySpec, ReducedProblem};
use fracneumann::{assemble_with, AssemblyOptions, Exec, GridFunction, ProblemSpec};

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn bench_kernels(c: &mut Criterion) {
    let mesh = Arc::new(build_interval_mesh(-1.0, 1.0, 0.005, 10.0).unwrap());
    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = AssemblyOptions {
            exec,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::new("assemble", name), |b| {
            b.iter(|| assemble_with(Arc::clone(&mesh), 0.25, 0.1, opts).unwrap())
        });

        let op = assemble_with(Arc::clone(&mesh), 0.25, 0.1, opts).unwrap();
        let u = GridFunction::from_fn(&mesh, |x| (-x[0] * x[0]).exp());
        group.bench_function(BenchmarkId::new("frac_laplacian", name), |b| {
            b.iter(|| op.frac_laplacian(black_box(&u)).unwrap())
        });
        group.bench_function(BenchmarkId::new("reduced_stiffness", name), |b| {
            b.iter(|| op.reduced_stiffness())
        });

        let spec = ProblemSpec::new(op.clone(), NonlinearitySpec::power(3.0).unwrap()).unwrap();
        let red = ReducedProblem::new(spec);
        let path: Vec<Vec<f64>> = (0..33)
            .map(|k| {
                let t = k as f64 / 32.0;
                u.interior().iter().map(|v| 5.0 * t * v).collect()
            })
            .collect();
        group.bench_function(BenchmarkId::new("path_energies", name), |b| {
            b.iter(|| path.iter().map(|x| red.energy(black_box(x))).sum::<f64>())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_kernels);
criterion_main!(benches);
