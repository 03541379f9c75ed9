use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fdr_threshold::simulation::{run_study, SimConfig};
use fdr_threshold::{AlternativeModel, MixtureModel, ProcedureSpec};

fn study(c: &mut Criterion) {
    let model = MixtureModel::new(0.8, AlternativeModel::gaussian(2.0).unwrap()).unwrap();
    let specs = vec![
        ProcedureSpec::bh95(0.1).unwrap(),
        ProcedureSpec::sto02(0.1, 0.5).unwrap(),
        ProcedureSpec::bky06(0.1, None).unwrap(),
    ];
    let mut group = c.benchmark_group("run_study");
    group.sample_size(10);
    for m in [1_000usize, 10_000] {
        let cfg = SimConfig::new(model, specs.clone(), vec![m], 64, 1);
        // workers = 1 takes the sequential path; 0 uses the default rayon pool.
        group.bench_with_input(BenchmarkId::new("sequential", m), &cfg, |b, cfg| {
            b.iter(|| run_study(black_box(cfg), 1).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", m), &cfg, |b, cfg| {
            b.iter(|| run_study(black_box(cfg), 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, study);
criterion_main!(benches);
