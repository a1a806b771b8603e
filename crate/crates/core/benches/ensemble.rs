use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coupled_otto::dynamics::SimConfig;
use coupled_otto::ensemble::{run_ensemble, EnsembleOptions};
use coupled_otto::exec::Exec;
use coupled_otto::hz;
use coupled_otto::model::{BathSpec, CoupledSystem, EngineKind};
use coupled_otto::protocol::Protocol;
use coupled_otto::spectra::{anticrossing_map, SpectrumConfig};

fn policies() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel { workers: None })]
}

fn ensemble(c: &mut Criterion) {
    let system = CoupledSystem::nominal();
    let bath = BathSpec::nominal();
    let protocol = Protocol::single_cylinder_default();
    let sim = SimConfig::default();
    let mut group = c.benchmark_group("ensemble_cycle");
    group.sample_size(10);
    for n in [16usize, 64] {
        for (name, exec) in policies() {
            let opts = EnsembleOptions { exec, ..EnsembleOptions::default() };
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| run_ensemble(&system, &protocol, &bath, &sim, n, &opts).unwrap())
            });
        }
    }
    group.finish();
}

fn spectrum_map(c: &mut Criterion) {
    let system = CoupledSystem::nominal();
    let bath = BathSpec::nominal();
    let cfg = SpectrumConfig { record_time: 8.0, ..SpectrumConfig::default() };
    let sim = SimConfig { dt: 1e-4, ..SimConfig::default() };
    let grid: Vec<f64> = (-4..=4).map(|k| hz(50.0 * k as f64)).collect();
    let mut group = c.benchmark_group("spectrum_map");
    group.sample_size(10);
    for (name, exec) in policies() {
        group.bench_function(name, |b| {
            b.iter(|| anticrossing_map(&system, EngineKind::SingleCylinder, &grid, &bath, &cfg, &sim, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble, spectrum_map);
criterion_main!(benches);
