use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use delayfront::domain::{trace_boundary_with, DomainParams};
use delayfront::model::{find_steady_states, ModelSpec};
use delayfront::pde::{simulate, SimConfig};
use delayfront::toy::{speed_curve_with, ToyParams};
use delayfront::Exec;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn domain_boundary(c: &mut Criterion) {
    let params = DomainParams::new(-1.0, -1.0).unwrap();
    let mut group = c.benchmark_group("trace_boundary_200");
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| trace_boundary_with(exec, black_box(&params), 6.0, 200).unwrap())
        });
    }
    group.finish();
}

fn toy_curve(c: &mut Criterion) {
    let params = ToyParams::new(1.0 / 3.0, 0.5, -1.0).unwrap();
    let taus: Vec<f64> = (0..=120).map(|k| 0.05 * k as f64).collect();
    let mut group = c.benchmark_group("toy_speed_curve_121");
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| speed_curve_with(exec, black_box(&params), &taus).unwrap())
        });
    }
    group.finish();
}

fn pde_steps(c: &mut Criterion) {
    let model = ModelSpec::nagumo(0.25).unwrap();
    let states = find_steady_states(&model).unwrap();
    let mut group = c.benchmark_group("pde_nagumo_tau1");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let mut cfg = SimConfig::new(1.0, 5.0);
        cfg.exec = exec;
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| simulate(&model, &states, black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, domain_boundary, toy_curve, pde_steps);
criterion_main!(benches);
