use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use v2g_core::{forecast_all, generate, local_solve, prepare_agents, run, LocalProblem, RateBounds, SynthParams};

fn local(c: &mut Criterion) {
    let mut group = c.benchmark_group("local_solve");
    for slots in [8usize, 60, 288] {
        let bounds = RateBounds::from_mask((0..slots).map(|t| t % 7 != 0).collect(), 6.6, -6.6).unwrap();
        let control: Vec<f64> = (0..slots).map(|t| (t as f64 * 0.37).sin()).collect();
        let prev = vec![0.0; slots];
        let energy = 0.3 * bounds.energy_capacity(0.2).1;
        group.bench_with_input(BenchmarkId::from_parameter(slots), &slots, |b, _| {
            b.iter(|| {
                local_solve(black_box(&LocalProblem {
                    control: &control,
                    prev_profile: &prev,
                    bounds: &bounds,
                    energy_kwh: energy,
                    dt_hours: 0.2,
                }))
                .unwrap()
            })
        });
    }
    group.finish();
}

fn fleet(c: &mut Criterion) {
    let mut group = c.benchmark_group("run");
    group.sample_size(20);
    for users in [30usize, 200] {
        let inst = generate(&SynthParams::with_shape(1, users, 60)).unwrap();
        let forecasts: Vec<_> = forecast_all(&inst.sessions)
            .into_iter()
            .map(|r| r.unwrap().forecast().clone())
            .collect();
        let (agents, _) = prepare_agents(&inst.grid, &inst.fleet, &forecasts).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(users), &users, |b, _| {
            b.iter(|| run(&inst.baseload, agents.clone(), &inst.grid, &inst.run).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, local, fleet);
criterion_main!(benches);
