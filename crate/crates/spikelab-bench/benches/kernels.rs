use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spikelab::gp2d::SpectralInterpolant;
use spikelab::linearized::assemble_l_with;
use spikelab::{find_critical_point, solve_townes_with, Grid2D, LinearOptions, PotentialSpec, RadialGrid, TownesOptions};
use spikelab_bench::{harmonic_problem, townes};
use std::hint::black_box;

fn radial(c: &mut Criterion) {
    let mut g = c.benchmark_group("radial");
    g.sample_size(10);
    g.bench_function("townes_dr0.005_R20", |b| {
        b.iter(|| solve_townes_with(RadialGrid::default(), &TownesOptions::default()).unwrap())
    });
    let t = townes();
    let tilted = PotentialSpec::tilted(0.05).unwrap();
    g.bench_function("critical_point_tilted", |b| b.iter(|| find_critical_point(black_box(&tilted), t).unwrap()));
    g.finish();
}

fn linear_operator(c: &mut Criterion) {
    let t = townes();
    let opts = LinearOptions { radius: 12.0, step: 0.1, ..LinearOptions::default() };
    let op = assemble_l_with(t, Grid2D::centered_smooth(opts.radius, opts.step).unwrap(), opts).unwrap();
    let mut g = c.benchmark_group("linearized");
    g.bench_function("apply_h0.1_R12", |b| b.iter(|| op.apply(black_box(&op.w))));
    g.sample_size(10);
    g.bench_function("solve_w_h0.1_R12", |b| b.iter(|| op.solve(black_box(&op.w), "w").unwrap()));
    g.finish();
}

fn gross_pitaevskii(c: &mut Criterion) {
    let mut g = c.benchmark_group("gp2d");
    for nodes in [256usize, 512] {
        let p = harmonic_problem(nodes, 0.9);
        let u = p.townes_seed(townes(), [0.0, 0.0]);
        g.bench_with_input(BenchmarkId::new("hamiltonian", nodes), &u, |b, u| b.iter(|| p.hamiltonian(black_box(&u.values))));
        g.bench_with_input(BenchmarkId::new("energy", nodes), &u, |b, u| b.iter(|| p.energy(black_box(&u.values))));
    }
    g.sample_size(10);
    let p = harmonic_problem(256, 0.9);
    g.bench_function("minimize_cg_256", |b| b.iter(|| p.minimize(townes()).unwrap()));
    let s = p.minimize(townes()).unwrap();
    let xs: Vec<f64> = (0..64).map(|i| -0.5 + i as f64 / 64.0).collect();
    g.bench_function("interpolant_sample_64x64", |b| {
        b.iter(|| SpectralInterpolant::new(&p, &s.field).sample(black_box(&xs), black_box(&xs)))
    });
    g.finish();
}

criterion_group!(benches, radial, linear_operator, gross_pitaevskii);
criterion_main!(benches);
