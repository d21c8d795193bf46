use criterion::{black_box, criterion_group, criterion_main, Criterion};
use polyloc_bench::binary_charges;
use polyloc_core::cocycle::{cocycle_free_energy, CocycleSpec};
use polyloc_core::deloc::find_stretch;
use polyloc_core::periodic::{build_kernel, free_energy};
use polyloc_core::transfer::pinned_log_z;
use polyloc_core::{ChargeLaw, Environment, Params, PeriodicModel, WalkSpec, Window};

fn transfer(c: &mut Criterion) {
    let charges = binary_charges(20_000);
    let params = Params::new(0.6, 0.44);
    c.bench_function("pinned_log_z/2M=2e4/standard", |b| {
        b.iter(|| pinned_log_z(black_box(&charges), params, 20_000, Window::standard()).unwrap())
    });
    c.bench_function("pinned_log_z/2M=2e3/full", |b| b.iter(|| pinned_log_z(black_box(&charges), params, 2_000, Window::Full).unwrap()));
}

fn stretch(c: &mut Criterion) {
    let env = Environment::random(ChargeLaw::BinarySymmetric, 3, 0);
    c.bench_function("find_stretch/q=-0.5/M=20", |b| b.iter(|| find_stretch(black_box(&env), -0.5, 20, 1 << 30).unwrap()));
}

fn periodic(c: &mut Criterion) {
    let walk = WalkSpec::triple(0.3).unwrap();
    let model = PeriodicModel::copolymer(&[1.0, -1.0], 0.5, 0.0, walk).unwrap();
    c.bench_function("build_kernel/T=2/x_cut=1e4", |b| b.iter(|| build_kernel(black_box(&model), 10_000).unwrap()));
    let kernel = build_kernel(&model, 10_000).unwrap();
    c.bench_function("free_energy/T=2", |b| b.iter(|| free_energy(black_box(&kernel)).unwrap()));
}

fn cocycle(c: &mut Criterion) {
    let raw: Vec<f64> = (0..81).map(|i| ((i * 37 % 17) as f64 - 8.0) / 8.0).collect();
    let (alphabet, nu) = (vec![0.0, 1.0, 2.0], vec![0.2, 0.3, 0.5]);
    let mean = CocycleSpec { alphabet: alphabet.clone(), nu: nu.clone(), k: 3, f: raw.clone() }.mean();
    let spec = CocycleSpec::new(alphabet, nu, 3, raw.iter().map(|x| x - mean).collect()).unwrap();
    c.bench_function("cocycle_free_energy/q=3/k=3", |b| b.iter(|| cocycle_free_energy(black_box(&spec), 1.0).unwrap()));
}

criterion_group!(benches, transfer, stretch, periodic, cocycle);
criterion_main!(benches);
