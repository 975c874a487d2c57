use criterion::{criterion_group, criterion_main, Criterion};
use personaload::loading::{loading_distribution, sample_personas, DEFAULT_LAMBDA};
use personaload::synth::{generate, SynthConfig};
use personaload::{seeding, EmbeddingParams};
use std::hint::black_box;

fn loading(c: &mut Criterion) {
    let pop = generate(&SynthConfig {
        personas_per_group: 125,
        ..Default::default()
    })
    .unwrap();
    let basis = pop.true_basis();
    let params = EmbeddingParams::random(1);
    let d = pop.bundle.test[0].demographics;
    c.bench_function("loading_distribution K=250", |b| {
        b.iter(|| loading_distribution(black_box(&d), &params, &basis, DEFAULT_LAMBDA).unwrap())
    });
    let dist = loading_distribution(&d, &params, &basis, DEFAULT_LAMBDA).unwrap();
    let mut rng = seeding::rng(0);
    c.bench_function("sample_personas L=40 of 250", |b| {
        b.iter(|| sample_personas(&dist, 40, &mut rng).unwrap())
    });
}

criterion_group!(benches, loading);
criterion_main!(benches);
