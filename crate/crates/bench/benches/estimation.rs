use criterion::{criterion_group, criterion_main, Criterion};
use personaload::baselines::mnl_fit;
use personaload::em::{e_step, m_step, MStepConfig};
use personaload::interpret::{kmeans, ProfileEmbeddingTable};
use personaload::loading::DEFAULT_LAMBDA;
use personaload::oracle::{SyntheticOracle, SyntheticOracleParams};
use personaload::synth::{generate, SynthConfig};
use personaload::{EmbeddingParams, SocioDemographics};

fn estimation(c: &mut Criterion) {
    let pop = generate(&SynthConfig::default()).unwrap();
    let basis = pop.true_basis();
    let oracle = SyntheticOracle::new(SyntheticOracleParams::default()).unwrap();
    let general = &pop.bundle.general;
    let params = EmbeddingParams::random(0);

    c.bench_function("e_step N=200 L=5", |b| {
        b.iter(|| e_step(&params, general, &basis, 5, &oracle, DEFAULT_LAMBDA, 0.5, 0, 1).unwrap())
    });
    let e = e_step(&params, general, &basis, 5, &oracle, DEFAULT_LAMBDA, 0.5, 0, 1).unwrap();
    c.bench_function("m_step N=200 L=5", |b| {
        b.iter(|| {
            m_step(
                &e,
                general,
                &basis,
                &params,
                DEFAULT_LAMBDA,
                0.4,
                &MStepConfig::default(),
            )
            .unwrap()
        })
    });

    let records: Vec<_> = pop.bundle.test.iter().chain(general).cloned().collect();
    c.bench_function("mnl_fit 600 records", |b| b.iter(|| mnl_fit(&records, true).unwrap()));

    let table = ProfileEmbeddingTable::from_profiles(&SocioDemographics::all_profiles(), &params);
    let points = table.normalized();
    c.bench_function("kmeans k=6 on 60 profiles", |b| {
        b.iter(|| kmeans(&points, 6, 0, 10).unwrap())
    });
}

criterion_group!(benches, estimation);
criterion_main!(benches);
