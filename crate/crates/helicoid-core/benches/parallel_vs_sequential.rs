use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use helicoid_core::dyadic::{whitney_collection, WhitneySpec};
use helicoid_core::exec::Exec;
use helicoid_core::exponents::LebesgueExponent;
use helicoid_core::gridfn::{GridFunction, Weight};
use helicoid_core::maximal::{maximal_table, CubeFamily};
use helicoid_core::model::ModelOperator;
use helicoid_core::testfns::gaussian_field;
use helicoid_core::wavepackets::Profile;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn model_form(c: &mut Criterion) {
    let j = 9;
    let spec = WhitneySpec { n: 2, k: 1, d: 1, a: vec![vec![1, -1]], j_res: j, scales: (-6, -1), box_bound: None, i0: 0 };
    let op = ModelOperator::new(whitney_collection(&spec).unwrap(), j, Profile::RaisedCosine).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fs: Vec<GridFunction> = (0..3).map(|_| gaussian_field(1, j, j, &mut rng)).collect();
    let all = op.all();
    let mut group = c.benchmark_group("model_form");
    for (name, exec) in POLICIES {
        let op = op.clone().with_exec(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| op.form(black_box(&fs), &all).unwrap()));
    }
    group.finish();
}

fn maximal(c: &mut Criterion) {
    let (d, j) = (2, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fs: Vec<GridFunction> = (0..2).map(|_| gaussian_field(d, j, j, &mut rng)).collect();
    let s = vec![LebesgueExponent::from_int(1), LebesgueExponent::from_int(2)];
    let family = CubeFamily::dyadic(d, j);
    let mut group = c.benchmark_group("maximal_table");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| maximal_table(exec, black_box(&fs), &s, &family, Weight::ChiTilde(20.0)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, model_form, maximal);
criterion_main!(benches);
