use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::{s, Array2};
use xmold_core::cause::select_background;
use xmold_core::doe::{build_ccd, replicate, stratified_split, table3_factors, CcdMode};
use xmold_core::explain::{default_grids, h_report, ice_impact_batch, shap_exact, shap_permutation};
use xmold_core::models::{fit_forest, ForestModel, ForestParams};
use xmold_core::{Predictor, Response, Surrogate, SurrogateParams};

struct Fixture {
    forest: ForestModel,
    train: Array2<f64>,
    test: Array2<f64>,
}

fn fixture() -> Fixture {
    let factors = table3_factors();
    let design = replicate(&build_ccd(&factors, CcdMode::Table3).unwrap(), 20, 1).unwrap();
    let data = Surrogate::new(&factors, SurrogateParams::default_params())
        .unwrap()
        .simulate(&design, 2)
        .unwrap();
    let split = stratified_split(&data, [0.6, 0.1, 0.3], 3).unwrap();
    let y = split.train.response(Response::Weight).unwrap();
    let forest = fit_forest(
        split.train.points(),
        y,
        &ForestParams {
            seed: 4,
            ..ForestParams::default()
        },
    )
    .unwrap();
    Fixture {
        forest,
        train: split.train.points().to_owned(),
        test: split.test.points().to_owned(),
    }
}

fn bench_forest(c: &mut Criterion, f: &Fixture) {
    let mut rows = f.test.clone();
    while rows.nrows() < 2048 {
        rows = ndarray::concatenate![ndarray::Axis(0), rows, f.test];
    }
    let rows = rows.slice(s![..2048, ..]).to_owned();
    c.bench_function("forest_predict_2048", |b| {
        b.iter(|| f.forest.predict(rows.view()).unwrap())
    });
}

fn bench_shap(c: &mut Criterion, f: &Fixture) {
    let x = f.test.row(0);
    let mut group = c.benchmark_group("shap_one_instance");
    group.sample_size(10);
    for p in [8, 128, 720] {
        group.bench_with_input(BenchmarkId::new("permutation", p), &p, |b, &p| {
            b.iter(|| shap_permutation(&f.forest, x, f.train.view(), p, 9).unwrap())
        });
    }
    group.bench_function("exact", |b| {
        b.iter(|| shap_exact(&f.forest, x, f.train.view()).unwrap())
    });
    let small = select_background(f.train.view(), Some(100), 5);
    group.bench_function("permutation_128_background_100", |b| {
        b.iter(|| shap_permutation(&f.forest, x, small.view(), 128, 9).unwrap())
    });
    group.finish();
}

fn bench_ice_and_h(c: &mut Criterion, f: &Fixture) {
    let grids = default_grids(&table3_factors());
    let sample = f.test.slice(s![..100, ..]);
    let mut group = c.benchmark_group("curves");
    group.sample_size(10);
    group.bench_function("ice_impact_100", |b| {
        b.iter(|| ice_impact_batch(&f.forest, sample, &grids).unwrap())
    });
    group.bench_function("h_report_100", |b| b.iter(|| h_report(&f.forest, sample).unwrap()));
    group.finish();
}

fn benches(c: &mut Criterion) {
    let f = fixture();
    bench_forest(c, &f);
    bench_shap(c, &f);
    bench_ice_and_h(c, &f);
}

criterion_group!(explainers, benches);
criterion_main!(explainers);
