use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use superres::{
    fi_direct, fi_modes, helstrom_onephoton, hermite_gauss_basis, make_gaussian_psf, pad_basis,
    Grid, ParamFamily,
};

fn bases(c: &mut Criterion) {
    let psf = make_gaussian_psf(0.5, Grid::default()).unwrap();
    let mut group = c.benchmark_group("basis");
    for order in [4, 8, 12] {
        group.bench_with_input(BenchmarkId::new("pad", order), &order, |b, &q| {
            b.iter(|| pad_basis(black_box(&psf), q).unwrap())
        });
    }
    group.finish();
}

fn information(c: &mut Criterion) {
    let psf = make_gaussian_psf(0.5, Grid::default()).unwrap();
    let family = ParamFamily::two_point_separation();
    let hg = hermite_gauss_basis(&psf, 12).unwrap();
    let mut group = c.benchmark_group("separation");
    group.sample_size(20);
    group.bench_function("fi_direct", |b| {
        b.iter(|| fi_direct(&family, &psf, black_box(&[0.2]), psf.grid()).unwrap())
    });
    group.bench_function("fi_spade", |b| {
        b.iter(|| fi_modes(&family, &hg, &psf, black_box(&[0.2])).unwrap())
    });
    group.bench_function("helstrom_t16", |b| {
        b.iter(|| helstrom_onephoton(&family, &psf, black_box(&[0.2]), 16).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bases, information);
criterion_main!(benches);
