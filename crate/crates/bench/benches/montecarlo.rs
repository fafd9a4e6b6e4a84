use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use superres::simulate::{sample_direct_positions_stream, sample_mode_counts_stream};
use superres::{
    hermite_gauss_basis, make_gaussian_psf, ml_separation, two_point_scene, Grid, Measurement,
};

fn sampling(c: &mut Criterion) {
    let psf = make_gaussian_psf(0.5, Grid::default()).unwrap();
    let scene = two_point_scene(0.2).unwrap();
    let hg = Measurement::Modes(hermite_gauss_basis(&psf, 12).unwrap());
    let direct = Measurement::Direct {
        image_grid: *psf.grid(),
    };
    let g = hg.distribution(&scene, &psf).unwrap();
    let f = direct.distribution(&scene, &psf).unwrap();
    let mut stream = 0;
    c.bench_function("sample_modes_1e4", |b| {
        b.iter(|| {
            stream += 1;
            sample_mode_counts_stream(black_box(&g), 1e4, 1, stream).unwrap()
        })
    });
    c.bench_function("sample_positions_1e4", |b| {
        b.iter(|| {
            stream += 1;
            sample_direct_positions_stream(black_box(&f), 1e4, 1, stream).unwrap()
        })
    });
}

fn estimation(c: &mut Criterion) {
    let psf = make_gaussian_psf(0.5, Grid::default()).unwrap();
    let scene = two_point_scene(0.2).unwrap();
    let hg = Measurement::Modes(hermite_gauss_basis(&psf, 12).unwrap());
    let direct = Measurement::Direct {
        image_grid: *psf.grid(),
    };
    let counts =
        sample_mode_counts_stream(&hg.distribution(&scene, &psf).unwrap(), 1e4, 1, 0).unwrap();
    let positions =
        sample_direct_positions_stream(&direct.distribution(&scene, &psf).unwrap(), 1e4, 1, 0)
            .unwrap();
    let mut group = c.benchmark_group("ml_separation");
    group.sample_size(20);
    group.bench_function("spade", |b| {
        b.iter(|| ml_separation(black_box(&counts), &hg, &psf, (0.0, 1.0)).unwrap())
    });
    group.bench_function("direct", |b| {
        b.iter(|| ml_separation(black_box(&positions), &direct, &psf, (0.0, 1.0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, sampling, estimation);
criterion_main!(benches);
