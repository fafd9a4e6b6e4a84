use superres::estimate::{
    even_moment_mse, gaussian_reference, monte_carlo, odd_moment_mse, EstimatorResult,
};
use superres::experiments::{self, ExperimentKind, ExperimentSpec};
use superres::information::ParamFamily;
use superres::scene::MomentVector;
use superres::simulate::{sample_direct_positions_stream, sample_mode_counts_stream, PhotonData};
use superres::{
    even_moment_estimator, fi_direct, fourier_coefficients, hermite_gauss_basis, ipad_pairs,
    make_gaussian_psf, ml_separation, mode_probabilities, odd_moment_estimator, pad_basis,
    reconstruct_object, two_point_scene, Grid, Measurement, ModeBasis, PointSource, Psf,
    SourceScene,
};

fn psf() -> Psf {
    make_gaussian_psf(0.5, Grid::default()).unwrap()
}

fn counts_for(basis: &ModeBasis, counts: Vec<u64>, photons: f64) -> PhotonData {
    let mut labels = basis.labels().to_vec();
    labels.push("residual".into());
    PhotonData {
        labels,
        counts,
        positions: Vec::new(),
        mean_photons: photons,
        seed: 0,
        stream: 0,
        model_hash: String::new(),
    }
}

#[test]
fn ml_separation_without_higher_mode_counts_is_zero() {
    let p = psf();
    let basis = hermite_gauss_basis(&p, 6).unwrap();
    let data = counts_for(&basis, vec![10_000, 0, 0, 0, 0, 0, 0], 1e4);
    let est = ml_separation(&data, &Measurement::Modes(basis), &p, (0.0, 2.0)).unwrap();
    assert!(est.estimate < 1e-5, "{}", est.estimate);
}

#[test]
fn ml_separation_bounds_checked() {
    let p = psf();
    let basis = hermite_gauss_basis(&p, 6).unwrap();
    let data = counts_for(&basis, vec![100, 1, 0, 0, 0, 0, 0], 100.0);
    let m = Measurement::Modes(basis);
    assert!(ml_separation(&data, &m, &p, (-1.0, 2.0)).is_err());
    assert!(ml_separation(&data, &m, &p, (2.0, 1.0)).is_err());
}

#[test]
fn direct_ml_error_tracks_its_bound() {
    let p = psf();
    let theta = 0.5;
    let photons = 1e4;
    let m = Measurement::Direct {
        image_grid: *p.grid(),
    };
    let dist = m
        .distribution(&two_point_scene(theta).unwrap(), &p)
        .unwrap();
    let result = monte_carlo(vec!["separation".into()], vec![theta], 1000, |t| {
        let data = sample_direct_positions_stream(&dist, photons, 21, t)?;
        Ok(vec![ml_separation(&data, &m, &p, (0.0, 1.5))?.estimate])
    })
    .unwrap();
    let fi = fi_direct(&ParamFamily::two_point_separation(), &p, &[theta], p.grid())
        .unwrap()
        .scalar();
    let ratio = result.mse[0] * photons * fi;
    assert!((0.8..=3.0).contains(&ratio), "mse/crb = {ratio}");
}

fn spade_ml_mse(theta: f64, photons: f64, seed: u64) -> f64 {
    let p = psf();
    let basis = hermite_gauss_basis(&p, 12).unwrap();
    let m = Measurement::Modes(basis.clone());
    let dist = mode_probabilities(&basis, &two_point_scene(theta.max(1e-9)).unwrap(), &p).unwrap();
    monte_carlo(vec!["separation".into()], vec![theta], 200, |t| {
        let data = sample_mode_counts_stream(&dist, photons, seed, t)?;
        Ok(vec![ml_separation(&data, &m, &p, (0.0, 1.0))?.estimate])
    })
    .unwrap()
    .mse[0]
}

#[test]
fn spade_ml_error_vanishes_at_zero_separation() {
    let mut previous = f64::INFINITY;
    for photons in [1e2, 1e3, 1e4] {
        let mse = spade_ml_mse(0.0, photons, 22);
        assert!(mse.is_finite() && mse <= previous, "N = {photons}: {mse}");
        previous = mse;
    }
    let mut previous = f64::INFINITY;
    for photons in [1e2, 1e3, 1e4] {
        let mse = spade_ml_mse(0.05, photons, 26);
        assert!(
            mse.is_finite() && mse < previous,
            "θ = 0.05, N = {photons}: {mse}"
        );
        previous = mse;
    }
}

#[test]
fn moment_estimators_vanish_on_empty_or_balanced_counts() {
    let p = psf();
    let pad = pad_basis(&p, 3).unwrap();
    let data = counts_for(&pad, vec![100, 0, 0, 0, 0], 100.0);
    assert_eq!(even_moment_estimator(&data, &pad, 100.0, 1).unwrap(), 0.0);
    let pair = ipad_pairs(&pad, 1).unwrap();
    let data = counts_for(&pair, vec![40, 40, 20], 100.0);
    assert_eq!(odd_moment_estimator(&data, &pair, 100.0, 1).unwrap(), 0.0);
    // The iPAD pair measures only its own odd moment.
    assert!(odd_moment_estimator(&data, &pair, 100.0, 0).is_err());
    assert!(even_moment_estimator(&data, &pair, 100.0, 1).is_err());
}

#[test]
fn even_moment_estimator_unbiased_on_uniform_object() {
    let p = psf();
    let delta = 0.1;
    let photons = 1e6;
    let scene = SourceScene::uniform(delta, 401).unwrap();
    let truth = scene.moments(4)[2];
    assert!((truth - delta * delta / 3.0).abs() < 1e-10);
    let pad = pad_basis(&p, 2).unwrap();
    let dist = mode_probabilities(&pad, &scene, &p).unwrap();
    let result = monte_carlo(vec!["theta2".into()], vec![truth], 1000, |t| {
        let data = sample_mode_counts_stream(&dist, photons, 23, t)?;
        Ok(vec![even_moment_estimator(&data, &pad, photons, 1)?])
    })
    .unwrap();
    let se = result.standard_error(0);
    // Leading-order unbiased: the residual bias is the O(Δ⁴) part of g_1.
    assert!(result.bias[0].abs() <= (0.02 * truth).max(3.0 * se));
    let c1 = pad.constant(1).unwrap();
    let expected = dist.probabilities()[1] / (c1 * c1);
    assert!((result.mean[0] - expected).abs() < 3.0 * se);
    let predicted = even_moment_mse(truth, pad.constant(1).unwrap(), photons);
    assert!((result.mse[0] / predicted - 1.0).abs() < 0.2);
}

#[test]
fn odd_moment_estimator_on_asymmetric_pair() {
    let p = psf();
    let photons = 1e7;
    let scene = SourceScene::points(vec![
        PointSource {
            position: -0.02,
            weight: 0.3,
        },
        PointSource {
            position: 0.06,
            weight: 0.7,
        },
    ])
    .unwrap();
    let m = scene.moments(4);
    let pad = pad_basis(&p, 3).unwrap();
    let pair = ipad_pairs(&pad, 1).unwrap();
    let dist = mode_probabilities(&pair, &scene, &p).unwrap();
    let result = monte_carlo(vec!["theta3".into()], vec![m[3]], 1000, |t| {
        let data = sample_mode_counts_stream(&dist, photons, 24, t)?;
        Ok(vec![odd_moment_estimator(&data, &pair, photons, 1)?])
    })
    .unwrap();
    let se = result.standard_error(0);
    assert!(
        result.bias[0].abs() < 3.0 * se,
        "bias {} se {se}",
        result.bias[0]
    );
    let predicted = odd_moment_mse(
        m[2],
        m[4],
        pad.constant(1).unwrap(),
        pad.constant(2).unwrap(),
        photons,
    );
    assert!((result.mse[0] / predicted - 1.0).abs() < 0.3);
}

#[test]
fn spade_beats_direct_bound_for_second_moment() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Moments);
    spec.delta = vec![0.05];
    spec.orders = vec![1, 2];
    spec.photons = vec![1e6];
    spec.trials = 1000;
    spec.seed = 25;
    let table = experiments::run_moment_scaling(&spec).unwrap().table;
    let second = table.filter("order", "2").unwrap();
    let spade = second
        .filter("scheme", "spade")
        .unwrap()
        .numeric_column("empirical_mse")
        .unwrap()[0];
    let direct = second
        .filter("scheme", "direct")
        .unwrap()
        .numeric_column("predicted_mse")
        .unwrap()[0];
    assert!(
        direct / spade >= 10.0,
        "spade {spade} direct bound {direct}"
    );
}

#[test]
fn estimator_result_exports() {
    let r = EstimatorResult::from_trials(
        vec!["a".into(), "b".into()],
        vec![1.0, 2.0],
        vec![vec![1.0, 2.5], vec![3.0, 1.5]],
    )
    .unwrap();
    assert_eq!(r.mean, vec![2.0, 2.0]);
    assert_eq!(r.bias, vec![1.0, 0.0]);
    assert_eq!(r.mse, vec![2.0, 0.25]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.csv");
    r.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("trial,a,b"));
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(json["trials"], 2);
    assert!(EstimatorResult::from_trials(vec!["a".into()], vec![1.0], vec![]).is_err());
}

fn reference_model(
    moments: &MomentVector,
    std: f64,
    order: usize,
) -> (Grid, superres::FourierModel) {
    let grid = Grid::symmetric(6.0 * std.max(0.05), 801).unwrap();
    let g = gaussian_reference(&grid, 0.0, std).unwrap();
    let model = fourier_coefficients(moments, grid, &g, order).unwrap();
    (grid, model)
}

#[test]
fn point_at_origin_gives_first_column_of_h() {
    let moments = SourceScene::single_point(0.0).unwrap().moments(6);
    let (_, model) = reference_model(&moments, 0.2, 6);
    let h = model.h_matrix();
    for (mu, c) in model.coefficients().iter().enumerate() {
        assert!((c - h[mu][0]).abs() < 1e-12);
    }
}

#[test]
fn order_zero_reconstruction_is_the_reference() {
    let moments = two_point_scene(0.3).unwrap().moments(4);
    let (grid, model) = reference_model(&moments, 0.15, 4);
    let flat = reconstruct_object(&model.truncated(0), &grid, false).unwrap();
    let g = model.reference();
    let scale = flat[400] / g[400];
    for (f, r) in flat.iter().zip(g) {
        assert!((f - scale * r).abs() < 1e-12 * scale.abs().max(1.0));
    }
}

#[test]
fn uniform_reconstruction_improves_with_order() {
    let delta = 0.1;
    let scene = SourceScene::uniform(delta, 401).unwrap();
    let moments = scene.moments(6);
    let std = (moments[2]).sqrt();
    let (grid, model) = reference_model(&moments, std, 6);
    let truth: Vec<f64> = grid
        .points()
        .iter()
        .map(|x| if x.abs() <= delta { 0.5 / delta } else { 0.0 })
        .collect();
    let l1 = |order: usize| {
        let f = reconstruct_object(&model.truncated(order), &grid, false).unwrap();
        let diff: Vec<f64> = f.iter().zip(&truth).map(|(a, b)| (a - b).abs()).collect();
        grid.integrate(&diff)
    };
    let (low, high) = (l1(2), l1(6));
    assert!(high < low, "order 6 {high} vs order 2 {low}");
}

#[test]
fn two_point_reconstruction_peaks_at_sources() {
    let moments = two_point_scene(0.3).unwrap().moments(8);
    let (grid, model) = reference_model(&moments, 0.15, 8);
    let f = reconstruct_object(&model, &grid, false).unwrap();
    let xs = grid.points();
    let mut maxima: Vec<(f64, f64)> = (1..f.len() - 1)
        .filter(|&i| f[i] > f[i - 1] && f[i] >= f[i + 1])
        .map(|i| (f[i], xs[i]))
        .collect();
    maxima.sort_by(|a, b| b.0.total_cmp(&a.0));
    assert!(maxima.len() >= 2);
    let mut peaks = [maxima[0].1, maxima[1].1];
    peaks.sort_by(f64::total_cmp);
    assert!((peaks[0] + 0.15).abs() < 0.05, "{peaks:?}");
    assert!((peaks[1] - 0.15).abs() < 0.05, "{peaks:?}");
}

#[test]
fn clipped_reconstruction_is_a_density() {
    let moments = two_point_scene(0.3).unwrap().moments(8);
    let (grid, model) = reference_model(&moments, 0.15, 8);
    let f = reconstruct_object(&model, &grid, true).unwrap();
    assert!(f.iter().all(|v| *v >= 0.0));
    assert!((grid.integrate(&f) - 1.0).abs() < 1e-9);
}

#[test]
fn fourier_coefficients_need_enough_moments() {
    let moments = two_point_scene(0.3).unwrap().moments(2);
    let grid = Grid::symmetric(1.0, 201).unwrap();
    let g = gaussian_reference(&grid, 0.0, 0.15).unwrap();
    assert!(fourier_coefficients(&moments, grid, &g, 4).is_err());
    assert!(gaussian_reference(&grid, 0.0, 0.0).is_err());
}
