use statrs::distribution::{ChiSquared, ContinuousCDF};
use superres::modes::OutcomeDistribution;
use superres::simulate::{
    sample_direct_positions_stream, sample_mode_counts_stream, sample_thermal_mode_counts_stream,
};
use superres::{
    make_gaussian_psf, sample_direct_positions, sample_mode_counts, sample_thermal_mode_counts,
    Grid, Measurement, SourceScene,
};

fn two_outcomes(p: f64) -> OutcomeDistribution {
    OutcomeDistribution::discrete(vec!["a".into(), "b".into()], vec![1.0 - p, p]).unwrap()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn chi2_critical(df: usize) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(0.99)
}

#[test]
fn zero_photons_give_empty_data() {
    let dist = two_outcomes(0.1);
    assert_eq!(sample_mode_counts(&dist, 0.0, 1).unwrap().total(), 0);
    let psf = make_gaussian_psf(0.5, Grid::default()).unwrap();
    let image = Measurement::Direct {
        image_grid: *psf.grid(),
    }
    .distribution(&SourceScene::single_point(0.0).unwrap(), &psf)
    .unwrap();
    assert!(sample_direct_positions(&image, 0.0, 1)
        .unwrap()
        .positions
        .is_empty());
    assert_eq!(
        sample_thermal_mode_counts(&dist, 0.0, 1_000_000, 1, false)
            .unwrap()
            .total(),
        0
    );
}

#[test]
fn negative_photon_number_rejected() {
    assert!(sample_mode_counts(&two_outcomes(0.1), -1.0, 1).is_err());
    assert!(sample_mode_counts(&two_outcomes(0.1), f64::NAN, 1).is_err());
}

#[test]
fn poisson_means_match() {
    let dist = two_outcomes(0.1);
    let n = 1e6;
    for (q, g) in [0.9, 0.1].iter().enumerate() {
        let counts: Vec<f64> = (0..1000)
            .map(|t| sample_mode_counts_stream(&dist, n, 3, t).unwrap().counts[q] as f64)
            .collect();
        let (m, _) = mean_var(&counts);
        let se = (n * g / 1000.0).sqrt();
        assert!((m - n * g).abs() < 3.0 * se, "outcome {q}: mean {m}");
    }
}

#[test]
fn poisson_index_of_dispersion() {
    let dist = two_outcomes(0.5);
    let counts: Vec<Vec<u64>> = (0..10_000)
        .map(|t| {
            sample_mode_counts_stream(&dist, 200.0, 4, t)
                .unwrap()
                .counts
        })
        .collect();
    for q in 0..2 {
        let x: Vec<f64> = counts.iter().map(|c| c[q] as f64).collect();
        let (m, v) = mean_var(&x);
        let ratio = v / m;
        assert!((0.95..=1.05).contains(&ratio), "outcome {q}: {ratio}");
    }
}

#[test]
fn centred_source_positions_have_psf_variance() {
    let psf = make_gaussian_psf(0.5, Grid::default()).unwrap();
    let image = Measurement::Direct {
        image_grid: *psf.grid(),
    }
    .distribution(&SourceScene::single_point(0.0).unwrap(), &psf)
    .unwrap();
    let data = sample_direct_positions(&image, 1e5, 5).unwrap();
    let (_, v) = mean_var(&data.positions);
    let n = data.positions.len() as f64;
    // |ψ|² is normal with variance σ²; pixel smoothing adds dx²/12.
    let want = 0.25 + psf.grid().spacing().powi(2) / 12.0;
    let se = want * (2.0 / n).sqrt();
    assert!((v - want).abs() < 3.0 * se, "variance {v}");
}

#[test]
fn position_histogram_fits_image_density() {
    let psf = make_gaussian_psf(0.5, Grid::default()).unwrap();
    let scene = superres::two_point_scene(0.8).unwrap();
    let image = Measurement::Direct {
        image_grid: *psf.grid(),
    }
    .distribution(&scene, &psf)
    .unwrap();
    let data = sample_direct_positions_stream(&image, 1e5, 6, 0).unwrap();
    let total = data.positions.len() as f64;
    let (grid, density) = image.density().unwrap();
    let dx = grid.spacing();
    // Bins of 0.1 on [-2, 2] plus two tail bins; pixel masses land in the
    // bin holding the pixel centre.
    let edges: Vec<f64> = (0..=40).map(|i| -2.0 + 0.1 * i as f64).collect();
    let bin_of = |x: f64| edges.iter().take_while(|e| **e <= x).count();
    let mut expected = vec![0.0; edges.len() + 1];
    for (i, f) in density.iter().enumerate() {
        expected[bin_of(grid.point(i))] += f * dx;
    }
    let mass: f64 = expected.iter().sum();
    let mut observed = vec![0.0; edges.len() + 1];
    for &x in &data.positions {
        let i = grid.nearest(x);
        observed[bin_of(grid.point(i))] += 1.0;
    }
    let mut chi2 = 0.0;
    let mut df = 0;
    for (o, e) in observed.iter().zip(&expected) {
        let e = e / mass * total;
        if e >= 5.0 {
            chi2 += (o - e).powi(2) / e;
            df += 1;
        }
    }
    assert!(
        chi2 < chi2_critical(df - 1),
        "chi2 {chi2} on {} dof",
        df - 1
    );
}

#[test]
fn thermal_total_follows_photon_number() {
    let dist = two_outcomes(0.3);
    let data = sample_thermal_mode_counts(&dist, 1e-3, 1_000_000, 7, false).unwrap();
    let n = 1000.0;
    assert!((data.total() as f64 - n).abs() < 3.0 * n.sqrt());
    assert_eq!(data.mean_photons, n);
}

#[test]
fn thermal_fractions_converge() {
    let dist = OutcomeDistribution::discrete(
        vec!["a".into(), "b".into(), "c".into()],
        vec![0.6, 0.3, 0.05],
    )
    .unwrap();
    let data = sample_thermal_mode_counts(&dist, 0.01, 10_000_000, 8, true).unwrap();
    let total = data.total() as f64;
    for (q, g) in dist.with_residual().iter().enumerate() {
        let f = data.counts[q] as f64 / total;
        let se = (g * (1.0 - g) / total).sqrt();
        assert!((f - g).abs() < 3.0 * se, "outcome {q}: {f} vs {g}");
    }
}

#[test]
fn thermal_epsilon_out_of_range_rejected() {
    let dist = two_outcomes(0.3);
    assert!(sample_thermal_mode_counts(&dist, 0.5, 10, 1, false).is_err());
    assert!(sample_thermal_mode_counts(&dist, -0.1, 10, 1, false).is_err());
}

#[test]
fn thermal_counts_approach_poisson_counts() {
    let dist = two_outcomes(0.3);
    let trials = 10_000;
    let thermal: Vec<u64> = (0..trials)
        .map(|t| {
            sample_thermal_mode_counts_stream(&dist, 1e-3, 1_000_000, 9, t, false)
                .unwrap()
                .counts[1]
        })
        .collect();
    let poisson: Vec<u64> = (0..trials)
        .map(|t| {
            sample_mode_counts_stream(&dist, 1000.0, 10, t)
                .unwrap()
                .counts[1]
        })
        .collect();
    // Bins of width 5 over 250..350 plus both tails.
    let bin = |c: u64| ((c.clamp(245, 354) - 245) / 5) as usize;
    let mut r = [0.0f64; 22];
    let mut s = [0.0f64; 22];
    thermal.iter().for_each(|&c| r[bin(c)] += 1.0);
    poisson.iter().for_each(|&c| s[bin(c)] += 1.0);
    let chi2: f64 = r
        .iter()
        .zip(&s)
        .filter(|(a, b)| *a + *b > 0.0)
        .map(|(a, b)| (a - b).powi(2) / (a + b))
        .sum();
    assert!(chi2 < chi2_critical(21), "two-sample chi2 {chi2}");
}

#[test]
fn photon_data_exports() {
    let data = sample_mode_counts(&two_outcomes(0.2), 100.0, 11).unwrap();
    let json = data.to_json().unwrap();
    assert!(json.contains("\"model_hash\""));
    let psf = make_gaussian_psf(0.5, Grid::default()).unwrap();
    let image = Measurement::Direct {
        image_grid: *psf.grid(),
    }
    .distribution(&SourceScene::single_point(0.0).unwrap(), &psf)
    .unwrap();
    let positions = sample_direct_positions(&image, 50.0, 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("positions.csv");
    positions.write_positions_csv(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().next(), Some("x"));
    assert_eq!(text.lines().count(), positions.positions.len() + 1);
    let binned = positions.binned(psf.grid());
    assert_eq!(
        binned.iter().sum::<u64>() as usize,
        positions.positions.len()
    );
}
