use superres::experiments::{
    self, info, plot_svg, replay_manifest, run_to_dir, PlotOptions, PsfChoice, PsfSpec, SceneSpec,
};
use superres::{Error, ExperimentKind, ExperimentSpec, Manifest, Table};

fn sweep_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(ExperimentKind::FisherSweep);
    spec.theta = vec![0.01, 0.05, 0.2, 0.5, 1.0, 2.0, 5.0];
    spec
}

fn invalid_key(e: Error) -> String {
    match e {
        Error::InvalidInput { key, .. } => key,
        other => panic!("expected an input error, got {other}"),
    }
}

#[test]
fn fisher_sweep_curves() {
    let mut spec = sweep_spec();
    spec.measurements = vec![
        "direct".into(),
        "hermite-gauss".into(),
        "sliver".into(),
        "pad".into(),
    ];
    let table = experiments::run_fisher_sweep(&spec).unwrap();
    assert_eq!(
        table.columns,
        vec![
            "theta",
            "fi_direct",
            "fi_spade",
            "fi_sliver",
            "fi_pad",
            "hi"
        ]
    );
    let hi = table.numeric_column("hi").unwrap();
    let direct = table.numeric_column("fi_direct").unwrap();
    let spade = table.numeric_column("fi_spade").unwrap();
    assert!(direct[0] / hi[0] < 1e-3);
    assert!(direct[6] / hi[6] > 0.99);
    for col in ["fi_direct", "fi_spade", "fi_sliver", "fi_pad"] {
        for (f, h) in table.numeric_column(col).unwrap().iter().zip(&hi) {
            assert!(*f <= h * (1.0 + 1e-6), "{col}: {f} > {h}");
        }
    }
    for (f, h) in spade.iter().zip(&hi) {
        assert!((0.98..=1.0 + 1e-6).contains(&(f / h)));
    }
}

#[test]
fn mse_spade_below_direct_and_direct_near_bound() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Mse);
    spec.theta = vec![0.1, 2.0];
    spec.photons = vec![1e4];
    spec.measurements = vec!["hermite-gauss".into(), "direct".into()];
    spec.trials = 1000;
    spec.bounds = Some([0.0, 4.0]);
    spec.seed = 31;
    let table = experiments::run_mse_montecarlo(&spec).unwrap();
    let small = table
        .filter("theta", &experiments::format_value(0.1))
        .unwrap();
    let mse = small.numeric_column("mse").unwrap();
    assert!(mse[0] < mse[1], "spade {} direct {}", mse[0], mse[1]);
    let wide = table
        .filter("theta", &experiments::format_value(2.0))
        .unwrap();
    let direct = wide.filter("scheme", "direct").unwrap();
    let ratio = direct.numeric_column("mse").unwrap()[0] / direct.numeric_column("crb").unwrap()[0];
    assert!(ratio <= 3.0, "mse/crb = {ratio}");
}

#[test]
fn seeded_runs_are_byte_identical() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Mse);
    spec.theta = vec![0.3];
    spec.photons = vec![1e3];
    spec.measurements = vec!["hermite-gauss".into(), "sliver".into()];
    spec.trials = 50;
    spec.seed = 32;
    let a = experiments::run(&spec).unwrap().table.to_csv().unwrap();
    let b = experiments::run(&spec).unwrap().table.to_csv().unwrap();
    assert_eq!(a, b);
    spec.seed = 33;
    let c = experiments::run(&spec).unwrap().table.to_csv().unwrap();
    assert_ne!(a, c);
}

#[test]
fn moment_scaling_summary_has_slopes() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Moments);
    spec.delta = vec![0.02, 0.05, 0.1, 0.2];
    spec.orders = vec![2, 4];
    spec.photons = vec![1e4, 1e6];
    spec.trials = 300;
    spec.seed = 34;
    let out = experiments::run_moment_scaling(&spec).unwrap();
    assert_eq!(out.table.rows.len(), 4 * 2 * 3);
    let slopes = &out.summary.unwrap()["slopes"];
    let s = |scheme: &str, mu: &str| slopes[scheme][mu].as_f64().unwrap();
    assert!((1.6..=2.4).contains(&s("spade", "2")));
    assert!((3.6..=4.4).contains(&s("spade", "4")));
    assert!((3.5..=4.5).contains(&s("direct", "2")));
}

#[test]
fn thermal_ratios() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Thermal);
    spec.theta = vec![0.3];
    spec.epsilon = vec![1e-4, 1e-3, 1e-2, 0.1, 1.0];
    let ratio = experiments::run_thermal_limit(&spec)
        .unwrap()
        .numeric_column("ratio")
        .unwrap();
    assert!((0.995..=1.0).contains(&ratio[0]));
    assert!(ratio.windows(2).all(|w| w[1] <= w[0] + 1e-3));
    assert!(ratio[4] < 1.0);
}

#[test]
fn reconstruct_from_estimated_moments() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Reconstruct);
    spec.scene = Some(SceneSpec::TwoPoint { separation: 0.3 });
    spec.max_order = 6;
    spec.photons = vec![1e8];
    spec.clip = true;
    spec.seed = 35;
    let out = experiments::run(&spec).unwrap();
    let summary = out.summary.unwrap();
    assert_eq!(summary["estimated"], true);
    let m = summary["moments"].as_array().unwrap();
    assert_eq!(m.len(), 7);
    assert!((m[2].as_f64().unwrap() - 0.0225).abs() < 1e-3);
    let f = out.table.numeric_column("reconstruction").unwrap();
    assert!(f.iter().all(|v| *v >= 0.0));
}

#[test]
fn output_files_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = sweep_spec();
    spec.name = Some("curve".into());
    spec.seed = 36;
    let files = run_to_dir(&spec, dir.path()).unwrap();
    assert!(files.csv.ends_with("curve.csv"));
    assert!(files.summary.is_none());
    let manifest = Manifest::from_file(&files.manifest).unwrap();
    assert_eq!(manifest.seed, 36);
    assert_eq!(manifest.experiment, ExperimentKind::FisherSweep);
    assert!(!manifest.git_hash.is_empty());
    assert!(manifest.versions.contains_key("superres"));
    assert_eq!(manifest.outputs.len(), 1);
    let again = dir.path().join("again");
    let replay = replay_manifest(&files.manifest, &again).unwrap();
    assert!(replay.identical());
    assert_eq!(
        std::fs::read(&files.csv).unwrap(),
        std::fs::read(again.join("curve.csv")).unwrap()
    );
}

#[test]
fn tampered_output_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::Thermal);
    spec.theta = vec![0.5];
    spec.epsilon = vec![0.01];
    let files = run_to_dir(&spec, dir.path()).unwrap();
    let mut manifest = Manifest::from_file(&files.manifest).unwrap();
    manifest.outputs[0].sha256 = "0".repeat(64);
    std::fs::write(&files.manifest, manifest.to_json().unwrap()).unwrap();
    let replay = replay_manifest(&files.manifest, dir.path().join("b")).unwrap();
    assert_eq!(replay.mismatched, vec!["thermal.csv".to_string()]);
}

#[test]
fn spec_json_round_trip_and_defaults() {
    let spec = ExperimentSpec::from_json(
        r#"{"schema": 1, "experiment": "fisher-sweep", "theta": [0.1, 0.2]}"#,
    )
    .unwrap();
    assert_eq!(spec.psf.sigma, 0.5);
    assert_eq!(spec.psf.grid.samples, 4096);
    assert_eq!(spec.trials, 1000);
    let back = ExperimentSpec::from_json(&spec.to_json().unwrap()).unwrap();
    assert_eq!(spec, back);
}

#[test]
fn spec_rejects_unknown_fields_and_versions() {
    let unknown = ExperimentSpec::from_json(
        r#"{"schema": 1, "experiment": "fisher-sweep", "theta": [0.1], "thetas": [1]}"#,
    );
    assert!(unknown.unwrap_err().to_string().contains("thetas"));
    let version =
        ExperimentSpec::from_json(r#"{"schema": 9, "experiment": "fisher-sweep", "theta": [0.1]}"#);
    assert_eq!(invalid_key(version.unwrap_err()), "schema");
}

#[test]
fn overrides_replace_fields() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Mse);
    spec.theta = vec![0.2];
    spec.photons = vec![1e4];
    let changed = spec
        .with_overrides(&[
            "trials=10",
            "psf.sigma=0.4",
            "theta=[0.1,0.3]",
            "psf.kind=signum-masked-gaussian",
        ])
        .unwrap();
    assert_eq!(changed.trials, 10);
    assert_eq!(changed.psf.sigma, 0.4);
    assert_eq!(changed.theta, vec![0.1, 0.3]);
    assert_eq!(changed.psf.kind, PsfChoice::SignumMaskedGaussian);
}

#[test]
fn override_errors_name_the_key() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Mse);
    spec.theta = vec![0.2];
    spec.photons = vec![1e4];
    assert_eq!(
        invalid_key(spec.with_overrides(&["trails=10"]).unwrap_err()),
        "trails"
    );
    assert_eq!(
        invalid_key(spec.with_overrides(&["psf.width=1"]).unwrap_err()),
        "psf.width"
    );
    assert_eq!(
        invalid_key(spec.with_overrides(&["trials=many"]).unwrap_err()),
        "trials"
    );
    assert_eq!(
        invalid_key(spec.with_overrides(&["trials=0"]).unwrap_err()),
        "trials"
    );
    assert_eq!(
        invalid_key(spec.with_overrides(&["psf.sigma=-1"]).unwrap_err()),
        "psf.sigma"
    );
    assert_eq!(
        invalid_key(spec.with_overrides(&["seed"]).unwrap_err()),
        "seed"
    );
}

#[test]
fn validation_names_the_key() {
    let base = ExperimentSpec::new(ExperimentKind::Mse);
    let check = |f: &dyn Fn(&mut ExperimentSpec), key: &str| {
        let mut s = base.clone();
        s.theta = vec![0.2];
        s.photons = vec![1e4];
        f(&mut s);
        assert_eq!(invalid_key(s.validate().unwrap_err()), key);
    };
    check(&|s| s.theta.clear(), "theta");
    check(&|s| s.photons = vec![-1.0], "photons");
    check(
        &|s| s.measurements = vec!["telescope".into()],
        "measurements",
    );
    check(&|s| s.modes = 0, "modes");
    check(&|s| s.bounds = Some([1.0, 0.5]), "bounds");
    check(&|s| s.psf.grid.samples = 1, "psf.grid");

    let mut m = ExperimentSpec::new(ExperimentKind::Moments);
    m.delta = vec![0.1];
    m.photons = vec![1e4];
    m.orders = vec![5];
    assert_eq!(invalid_key(m.validate().unwrap_err()), "orders");
    m.orders = vec![1, 2];
    m.photons = vec![1e4, 1e4, 1e4];
    assert_eq!(invalid_key(m.validate().unwrap_err()), "photons");

    let mut t = ExperimentSpec::new(ExperimentKind::Thermal);
    t.theta = vec![0.5];
    t.epsilon = vec![2.0];
    assert_eq!(invalid_key(t.validate().unwrap_err()), "epsilon");

    let r = ExperimentSpec::new(ExperimentKind::Reconstruct);
    assert_eq!(invalid_key(r.validate().unwrap_err()), "scene");
}

#[test]
fn info_summary_for_gaussian_and_signum() {
    let g = info(&PsfSpec::default(), 0.1, 12, 16).unwrap();
    assert!(g.fi_direct < g.fi_spade && g.fi_spade <= g.hi * (1.0 + 1e-6));
    assert!(g.fi_sliver.is_some());
    assert!((g.crb_spade * g.fi_spade - 1.0).abs() < 1e-12);
    let signum = PsfSpec {
        kind: PsfChoice::SignumMaskedGaussian,
        ..PsfSpec::default()
    };
    let s = info(&signum, 0.1, 12, 16).unwrap();
    assert!(s.fi_sliver.is_none());
    assert!(s.fi_direct > g.fi_direct);
    assert!(info(&PsfSpec::default(), -0.1, 12, 16).is_err());
}

#[test]
fn table_csv_round_trip_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = Table::new(&["x", "y", "kind"]);
    for i in 1..=5 {
        let x = i as f64;
        table.push(vec![
            experiments::format_value(x),
            experiments::format_value(x * x),
            if i % 2 == 0 { "even" } else { "odd" }.into(),
        ]);
    }
    let path = dir.path().join("t.csv");
    table.write_csv(&path).unwrap();
    let back = Table::read_csv(&path).unwrap();
    assert_eq!(back, table);
    assert_eq!(back.filter("kind", "even").unwrap().rows.len(), 2);
    assert!(back
        .numeric_column("kind")
        .unwrap()
        .iter()
        .all(|v| v.is_nan()));
    assert!(back.numeric_column("z").is_err());
    let svg = plot_svg(
        &back,
        "x",
        &["y"],
        &PlotOptions {
            log_x: true,
            log_y: true,
            title: Some("y <x>".into()),
        },
    )
    .unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("<polyline"));
    assert!(svg.contains("y &lt;x&gt;"));
    assert!(plot_svg(&back, "x", &["missing"], &PlotOptions::default()).is_err());
}
