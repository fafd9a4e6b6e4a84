//! Scripted experiments writing CSV tables with a JSON manifest.
//!
//! Grid points and Monte Carlo trials are computed in parallel; results are
//! assembled by index, so outputs depend only on the spec and its seed.

mod plot;
mod spec;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::estimate::{
    even_moment_estimator, even_moment_mse, fourier_coefficients, gaussian_reference,
    ml_separation, monte_carlo, odd_moment_estimator, odd_moment_mse, reconstruct_object,
};
use crate::grid::Grid;
use crate::information::{
    crb_of_matrix, fi_direct, fi_modes, fi_sliver, helstrom_onephoton, helstrom_thermal_scene,
    ParamFamily,
};
use crate::modes::{
    hermite_gauss_basis, ipad_pairs, pad_basis, splice_mode, Measurement, ModeBasis,
};
use crate::modes::{mode_probabilities, OutcomeDistribution};
use crate::psf::Psf;
use crate::scene::{two_point_scene, MomentVector, SourceScene};
use crate::simulate::{sample_direct_positions_stream, sample_mode_counts_stream, PhotonData};

pub use plot::{plot_svg, PlotOptions};
pub use spec::{
    file_sha256, ExperimentKind, ExperimentSpec, GridSpec, Manifest, OutputFile, PsfChoice,
    PsfSpec, SceneSpec, MEASUREMENTS, SCHEMA_VERSION,
};

/// Rows of formatted values under named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Fixed-precision rendering used for every float in a table.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.12e}")
    }
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid("column", format!("no column `{name}`")))
    }

    /// Values of a column parsed as numbers (`nan` for anything else).
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self
            .rows
            .iter()
            .map(|r| r[i].parse().unwrap_or(f64::NAN))
            .collect())
    }

    /// Rows whose column `name` equals `value`.
    pub fn filter(&self, name: &str, value: &str) -> Result<Table> {
        let i = self.column_index(name)?;
        Ok(Table {
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| r[i] == value)
                .cloned()
                .collect(),
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Table> {
        let mut r = csv::Reader::from_path(path)?;
        let columns = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| Ok(rec?.iter().map(String::from).collect()))
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Table { columns, rows })
    }
}

/// Table plus optional summary produced by one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: Table,
    pub summary: Option<Value>,
}

/// Files written by [`run_to_dir`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub csv: PathBuf,
    pub summary: Option<PathBuf>,
    pub manifest: PathBuf,
    pub output: ExperimentOutput,
}

fn measurement_for(name: &str, psf: &Psf, modes: usize) -> Result<Measurement> {
    Ok(match name {
        "direct" => Measurement::Direct {
            image_grid: *psf.grid(),
        },
        "hermite-gauss" => Measurement::Modes(hermite_gauss_basis(psf, modes)?),
        "pad" => Measurement::Modes(pad_basis(psf, modes - 1)?),
        "sliver" => Measurement::Sliver,
        "splice" => Measurement::Modes(splice_mode(psf)?),
        other => {
            return Err(Error::invalid(
                "measurements",
                format!("unknown measurement `{other}`"),
            ))
        }
    })
}

fn fi_column(name: &str) -> String {
    match name {
        "hermite-gauss" => "fi_spade".into(),
        other => format!("fi_{other}"),
    }
}

fn separation_fi(measurement: &Measurement, psf: &Psf, theta: f64) -> Result<f64> {
    let family = ParamFamily::two_point_separation();
    let report = match measurement {
        Measurement::Direct { image_grid } => fi_direct(&family, psf, &[theta], image_grid)?,
        Measurement::Modes(basis) => fi_modes(&family, basis, psf, &[theta])?,
        Measurement::Sliver => fi_sliver(&family, psf, &[theta])?,
    };
    Ok(report.scalar())
}

fn separation_hi(psf: &Psf, theta: f64, truncation: usize) -> Result<f64> {
    Ok(helstrom_onephoton(
        &ParamFamily::two_point_separation(),
        psf,
        &[theta],
        truncation,
    )?
    .scalar())
}

/// Per-photon information for separation at each `theta`: one FI column per
/// measurement and the Helstrom information.
pub fn run_fisher_sweep(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let psf = spec.psf.build()?;
    let measurements = spec
        .measurements
        .iter()
        .map(|m| measurement_for(m, &psf, spec.modes))
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec!["theta".to_string()];
    columns.extend(spec.measurements.iter().map(|m| fi_column(m)));
    columns.push("hi".into());
    let rows = spec
        .theta
        .par_iter()
        .map(|&theta| {
            let mut row = vec![format_value(theta)];
            for m in &measurements {
                row.push(format_value(separation_fi(m, &psf, theta)?));
            }
            row.push(format_value(separation_hi(&psf, theta, spec.truncation)?));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table { columns, rows })
}

/// Random stream of trial `t` in table row `row`.
fn stream(row: usize, trial: u64) -> u64 {
    ((row as u64) << 32) | trial
}

fn default_bounds(spec: &ExperimentSpec) -> (f64, f64) {
    match spec.bounds {
        Some([lo, hi]) => (lo, hi),
        None => {
            let max = spec.theta.iter().cloned().fold(0.0, f64::max);
            (0.0, (2.0 * max).max(1.0))
        }
    }
}

/// Draws one data set of `measurement` for the two-point scene.
fn simulate(
    measurement: &Measurement,
    dist: &OutcomeDistribution,
    photons: f64,
    seed: u64,
    stream: u64,
) -> Result<PhotonData> {
    match measurement {
        Measurement::Direct { .. } => sample_direct_positions_stream(dist, photons, seed, stream),
        _ => sample_mode_counts_stream(dist, photons, seed, stream),
    }
}

/// Monte Carlo MSE of maximum-likelihood separation estimates against the
/// Cramér-Rao bound and the quantum bound.
pub fn run_mse_montecarlo(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let psf = spec.psf.build()?;
    let bounds = default_bounds(spec);
    let measurements = spec
        .measurements
        .iter()
        .map(|m| Ok((m.clone(), measurement_for(m, &psf, spec.modes)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&[
        "theta", "photons", "scheme", "mse", "bias", "crb", "inv_hi", "trials",
    ]);
    let mut row_index = 0;
    for &theta in &spec.theta {
        let scene = two_point_scene(theta)?;
        let hi = separation_hi(&psf, theta, spec.truncation)?;
        for (name, measurement) in &measurements {
            let fi = separation_fi(measurement, &psf, theta)?;
            let dist = measurement.distribution(&scene, &psf)?;
            for &photons in &spec.photons {
                let row = row_index;
                row_index += 1;
                let result =
                    monte_carlo(vec!["separation".into()], vec![theta], spec.trials, |t| {
                        let data =
                            simulate(measurement, &dist, photons, spec.seed, stream(row, t))?;
                        Ok(vec![
                            ml_separation(&data, measurement, &psf, bounds)?.estimate,
                        ])
                    })?;
                table.push(vec![
                    format_value(theta),
                    format_value(photons),
                    name.clone(),
                    format_value(result.mse[0]),
                    format_value(result.bias[0]),
                    format_value(1.0 / (photons * fi)),
                    format_value(1.0 / (photons * hi)),
                    spec.trials.to_string(),
                ]);
            }
        }
    }
    Ok(table)
}

/// Least-squares slope of `ln y` against `ln x` over points with positive
/// finite values.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Bases for moment estimation: PAD up to `order`, and the iPAD pair
/// `(q, q+1)` for each odd moment `2q+1`.
struct MomentBases {
    pad: ModeBasis,
    ipad: Vec<Option<ModeBasis>>,
}

fn moment_bases(psf: &Psf, max_moment: usize) -> Result<MomentBases> {
    let pad = pad_basis(psf, max_moment / 2 + 1)?;
    let ipad = (0..=max_moment)
        .map(|mu| {
            if mu % 2 == 1 {
                ipad_pairs(&pad, mu / 2).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentBases { pad, ipad })
}

impl MomentBases {
    /// Basis measuring `θ_μ`: PAD for even orders, the iPAD pair otherwise.
    fn for_order(&self, mu: usize) -> &ModeBasis {
        if mu % 2 == 0 {
            &self.pad
        } else {
            self.ipad[mu].as_ref().expect("odd order has a pair")
        }
    }

    /// `θ̌_μ` from counts recorded in [`MomentBases::for_order`].
    fn estimate(&self, data: &PhotonData, mu: usize, photons: f64) -> Result<f64> {
        if mu % 2 == 0 {
            even_moment_estimator(data, &self.pad, photons, mu / 2)
        } else {
            odd_moment_estimator(data, self.for_order(mu), photons, mu / 2)
        }
    }
}

fn predicted_spade_mse(pad: &ModeBasis, m: &MomentVector, mu: usize, photons: f64) -> Result<f64> {
    let q = mu / 2;
    if mu % 2 == 0 {
        Ok(even_moment_mse(m[mu], pad.constant(q)?, photons))
    } else {
        Ok(odd_moment_mse(
            m[2 * q],
            m[2 * q + 2],
            pad.constant(q)?,
            pad.constant(q + 1)?,
            photons,
        ))
    }
}

/// Moment estimation for the five-point object at each half-width `Δ`:
/// empirical SPADE MSE against its closed form, the direct-imaging CRB and
/// the Helstrom bound, with SNR slopes in the summary.
pub fn run_moment_scaling(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let psf = spec.psf.build()?;
    let max_moment = *spec.orders.iter().max().expect("validated");
    let bases = moment_bases(&psf, max_moment + 1)?;
    let photons_for = |i: usize| {
        if spec.photons.len() == 1 {
            spec.photons[0]
        } else {
            spec.photons[i]
        }
    };
    let mut table = Table::new(&[
        "delta",
        "order",
        "scheme",
        "photons",
        "theta",
        "empirical_mse",
        "predicted_mse",
        "snr",
    ]);
    let mut row_index = 0;
    for &delta in &spec.delta {
        let (family, base) = ParamFamily::five_point_moments(delta)?;
        let scene = family.scene(&base)?;
        let moments = scene.moments(max_moment + 2);
        let direct = fi_direct(&family, &psf, &base, psf.grid())?;
        let crb = crb_of_matrix(&direct.matrix());
        let helstrom = helstrom_onephoton(&family, &psf, &base, spec.truncation)?.matrix();
        for (i, &mu) in spec.orders.iter().enumerate() {
            let photons = photons_for(i);
            let theta = moments[mu];
            let row = row_index;
            row_index += 1;
            let dist = mode_probabilities(bases.for_order(mu), &scene, &psf)?;
            let result = monte_carlo(vec![format!("theta{mu}")], vec![theta], spec.trials, |t| {
                let data = sample_mode_counts_stream(&dist, photons, spec.seed, stream(row, t))?;
                Ok(vec![bases.estimate(&data, mu, photons)?])
            })?;
            let predicted = predicted_spade_mse(&bases.pad, &moments, mu, photons)?;
            table.push(vec![
                format_value(delta),
                mu.to_string(),
                "spade".into(),
                format_value(photons),
                format_value(theta),
                format_value(result.mse[0]),
                format_value(predicted),
                format_value(result.snr[0]),
            ]);
            let bound = crb.matrix[mu - 1][mu - 1] / photons;
            table.push(vec![
                format_value(delta),
                mu.to_string(),
                "direct".into(),
                format_value(photons),
                format_value(theta),
                format_value(f64::NAN),
                format_value(bound),
                format_value(theta * theta / bound),
            ]);
            let quantum = 1.0 / (photons * helstrom[(mu - 1, mu - 1)]);
            table.push(vec![
                format_value(delta),
                mu.to_string(),
                "helstrom".into(),
                format_value(photons),
                format_value(theta),
                format_value(f64::NAN),
                format_value(quantum),
                format_value(theta * theta / quantum),
            ]);
        }
    }
    let summary = moment_slopes(&table, &spec.orders)?;
    Ok(ExperimentOutput {
        table,
        summary: Some(summary),
    })
}

/// `{"slopes": {scheme: {order: slope}}}` of ln SNR against ln Δ.
pub fn moment_slopes(table: &Table, orders: &[usize]) -> Result<Value> {
    let mut slopes = serde_json::Map::new();
    for scheme in ["spade", "direct", "helstrom"] {
        let rows = table.filter("scheme", scheme)?;
        let mut per_order = serde_json::Map::new();
        for &mu in orders {
            let sub = rows.filter("order", &mu.to_string())?;
            let slope = loglog_slope(&sub.numeric_column("delta")?, &sub.numeric_column("snr")?);
            per_order.insert(mu.to_string(), json!(slope));
        }
        slopes.insert(scheme.into(), Value::Object(per_order));
    }
    Ok(json!({ "slopes": slopes }))
}

/// Thermal Helstrom information per photon against the one-photon value.
pub fn run_thermal_limit(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let psf = spec.psf.build()?;
    let family = ParamFamily::two_point_separation();
    let mut table = Table::new(&["theta", "epsilon", "hi_thermal", "hi_onephoton", "ratio"]);
    for &theta in &spec.theta {
        let one = helstrom_onephoton(&family, &psf, &[theta], spec.truncation)?.scalar();
        let rows = spec
            .epsilon
            .par_iter()
            .map(|&eps| {
                let hi =
                    helstrom_thermal_scene(&family, &psf, &[theta], spec.truncation, eps)?.scalar();
                Ok(vec![
                    format_value(theta),
                    format_value(eps),
                    format_value(hi),
                    format_value(one),
                    format_value(hi / one),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        table.rows.extend(rows);
    }
    Ok(table)
}

/// Moments `θ_0..θ_order` estimated from simulated SPADE counts: one PAD
/// measurement for the even moments and one iPAD measurement per odd one,
/// each with `photons` mean photons.
pub fn estimate_moments(
    scene: &SourceScene,
    psf: &Psf,
    order: usize,
    photons: f64,
    seed: u64,
) -> Result<MomentVector> {
    let bases = moment_bases(psf, order + 1)?;
    let mut out = vec![1.0];
    for mu in 1..=order {
        let dist = mode_probabilities(bases.for_order(mu), scene, psf)?;
        let data = sample_mode_counts_stream(&dist, photons, seed, mu as u64)?;
        out.push(bases.estimate(&data, mu, photons)?);
    }
    Ok(MomentVector::new(out))
}

/// Generalized Fourier reconstruction of the spec's scene from exact moments,
/// or from simulated SPADE estimates when `photons` is given.
pub fn run_reconstruct(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let psf = spec.psf.build()?;
    let scene = spec.scene.as_ref().expect("validated").build()?;
    let order = spec.max_order;
    let moments = match spec.photons.first() {
        Some(&n) => estimate_moments(&scene, &psf, order, n, spec.seed)?,
        None => scene.moments(order),
    };
    let mean = moments[1];
    let std = match spec.reference_std {
        Some(s) => s,
        None => {
            let var = moments[2] - mean * mean;
            if !(var > 0.0) {
                return Err(Error::invalid(
                    "reference_std",
                    "object variance is not positive; set the reference width explicitly",
                ));
            }
            var.sqrt()
        }
    };
    let half = mean.abs() + 6.0 * std;
    let grid = Grid::symmetric(half, 801)?;
    let reference = gaussian_reference(&grid, mean, std)?;
    let model = fourier_coefficients(&moments, grid, &reference, order)?;
    let values = reconstruct_object(&model, &grid, spec.clip)?;
    let mut table = Table::new(&["x", "reference", "reconstruction"]);
    for (i, x) in grid.points().iter().enumerate() {
        table.push(vec![
            format_value(*x),
            format_value(reference[i]),
            format_value(values[i]),
        ]);
    }
    let summary = json!({
        "moments": moments.as_slice(),
        "coefficients": model.coefficients(),
        "reference_mean": mean,
        "reference_std": std,
        "estimated": !spec.photons.is_empty(),
    });
    Ok(ExperimentOutput {
        table,
        summary: Some(summary),
    })
}

/// Runs the experiment named by the spec.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let plain = |table| ExperimentOutput {
        table,
        summary: None,
    };
    match spec.experiment {
        ExperimentKind::FisherSweep => run_fisher_sweep(spec).map(plain),
        ExperimentKind::Mse => run_mse_montecarlo(spec).map(plain),
        ExperimentKind::Moments => run_moment_scaling(spec),
        ExperimentKind::Thermal => run_thermal_limit(spec).map(plain),
        ExperimentKind::Reconstruct => run_reconstruct(spec),
    }
}

/// Runs the spec and writes `<name>.csv`, `<name>.summary.json` (when the
/// experiment has one) and `<name>.manifest.json` into `dir`.
pub fn run_to_dir(spec: &ExperimentSpec, dir: impl AsRef<Path>) -> Result<RunFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let output = run(spec)?;
    let stem = spec.file_stem();
    let csv = dir.join(format!("{stem}.csv"));
    output.table.write_csv(&csv)?;
    let mut outputs = vec![OutputFile {
        file: format!("{stem}.csv"),
        sha256: file_sha256(&csv)?,
    }];
    let summary = match &output.summary {
        Some(v) => {
            let path = dir.join(format!("{stem}.summary.json"));
            fs::write(&path, serde_json::to_string_pretty(v)?)?;
            outputs.push(OutputFile {
                file: format!("{stem}.summary.json"),
                sha256: file_sha256(&path)?,
            });
            Some(path)
        }
        None => None,
    };
    let manifest_path = dir.join(format!("{stem}.manifest.json"));
    fs::write(&manifest_path, Manifest::new(spec, outputs).to_json()?)?;
    Ok(RunFiles {
        csv,
        summary,
        manifest: manifest_path,
        output,
    })
}

/// Outcome of re-running a manifest.
#[derive(Debug, Clone)]
pub struct Replay {
    pub files: RunFiles,
    /// Output files whose digest differs from the manifest.
    pub mismatched: Vec<String>,
}

impl Replay {
    pub fn identical(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Re-runs the spec recorded in a manifest into `dir` and compares digests.
pub fn replay_manifest(path: impl AsRef<Path>, dir: impl AsRef<Path>) -> Result<Replay> {
    let manifest = Manifest::from_file(path)?;
    let files = run_to_dir(&manifest.spec, &dir)?;
    let mut mismatched = Vec::new();
    for out in &manifest.outputs {
        let digest = file_sha256(dir.as_ref().join(&out.file))?;
        if digest != out.sha256 {
            mismatched.push(out.file.clone());
        }
    }
    Ok(Replay { files, mismatched })
}

/// One-shot information summary for two points at `separation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoSummary {
    pub psf: String,
    pub sigma: f64,
    pub separation: f64,
    pub fi_direct: f64,
    pub fi_spade: f64,
    /// Absent for PSFs that are not even.
    pub fi_sliver: Option<f64>,
    pub hi: f64,
    pub crb_direct: f64,
    pub crb_spade: f64,
    pub modes: usize,
    pub truncation: usize,
}

pub fn info(
    psf_spec: &PsfSpec,
    separation: f64,
    modes: usize,
    truncation: usize,
) -> Result<InfoSummary> {
    if !(separation > 0.0) || !separation.is_finite() {
        return Err(Error::invalid("sep", "must be positive"));
    }
    let psf = psf_spec.build()?;
    let direct = separation_fi(&measurement_for("direct", &psf, modes)?, &psf, separation)?;
    let spade = separation_fi(
        &Measurement::Modes(hermite_gauss_basis(&psf, modes)?),
        &psf,
        separation,
    )?;
    let sliver = match psf.require_even() {
        Ok(()) => Some(separation_fi(&Measurement::Sliver, &psf, separation)?),
        Err(_) => None,
    };
    let hi = separation_hi(&psf, separation, truncation)?;
    Ok(InfoSummary {
        psf: psf.kind().to_string(),
        sigma: psf.sigma(),
        separation,
        fi_direct: direct,
        fi_spade: spade,
        fi_sliver: sliver,
        hi,
        crb_direct: 1.0 / direct,
        crb_spade: 1.0 / spade,
        modes,
        truncation,
    })
}
