//! Classical Fisher information, Helstrom information and Cramér-Rao bounds.
//!
//! All information values are per photon. Derivatives with respect to the
//! family parameters are central differences at steps `h` and `h/2`; the
//! reported value uses the Richardson combination `(4D(h/2) - D(h))/3` and
//! the two raw estimates serve as a stability check.

mod family;
mod helstrom;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::modes::{Measurement, ModeBasis};
use crate::psf::{Psf, PsfKind};

pub use family::{ParamFamily, DEFAULT_STEP};
pub use helstrom::{
    helstrom_onephoton, helstrom_thermal, helstrom_thermal_scene, thermal_information, CMatrix,
    DensityModel, DEFAULT_TRUNCATION, MAX_TRUNCATION,
};

/// Outcomes below this probability are merged into the residual bucket.
pub const PROBABILITY_FLOOR: f64 = 1e-15;
/// Largest relative change of an information matrix when the step halves.
pub const STEP_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Classical,
    SldOnephoton,
    ThermalExact,
}

/// PSF description stored with reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsfMeta {
    pub kind: PsfKind,
    pub sigma: f64,
    pub grid: Grid,
}

impl PsfMeta {
    pub fn of(psf: &Psf) -> Self {
        PsfMeta {
            kind: psf.kind(),
            sigma: psf.sigma(),
            grid: *psf.grid(),
        }
    }
}

/// Cramér-Rao bound: inverse (or pseudo-inverse) of an information matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crb {
    pub matrix: Vec<Vec<f64>>,
    pub rank: usize,
    pub singular: bool,
}

impl Crb {
    pub fn scalar(&self) -> f64 {
        self.matrix[0][0]
    }
}

/// Information matrix with the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    pub method: Method,
    /// Measurement name for classical reports.
    pub measurement: Option<String>,
    pub family: String,
    pub parameters: Vec<String>,
    pub theta: Vec<f64>,
    pub steps: Vec<f64>,
    /// Per-photon information matrix (Fisher for classical reports,
    /// Helstrom otherwise).
    pub information: Vec<Vec<f64>>,
    /// Relative change of the matrix between steps `h` and `h/2`.
    pub step_change: f64,
    pub psf: Option<PsfMeta>,
    /// Number of PSF-adapted modes spanning the density operator.
    pub truncation: Option<usize>,
    /// Dimension of the density-operator representation.
    pub dimension: Option<usize>,
    /// Eigenvalue pairs dropped from the SLD as numerically null.
    pub excluded_pairs: usize,
    /// Relative residual of the SLD equation on the retained eigenspace.
    pub sld_residual: Option<f64>,
    /// Mean photon number per temporal mode, for thermal reports.
    pub epsilon: Option<f64>,
}

impl InfoReport {
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.information.len();
        DMatrix::from_fn(n, n, |i, j| self.information[i][j])
    }

    /// `[0][0]` entry, the value for single-parameter families.
    pub fn scalar(&self) -> f64 {
        self.information[0][0]
    }

    pub fn fisher(&self) -> Option<&[Vec<f64>]> {
        (self.method == Method::Classical).then_some(self.information.as_slice())
    }

    pub fn helstrom(&self) -> Option<&[Vec<f64>]> {
        (self.method != Method::Classical).then_some(self.information.as_slice())
    }

    pub fn crb(&self) -> Crb {
        crb(self)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        value["crb"] = serde_json::to_value(self.crb())?;
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

/// Inverse of the report's information matrix, falling back to the
/// pseudo-inverse (eigenvalues below `1e-12·max` dropped) when singular.
/// Directions with no information at all get an infinite bound on the
/// diagonal.
pub fn crb(report: &InfoReport) -> Crb {
    crb_of_matrix(&report.matrix())
}

pub fn crb_of_matrix(m: &DMatrix<f64>) -> Crb {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut inv = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 1e-12 * max && l > 0.0 {
            rank += 1;
            let v = eig.eigenvectors.column(i);
            inv += v * v.transpose() / l;
        }
    }
    if rank == 0 {
        for i in 0..n {
            inv[(i, i)] = f64::INFINITY;
        }
    }
    Crb {
        matrix: (0..n)
            .map(|i| (0..n).map(|j| inv[(i, j)]).collect())
            .collect(),
        rank,
        singular: rank < n,
    }
}

/// Values at the centre of the stencil and central differences per parameter.
pub(crate) struct Differences {
    pub centre: Vec<f64>,
    pub coarse: Vec<Vec<f64>>,
    pub fine: Vec<Vec<f64>>,
    pub extrapolated: Vec<Vec<f64>>,
}

/// The centre and the four points `θ ± h e_μ`, `θ ± h/2 e_μ` per parameter.
pub(crate) fn stencil(theta: &[f64], steps: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![theta.to_vec()];
    for (mu, &h) in steps.iter().enumerate() {
        for d in [h, -h, 0.5 * h, -0.5 * h] {
            let mut t = theta.to_vec();
            t[mu] += d;
            out.push(t);
        }
    }
    out
}

pub(crate) fn differentiate<F>(theta: &[f64], steps: &[f64], eval: F) -> Result<Differences>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if theta.len() != steps.len() {
        return Err(Error::invalid("theta", "one step per parameter"));
    }
    let points = stencil(theta, steps);
    let values: Vec<Vec<f64>> = points.par_iter().map(|t| eval(t)).collect::<Result<_>>()?;
    let mut coarse = Vec::new();
    let mut fine = Vec::new();
    let mut extrapolated = Vec::new();
    for (mu, &h) in steps.iter().enumerate() {
        let v = &values[1 + 4 * mu..5 + 4 * mu];
        let dc: Vec<f64> = v[0]
            .iter()
            .zip(&v[1])
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let df: Vec<f64> = v[2].iter().zip(&v[3]).map(|(a, b)| (a - b) / h).collect();
        extrapolated.push(
            dc.iter()
                .zip(&df)
                .map(|(c, f)| (4.0 * f - c) / 3.0)
                .collect(),
        );
        coarse.push(dc);
        fine.push(df);
    }
    Ok(Differences {
        centre: values.into_iter().next().expect("stencil has a centre"),
        coarse,
        fine,
        extrapolated,
    })
}

/// Relative Frobenius distance, with a floor on the scale so that vanishing
/// matrices do not register as unstable.
pub(crate) fn relative_change(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-9)
}

/// Poisson Fisher matrix `Σ_i ∂_μp_i ∂_νp_i / p_i`. The last entry of
/// `centre` is the residual; outcomes below the floor are merged into it.
fn poisson_fisher(centre: &[f64], derivs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = derivs.len();
    let last = centre.len() - 1;
    let keep: Vec<bool> = centre
        .iter()
        .enumerate()
        .map(|(i, &p)| i != last && p >= PROBABILITY_FLOOR)
        .collect();
    let bucket_p: f64 = centre
        .iter()
        .zip(&keep)
        .filter(|(_, k)| !**k)
        .map(|(p, _)| p)
        .sum();
    let bucket_d: Vec<f64> = derivs
        .iter()
        .map(|d| {
            d.iter()
                .zip(&keep)
                .filter(|(_, k)| !**k)
                .map(|(v, _)| v)
                .sum()
        })
        .collect();
    DMatrix::from_fn(n, n, |mu, nu| {
        let mut s: f64 = centre
            .iter()
            .enumerate()
            .filter(|(i, _)| keep[*i])
            .map(|(i, p)| derivs[mu][i] * derivs[nu][i] / p)
            .sum();
        if bucket_p >= PROBABILITY_FLOOR {
            s += bucket_d[mu] * bucket_d[nu] / bucket_p;
        }
        s
    })
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    (0..sym.nrows())
        .map(|i| (0..sym.ncols()).map(|j| sym[(i, j)]).collect())
        .collect()
}

/// Per-photon Fisher information of any measurement at `θ`.
pub fn fisher_information(
    measurement: &Measurement,
    family: &ParamFamily,
    psf: &Psf,
    theta: &[f64],
) -> Result<InfoReport> {
    let eval = |t: &[f64]| -> Result<Vec<f64>> {
        let scene = family.scene(t)?;
        let dist = measurement.distribution(&scene, psf)?;
        let mut p = dist.probabilities().to_vec();
        p.push(dist.residual());
        Ok(p)
    };
    let d = differentiate(theta, family.steps(), eval)?;
    let coarse = poisson_fisher(&d.centre, &d.coarse);
    let fine = poisson_fisher(&d.centre, &d.fine);
    let change = relative_change(&coarse, &fine);
    if change > STEP_TOLERANCE {
        return Err(Error::StepInstability {
            change,
            limit: STEP_TOLERANCE,
        });
    }
    let fi = poisson_fisher(&d.centre, &d.extrapolated);
    Ok(InfoReport {
        method: Method::Classical,
        measurement: Some(measurement.name()),
        family: family.name().into(),
        parameters: family.parameters().to_vec(),
        theta: theta.to_vec(),
        steps: family.steps().to_vec(),
        information: to_rows(&fi),
        step_change: change,
        psf: Some(PsfMeta::of(psf)),
        truncation: None,
        dimension: None,
        excluded_pairs: 0,
        sld_residual: None,
        epsilon: None,
    })
}

/// Direct imaging with pixels on `image_grid`.
pub fn fi_direct(
    family: &ParamFamily,
    psf: &Psf,
    theta: &[f64],
    image_grid: &Grid,
) -> Result<InfoReport> {
    fisher_information(
        &Measurement::Direct {
            image_grid: *image_grid,
        },
        family,
        psf,
        theta,
    )
}

/// Mode demultiplexing into `basis` plus the residual port.
pub fn fi_modes(
    family: &ParamFamily,
    basis: &ModeBasis,
    psf: &Psf,
    theta: &[f64],
) -> Result<InfoReport> {
    fisher_information(&Measurement::Modes(basis.clone()), family, psf, theta)
}

/// Parity sorting.
pub fn fi_sliver(family: &ParamFamily, psf: &Psf, theta: &[f64]) -> Result<InfoReport> {
    fisher_information(&Measurement::Sliver, family, psf, theta)
}

/// Small-separation approximations of the direct-imaging Fisher information
/// for two equal points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallSeparationFi {
    pub theta: f64,
    /// `(θ²/16) ∫ (∂²|ψ|²)² / (|ψ|² + (θ²/8)∂²|ψ|²) dx`.
    pub expansion: f64,
    /// `(θ²/16) ∫ (∂²|ψ|²)² / |ψ|² dx`.
    pub quadratic: f64,
    /// False when the quadratic integral changes by more than 0.1% (or
    /// becomes infinite) on a grid of twice the density.
    pub quadratic_converged: bool,
}

/// Evaluates both small-separation approximations by quadrature on the PSF
/// grid and checks the quadratic one on the doubled grid.
pub fn fi_direct_small_sep(psf: &Psf, theta: f64) -> Result<SmallSeparationFi> {
    if !(theta > 0.0) || theta > 0.2 {
        return Err(Error::invalid(
            "theta",
            format!("must lie in (0, 0.2], got {theta}"),
        ));
    }
    let dx = psf.grid().spacing();
    let (i0, _, d2) = psf.shifted_intensity_derivatives(0.0);
    let pref = theta * theta / 16.0;
    let peak = i0.iter().cloned().fold(0.0, f64::max);
    let mut expansion = 0.0;
    for (p, c) in i0.iter().zip(&d2) {
        let den = p + theta * theta / 8.0 * c;
        // Samples where the intensity underflows carry no information.
        if *p > 1e-300 && den > 1e-30 * peak {
            expansion += c * c / den;
        }
    }
    expansion *= pref * dx;
    let quad_sum = |i: &[f64], d: &[f64]| -> f64 {
        i.iter()
            .zip(d)
            .map(|(p, c)| {
                if *p == 0.0 && *c == 0.0 {
                    0.0
                } else if *p < 1e-30 * peak && c.abs() < 1e-12 {
                    // Far tails of a localized PSF.
                    0.0
                } else {
                    c * c / p
                }
            })
            .sum::<f64>()
    };
    let coarse = quad_sum(&i0, &d2);
    let (im, _, dm) = psf.shifted_intensity_derivatives(-0.5 * dx);
    let fine = 0.5 * (coarse + quad_sum(&im, &dm));
    let quadratic = pref * coarse * dx;
    let converged = coarse.is_finite() && fine.is_finite() && ((fine - coarse) / fine).abs() < 1e-3;
    Ok(SmallSeparationFi {
        theta,
        expansion,
        quadratic,
        quadratic_converged: converged,
    })
}
