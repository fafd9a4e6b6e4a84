//! Helstrom information from the symmetric logarithmic derivative, for the
//! one-photon density operator and for thermal mutual-coherence matrices.

use nalgebra::{DMatrix, DVector};

use super::{
    differentiate, relative_change, stencil, InfoReport, Method, ParamFamily, PsfMeta,
    STEP_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::modes::pad_modes_unchecked;
use crate::psf::Psf;
use crate::scene::SourceScene;
use crate::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub const DEFAULT_TRUNCATION: usize = 16;
pub const MAX_TRUNCATION: usize = 24;
/// Extra modes used for the truncation check.
const TRUNCATION_CHECK: usize = 4;
const TRUNCATION_TOLERANCE: f64 = 0.005;
/// Residual norm below which a shifted state adds no completion vector.
const COMPLETION_TOLERANCE: f64 = 1e-12;
/// Eigenvalue pairs with a smaller sum are treated as null.
const NULL_PAIR: f64 = 1e-12;
/// Null pairs may carry at most this fraction of the largest derivative
/// entry in the thermal equation.
const SINGULAR_TOLERANCE: f64 = 1e-6;
const MAX_THERMAL_DIMENSION: usize = 64;

/// Matrix representation of `ρ₁(θ) = Σ_j w_j |ψ_{X_j}⟩⟨ψ_{X_j}|` in an
/// orthonormal basis made of PSF-adapted modes plus an orthogonal
/// completion spanning every shifted state needed around `θ`.
#[derive(Debug, Clone)]
pub struct DensityModel {
    psf: Psf,
    /// Basis vectors on the PSF's active frequency window.
    vectors: Vec<Vec<Complex64>>,
    truncation: usize,
}

impl DensityModel {
    pub fn new(family: &ParamFamily, psf: &Psf, theta: &[f64], truncation: usize) -> Result<Self> {
        if truncation == 0 || truncation > MAX_TRUNCATION + TRUNCATION_CHECK {
            return Err(Error::invalid(
                "truncation",
                format!("must lie in 1..={MAX_TRUNCATION}, got {truncation}"),
            ));
        }
        let range = psf.active_range();
        let pad = pad_modes_unchecked(psf, truncation);
        let mut vectors: Vec<Vec<Complex64>> = (0..truncation)
            .map(|q| pad.mode(q)[range.clone()].to_vec())
            .collect();
        let dk = psf.dk();
        for t in stencil(theta, family.steps()) {
            let scene = family.scene(&t)?;
            for (x, _) in scene.nodes() {
                psf.check_shift(x)?;
                let mut s = psf.shifted_spectrum_unchecked(x);
                for _ in 0..2 {
                    for v in &vectors {
                        let c = inner(v, &s, dk);
                        s.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
                    }
                }
                let norm = inner(&s, &s, dk).re.sqrt();
                if norm > COMPLETION_TOLERANCE {
                    s.iter_mut().for_each(|a| *a /= norm);
                    vectors.push(s);
                }
            }
        }
        Ok(DensityModel {
            psf: psf.clone(),
            vectors,
            truncation,
        })
    }

    pub fn dimension(&self) -> usize {
        self.vectors.len()
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Coefficients of `exp(-ikX)Ψ(k)` in the basis.
    pub fn state(&self, shift: f64) -> DVector<Complex64> {
        let s = self.psf.shifted_spectrum_unchecked(shift);
        let dk = self.psf.dk();
        DVector::from_iterator(
            self.vectors.len(),
            self.vectors.iter().map(|v| inner(v, &s, dk)),
        )
    }

    pub fn rho(&self, scene: &SourceScene) -> Result<CMatrix> {
        let d = self.dimension();
        let mut rho = CMatrix::zeros(d, d);
        for (x, w) in scene.nodes() {
            self.psf.check_shift(x)?;
            let a = self.state(x);
            rho += &a * a.adjoint() * Complex64::new(w, 0.0);
        }
        Ok(rho)
    }
}

fn inner(a: &[Complex64], b: &[Complex64], dk: f64) -> Complex64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.conj() * y)
        .sum::<Complex64>()
        * dk
}

fn flatten(m: &CMatrix) -> Vec<f64> {
    m.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn unflatten(v: &[f64], d: usize) -> CMatrix {
    CMatrix::from_iterator(d, d, v.chunks(2).map(|c| Complex64::new(c[0], c[1])))
}

struct SldSolution {
    information: DMatrix<f64>,
    excluded: usize,
    residual: f64,
}

/// `HI_μν = Σ_ij 2 Re(∂_μρ_ij ∂_νρ_ji)/(λ_i + λ_j)` in the eigenbasis of `ρ`,
/// skipping null pairs.
fn sld_information(rho: &CMatrix, drho: &[CMatrix]) -> SldSolution {
    let d = rho.nrows();
    let herm = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.clone().symmetric_eigen();
    let lambda = &eig.eigenvalues;
    let u = &eig.eigenvectors;
    let rotated: Vec<CMatrix> = drho.iter().map(|m| u.adjoint() * m * u).collect();
    let mut excluded = 0;
    for i in 0..d {
        for j in 0..d {
            if lambda[i] + lambda[j] < NULL_PAIR {
                excluded += 1;
            }
        }
    }
    let p = drho.len();
    let info = DMatrix::from_fn(p, p, |mu, nu| {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let den = lambda[i] + lambda[j];
                if den >= NULL_PAIR {
                    s += 2.0 * (rotated[mu][(i, j)] * rotated[nu][(j, i)]).re / den;
                }
            }
        }
        s
    });
    // Check ∂ρ = (ρL + Lρ)/2 in the original basis, on the retained pairs.
    let mut residual: f64 = 0.0;
    for (m, dr) in rotated.iter().zip(drho) {
        let l_eig = CMatrix::from_fn(d, d, |i, j| {
            let den = lambda[i] + lambda[j];
            if den >= NULL_PAIR {
                m[(i, j)] * (2.0 / den)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let l = u * l_eig * u.adjoint();
        let r = dr - (&herm * &l + &l * &herm) * Complex64::new(0.5, 0.0);
        let r_eig = u.adjoint() * r * u;
        let mut num = 0.0;
        for i in 0..d {
            for j in 0..d {
                if lambda[i] + lambda[j] >= NULL_PAIR {
                    num += r_eig[(i, j)].norm_sqr();
                }
            }
        }
        let scale = dr.norm().max(f64::MIN_POSITIVE);
        residual = residual.max(num.sqrt() / scale);
    }
    SldSolution {
        information: info,
        excluded,
        residual,
    }
}

struct OnePhotonResult {
    information: DMatrix<f64>,
    change: f64,
    dimension: usize,
    excluded: usize,
    residual: f64,
}

fn onephoton_at(
    family: &ParamFamily,
    psf: &Psf,
    theta: &[f64],
    truncation: usize,
) -> Result<OnePhotonResult> {
    let model = DensityModel::new(family, psf, theta, truncation)?;
    let d = model.dimension();
    let diffs = differentiate(theta, family.steps(), |t| {
        Ok(flatten(&model.rho(&family.scene(t)?)?))
    })?;
    let rho = unflatten(&diffs.centre, d);
    let to_mats = |v: &[Vec<f64>]| -> Vec<CMatrix> { v.iter().map(|x| unflatten(x, d)).collect() };
    let coarse = sld_information(&rho, &to_mats(&diffs.coarse));
    let fine = sld_information(&rho, &to_mats(&diffs.fine));
    let change = relative_change(&coarse.information, &fine.information);
    if change > STEP_TOLERANCE {
        return Err(Error::StepInstability {
            change,
            limit: STEP_TOLERANCE,
        });
    }
    let best = sld_information(&rho, &to_mats(&diffs.extrapolated));
    Ok(OnePhotonResult {
        information: best.information,
        change,
        dimension: d,
        excluded: best.excluded,
        residual: best.residual,
    })
}

/// Per-photon Helstrom information of the one-photon density operator.
///
/// Fails with [`Error::TruncationInstability`] when adding four more modes
/// changes the result by more than 0.5%.
pub fn helstrom_onephoton(
    family: &ParamFamily,
    psf: &Psf,
    theta: &[f64],
    truncation: usize,
) -> Result<InfoReport> {
    if truncation == 0 || truncation > MAX_TRUNCATION {
        return Err(Error::invalid(
            "truncation",
            format!("must lie in 1..={MAX_TRUNCATION}, got {truncation}"),
        ));
    }
    let base = onephoton_at(family, psf, theta, truncation)?;
    let more = onephoton_at(family, psf, theta, truncation + TRUNCATION_CHECK)?;
    let change = relative_change(&base.information, &more.information);
    if change > TRUNCATION_TOLERANCE {
        return Err(Error::TruncationInstability {
            from: truncation,
            to: truncation + TRUNCATION_CHECK,
            change,
        });
    }
    Ok(InfoReport {
        method: Method::SldOnephoton,
        measurement: None,
        family: family.name().into(),
        parameters: family.parameters().to_vec(),
        theta: theta.to_vec(),
        steps: family.steps().to_vec(),
        information: rows(&base.information),
        step_change: base.change,
        psf: Some(PsfMeta::of(psf)),
        truncation: Some(truncation),
        dimension: Some(base.dimension),
        excluded_pairs: base.excluded,
        sld_residual: Some(base.residual),
        epsilon: None,
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    (0..sym.nrows())
        .map(|i| (0..sym.ncols()).map(|j| sym[(i, j)]).collect())
        .collect()
}

/// Helstrom information for a thermal state with mutual-coherence matrix
/// `Γ` and derivatives `∂_μΓ`:
///
/// ```text
/// Υ_ij = 2 ∂Γ_ij / (γ_i + γ_j + 2γ_iγ_j),   HI_μν = Re tr(∂_μΓ Υ_ν)
/// ```
///
/// in the eigenbasis of `Γ`. Returns the matrix and the number of null pairs.
pub fn thermal_information(gamma: &CMatrix, dgamma: &[CMatrix]) -> Result<(DMatrix<f64>, usize)> {
    let d = gamma.nrows();
    if gamma.ncols() != d || dgamma.iter().any(|m| m.shape() != (d, d)) {
        return Err(Error::invalid(
            "gamma",
            "matrices must be square and of equal size",
        ));
    }
    if d > MAX_THERMAL_DIMENSION {
        return Err(Error::invalid(
            "gamma",
            format!("dimension {d} exceeds {MAX_THERMAL_DIMENSION}"),
        ));
    }
    let herm = (gamma + gamma.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let g = &eig.eigenvalues;
    if g.iter().any(|&v| v < -1e-9 * g.amax().max(1.0)) {
        return Err(Error::invalid("gamma", "must be positive semidefinite"));
    }
    let u = &eig.eigenvectors;
    let rotated: Vec<CMatrix> = dgamma.iter().map(|m| u.adjoint() * m * u).collect();
    let largest = rotated
        .iter()
        .flat_map(|m| m.iter().map(|c| c.norm()))
        .fold(0.0, f64::max);
    let mut excluded = 0;
    let mut den = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let (a, b) = (g[i].max(0.0), g[j].max(0.0));
            let value = a + b + 2.0 * a * b;
            if value < NULL_PAIR {
                excluded += 1;
                for m in &rotated {
                    let component = m[(i, j)].norm();
                    if component > SINGULAR_TOLERANCE * largest {
                        return Err(Error::SingularEquation { i, j, component });
                    }
                }
                den[(i, j)] = f64::INFINITY;
            } else {
                den[(i, j)] = value;
            }
        }
    }
    let p = dgamma.len();
    let info = DMatrix::from_fn(p, p, |mu, nu| {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if den[(i, j)].is_finite() {
                    s += 2.0 * (rotated[mu][(i, j)] * rotated[nu][(j, i)]).re / den[(i, j)];
                }
            }
        }
        s
    });
    Ok((info, excluded))
}

/// Thermal Helstrom information of a matrix family `Γ(θ)`, with derivatives
/// by central differences at `steps`.
pub fn helstrom_thermal<F>(gamma: F, theta: &[f64], steps: &[f64]) -> Result<InfoReport>
where
    F: Fn(&[f64]) -> Result<CMatrix> + Sync,
{
    let centre = gamma(theta)?;
    let d = centre.nrows();
    let diffs = differentiate(theta, steps, |t| Ok(flatten(&gamma(t)?)))?;
    let to_mats = |v: &[Vec<f64>]| -> Vec<CMatrix> { v.iter().map(|x| unflatten(x, d)).collect() };
    let (coarse, _) = thermal_information(&centre, &to_mats(&diffs.coarse))?;
    let (fine, _) = thermal_information(&centre, &to_mats(&diffs.fine))?;
    let change = relative_change(&coarse, &fine);
    if change > STEP_TOLERANCE {
        return Err(Error::StepInstability {
            change,
            limit: STEP_TOLERANCE,
        });
    }
    let (info, excluded) = thermal_information(&centre, &to_mats(&diffs.extrapolated))?;
    Ok(InfoReport {
        method: Method::ThermalExact,
        measurement: None,
        family: "matrix".into(),
        parameters: (0..theta.len()).map(|i| format!("theta{i}")).collect(),
        theta: theta.to_vec(),
        steps: steps.to_vec(),
        information: rows(&info),
        step_change: change,
        psf: None,
        truncation: None,
        dimension: Some(d),
        excluded_pairs: excluded,
        sld_residual: None,
        epsilon: None,
    })
}

/// Per-photon thermal Helstrom information `HI/ε` for `Γ = ε ρ₁(θ)`.
pub fn helstrom_thermal_scene(
    family: &ParamFamily,
    psf: &Psf,
    theta: &[f64],
    truncation: usize,
    epsilon: f64,
) -> Result<InfoReport> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(
            "epsilon",
            format!("must be positive, got {epsilon}"),
        ));
    }
    let model = DensityModel::new(family, psf, theta, truncation)?;
    let scale = Complex64::new(epsilon, 0.0);
    let mut report = helstrom_thermal(
        |t| Ok(model.rho(&family.scene(t)?)? * scale),
        theta,
        family.steps(),
    )?;
    report
        .information
        .iter_mut()
        .flatten()
        .for_each(|v| *v /= epsilon);
    report.family = family.name().into();
    report.parameters = family.parameters().to_vec();
    report.psf = Some(PsfMeta::of(psf));
    report.truncation = Some(truncation);
    report.epsilon = Some(epsilon);
    Ok(report)
}
