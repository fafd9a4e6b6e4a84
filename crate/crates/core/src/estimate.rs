//! Estimators for separation and moments, Monte Carlo error summaries and
//! generalized Fourier reconstruction of the object.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::modes::{BasisKind, Measurement, ModeBasis};
use crate::polynomial::{gram_schmidt_polynomials as orthonormalize, Polynomial};
use crate::psf::Psf;
use crate::scene::{interpolate, symmetric_pair, MomentVector};
use crate::simulate::PhotonData;

/// Points in the coarse likelihood scan preceding golden-section search.
pub const SCAN_POINTS: usize = 41;
/// Parameter tolerance of the golden-section search.
pub const ML_TOLERANCE: f64 = 1e-6;
/// Likelihood variation below which the likelihood counts as flat.
pub const FLAT_TOLERANCE: f64 = 1e-12;

/// Result of a scalar maximum-likelihood search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlEstimate {
    pub estimate: f64,
    pub log_likelihood: f64,
    /// The likelihood barely varies over the bounds; `estimate` is then the
    /// lower bound.
    pub flat: bool,
}

/// Maximizes `log_likelihood` on `[lo, hi]`: a scan of [`SCAN_POINTS`]
/// points brackets the peak, golden-section search refines it.
pub fn maximize_scalar<F>(log_likelihood: F, bounds: (f64, f64)) -> Result<MlEstimate>
where
    F: Fn(f64) -> Result<f64>,
{
    let (lo, hi) = bounds;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(
            "bounds",
            format!("need finite lo < hi, got [{lo}, {hi}]"),
        ));
    }
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| {
            if i + 1 == SCAN_POINTS {
                hi
            } else {
                lo + i as f64 * step
            }
        })
        .collect();
    let ls = xs
        .iter()
        .map(|&x| log_likelihood(x))
        .collect::<Result<Vec<f64>>>()?;
    let (best, &lmax) = ls
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("scan is nonempty");
    let lmin = ls.iter().cloned().fold(f64::INFINITY, f64::min);
    if lmax - lmin <= FLAT_TOLERANCE * lmax.abs().max(1.0) {
        return Ok(MlEstimate {
            estimate: lo,
            log_likelihood: ls[0],
            flat: true,
        });
    }
    let mut a = xs[best.saturating_sub(1)];
    let mut b = xs[(best + 1).min(SCAN_POINTS - 1)];
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = log_likelihood(c)?;
    let mut fd = log_likelihood(d)?;
    while b - a > ML_TOLERANCE {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = log_likelihood(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = log_likelihood(d)?;
        }
    }
    let mut estimate = 0.5 * (a + b);
    let mut value = log_likelihood(estimate)?;
    // The bracket interior never reaches the bounds themselves.
    for (x, l) in [(xs[0], ls[0]), (hi, ls[SCAN_POINTS - 1])] {
        if l >= value {
            estimate = x;
            value = l;
        }
    }
    if lmax > value {
        estimate = xs[best];
        value = lmax;
    }
    Ok(MlEstimate {
        estimate,
        log_likelihood: value,
        flat: false,
    })
}

/// Poisson log-likelihood `Σ n_i ln p_i` up to θ-independent terms.
pub fn log_likelihood(counts: &[u64], probabilities: &[f64]) -> f64 {
    counts
        .iter()
        .zip(probabilities)
        .filter(|(n, _)| **n > 0)
        .map(|(&n, &p)| n as f64 * p.max(f64::MIN_POSITIVE).ln())
        .sum()
}

/// Counts of `data` aligned with the outcomes of `measurement` (residual
/// last). Positions are binned onto the pixels of a direct measurement.
pub fn outcome_counts(data: &PhotonData, measurement: &Measurement) -> Result<Vec<u64>> {
    match measurement {
        Measurement::Direct { image_grid } => {
            if !data.labels.is_empty() {
                return Err(Error::invalid(
                    "data",
                    "direct imaging needs photon positions",
                ));
            }
            let mut counts = data.binned(image_grid);
            counts.push(0);
            Ok(counts)
        }
        _ => {
            if data.labels.is_empty() {
                return Err(Error::invalid(
                    "data",
                    "mode measurement needs outcome counts",
                ));
            }
            Ok(data.counts.clone())
        }
    }
}

/// Maximum-likelihood separation of two equal point sources at `±θ/2`
/// from data recorded with `measurement`.
pub fn ml_separation(
    data: &PhotonData,
    measurement: &Measurement,
    psf: &Psf,
    bounds: (f64, f64),
) -> Result<MlEstimate> {
    let counts = outcome_counts(data, measurement)?;
    if bounds.0 < 0.0 {
        return Err(Error::invalid(
            "bounds",
            "separation bounds must be nonnegative",
        ));
    }
    maximize_scalar(
        |theta| {
            let dist = measurement.distribution(&symmetric_pair(theta), psf)?;
            let p = dist.with_residual();
            if p.len() != counts.len() {
                return Err(Error::invalid(
                    "data",
                    "outcome count does not match the measurement",
                ));
            }
            Ok(log_likelihood(&counts, &p))
        },
        bounds,
    )
}

fn check_photons(n: f64) -> Result<()> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::invalid(
            "photons",
            format!("must be positive, got {n}"),
        ));
    }
    Ok(())
}

fn count_of(data: &PhotonData, label: &str) -> Result<u64> {
    data.count(label)
        .ok_or_else(|| Error::invalid("data", format!("no outcome labelled `{label}`")))
}

/// `θ̌_{2q} = n_q / (N c_q²)` from PSF-adapted mode counts.
pub fn even_moment_estimator(
    data: &PhotonData,
    basis: &ModeBasis,
    photons: f64,
    q: usize,
) -> Result<f64> {
    if !matches!(basis.kind(), BasisKind::Pad | BasisKind::HermiteGauss) {
        return Err(Error::WrongBasisKind {
            found: basis.kind().to_string(),
            expected: "pad".into(),
        });
    }
    check_photons(photons)?;
    let c = basis.constant(q)?;
    let label = basis
        .labels()
        .get(q)
        .ok_or_else(|| Error::invalid("q", format!("basis has no mode {q}")))?;
    Ok(count_of(data, label)? as f64 / (photons * c * c))
}

/// `θ̌_{2q+1} = (n⁺ - n⁻) / (2N c_q c_{q+1})` from an iPAD pair.
pub fn odd_moment_estimator(
    data: &PhotonData,
    basis: &ModeBasis,
    photons: f64,
    q: usize,
) -> Result<f64> {
    if basis.ipad_order() != Some(q) {
        return Err(Error::WrongBasisKind {
            found: basis.kind().to_string(),
            expected: format!("ipad pair ({q}, {})", q + 1),
        });
    }
    check_photons(photons)?;
    let (c0, c1) = (basis.constant(q)?, basis.constant(q + 1)?);
    let plus = count_of(data, &basis.labels()[0])? as f64;
    let minus = count_of(data, &basis.labels()[1])? as f64;
    Ok((plus - minus) / (2.0 * photons * c0 * c1))
}

/// Leading-order MSE of the even-moment estimator, `θ_{2q}/(N c_q²)`.
pub fn even_moment_mse(theta_2q: f64, c_q: f64, photons: f64) -> f64 {
    theta_2q / (photons * c_q * c_q)
}

/// Leading-order MSE of the odd-moment estimator,
/// `(θ_{2q}/c_{q+1}² + θ_{2q+2}/c_q²)/(4N)`.
pub fn odd_moment_mse(theta_2q: f64, theta_2q2: f64, c_q: f64, c_q1: f64, photons: f64) -> f64 {
    (theta_2q / (c_q1 * c_q1) + theta_2q2 / (c_q * c_q)) / (4.0 * photons)
}

/// Per-trial estimates with their empirical error summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub parameters: Vec<String>,
    pub truth: Vec<f64>,
    /// `estimates[t][μ]` for trial `t`.
    #[serde(skip)]
    pub estimates: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub bias: Vec<f64>,
    pub mse: Vec<f64>,
    pub snr: Vec<f64>,
    pub trials: usize,
}

impl EstimatorResult {
    pub fn from_trials(
        parameters: Vec<String>,
        truth: Vec<f64>,
        estimates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let dim = parameters.len();
        if truth.len() != dim || estimates.is_empty() || estimates.iter().any(|e| e.len() != dim) {
            return Err(Error::invalid(
                "estimates",
                "need at least one trial with one value per parameter",
            ));
        }
        let n = estimates.len() as f64;
        let mut mean = vec![0.0; dim];
        let mut var = vec![0.0; dim];
        for mu in 0..dim {
            mean[mu] = estimates.iter().map(|e| e[mu]).sum::<f64>() / n;
            var[mu] = estimates
                .iter()
                .map(|e| (e[mu] - mean[mu]).powi(2))
                .sum::<f64>()
                / n;
        }
        let bias: Vec<f64> = mean.iter().zip(&truth).map(|(m, t)| m - t).collect();
        let mse: Vec<f64> = var.iter().zip(&bias).map(|(v, b)| v + b * b).collect();
        let snr = truth
            .iter()
            .zip(&mse)
            .map(|(t, m)| if *m > 0.0 { t * t / m } else { f64::INFINITY })
            .collect();
        Ok(EstimatorResult {
            parameters,
            truth,
            trials: estimates.len(),
            estimates,
            mean,
            bias,
            mse,
            snr,
        })
    }

    /// Standard error of the mean estimate of parameter `mu`.
    pub fn standard_error(&self, mu: usize) -> f64 {
        let n = self.trials as f64;
        let var = self.mse[mu] - self.bias[mu].powi(2);
        (var.max(0.0) / (n - 1.0).max(1.0)).sqrt()
    }

    /// One row per trial: `trial,<parameters...>`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["trial".to_string()];
        header.extend(self.parameters.iter().cloned());
        w.write_record(&header)?;
        for (t, e) in self.estimates.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(e.iter().map(|v| format!("{v:.12e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Summary without the per-trial values.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs `trial(t)` for `t = 0..trials` in parallel and summarizes. Each
/// trial should draw from its own stream `t`, so the result does not depend
/// on scheduling.
pub fn monte_carlo<F>(
    parameters: Vec<String>,
    truth: Vec<f64>,
    trials: usize,
    trial: F,
) -> Result<EstimatorResult>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    let estimates = (0..trials as u64)
        .into_par_iter()
        .map(&trial)
        .collect::<Result<Vec<_>>>()?;
    EstimatorResult::from_trials(parameters, truth, estimates)
}

/// Normalized Gaussian reference density of standard deviation `std`
/// centred at `mean`, sampled on `grid`.
pub fn gaussian_reference(grid: &Grid, mean: f64, std: f64) -> Result<Vec<f64>> {
    if !(std > 0.0) {
        return Err(Error::invalid("reference.std", "must be positive"));
    }
    let mut g: Vec<f64> = grid
        .points()
        .iter()
        .map(|x| (-(x - mean).powi(2) / (2.0 * std * std)).exp())
        .collect();
    let total = grid.integrate(&g);
    g.iter_mut().for_each(|v| *v /= total);
    Ok(g)
}

/// Generalized Fourier expansion `F(X) ≈ G(X) Σ_μ F̃_μ h_μ(X)` with `h_μ`
/// orthonormal under the reference density `G`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierModel {
    grid: Grid,
    reference: Vec<f64>,
    polynomials: Vec<Polynomial>,
    coefficients: Vec<f64>,
}

impl FourierModel {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn polynomials(&self) -> &[Polynomial] {
        &self.polynomials
    }

    /// Lower-triangular `H` with `h_μ(X) = Σ_ν H_{μν} X^ν`.
    pub fn h_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.polynomials.len();
        self.polynomials
            .iter()
            .map(|p| {
                let mut row = p.coefficients().to_vec();
                row.resize(n, 0.0);
                row
            })
            .collect()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn max_order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Same model keeping coefficients up to `order`.
    pub fn truncated(&self, order: usize) -> FourierModel {
        let n = (order + 1).min(self.coefficients.len());
        FourierModel {
            grid: self.grid,
            reference: self.reference.clone(),
            polynomials: self.polynomials[..n].to_vec(),
            coefficients: self.coefficients[..n].to_vec(),
        }
    }
}

/// `F̃_μ = Σ_ν H_{μν} θ_ν` for `μ ≤ max_order`, with `h_μ` from weighted
/// Gram-Schmidt under `reference` sampled on `grid`.
pub fn fourier_coefficients(
    moments: &MomentVector,
    grid: Grid,
    reference: &[f64],
    max_order: usize,
) -> Result<FourierModel> {
    if moments.max_order() < max_order {
        return Err(Error::invalid(
            "moments",
            format!(
                "need moments up to order {max_order}, have {}",
                moments.max_order()
            ),
        ));
    }
    let set = orthonormalize(&grid.points(), reference, grid.spacing(), max_order)?;
    let coefficients = set
        .polynomials
        .iter()
        .map(|h| {
            h.coefficients()
                .iter()
                .enumerate()
                .map(|(nu, c)| c * moments[nu])
                .sum()
        })
        .collect();
    Ok(FourierModel {
        grid,
        reference: reference.to_vec(),
        polynomials: set.polynomials,
        coefficients,
    })
}

/// `F̂(X) = G(X) Σ_μ F̃_μ h_μ(X)` on `grid`; with `clip`, negative values
/// are zeroed and the result renormalized.
pub fn reconstruct_object(model: &FourierModel, grid: &Grid, clip: bool) -> Result<Vec<f64>> {
    let same = grid == &model.grid;
    let mut out: Vec<f64> = grid
        .points()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let g = if same {
                model.reference[i]
            } else {
                interpolate(&model.grid, &model.reference, x)
            };
            let s: f64 = model
                .polynomials
                .iter()
                .zip(&model.coefficients)
                .map(|(h, c)| c * h.eval(x))
                .sum();
            g * s
        })
        .collect();
    if clip {
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        let total = grid.integrate(&out);
        if !(total > 0.0) {
            return Err(Error::invalid(
                "reconstruction",
                "clipped estimate has no positive mass",
            ));
        }
        out.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_parabola_peak() {
        let m = maximize_scalar(|x| Ok(-(x - 0.37f64).powi(2)), (0.0, 1.0)).unwrap();
        assert!((m.estimate - 0.37).abs() < 1e-6);
        assert!(!m.flat);
        let edge = maximize_scalar(|x| Ok(-x), (0.0, 1.0)).unwrap();
        assert_eq!(edge.estimate, 0.0);
        let flat = maximize_scalar(|_| Ok(-3.0), (0.2, 1.0)).unwrap();
        assert!(flat.flat);
        assert_eq!(flat.estimate, 0.2);
    }

    #[test]
    fn result_summary() {
        let r = EstimatorResult::from_trials(
            vec!["a".into()],
            vec![1.0],
            vec![vec![0.0], vec![2.0], vec![1.0], vec![1.0]],
        )
        .unwrap();
        assert_eq!(r.mean, vec![1.0]);
        assert!((r.mse[0] - 0.5).abs() < 1e-15);
        assert!((r.snr[0] - 2.0).abs() < 1e-12);
        assert!(r.mse[0] >= r.bias[0].powi(2));
    }

    #[test]
    fn reference_expands_to_itself() {
        let grid = Grid::symmetric(1.0, 801).unwrap();
        let g = gaussian_reference(&grid, 0.0, 0.1).unwrap();
        // Moments by the same quadrature as the orthogonality.
        let moments = (0..=6)
            .map(|nu| {
                grid.points()
                    .iter()
                    .zip(&g)
                    .map(|(x, w)| x.powi(nu) * w * grid.spacing())
                    .sum()
            })
            .collect();
        let model = fourier_coefficients(&MomentVector::new(moments), grid, &g, 6).unwrap();
        assert!((model.coefficients()[0] - 1.0).abs() < 1e-8);
        for c in &model.coefficients()[1..] {
            assert!(c.abs() < 1e-8, "{c}");
        }
        let h = model.h_matrix();
        for (mu, row) in h.iter().enumerate() {
            assert!(row[mu + 1..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn clipped_reconstruction_is_a_density() {
        let grid = Grid::symmetric(1.0, 801).unwrap();
        let g = gaussian_reference(&grid, 0.0, 0.15).unwrap();
        let model = fourier_coefficients(&symmetric_pair(0.3).moments(8), grid, &g, 8).unwrap();
        let f = reconstruct_object(&model, &grid, true).unwrap();
        assert!(f.iter().all(|v| *v >= 0.0));
        assert!((grid.integrate(&f) - 1.0).abs() < 1e-9);
    }
}
