//! Measurement mode bases, overlap amplitudes and outcome distributions.
//!
//! Modes are stored as frequency-domain samples `Φ_q(k)` on the reciprocal
//! grid of a [`Psf`]. Overlaps with a shifted PSF are
//!
//! ```text
//! ⟨φ_q | ψ(· - X)⟩ = Σ_k Φ_q*(k) exp(-ikX) Ψ(k) Δk
//! ```
//!
//! summed over the PSF's active frequency window.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::polynomial::{self, hermite_coefficients, Polynomial};
use crate::psf::{gaussian_spectrum, Psf};
use crate::scene::SourceScene;
use crate::Complex64;

/// Label of the drop-port outcome collecting everything outside the modes.
pub const RESIDUAL_LABEL: &str = "residual";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    HermiteGauss,
    Pad,
    Ipad,
    Splice,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::HermiteGauss => "hermite-gauss",
            BasisKind::Pad => "pad",
            BasisKind::Ipad => "ipad",
            BasisKind::Splice => "splice",
        })
    }
}

/// Finite orthonormal family of measurement modes.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    kind: BasisKind,
    grid: Grid,
    labels: Vec<String>,
    modes: Vec<Vec<Complex64>>,
    polynomials: Option<Vec<Polynomial>>,
    /// `c_q` of the underlying PSF-adapted modes, indexed by order.
    constants: Vec<f64>,
    /// First order of the interferometric pair, for iPAD bases.
    pair: Option<usize>,
}

impl ModeBasis {
    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Frequency samples of mode `q` on the full reciprocal grid.
    pub fn mode(&self, q: usize) -> &[Complex64] {
        &self.modes[q]
    }

    pub fn polynomials(&self) -> Option<&[Polynomial]> {
        self.polynomials.as_deref()
    }

    /// Constants `c_q` such that the overlap of mode `q` with a PSF shifted by
    /// `X` behaves as `c_q X^q` for small `X`.
    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn constant(&self, q: usize) -> Result<f64> {
        match self.constants.get(q) {
            Some(&c) if c != 0.0 && c.is_finite() => Ok(c),
            _ => Err(Error::ZeroConstant { index: q }),
        }
    }

    /// Order `q` of the pair `(q, q+1)` combined by an iPAD basis.
    pub fn ipad_order(&self) -> Option<usize> {
        self.pair
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Matrix of inner products `Σ_k Φ_q* Φ_p Δk`.
    pub fn gram_matrix(&self, dk: f64) -> Vec<Vec<Complex64>> {
        self.modes
            .iter()
            .map(|a| {
                self.modes
                    .iter()
                    .map(|b| {
                        a.iter()
                            .zip(b)
                            .map(|(x, y)| x.conj() * y)
                            .sum::<Complex64>()
                            * dk
                    })
                    .collect()
            })
            .collect()
    }

    fn require_grid(&self, psf: &Psf) -> Result<()> {
        if &self.grid != psf.grid() {
            return Err(Error::invalid(
                "basis",
                "mode basis was built on a different grid than the point-spread function",
            ));
        }
        Ok(())
    }

    /// Overlaps of every mode with `exp(-ikX)Ψ(k)`.
    pub fn overlaps(&self, psf: &Psf, shift: f64) -> Result<Vec<Complex64>> {
        self.require_grid(psf)?;
        psf.check_shift(shift)?;
        Ok(self.overlaps_unchecked(psf, shift))
    }

    pub(crate) fn overlaps_unchecked(&self, psf: &Psf, shift: f64) -> Vec<Complex64> {
        let shifted = psf.shifted_spectrum_unchecked(shift);
        let range = psf.active_range();
        let dk = psf.dk();
        self.modes
            .iter()
            .map(|mode| {
                mode[range.clone()]
                    .iter()
                    .zip(&shifted)
                    .map(|(a, b)| a.conj() * b)
                    .sum::<Complex64>()
                    * dk
            })
            .collect()
    }

    /// Writes `k, re_0, im_0, re_1, im_1, …` rows over the full grid.
    pub fn write_csv(&self, psf: &Psf, path: impl AsRef<Path>) -> Result<()> {
        self.require_grid(psf)?;
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["k".to_string()];
        for label in &self.labels {
            header.push(format!("re_{label}"));
            header.push(format!("im_{label}"));
        }
        writer.write_record(&header)?;
        for (m, k) in psf.wavenumbers().iter().enumerate() {
            let mut row = vec![format!("{k:.12e}")];
            for mode in &self.modes {
                row.push(format!("{:.12e}", mode[m].re));
                row.push(format!("{:.12e}", mode[m].im));
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// `(-i)^q`.
fn minus_i_pow(q: usize) -> Complex64 {
    match q % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

fn factorial(q: usize) -> f64 {
    (1..=q).map(|i| i as f64).product()
}

/// Weighted orthonormal polynomials under `|Ψ(k)|²` on the active window.
///
/// Thin wrapper over [`polynomial::gram_schmidt_polynomials`] with the
/// sample points and weight taken from `psf`.
pub fn gram_schmidt_polynomials(psf: &Psf, max_order: usize) -> Result<polynomial::OrthonormalSet> {
    let range = psf.active_range();
    let k = &psf.wavenumbers()[range.clone()];
    let w: Vec<f64> = psf.spectrum()[range].iter().map(|s| s.norm_sqr()).collect();
    polynomial::gram_schmidt_polynomials(k, &w, psf.dk(), max_order)
}

/// PSF-adapted basis `Φ_q(k) = (-i)^q b_q(k) Ψ(k)` for `q = 0..=max_order`.
///
/// `b_q` are orthonormal under `|Ψ|²`; `c_q = ⟨b_q, k^q⟩/q!` is made positive
/// by the sign of `b_q`.
pub fn pad_basis(psf: &Psf, max_order: usize) -> Result<ModeBasis> {
    let set = gram_schmidt_polynomials(psf, max_order)?;
    let mut basis = assemble_pad(psf, set.values, Some(set.polynomials));
    basis.labels = (0..=max_order).map(|q| format!("pad{q}")).collect();
    Ok(basis)
}

/// PSF-adapted modes `0..count` without order or conditioning limits and
/// without polynomial coefficients.
pub(crate) fn pad_modes_unchecked(psf: &Psf, count: usize) -> ModeBasis {
    let range = psf.active_range();
    let k = &psf.wavenumbers()[range.clone()];
    let masses: Vec<f64> = psf.spectrum()[range]
        .iter()
        .map(|s| s.norm_sqr() * psf.dk())
        .collect();
    let values = polynomial::orthonormal_values(k, &masses, count.saturating_sub(1));
    let mut basis = assemble_pad(psf, values, None);
    basis.labels = (0..count).map(|q| format!("pad{q}")).collect();
    basis
}

fn assemble_pad(
    psf: &Psf,
    mut values: Vec<Vec<f64>>,
    mut polys: Option<Vec<Polynomial>>,
) -> ModeBasis {
    let range = psf.active_range();
    let k = &psf.wavenumbers()[range.clone()];
    let spec = &psf.spectrum()[range.clone()];
    let n = psf.grid().samples();
    let dk = psf.dk();
    let mut constants = Vec::with_capacity(values.len());
    let mut modes = Vec::with_capacity(values.len());
    for (q, b) in values.iter_mut().enumerate() {
        let c = b
            .iter()
            .zip(spec)
            .zip(k)
            .map(|((bq, s), kk)| bq * s.norm_sqr() * kk.powi(q as i32))
            .sum::<f64>()
            * dk
            / factorial(q);
        if c < 0.0 {
            b.iter_mut().for_each(|v| *v = -*v);
            if let Some(p) = polys.as_mut() {
                p[q] = Polynomial::new(p[q].coefficients().iter().map(|v| -v).collect());
            }
        }
        constants.push(c.abs());
        let phase = minus_i_pow(q);
        let mut mode = vec![Complex64::new(0.0, 0.0); n];
        for (j, m) in range.clone().enumerate() {
            mode[m] = phase * b[j] * spec[j];
        }
        modes.push(mode);
    }
    ModeBasis {
        kind: BasisKind::Pad,
        grid: *psf.grid(),
        labels: Vec::new(),
        modes,
        polynomials: polys,
        constants,
        pair: None,
    }
}

/// Hermite-Gauss modes `q = 0..count` for the width `σ` of `psf`, built from
/// the closed form `(-i)^q He_q(k/√v)/√q! · Ψ_gauss(k)` with `v = 1/(4σ²)`.
pub fn hermite_gauss_basis(psf: &Psf, count: usize) -> Result<ModeBasis> {
    if count == 0 {
        return Err(Error::invalid("modes", "need at least one mode"));
    }
    let sigma = psf.sigma();
    let scale = 2.0 * sigma;
    let dk = psf.dk();
    let mut modes = Vec::with_capacity(count);
    let mut constants = Vec::with_capacity(count);
    let mut polys = Vec::with_capacity(count);
    for q in 0..count {
        let he = hermite_coefficients(q);
        let norm = factorial(q).sqrt();
        // He_q(k/√v)/√q! in powers of k.
        let coeffs: Vec<f64> = he
            .iter()
            .enumerate()
            .map(|(p, c)| c * scale.powi(p as i32) / norm)
            .collect();
        let poly = Polynomial::new(coeffs);
        let phase = minus_i_pow(q);
        let mut mode: Vec<Complex64> = psf
            .wavenumbers()
            .iter()
            .map(|&k| {
                let g = gaussian_spectrum(sigma, k);
                if g == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    phase * poly.eval(k) * g
                }
            })
            .collect();
        let n2 = mode.iter().map(|m| m.norm_sqr()).sum::<f64>() * dk;
        mode.iter_mut().for_each(|m| *m /= n2.sqrt());
        modes.push(mode);
        constants.push(1.0 / (scale.powi(q as i32) * norm));
        polys.push(poly);
    }
    Ok(ModeBasis {
        kind: BasisKind::HermiteGauss,
        grid: *psf.grid(),
        labels: (0..count).map(|q| format!("hg{q}")).collect(),
        modes,
        polynomials: Some(polys),
        constants,
        pair: None,
    })
}

/// Interferometric pair `(Φ_q ± Φ_{q+1})/√2` replacing modes `q` and `q+1`
/// of a PSF-adapted (or Hermite-Gauss) basis; other modes are kept.
pub fn ipad_pairs(basis: &ModeBasis, q: usize) -> Result<ModeBasis> {
    if !matches!(basis.kind, BasisKind::Pad | BasisKind::HermiteGauss) {
        return Err(Error::WrongBasisKind {
            found: basis.kind.to_string(),
            expected: "pad".into(),
        });
    }
    if q + 1 >= basis.len() {
        return Err(Error::invalid(
            "ipad.order",
            format!(
                "pair ({q}, {}) needs a basis of at least {} modes",
                q + 1,
                q + 2
            ),
        ));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let a = &basis.modes[q];
    let b = &basis.modes[q + 1];
    let plus: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| (x + y) * r).collect();
    let minus: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| (x - y) * r).collect();
    let mut modes = vec![plus, minus];
    let mut labels = vec![format!("ipad{q}+"), format!("ipad{q}-")];
    for (p, mode) in basis.modes.iter().enumerate() {
        if p != q && p != q + 1 {
            modes.push(mode.clone());
            labels.push(basis.labels[p].clone());
        }
    }
    Ok(ModeBasis {
        kind: BasisKind::Ipad,
        grid: basis.grid,
        labels,
        modes,
        polynomials: None,
        constants: basis.constants.clone(),
        pair: Some(q),
    })
}

/// Half-plane phase-plate mode `sgn(x)ψ(x)`, renormalized.
pub fn splice_mode(psf: &Psf) -> Result<ModeBasis> {
    psf.require_even()?;
    let xs = psf.grid().points();
    let mut amp: Vec<Complex64> = psf
        .amplitude()
        .iter()
        .zip(&xs)
        .map(|(a, &x)| {
            if x > 0.0 {
                *a
            } else if x < 0.0 {
                -*a
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let n2: f64 = amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * psf.grid().spacing();
    amp.iter_mut().for_each(|a| *a /= n2.sqrt());
    let spectrum = psf.spectrum_of(&amp);
    Ok(ModeBasis {
        kind: BasisKind::Splice,
        grid: *psf.grid(),
        labels: vec!["splice".into()],
        modes: vec![spectrum],
        polynomials: None,
        constants: Vec::new(),
        pair: None,
    })
}

/// Overlap of the SPLICE mode with the normalized derivative mode
/// `∂ψ/∂x / ‖∂ψ/∂x‖`, a measure of how well the phase plate converts the
/// derivative mode into the fiber mode.
pub fn splice_match_factor(psf: &Psf) -> Result<f64> {
    let splice = splice_mode(psf)?;
    let dk = psf.dk();
    let deriv: Vec<Complex64> = psf
        .spectrum()
        .iter()
        .zip(psf.wavenumbers())
        .map(|(s, &k)| s * Complex64::new(0.0, k))
        .collect();
    let norm = (deriv.iter().map(|d| d.norm_sqr()).sum::<f64>() * dk).sqrt();
    let ip: Complex64 = splice.modes[0]
        .iter()
        .zip(&deriv)
        .map(|(a, b)| a.conj() * b)
        .sum::<Complex64>()
        * dk
        / norm;
    Ok(ip.norm())
}

/// Single overlap `⟨φ_q | ψ(· - X)⟩`.
pub fn overlap(basis: &ModeBasis, q: usize, psf: &Psf, shift: f64) -> Result<Complex64> {
    if q >= basis.len() {
        return Err(Error::invalid(
            "q",
            format!("basis has {} modes", basis.len()),
        ));
    }
    basis.require_grid(psf)?;
    psf.check_shift(shift)?;
    let shifted = psf.shifted_spectrum_unchecked(shift);
    let range = psf.active_range();
    Ok(basis.modes[q][range]
        .iter()
        .zip(&shifted)
        .map(|(a, b)| a.conj() * b)
        .sum::<Complex64>()
        * psf.dk())
}

/// Probabilities of a measurement: discrete outcomes, or pixel masses
/// `f(x_i)Δx` of an image density, plus a residual bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    labels: Vec<String>,
    probabilities: Vec<f64>,
    density: Option<(Grid, Vec<f64>)>,
    residual: f64,
}

impl OutcomeDistribution {
    /// Discrete outcomes; the residual is `1 - Σ p`.
    pub fn discrete(labels: Vec<String>, probabilities: Vec<f64>) -> Result<Self> {
        if labels.len() != probabilities.len() {
            return Err(Error::invalid(
                "outcomes",
                "labels and probabilities differ in length",
            ));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < -1e-12) {
            return Err(Error::invalid(
                "outcomes",
                "probabilities must be nonnegative",
            ));
        }
        let probabilities: Vec<f64> = probabilities.into_iter().map(|p| p.max(0.0)).collect();
        let residual = 1.0 - probabilities.iter().sum::<f64>();
        if residual < -1e-9 {
            return Err(Error::invalid(
                "outcomes",
                format!("probabilities exceed one by {:.3e}", -residual),
            ));
        }
        Ok(OutcomeDistribution {
            labels,
            probabilities,
            density: None,
            residual,
        })
    }

    /// Image-plane density `f(x)` on `grid`.
    pub fn from_density(grid: Grid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.samples() {
            return Err(Error::invalid(
                "density",
                "length must match the image grid",
            ));
        }
        let dx = grid.spacing();
        let probabilities: Vec<f64> = density.iter().map(|f| f * dx).collect();
        // Pixels tile the periodic grid, so nothing escapes; `1 - Σp` would
        // only hold rounding noise.
        let residual = 0.0;
        Ok(OutcomeDistribution {
            labels: Vec::new(),
            probabilities,
            density: Some((grid, density)),
            residual,
        })
    }

    /// Outcome labels; empty for image densities.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Image grid and density `f(x)` for direct imaging.
    pub fn density(&self) -> Option<(&Grid, &[f64])> {
        self.density.as_ref().map(|(g, d)| (g, d.as_slice()))
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Probability outside the listed outcomes (rounding may leave it a few
    /// ulps below zero).
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Probability of the outcome with this label.
    pub fn get(&self, label: &str) -> Option<f64> {
        if label == RESIDUAL_LABEL {
            return Some(self.residual);
        }
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.probabilities[i])
    }

    /// Outcome probabilities followed by the residual, clamped at zero.
    pub fn with_residual(&self) -> Vec<f64> {
        let mut out = self.probabilities.clone();
        out.push(self.residual.max(0.0));
        out
    }

    /// Labels matching [`OutcomeDistribution::with_residual`].
    pub fn labels_with_residual(&self) -> Vec<String> {
        let mut out: Vec<String> = if self.labels.is_empty() {
            (0..self.probabilities.len())
                .map(|i| format!("pixel{i}"))
                .collect()
        } else {
            self.labels.clone()
        };
        out.push(RESIDUAL_LABEL.into());
        out
    }
}

/// `g_q = Σ_j w_j |⟨φ_q | ψ(· - X_j)⟩|²` for every mode of the basis.
pub fn mode_probabilities(
    basis: &ModeBasis,
    scene: &SourceScene,
    psf: &Psf,
) -> Result<OutcomeDistribution> {
    basis.require_grid(psf)?;
    let nodes = scene.nodes();
    for &(x, _) in &nodes {
        psf.check_shift(x)?;
    }
    let mut g = vec![0.0; basis.len()];
    for (x, w) in nodes {
        for (gq, a) in g.iter_mut().zip(basis.overlaps_unchecked(psf, x)) {
            *gq += w * a.norm_sqr();
        }
    }
    OutcomeDistribution::discrete(basis.labels.clone(), g)
}

/// Image-plane density `f(x) = Σ_j w_j |ψ(x - X_j)|²` on `image_grid`.
///
/// On the PSF's own grid the shifts are FFT phase ramps; other grids are
/// evaluated point by point with band-limited interpolation.
pub fn direct_intensity(
    scene: &SourceScene,
    psf: &Psf,
    image_grid: &Grid,
) -> Result<OutcomeDistribution> {
    let nodes = scene.nodes();
    for &(x, _) in &nodes {
        psf.check_shift(x)?;
    }
    let mut f = vec![0.0; image_grid.samples()];
    if image_grid == psf.grid() {
        for (x, w) in nodes {
            for (fi, a) in f.iter_mut().zip(psf.shifted_amplitude(x)?) {
                *fi += w * a.norm_sqr();
            }
        }
    } else {
        let xs = image_grid.points();
        for (x, w) in nodes {
            for (fi, &xi) in f.iter_mut().zip(&xs) {
                *fi += w * psf.amplitude_at(xi - x).norm_sqr();
            }
        }
    }
    OutcomeDistribution::from_density(*image_grid, f)
}

/// Image-inversion interferometer: probabilities of the even and odd parity
/// ports, `p_odd = Σ_j w_j ‖odd part of ψ(· - X_j)‖²`.
pub fn sliver_probabilities(scene: &SourceScene, psf: &Psf) -> Result<OutcomeDistribution> {
    psf.require_even()?;
    let nodes = scene.nodes();
    for &(x, _) in &nodes {
        psf.check_shift(x)?;
    }
    let range = psf.active_range();
    let start = range.start;
    let dk = psf.dk();
    let (mut even, mut odd) = (0.0, 0.0);
    for (x, w) in nodes {
        let s = psf.shifted_spectrum_unchecked(x);
        let mut pe = 0.0;
        let mut po = 0.0;
        for m in range.clone() {
            // Active window is symmetric about k = 0.
            let mirror = psf.mirror_frequency(m).expect("active window is symmetric");
            let a = s[m - start];
            let b = s[mirror - start];
            pe += (0.5 * (a + b)).norm_sqr();
            po += (0.5 * (a - b)).norm_sqr();
        }
        even += w * pe * dk;
        odd += w * po * dk;
    }
    OutcomeDistribution::discrete(vec!["even".into(), "odd".into()], vec![even, odd])
}

/// A photon-counting measurement.
#[derive(Debug, Clone)]
pub enum Measurement {
    /// Ideal imaging with pixels on `image_grid`.
    Direct { image_grid: Grid },
    /// Demultiplexing into the modes of a basis plus a drop port.
    Modes(ModeBasis),
    /// Parity sorting into even and odd ports.
    Sliver,
}

impl Measurement {
    pub fn distribution(&self, scene: &SourceScene, psf: &Psf) -> Result<OutcomeDistribution> {
        match self {
            Measurement::Direct { image_grid } => direct_intensity(scene, psf, image_grid),
            Measurement::Modes(basis) => mode_probabilities(basis, scene, psf),
            Measurement::Sliver => sliver_probabilities(scene, psf),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Measurement::Direct { .. } => "direct".into(),
            Measurement::Modes(b) => b.kind().to_string(),
            Measurement::Sliver => "sliver".into(),
        }
    }
}

/// `exp(-Q) Q^q / q!` with `Q = X²/(4σ²)`: the Gaussian probability of
/// Hermite-Gauss mode `q` for a point source at `X`.
pub fn gaussian_mode_probability(sigma: f64, shift: f64, q: usize) -> f64 {
    let big_q = shift * shift / (4.0 * sigma * sigma);
    (-big_q).exp() * big_q.powi(q as i32) / factorial(q)
}

/// `√(2/π)`, the ideal SPLICE match factor for a Gaussian PSF.
pub fn gaussian_splice_match() -> f64 {
    (2.0 / PI).sqrt()
}
