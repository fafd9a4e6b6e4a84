//! Point-spread functions on uniform grids.
//!
//! A [`Psf`] holds the amplitude `ψ(x)` on a real-space [`Grid`] together with
//! its unitary Fourier image
//!
//! ```text
//! Ψ(k) = (2π)^(-1/2) ∫ dx ψ(x) exp(-ikx)
//! ```
//!
//! sampled on the reciprocal grid `k_m = (m - ⌊n/2⌋)·Δk`, `Δk = 2π/(nΔx)`.
//! The two sample sets are an exact discrete Fourier pair, so Parseval's
//! identity holds to rounding and translations `ψ(x - X) ↔ exp(-ikX)Ψ(k)`
//! are band-limited interpolations.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Required norm captured by the grid for analytic PSFs.
const NORM_CAPTURE: f64 = 1.0 - 1e-6;
/// Minimum half-span of the grid in units of σ.
const MIN_SPAN_SIGMAS: f64 = 8.0;
/// Margin kept between a shifted PSF and the grid edge, in units of σ.
const SHIFT_MARGIN_SIGMAS: f64 = 6.0;
/// Relative spectral power below which frequencies are treated as empty.
const ACTIVE_THRESHOLD: f64 = 1e-32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsfKind {
    Gaussian,
    SignumMaskedGaussian,
    Custom,
}

impl fmt::Display for PsfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsfKind::Gaussian => "gaussian",
            PsfKind::SignumMaskedGaussian => "signum-masked-gaussian",
            PsfKind::Custom => "custom",
        })
    }
}

/// FFT plans and phase factors tying the real-space and frequency grids.
struct Transform {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `exp(2πi·c·j/n)` for the centred frequency index `c`.
    x_twiddle: Vec<Complex64>,
    /// `exp(-i k_m x_0)`.
    k_phase: Vec<Complex64>,
    dx: f64,
    dk: f64,
}

impl Transform {
    fn new(grid: &Grid) -> Self {
        let n = grid.samples();
        let c = n / 2;
        let dx = grid.spacing();
        let dk = 2.0 * PI / (n as f64 * dx);
        let mut planner = FftPlanner::new();
        let x_twiddle = (0..n)
            .map(|j| {
                let r = ((c * j) % n) as f64 / n as f64;
                Complex64::from_polar(1.0, 2.0 * PI * r)
            })
            .collect();
        let x0 = grid.lower();
        let k_phase = (0..n)
            .map(|m| Complex64::from_polar(1.0, -wavenumber(m, c, dk) * x0))
            .collect();
        Transform {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            x_twiddle,
            k_phase,
            dx,
            dk,
        }
    }

    fn to_spectrum(&self, samples: &[Complex64]) -> Vec<Complex64> {
        let scale = self.dx / (2.0 * PI).sqrt();
        let mut buf: Vec<Complex64> = samples
            .iter()
            .zip(&self.x_twiddle)
            .map(|(s, t)| s * t)
            .collect();
        self.forward.process(&mut buf);
        buf.iter_mut()
            .zip(&self.k_phase)
            .for_each(|(b, p)| *b *= p * scale);
        buf
    }

    fn to_amplitude(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let scale = self.dk / (2.0 * PI).sqrt();
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .zip(&self.k_phase)
            .map(|(s, p)| s * p.conj())
            .collect();
        self.inverse.process(&mut buf);
        buf.iter_mut()
            .zip(&self.x_twiddle)
            .for_each(|(b, t)| *b *= t.conj() * scale);
        buf
    }
}

fn wavenumber(m: usize, centre: usize, dk: f64) -> f64 {
    (m as f64 - centre as f64) * dk
}

/// Amplitude point-spread function with its cached frequency image.
#[derive(Clone)]
pub struct Psf {
    kind: PsfKind,
    sigma: f64,
    grid: Grid,
    amplitude: Vec<Complex64>,
    wavenumbers: Vec<f64>,
    spectrum: Vec<Complex64>,
    active: Range<usize>,
    transform: Arc<Transform>,
}

impl fmt::Debug for Psf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Psf")
            .field("kind", &self.kind)
            .field("sigma", &self.sigma)
            .field("grid", &self.grid)
            .field("active", &self.active)
            .finish_non_exhaustive()
    }
}

/// Closed-form Gaussian amplitude `(2πσ²)^(-1/4) exp(-x²/(4σ²))`.
pub fn gaussian_amplitude(sigma: f64, x: f64) -> f64 {
    (2.0 * PI * sigma * sigma).powf(-0.25) * (-x * x / (4.0 * sigma * sigma)).exp()
}

/// Closed-form unitary Fourier image of [`gaussian_amplitude`].
pub fn gaussian_spectrum(sigma: f64, k: f64) -> f64 {
    (2.0 * sigma * sigma / PI).powf(0.25) * (-sigma * sigma * k * k).exp()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(
            "sigma",
            format!("must be positive, got {sigma}"),
        ));
    }
    Ok(())
}

/// Checks shared by the analytic Gaussian-envelope PSFs: the grid must span
/// ±8σ, hold the Gaussian norm, and resolve its spectrum.
fn check_gaussian_grid(sigma: f64, grid: &Grid) -> Result<f64> {
    let dx = grid.spacing();
    let captured: f64 = grid
        .points()
        .iter()
        .map(|&x| gaussian_amplitude(sigma, x).powi(2))
        .sum::<f64>()
        * dx;
    let span_ok =
        grid.lower() <= -MIN_SPAN_SIGMAS * sigma && grid.upper() >= MIN_SPAN_SIGMAS * sigma;
    if captured < NORM_CAPTURE || !span_ok {
        return Err(Error::GridTooNarrow {
            captured: if span_ok {
                captured
            } else {
                captured.min(NORM_CAPTURE)
            },
            required: NORM_CAPTURE,
        });
    }
    let k_nyquist = PI / dx;
    if (2.0 * sigma * sigma * k_nyquist * k_nyquist) < 70.0 {
        return Err(Error::invalid(
            "grid.samples",
            format!("spacing {dx:.4e} too coarse for sigma {sigma}"),
        ));
    }
    Ok(captured)
}

/// Gaussian PSF `ψ(x) = (2πσ²)^(-1/4) exp(-x²/(4σ²))`.
pub fn make_gaussian_psf(sigma: f64, grid: Grid) -> Result<Psf> {
    check_sigma(sigma)?;
    let captured = check_gaussian_grid(sigma, &grid)?;
    let norm = captured.sqrt();
    let amplitude = grid
        .points()
        .iter()
        .map(|&x| Complex64::new(gaussian_amplitude(sigma, x) / norm, 0.0))
        .collect();
    let transform = Arc::new(Transform::new(&grid));
    let n = grid.samples();
    let wavenumbers: Vec<f64> = (0..n).map(|m| wavenumber(m, n / 2, transform.dk)).collect();
    let mut spectrum: Vec<Complex64> = wavenumbers
        .iter()
        .map(|&k| Complex64::new(gaussian_spectrum(sigma, k), 0.0))
        .collect();
    normalize(&mut spectrum, transform.dk);
    Ok(Psf::assemble(
        PsfKind::Gaussian,
        sigma,
        grid,
        amplitude,
        wavenumbers,
        spectrum,
        transform,
    ))
}

/// Gaussian PSF seen through a signum pupil mask: `Ψ(k) = sgn(k)Ψ_gauss(k)`,
/// renormalized. The amplitude is odd with a zero at the origin and decays
/// only algebraically; it is represented on the periodic grid.
pub fn make_signum_masked_psf(sigma: f64, grid: Grid) -> Result<Psf> {
    check_sigma(sigma)?;
    check_gaussian_grid(sigma, &grid)?;
    let transform = Arc::new(Transform::new(&grid));
    let n = grid.samples();
    let wavenumbers: Vec<f64> = (0..n).map(|m| wavenumber(m, n / 2, transform.dk)).collect();
    let mut spectrum: Vec<Complex64> = wavenumbers
        .iter()
        .map(|&k| {
            let s = if k > 0.0 {
                1.0
            } else if k < 0.0 {
                -1.0
            } else {
                0.0
            };
            Complex64::new(s * gaussian_spectrum(sigma, k), 0.0)
        })
        .collect();
    // Unpaired Nyquist bin of even-sized grids would break odd symmetry.
    if n % 2 == 0 {
        spectrum[0] = Complex64::new(0.0, 0.0);
    }
    normalize(&mut spectrum, transform.dk);
    let amplitude = transform.to_amplitude(&spectrum);
    Ok(Psf::assemble(
        PsfKind::SignumMaskedGaussian,
        sigma,
        grid,
        amplitude,
        wavenumbers,
        spectrum,
        transform,
    ))
}

fn normalize(values: &mut [Complex64], weight: f64) {
    let norm = (values.iter().map(|v| v.norm_sqr()).sum::<f64>() * weight).sqrt();
    values.iter_mut().for_each(|v| *v /= norm);
}

impl Psf {
    /// Custom PSF from amplitude samples; renormalized, nominal width set to
    /// the RMS width of `|ψ|²`.
    pub fn from_samples(grid: Grid, amplitude: Vec<Complex64>) -> Result<Psf> {
        if amplitude.len() != grid.samples() {
            return Err(Error::invalid(
                "psf.samples",
                format!(
                    "{} samples for a grid of {}",
                    amplitude.len(),
                    grid.samples()
                ),
            ));
        }
        if amplitude
            .iter()
            .any(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(Error::invalid("psf.samples", "non-finite amplitude"));
        }
        let dx = grid.spacing();
        let norm2 = amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx;
        if !(norm2 > 0.0) {
            return Err(Error::invalid(
                "psf.samples",
                "amplitude is identically zero",
            ));
        }
        let mut amplitude = amplitude;
        let norm = norm2.sqrt();
        amplitude.iter_mut().for_each(|a| *a /= norm);
        let xs = grid.points();
        let intensity: Vec<f64> = amplitude.iter().map(|a| a.norm_sqr()).collect();
        let mean: f64 = xs.iter().zip(&intensity).map(|(x, i)| x * i).sum::<f64>() * dx;
        let var: f64 = xs
            .iter()
            .zip(&intensity)
            .map(|(x, i)| (x - mean).powi(2) * i)
            .sum::<f64>()
            * dx;
        let sigma = var.sqrt();
        if !(sigma > 0.0) {
            return Err(Error::invalid("psf.samples", "amplitude has zero width"));
        }
        let transform = Arc::new(Transform::new(&grid));
        let n = grid.samples();
        let wavenumbers = (0..n).map(|m| wavenumber(m, n / 2, transform.dk)).collect();
        let spectrum = transform.to_spectrum(&amplitude);
        Ok(Psf::assemble(
            PsfKind::Custom,
            sigma,
            grid,
            amplitude,
            wavenumbers,
            spectrum,
            transform,
        ))
    }

    /// Loads a custom PSF from CSV with a header row and either two columns
    /// `(x, amplitude)` or four columns `(x, re, im, reserved)`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Psf> {
        let path = path.as_ref();
        let parse_err = |reason: String| Error::Parse {
            path: path.display().to_string(),
            reason,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let width = reader.headers()?.len();
        if width != 2 && width != 4 {
            return Err(parse_err(format!("expected 2 or 4 columns, found {width}")));
        }
        let mut xs = Vec::new();
        let mut amps = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let field = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .ok_or_else(|| parse_err(format!("row {}: missing column {i}", line + 2)))?
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("row {}: {e}", line + 2)))
            };
            xs.push(field(0)?);
            let amp = if width == 2 {
                Complex64::new(field(1)?, 0.0)
            } else {
                Complex64::new(field(1)?, field(2)?)
            };
            amps.push(amp);
        }
        let grid = uniform_grid(&xs).map_err(|e| parse_err(e.to_string()))?;
        Psf::from_samples(grid, amps)
    }

    fn assemble(
        kind: PsfKind,
        sigma: f64,
        grid: Grid,
        amplitude: Vec<Complex64>,
        wavenumbers: Vec<f64>,
        spectrum: Vec<Complex64>,
        transform: Arc<Transform>,
    ) -> Psf {
        let n = grid.samples();
        let c = n / 2;
        let peak = spectrum.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max);
        let radius = spectrum
            .iter()
            .enumerate()
            .filter(|(_, s)| s.norm_sqr() >= ACTIVE_THRESHOLD * peak)
            .map(|(m, _)| m.abs_diff(c))
            .max()
            .unwrap_or(0);
        let start = c.saturating_sub(radius);
        let end = (c + radius + 1).min(n);
        Psf {
            kind,
            sigma,
            grid,
            amplitude,
            wavenumbers,
            spectrum,
            active: start..end,
            transform,
        }
    }

    pub fn kind(&self) -> PsfKind {
        self.kind
    }

    /// Nominal width σ.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitude(&self) -> &[Complex64] {
        &self.amplitude
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn dk(&self) -> f64 {
        self.transform.dk
    }

    /// Index range of frequencies carrying non-negligible spectral power.
    /// All overlap integrals against shifted copies of this PSF are restricted
    /// to it.
    pub fn active_range(&self) -> Range<usize> {
        self.active.clone()
    }

    /// Index of the zero frequency.
    pub fn zero_frequency_index(&self) -> usize {
        self.grid.samples() / 2
    }

    /// Frequency index paired with `m` under `k -> -k`, if it exists.
    pub fn mirror_frequency(&self, m: usize) -> Option<usize> {
        let twice_c = 2 * self.zero_frequency_index();
        (m <= twice_c && twice_c - m < self.grid.samples()).then(|| twice_c - m)
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.integrate(&self.intensity())
    }

    pub fn spectral_norm_sqr(&self) -> f64 {
        self.spectrum.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.dk()
    }

    /// Largest admissible translation: the shifted PSF keeps a 6σ margin
    /// from the grid edge.
    pub fn max_shift(&self) -> f64 {
        self.grid.half_width() - SHIFT_MARGIN_SIGMAS * self.sigma
    }

    pub fn check_shift(&self, shift: f64) -> Result<()> {
        let max_shift = self.max_shift();
        if !shift.is_finite() || shift.abs() > max_shift {
            return Err(Error::OutOfSupport { shift, max_shift });
        }
        Ok(())
    }

    /// Band-limited evaluation of `ψ(x)` at an arbitrary point.
    pub fn amplitude_at(&self, x: f64) -> Complex64 {
        let scale = self.dk() / (2.0 * PI).sqrt();
        self.active
            .clone()
            .map(|m| self.spectrum[m] * Complex64::from_polar(1.0, self.wavenumbers[m] * x))
            .sum::<Complex64>()
            * scale
    }

    /// `ψ(x - X)` on the grid via the frequency-domain phase ramp `exp(-ikX)`.
    pub fn shifted_amplitude(&self, shift: f64) -> Result<Vec<Complex64>> {
        self.check_shift(shift)?;
        if shift == 0.0 {
            return Ok(self.amplitude.clone());
        }
        let ramped: Vec<Complex64> = self
            .spectrum
            .iter()
            .zip(&self.wavenumbers)
            .map(|(s, &k)| s * Complex64::from_polar(1.0, -k * shift))
            .collect();
        Ok(self.transform.to_amplitude(&ramped))
    }

    /// `exp(-ikX)Ψ(k)` restricted to [`Psf::active_range`].
    pub fn shifted_spectrum(&self, shift: f64) -> Result<Vec<Complex64>> {
        self.check_shift(shift)?;
        Ok(self.shifted_spectrum_unchecked(shift))
    }

    pub(crate) fn shifted_spectrum_unchecked(&self, shift: f64) -> Vec<Complex64> {
        self.active
            .clone()
            .map(|m| self.spectrum[m] * Complex64::from_polar(1.0, -self.wavenumbers[m] * shift))
            .collect()
    }

    /// `|ψ(x - X)|²` on the grid.
    pub fn shifted_intensity(&self, shift: f64) -> Result<Vec<f64>> {
        Ok(self
            .shifted_amplitude(shift)?
            .iter()
            .map(|a| a.norm_sqr())
            .collect())
    }

    /// Spectral derivative `∂^p ψ / ∂x^p` on the grid.
    pub fn amplitude_derivative(&self, order: u32) -> Vec<Complex64> {
        self.shifted_derivative(order, 0.0)
    }

    /// `∂^p ψ(x - X) / ∂x^p` on the grid, without margin checks.
    pub(crate) fn shifted_derivative(&self, order: u32, shift: f64) -> Vec<Complex64> {
        let mut spec = vec![Complex64::new(0.0, 0.0); self.spectrum.len()];
        for m in self.active.clone() {
            let k = self.wavenumbers[m];
            let ik = Complex64::new(0.0, k);
            spec[m] = self.spectrum[m] * ik.powu(order) * Complex64::from_polar(1.0, -k * shift);
        }
        self.transform.to_amplitude(&spec)
    }

    /// `∂|ψ|²/∂x` and `∂²|ψ|²/∂x²` on the grid.
    pub fn intensity_derivatives(&self) -> (Vec<f64>, Vec<f64>) {
        let (_, d1, d2) = self.shifted_intensity_derivatives(0.0);
        (d1, d2)
    }

    /// `|ψ|²` and its first two derivatives for the PSF shifted by `shift`.
    pub(crate) fn shifted_intensity_derivatives(
        &self,
        shift: f64,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let a = self.shifted_derivative(0, shift);
        let d1 = self.shifted_derivative(1, shift);
        let d2 = self.shifted_derivative(2, shift);
        let intensity = a.iter().map(|v| v.norm_sqr()).collect();
        let first = a
            .iter()
            .zip(&d1)
            .map(|(a, b)| 2.0 * (a.conj() * b).re)
            .collect();
        let second = a
            .iter()
            .zip(&d1)
            .zip(&d2)
            .map(|((a, b), c)| 2.0 * (a.conj() * c).re + 2.0 * b.norm_sqr())
            .collect();
        (intensity, first, second)
    }

    /// Largest deviation from `ψ(x) = ψ(-x)`, relative to the peak amplitude.
    pub fn even_asymmetry(&self) -> f64 {
        if !self.grid.is_symmetric() {
            return f64::INFINITY;
        }
        let peak = self.amplitude.iter().map(|a| a.norm()).fold(0.0, f64::max);
        (0..self.grid.samples())
            .map(|i| (self.amplitude[i] - self.amplitude[self.grid.mirror(i)]).norm())
            .fold(0.0, f64::max)
            / peak
    }

    pub fn require_even(&self) -> Result<()> {
        let asymmetry = self.even_asymmetry();
        if asymmetry > 1e-8 {
            return Err(Error::PsfNotEven { asymmetry });
        }
        Ok(())
    }

    /// Forward transform of arbitrary samples on this PSF's grid.
    pub fn spectrum_of(&self, samples: &[Complex64]) -> Vec<Complex64> {
        self.transform.to_spectrum(samples)
    }

    /// Inverse transform of arbitrary spectral samples on this PSF's grid.
    pub fn amplitude_of(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        self.transform.to_amplitude(spectrum)
    }
}

/// Rebuilds a [`Grid`] from sample positions, which must be uniformly spaced.
pub(crate) fn uniform_grid(xs: &[f64]) -> Result<Grid> {
    if xs.len() < Grid::MIN_SAMPLES {
        return Err(Error::invalid(
            "grid",
            format!("need at least {} rows, got {}", Grid::MIN_SAMPLES, xs.len()),
        ));
    }
    let grid = Grid::new(xs[0], xs[xs.len() - 1], xs.len())?;
    let h = grid.spacing();
    for (i, &x) in xs.iter().enumerate() {
        if (x - grid.point(i)).abs() > 1e-6 * h {
            return Err(Error::invalid(
                "grid",
                format!("positions are not uniformly spaced near x = {x}"),
            ));
        }
    }
    Ok(grid)
}
