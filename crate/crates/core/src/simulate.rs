//! Photon-counting samples with reproducible randomness.
//!
//! Every draw uses a ChaCha8 generator seeded from the root seed with its own
//! stream number, so trial `t` produces the same data regardless of how
//! trials are scheduled across threads.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::modes::OutcomeDistribution;

/// Largest mean photon number per temporal mode for the one-photon model.
pub const MAX_EPSILON: f64 = 0.1;

/// Generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Photon counts per outcome, or photon positions for direct imaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonData {
    /// Outcome labels with the residual last; empty for positions.
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    pub positions: Vec<f64>,
    /// Requested mean photon number `N`.
    pub mean_photons: f64,
    pub seed: u64,
    pub stream: u64,
    /// SHA-256 of the outcome distribution the data were drawn from.
    pub model_hash: String,
}

impl PhotonData {
    pub fn total(&self) -> u64 {
        if self.labels.is_empty() {
            self.positions.len() as u64
        } else {
            self.counts.iter().sum()
        }
    }

    /// Count of the outcome with this label.
    pub fn count(&self, label: &str) -> Option<u64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.counts[i])
    }

    /// Histogram of positions on the pixels of `grid` (nearest sample).
    pub fn binned(&self, grid: &Grid) -> Vec<u64> {
        let mut out = vec![0; grid.samples()];
        for &x in &self.positions {
            out[grid.nearest(x)] += 1;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One position per row under an `x` header.
    pub fn write_positions_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x"])?;
        for x in &self.positions {
            w.write_record([format!("{x:.12e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// SHA-256 (hex) of a distribution's JSON form.
pub fn model_hash(dist: &OutcomeDistribution) -> String {
    let json = serde_json::to_vec(dist).expect("distribution serializes");
    hex::encode(Sha256::digest(json))
}

fn check_mean(n: f64) -> Result<()> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::invalid(
            "photons",
            format!("must be finite and nonnegative, got {n}"),
        ));
    }
    Ok(())
}

pub(crate) fn poisson(rng: &mut impl Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng) as u64
}

fn binomial(rng: &mut impl Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Independent Poisson counts with means `N·g_q`, residual included.
pub fn sample_mode_counts(
    dist: &OutcomeDistribution,
    photons: f64,
    seed: u64,
) -> Result<PhotonData> {
    sample_mode_counts_stream(dist, photons, seed, 0)
}

/// [`sample_mode_counts`] on an explicit stream (one per trial).
pub fn sample_mode_counts_stream(
    dist: &OutcomeDistribution,
    photons: f64,
    seed: u64,
    stream: u64,
) -> Result<PhotonData> {
    check_mean(photons)?;
    let mut rng = rng_for(seed, stream);
    let counts = draw_mode_counts(&mut rng, &dist.with_residual(), photons);
    Ok(PhotonData {
        labels: dist.labels_with_residual(),
        counts,
        positions: Vec::new(),
        mean_photons: photons,
        seed,
        stream,
        model_hash: model_hash(dist),
    })
}

pub(crate) fn draw_mode_counts(
    rng: &mut impl Rng,
    probabilities: &[f64],
    photons: f64,
) -> Vec<u64> {
    probabilities
        .iter()
        .map(|p| poisson(rng, photons * p))
        .collect()
}

/// Poisson(N) photons with positions drawn from the image density by
/// inverse CDF: pixel masses are spread uniformly over each pixel.
pub fn sample_direct_positions(
    dist: &OutcomeDistribution,
    photons: f64,
    seed: u64,
) -> Result<PhotonData> {
    sample_direct_positions_stream(dist, photons, seed, 0)
}

pub fn sample_direct_positions_stream(
    dist: &OutcomeDistribution,
    photons: f64,
    seed: u64,
    stream: u64,
) -> Result<PhotonData> {
    check_mean(photons)?;
    let sampler = PositionSampler::new(dist)?;
    let mut rng = rng_for(seed, stream);
    let positions = sampler.draw(&mut rng, photons);
    Ok(PhotonData {
        labels: Vec::new(),
        counts: Vec::new(),
        positions,
        mean_photons: photons,
        seed,
        stream,
        model_hash: model_hash(dist),
    })
}

/// Cumulative pixel masses of an image density, for repeated sampling.
pub(crate) struct PositionSampler {
    grid: Grid,
    cdf: Vec<f64>,
}

impl PositionSampler {
    pub fn new(dist: &OutcomeDistribution) -> Result<Self> {
        let (grid, _) = dist
            .density()
            .ok_or_else(|| Error::invalid("distribution", "positions need an image density"))?;
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(dist.len());
        for p in dist.probabilities() {
            acc += p.max(0.0);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::invalid(
                "distribution",
                "image density has zero mass",
            ));
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Ok(PositionSampler { grid: *grid, cdf })
    }

    pub fn draw(&self, rng: &mut impl Rng, photons: f64) -> Vec<f64> {
        let total = poisson(rng, photons);
        let dx = self.grid.spacing();
        (0..total)
            .map(|_| {
                let u: f64 = rng.random();
                let i = self
                    .cdf
                    .partition_point(|&c| c <= u)
                    .min(self.cdf.len() - 1);
                let lo = if i == 0 { 0.0 } else { self.cdf[i - 1] };
                let width = self.cdf[i] - lo;
                let frac = if width > 0.0 { (u - lo) / width } else { 0.5 };
                let x = self.grid.point(i) + (frac - 0.5) * dx;
                x.clamp(self.grid.lower(), self.grid.upper())
            })
            .collect()
    }
}

/// Thermal light in the one-photon approximation: each of `M` temporal
/// modes emits one photon with probability `ε` (or `ε(1 - ε/2)` with
/// `correction`), routed to outcome `q` with probability `g_q`. Multi-photon
/// events are dropped.
pub fn sample_thermal_mode_counts(
    dist: &OutcomeDistribution,
    epsilon: f64,
    temporal_modes: u64,
    seed: u64,
    correction: bool,
) -> Result<PhotonData> {
    sample_thermal_mode_counts_stream(dist, epsilon, temporal_modes, seed, 0, correction)
}

pub fn sample_thermal_mode_counts_stream(
    dist: &OutcomeDistribution,
    epsilon: f64,
    temporal_modes: u64,
    seed: u64,
    stream: u64,
    correction: bool,
) -> Result<PhotonData> {
    if !(0.0..=MAX_EPSILON).contains(&epsilon) {
        return Err(Error::invalid(
            "epsilon",
            format!("must lie in [0, {MAX_EPSILON}], got {epsilon}"),
        ));
    }
    let p_emit = if correction {
        epsilon * (1.0 - 0.5 * epsilon)
    } else {
        epsilon
    };
    let mut rng = rng_for(seed, stream);
    let photons = binomial(&mut rng, temporal_modes, p_emit);
    let probabilities = dist.with_residual();
    let mut remaining = photons;
    let mut mass_left: f64 = probabilities.iter().sum();
    let mut counts = Vec::with_capacity(probabilities.len());
    for (i, &p) in probabilities.iter().enumerate() {
        let n = if i + 1 == probabilities.len() {
            remaining
        } else if mass_left > 0.0 {
            binomial(&mut rng, remaining, (p / mass_left).min(1.0))
        } else {
            0
        };
        counts.push(n);
        remaining -= n;
        mass_left -= p;
    }
    Ok(PhotonData {
        labels: dist.labels_with_residual(),
        counts,
        positions: Vec::new(),
        mean_photons: epsilon * temporal_modes as f64,
        seed,
        stream,
        model_hash: model_hash(dist),
    })
}
