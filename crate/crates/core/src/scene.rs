//! Incoherent source distributions `F(X)` and their moments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Fraction of the mass that defines the width of a sampled density.
const WIDTH_MASS_FRACTION: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSource {
    pub position: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SceneKind {
    Points { sources: Vec<PointSource> },
    Density { grid: Grid, density: Vec<f64> },
}

/// Normalized incoherent object density.
///
/// Point scenes are exact throughout the pipeline. Sampled densities are
/// interpreted as piecewise-linear between grid nodes; their moments are the
/// exact moments of that interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScene {
    kind: SceneKind,
    width: f64,
    centroid_offset: f64,
}

/// Moments `θ_μ = ∫ X^μ F(X) dX` for `μ = 0..=max_order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector(Vec<f64>);

impl MomentVector {
    pub fn new(values: Vec<f64>) -> Self {
        MomentVector(values)
    }

    pub fn get(&self, order: usize) -> Option<f64> {
        self.0.get(order).copied()
    }

    pub fn max_order(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for MomentVector {
    type Output = f64;

    fn index(&self, order: usize) -> &f64 {
        &self.0[order]
    }
}

/// Two equal-weight points at `±separation/2`.
pub fn two_point_scene(separation: f64) -> Result<SourceScene> {
    if !(separation > 0.0) || !separation.is_finite() {
        return Err(Error::invalid(
            "separation",
            format!("must be positive, got {separation}"),
        ));
    }
    Ok(symmetric_pair(separation))
}

/// Two equal-weight points at `±θ/2`; any real `θ`, including zero and
/// negative values (mirror image), for use inside parameter families.
pub(crate) fn symmetric_pair(theta: f64) -> SourceScene {
    let h = 0.5 * theta;
    SourceScene {
        kind: SceneKind::Points {
            sources: vec![
                PointSource {
                    position: -h,
                    weight: 0.5,
                },
                PointSource {
                    position: h,
                    weight: 0.5,
                },
            ],
        },
        width: h.abs(),
        centroid_offset: 0.0,
    }
}

impl SourceScene {
    /// Point scene from weights already summing to one, without validation.
    /// Parameter families use it to step slightly outside the physical set.
    pub(crate) fn from_nodes_unchecked(sources: Vec<PointSource>) -> Self {
        let width = sources.iter().map(|s| s.position.abs()).fold(0.0, f64::max);
        SourceScene {
            kind: SceneKind::Points { sources },
            width,
            centroid_offset: 0.0,
        }
    }

    /// Weighted point sources; weights are normalized to unit sum.
    pub fn points(sources: Vec<PointSource>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::invalid("scene.sources", "no sources given"));
        }
        for s in &sources {
            if !s.position.is_finite() || !s.weight.is_finite() {
                return Err(Error::invalid(
                    "scene.sources",
                    "non-finite position or weight",
                ));
            }
            if s.weight < 0.0 {
                return Err(Error::invalid(
                    "scene.sources",
                    format!("negative weight {} at X = {}", s.weight, s.position),
                ));
            }
        }
        let total: f64 = sources.iter().map(|s| s.weight).sum();
        if !(total > 0.0) {
            return Err(Error::invalid("scene.sources", "weights sum to zero"));
        }
        let sources: Vec<PointSource> = sources
            .into_iter()
            .map(|s| PointSource {
                position: s.position,
                weight: s.weight / total,
            })
            .collect();
        let width = sources.iter().map(|s| s.position.abs()).fold(0.0, f64::max);
        Ok(SourceScene {
            kind: SceneKind::Points { sources },
            width,
            centroid_offset: 0.0,
        })
    }

    pub fn single_point(position: f64) -> Result<Self> {
        Self::points(vec![PointSource {
            position,
            weight: 1.0,
        }])
    }

    /// Sampled density, renormalized to unit mass. Width is the smallest
    /// half-width around zero holding 99.99% of the mass.
    pub fn density(grid: Grid, density: Vec<f64>) -> Result<Self> {
        let mut scene = Self::density_unsized(grid, density)?;
        scene.width = mass_half_width(&grid, scene.density_values(), WIDTH_MASS_FRACTION);
        Ok(scene)
    }

    fn density_unsized(grid: Grid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.samples() {
            return Err(Error::invalid(
                "scene.density",
                format!("{} values for a grid of {}", density.len(), grid.samples()),
            ));
        }
        if density.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "scene.density",
                "values must be finite and nonnegative",
            ));
        }
        let mass = trapezoid(&grid, &density);
        if !(mass > 0.0) {
            return Err(Error::invalid("scene.density", "density has zero mass"));
        }
        let density = density.into_iter().map(|v| v / mass).collect();
        Ok(SourceScene {
            kind: SceneKind::Density { grid, density },
            width: 0.0,
            centroid_offset: 0.0,
        })
    }

    /// Uniform density on `[-half_width, half_width]` sampled with `samples`
    /// nodes spanning exactly the support.
    pub fn uniform(half_width: f64, samples: usize) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::invalid("delta", "must be positive"));
        }
        let grid = Grid::symmetric(half_width, samples)?;
        let mut scene = Self::density_unsized(grid, vec![1.0; samples])?;
        scene.width = half_width;
        Ok(scene)
    }

    /// Loads a two-column `(X, F)` CSV with a header row.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let parse_err = |reason: String| Error::Parse {
            path: path.display().to_string(),
            reason,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        if reader.headers()?.len() != 2 {
            return Err(parse_err("expected two columns (X, F)".into()));
        }
        let mut xs = Vec::new();
        let mut fs = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let get = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("row {}: {e}", line + 2)))
            };
            xs.push(get(0)?);
            fs.push(get(1)?);
        }
        let grid = crate::psf::uniform_grid(&xs).map_err(|e| parse_err(e.to_string()))?;
        Self::density(grid, fs)
    }

    /// Translates the whole scene by `offset` (misalignment of the object
    /// centroid relative to the optical axis). The width is recomputed from
    /// the displaced support.
    pub fn with_centroid_offset(&self, offset: f64) -> Result<Self> {
        if !offset.is_finite() {
            return Err(Error::invalid("centroid_offset", "must be finite"));
        }
        let mut out = self.clone();
        match &mut out.kind {
            SceneKind::Points { sources } => {
                sources.iter_mut().for_each(|s| s.position += offset);
                out.width = sources.iter().map(|s| s.position.abs()).fold(0.0, f64::max);
            }
            SceneKind::Density { grid, .. } => {
                let shifted =
                    Grid::new(grid.lower() + offset, grid.upper() + offset, grid.samples())?;
                let half = self.width;
                *grid = shifted;
                // Extent of [-Δ, Δ] after translation.
                out.width = half + offset.abs();
            }
        }
        out.centroid_offset += offset;
        Ok(out)
    }

    pub fn kind(&self) -> &SceneKind {
        &self.kind
    }

    /// Effective half-width Δ.
    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn centroid_offset(&self) -> f64 {
        self.centroid_offset
    }

    pub fn is_point_scene(&self) -> bool {
        matches!(self.kind, SceneKind::Points { .. })
    }

    fn density_values(&self) -> &[f64] {
        match &self.kind {
            SceneKind::Density { density, .. } => density,
            SceneKind::Points { .. } => &[],
        }
    }

    /// Quadrature nodes `(X_i, w_i)` with `Σ w_i = 1`: the sources themselves
    /// for point scenes, trapezoid nodes for sampled densities. Zero-weight
    /// nodes are dropped.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            SceneKind::Points { sources } => sources
                .iter()
                .filter(|s| s.weight > 0.0)
                .map(|s| (s.position, s.weight))
                .collect(),
            SceneKind::Density { grid, density } => {
                let h = grid.spacing();
                let n = density.len();
                (0..n)
                    .map(|i| {
                        let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                        (grid.point(i), density[i] * w)
                    })
                    .filter(|(_, w)| *w > 0.0)
                    .collect()
            }
        }
    }

    /// Moments up to `max_order`; exact for point scenes and for the
    /// piecewise-linear interpolant of sampled densities.
    pub fn moments(&self, max_order: usize) -> MomentVector {
        let mut out = vec![0.0; max_order + 1];
        match &self.kind {
            SceneKind::Points { sources } => {
                for s in sources {
                    let mut p = 1.0;
                    for m in out.iter_mut() {
                        *m += s.weight * p;
                        p *= s.position;
                    }
                }
            }
            SceneKind::Density { grid, density } => {
                let h = grid.spacing();
                for i in 0..density.len() - 1 {
                    let (a, b) = (grid.point(i), grid.point(i + 1));
                    let slope = (density[i + 1] - density[i]) / h;
                    let intercept = density[i] - slope * a;
                    for (mu, m) in out.iter_mut().enumerate() {
                        *m += intercept * power_integral(a, b, mu)
                            + slope * power_integral(a, b, mu + 1);
                    }
                }
            }
        }
        out[0] = 1.0;
        MomentVector(out)
    }

    /// Same scene with every position multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::invalid("scale", "must be positive"));
        }
        let mut out = self.clone();
        match &mut out.kind {
            SceneKind::Points { sources } => {
                sources.iter_mut().for_each(|s| s.position *= factor);
            }
            SceneKind::Density { grid, density } => {
                *grid = Grid::new(grid.lower() * factor, grid.upper() * factor, grid.samples())?;
                density.iter_mut().for_each(|v| *v /= factor);
            }
        }
        out.width *= factor;
        out.centroid_offset *= factor;
        Ok(out)
    }
}

/// `∫_a^b X^p dX`.
fn power_integral(a: f64, b: f64, p: usize) -> f64 {
    let e = (p + 1) as i32;
    (b.powi(e) - a.powi(e)) / e as f64
}

fn trapezoid(grid: &Grid, values: &[f64]) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    (inner + 0.5 * (values[0] + values[n - 1])) * grid.spacing()
}

/// Smallest `W` with `∫_{-W}^{W} F ≥ fraction`, on the piecewise-linear
/// interpolant (bisection on the exact interval mass).
fn mass_half_width(grid: &Grid, density: &[f64], fraction: f64) -> f64 {
    let mut hi = grid.upper().abs().max(grid.lower().abs());
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if interval_mass(grid, density, -mid, mid) >= fraction {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `∫_a^b` of the piecewise-linear interpolant.
fn interval_mass(grid: &Grid, density: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..density.len() - 1 {
        let (x0, x1) = (grid.point(i), grid.point(i + 1));
        let (l, r) = (x0.max(a), x1.min(b));
        if r > l {
            let f = |x: f64| density[i] + (density[i + 1] - density[i]) * (x - x0) / (x1 - x0);
            total += 0.5 * (f(l) + f(r)) * (r - l);
        }
    }
    total
}

/// Linear interpolation of grid samples; zero outside the grid.
pub(crate) fn interpolate(grid: &Grid, values: &[f64], x: f64) -> f64 {
    if !grid.contains(x) {
        return 0.0;
    }
    let t = (x - grid.lower()) / grid.spacing();
    let i = (t.floor() as usize).min(values.len() - 2);
    let frac = t - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}
