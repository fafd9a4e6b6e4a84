use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform one-dimensional sampling grid, endpoints included.
///
/// Integrals use the trapezoidal rule on the periodic extension of the grid,
/// i.e. every sample carries weight `spacing`. All integrands handled here
/// vanish at the grid edges, where this coincides with the ordinary rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lower: f64,
    upper: f64,
    samples: usize,
}

impl Grid {
    pub const MIN_SAMPLES: usize = 16;

    pub fn new(lower: f64, upper: f64, samples: usize) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::invalid("grid", "bounds must be finite"));
        }
        if upper <= lower {
            return Err(Error::invalid(
                "grid",
                format!("upper bound {upper} must exceed lower bound {lower}"),
            ));
        }
        if samples < Self::MIN_SAMPLES {
            return Err(Error::invalid(
                "grid.samples",
                format!("need at least {} samples, got {samples}", Self::MIN_SAMPLES),
            ));
        }
        Ok(Grid {
            lower,
            upper,
            samples,
        })
    }

    /// Grid on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, samples: usize) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::invalid("grid.half_width", "must be positive"));
        }
        Self::new(-half_width, half_width, samples)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.samples - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        // Mirror-exact: x_i == -x_{n-1-i} bit for bit on symmetric grids.
        let h = self.spacing();
        if 2 * i < self.samples {
            self.lower + i as f64 * h
        } else {
            self.upper - (self.samples - 1 - i) as f64 * h
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.samples).map(|i| self.point(i)).collect()
    }

    /// Half-width of the largest interval centred on zero that fits in the grid.
    pub fn half_width(&self) -> f64 {
        self.upper.min(-self.lower)
    }

    pub fn is_symmetric(&self) -> bool {
        (self.lower + self.upper).abs() <= 1e-12 * (self.upper - self.lower)
    }

    /// Index pairing `i <-> n-1-i`, which maps `x` to `-x` on symmetric grids.
    pub fn mirror(&self, i: usize) -> usize {
        self.samples - 1 - i
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.samples);
        values.iter().sum::<f64>() * self.spacing()
    }

    /// Index of the sample nearest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((x - self.lower) / self.spacing()).round();
        t.clamp(0.0, (self.samples - 1) as f64) as usize
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    /// Same grid with twice the sample density (`2n - 1` samples).
    pub fn refined(&self) -> Grid {
        Grid {
            samples: 2 * self.samples - 1,
            ..*self
        }
    }
}

impl Default for Grid {
    /// `[-10, 10]` with 4096 samples.
    fn default() -> Self {
        Grid {
            lower: -10.0,
            upper: 10.0,
            samples: 4096,
        }
    }
}
