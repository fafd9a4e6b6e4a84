use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scene::{symmetric_pair, PointSource, SourceScene};

/// Default finite-difference step in parameter units.
pub const DEFAULT_STEP: f64 = 1e-4;

type SceneMap = dyn Fn(&[f64]) -> Result<SourceScene> + Send + Sync;

/// Parametric family `θ ↦ F(X|θ)` with per-parameter difference steps.
#[derive(Clone)]
pub struct ParamFamily {
    name: String,
    parameters: Vec<String>,
    steps: Vec<f64>,
    map: Arc<SceneMap>,
}

impl fmt::Debug for ParamFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamFamily")
            .field("name", &self.name)
            .field("parameters", &self.parameters)
            .field("steps", &self.steps)
            .finish_non_exhaustive()
    }
}

impl ParamFamily {
    pub fn new(
        name: impl Into<String>,
        parameters: Vec<String>,
        steps: Vec<f64>,
        map: impl Fn(&[f64]) -> Result<SourceScene> + Send + Sync + 'static,
    ) -> Result<Self> {
        if parameters.is_empty() {
            return Err(Error::invalid(
                "family.parameters",
                "need at least one parameter",
            ));
        }
        if steps.len() != parameters.len() {
            return Err(Error::invalid("family.steps", "one step per parameter"));
        }
        check_steps(&steps)?;
        Ok(ParamFamily {
            name: name.into(),
            parameters,
            steps,
            map: Arc::new(map),
        })
    }

    /// Two equal points at `±θ/2`.
    pub fn two_point_separation() -> Self {
        ParamFamily {
            name: "two-point-separation".into(),
            parameters: vec!["separation".into()],
            steps: vec![DEFAULT_STEP],
            map: Arc::new(|t: &[f64]| Ok(symmetric_pair(t[0]))),
        }
    }

    /// Two equal points at `θ_c ± θ_s/2`; parameters `(θ_s, θ_c)`.
    pub fn two_point_separation_centroid() -> Self {
        ParamFamily {
            name: "two-point-separation-centroid".into(),
            parameters: vec!["separation".into(), "centroid".into()],
            steps: vec![DEFAULT_STEP, DEFAULT_STEP],
            map: Arc::new(|t: &[f64]| {
                let h = 0.5 * t[0];
                Ok(SourceScene::from_nodes_unchecked(vec![
                    PointSource {
                        position: t[1] - h,
                        weight: 0.5,
                    },
                    PointSource {
                        position: t[1] + h,
                        weight: 0.5,
                    },
                ]))
            }),
        }
    }

    /// A single point source at `θ`.
    pub fn point_location() -> Self {
        ParamFamily {
            name: "point-location".into(),
            parameters: vec!["location".into()],
            steps: vec![DEFAULT_STEP],
            map: Arc::new(|t: &[f64]| {
                Ok(SourceScene::from_nodes_unchecked(vec![PointSource {
                    position: t[0],
                    weight: 1.0,
                }]))
            }),
        }
    }

    /// Fixed points `X_j` whose weights are determined by the moments
    /// `θ_1..θ_{K-1}` through the Vandermonde system `Σ_j w_j X_j^μ = θ_μ`
    /// (with `θ_0 = 1`). Returns the family and the moments of `base_weights`.
    pub fn fixed_point_moments(
        positions: Vec<f64>,
        base_weights: &[f64],
    ) -> Result<(Self, Vec<f64>)> {
        let k = positions.len();
        if k < 2 || base_weights.len() != k {
            return Err(Error::invalid(
                "family.positions",
                "need at least two points with one weight each",
            ));
        }
        let scale = positions.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if !(scale > 0.0) {
            return Err(Error::invalid(
                "family.positions",
                "points must not all sit at the origin",
            ));
        }
        // Vandermonde in X/scale keeps the system well conditioned.
        let v = DMatrix::from_fn(k, k, |mu, j| (positions[j] / scale).powi(mu as i32));
        let lu = v.clone().lu();
        if lu.determinant().abs() < 1e-14 {
            return Err(Error::invalid(
                "family.positions",
                "points must be distinct",
            ));
        }
        let total: f64 = base_weights.iter().sum();
        let base_w = DVector::from_iterator(k, base_weights.iter().map(|w| w / total));
        let scaled_moments = &v * &base_w;
        let base: Vec<f64> = (1..k)
            .map(|mu| scaled_moments[mu] * scale.powi(mu as i32))
            .collect();
        // Weights are affine in θ, so differences carry no truncation error
        // and a larger step only reduces rounding.
        let steps: Vec<f64> = (1..k).map(|mu| 1e-3 * scale.powi(mu as i32)).collect();
        let parameters = (1..k).map(|mu| format!("theta{mu}")).collect();
        let map = move |t: &[f64]| -> Result<SourceScene> {
            let mut rhs = DVector::zeros(k);
            rhs[0] = 1.0;
            for mu in 1..k {
                rhs[mu] = t[mu - 1] / scale.powi(mu as i32);
            }
            let w = lu
                .solve(&rhs)
                .ok_or_else(|| Error::invalid("family", "singular Vandermonde system"))?;
            Ok(SourceScene::from_nodes_unchecked(
                positions
                    .iter()
                    .zip(w.iter())
                    .map(|(&position, &weight)| PointSource { position, weight })
                    .collect(),
            ))
        };
        Ok((
            ParamFamily {
                name: "fixed-point-moments".into(),
                parameters,
                steps,
                map: Arc::new(map),
            },
            base,
        ))
    }

    /// Five-point object of half-width `delta` used for moment studies:
    /// points `Δ·{-1, -1/2, 0, 2/5, 1}` with weights `{.15, .2, .3, .2, .15}`.
    pub fn five_point_moments(delta: f64) -> Result<(Self, Vec<f64>)> {
        if !(delta > 0.0) {
            return Err(Error::invalid("delta", "must be positive"));
        }
        let positions = [-1.0, -0.5, 0.0, 0.4, 1.0]
            .iter()
            .map(|x| x * delta)
            .collect();
        Self::fixed_point_moments(positions, &[0.15, 0.2, 0.3, 0.2, 0.15])
    }

    pub fn with_steps(mut self, steps: Vec<f64>) -> Result<Self> {
        if steps.len() != self.parameters.len() {
            return Err(Error::invalid("family.steps", "one step per parameter"));
        }
        check_steps(&steps)?;
        self.steps = steps;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parameters(&self) -> &[String] {
        &self.parameters
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn dimension(&self) -> usize {
        self.parameters.len()
    }

    pub fn scene(&self, theta: &[f64]) -> Result<SourceScene> {
        if theta.len() != self.dimension() {
            return Err(Error::invalid(
                "theta",
                format!(
                    "family `{}` has {} parameters, got {}",
                    self.name,
                    self.dimension(),
                    theta.len()
                ),
            ));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("theta", "must be finite"));
        }
        (self.map)(theta)
    }
}

fn check_steps(steps: &[f64]) -> Result<()> {
    if steps.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(Error::invalid("family.steps", "steps must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_family_reproduces_moments() {
        let (family, base) = ParamFamily::five_point_moments(0.1).unwrap();
        let scene = family.scene(&base).unwrap();
        let m = scene.moments(4);
        for mu in 1..=4 {
            assert!((m[mu] - base[mu - 1]).abs() < 1e-14 * 0.1f64.powi(mu as i32).max(1e-3));
        }
        let w: Vec<f64> = scene.nodes().iter().map(|n| n.1).collect();
        assert!((w[2] - 0.3).abs() < 1e-10);
    }

    #[test]
    fn moment_parameter_moves_only_its_moment() {
        let (family, base) = ParamFamily::five_point_moments(0.2).unwrap();
        let mut t = base.clone();
        t[1] += 1e-3;
        let m = family.scene(&t).unwrap().moments(4);
        assert!((m[2] - base[1] - 1e-3).abs() < 1e-12);
        assert!((m[1] - base[0]).abs() < 1e-12);
        assert!((m[4] - base[3]).abs() < 1e-12);
    }

    #[test]
    fn separation_family_layout() {
        let f = ParamFamily::two_point_separation();
        let nodes = f.scene(&[0.4]).unwrap().nodes();
        assert_eq!(nodes, vec![(-0.2, 0.5), (0.2, 0.5)]);
        assert!(f.scene(&[0.1, 0.2]).is_err());
        assert!(f.clone().with_steps(vec![0.0]).is_err());
    }
}
