//! Orthonormal polynomials under a sampled weight.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest polynomial order accepted by [`gram_schmidt_polynomials`].
pub const MAX_ORDER: usize = 12;
/// Largest admissible condition number of the equilibrated monomial Gram matrix.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Real polynomial with coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Polynomial(coefficients)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Orthonormal polynomials together with their values on the sample points.
#[derive(Debug, Clone)]
pub struct OrthonormalSet {
    pub polynomials: Vec<Polynomial>,
    /// `values[q][i] = b_q(points[i])`, from the recurrence rather than from
    /// the coefficients.
    pub values: Vec<Vec<f64>>,
    /// Condition number of the equilibrated monomial Gram matrix.
    pub condition: f64,
}

/// Weighted Gram-Schmidt on monomials `1, k, …, k^max_order`.
///
/// The inner product is `⟨f, g⟩ = Σ_i f(k_i) g(k_i) w_i h`. `weight` must be
/// nonnegative and integrate to one. The result satisfies `⟨b_q, b_p⟩ = δ_qp`
/// and `⟨b_q, k^p⟩ = 0` for `p < q`, with positive leading coefficients.
pub fn gram_schmidt_polynomials(
    points: &[f64],
    weight: &[f64],
    spacing: f64,
    max_order: usize,
) -> Result<OrthonormalSet> {
    if max_order > MAX_ORDER {
        return Err(Error::invalid(
            "max_order",
            format!("at most {MAX_ORDER}, got {max_order}"),
        ));
    }
    let masses = quadrature_masses(points, weight, spacing)?;
    let (centre, scale) = centre_and_scale(points, &masses);
    let condition = monomial_condition(points, &masses, centre, scale, max_order);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            condition,
            limit: CONDITION_LIMIT,
        });
    }
    let (values, scaled) = stieltjes(points, &masses, centre, scale, max_order, true);
    let polynomials = scaled
        .into_iter()
        .map(|c| Polynomial(unscale(&c, centre, scale)))
        .collect();
    Ok(OrthonormalSet {
        polynomials,
        values,
        condition,
    })
}

/// Orthonormal polynomial values up to `order` without coefficient tracking
/// or conditioning limits. The recurrence stays accurate far beyond the
/// order at which monomial coefficients become meaningless.
pub(crate) fn orthonormal_values(points: &[f64], masses: &[f64], order: usize) -> Vec<Vec<f64>> {
    let (centre, scale) = centre_and_scale(points, masses);
    stieltjes(points, masses, centre, scale, order, false).0
}

fn quadrature_masses(points: &[f64], weight: &[f64], spacing: f64) -> Result<Vec<f64>> {
    if points.len() != weight.len() || points.is_empty() {
        return Err(Error::invalid(
            "weight",
            "length must match the sample points",
        ));
    }
    if weight.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weight", "must be finite and nonnegative"));
    }
    if !(spacing > 0.0) {
        return Err(Error::invalid("spacing", "must be positive"));
    }
    let masses: Vec<f64> = weight.iter().map(|w| w * spacing).collect();
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(
            "weight",
            format!("must integrate to 1, integrates to {total:.9}"),
        ));
    }
    Ok(masses)
}

fn centre_and_scale(points: &[f64], masses: &[f64]) -> (f64, f64) {
    let total: f64 = masses.iter().sum();
    let mean = points.iter().zip(masses).map(|(k, m)| k * m).sum::<f64>() / total;
    let var = points
        .iter()
        .zip(masses)
        .map(|(k, m)| (k - mean).powi(2) * m)
        .sum::<f64>()
        / total;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    (mean, scale)
}

fn dot(a: &[f64], b: &[f64], masses: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(masses)
        .map(|((x, y), m)| x * y * m)
        .sum()
}

/// Three-term (Stieltjes) construction in the scaled variable
/// `t = (k - centre)/scale`: each new vector is `t·b_{q-1}` orthogonalized
/// twice against all previous ones. Returns values and, if requested, the
/// coefficients in powers of `t`.
fn stieltjes(
    points: &[f64],
    masses: &[f64],
    centre: f64,
    scale: f64,
    order: usize,
    track: bool,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let t: Vec<f64> = points.iter().map(|k| (k - centre) / scale).collect();
    let n0 = masses.iter().sum::<f64>().sqrt();
    let mut values = vec![vec![1.0 / n0; points.len()]];
    let mut coeffs = vec![vec![1.0 / n0]];
    for q in 1..=order {
        let mut v: Vec<f64> = values[q - 1].iter().zip(&t).map(|(b, x)| b * x).collect();
        let mut c = Vec::new();
        if track {
            c = vec![0.0; q + 1];
            c[1..].copy_from_slice(&coeffs[q - 1]);
        }
        for _ in 0..2 {
            for p in 0..q {
                let r = dot(&v, &values[p], masses);
                v.iter_mut().zip(&values[p]).for_each(|(a, b)| *a -= r * b);
                if track {
                    c.iter_mut().zip(&coeffs[p]).for_each(|(a, b)| *a -= r * b);
                }
            }
        }
        let norm = dot(&v, &v, masses).sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        c.iter_mut().for_each(|a| *a /= norm);
        values.push(v);
        if track {
            coeffs.push(c);
        }
    }
    (values, coeffs)
}

/// Converts coefficients in `t = (k - centre)/scale` to powers of `k`.
fn unscale(c: &[f64], centre: f64, scale: f64) -> Vec<f64> {
    let n = c.len();
    let mut out = vec![0.0; n];
    for (p, &cp) in c.iter().enumerate() {
        let a = cp / scale.powi(p as i32);
        // (k - centre)^p = Σ_j binom(p, j) k^j (-centre)^(p-j)
        let mut binom = 1.0;
        for (j, o) in out.iter_mut().enumerate().take(p + 1) {
            *o += a * binom * (-centre).powi((p - j) as i32);
            binom = binom * (p - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

/// Condition number of the Gram matrix of scaled monomials, after scaling
/// it to unit diagonal.
fn monomial_condition(
    points: &[f64],
    masses: &[f64],
    centre: f64,
    scale: f64,
    order: usize,
) -> f64 {
    let n = order + 1;
    let t: Vec<f64> = points.iter().map(|k| (k - centre) / scale).collect();
    // Hankel moments of t up to 2·order.
    let mut moments = vec![0.0; 2 * order + 1];
    for (x, m) in t.iter().zip(masses) {
        let mut p = *m;
        for mo in moments.iter_mut() {
            *mo += p;
            p *= x;
        }
    }
    let gram = DMatrix::from_fn(n, n, |i, j| {
        moments[i + j] / (moments[2 * i] * moments[2 * j]).sqrt()
    });
    let eig = gram.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Probabilists' Hermite polynomial `He_q` coefficients, ascending.
pub fn hermite_coefficients(q: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if q == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for n in 1..q {
        // He_{n+1} = x He_n - n He_{n-1}
        let mut next = vec![0.0; n + 2];
        next[1..].copy_from_slice(&cur);
        for (i, c) in prev.iter().enumerate() {
            next[i] -= n as f64 * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_weight(v: f64) -> (Vec<f64>, Vec<f64>, f64) {
        let h = 0.05;
        let k: Vec<f64> = (-400..=400).map(|i| i as f64 * h).collect();
        let w = k
            .iter()
            .map(|x| (-x * x / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
            .collect();
        (k, w, h)
    }

    #[test]
    fn constant_and_linear_terms() {
        let v = 1.7;
        let (k, w, h) = gaussian_weight(v);
        let set = gram_schmidt_polynomials(&k, &w, h, 4).unwrap();
        assert!((set.polynomials[0].coefficients()[0] - 1.0).abs() < 1e-12);
        let b1 = set.polynomials[1].coefficients();
        assert!(b1[0].abs() < 1e-7);
        assert!((b1[1] - 1.0 / v.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn orthonormal_and_orthogonal_to_lower_monomials() {
        let (k, w, h) = gaussian_weight(0.6);
        let set = gram_schmidt_polynomials(&k, &w, h, 12).unwrap();
        let m: Vec<f64> = w.iter().map(|x| x * h).collect();
        for q in 0..=12 {
            for p in 0..=12 {
                let g = dot(&set.values[q], &set.values[p], &m);
                let want = if p == q { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-7, "({q},{p}) {g}");
            }
            for p in 0..q {
                let mono: Vec<f64> = k.iter().map(|x| x.powi(p as i32)).collect();
                assert!(dot(&set.values[q], &mono, &m).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn hermite_recurrence() {
        assert_eq!(hermite_coefficients(3), vec![0.0, -3.0, 0.0, 1.0]);
        assert_eq!(hermite_coefficients(4), vec![3.0, 0.0, -6.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (k, w, h) = gaussian_weight(1.0);
        assert!(gram_schmidt_polynomials(&k, &w, h, 13).is_err());
        let half: Vec<f64> = w.iter().map(|x| 0.5 * x).collect();
        assert!(gram_schmidt_polynomials(&k, &half, h, 3).is_err());
    }

    #[test]
    fn few_support_points_are_ill_conditioned() {
        // Weight on four points cannot carry polynomials beyond degree 3.
        let k = vec![-1.5, -0.5, 0.5, 1.5];
        let w = vec![0.25; 4];
        let err = gram_schmidt_polynomials(&k, &w, 1.0, 5).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. }));
    }
}
