//! One-dimensional quadrature rules on the unit interval and their tensor products.
//!
//! Gauss-Legendre rules define the DG nodes. The modified Newton-Cotes rule
//! integrates with nodes at the centers of the equidistant finite-volume
//! subcells, so values already sampled there can be reused to compute masses.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule2D {
    /// Points `(x, z)` in the unit square, x fastest.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadRule2D {
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// Legendre polynomial P_n and its derivative at `x` in [-1, 1].
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for m in 2..=n {
        let m = m as f64;
        let p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// (k+1)-point Gauss-Legendre rule mapped to [0, 1]; exact up to degree 2k+1.
pub fn gauss_legendre(k: usize) -> QuadRule1D {
    let n = k + 1;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess for the i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        if n % 2 == 1 && i == n / 2 {
            x = 0.0;
        }
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        if dp == 0.0 || !dp.is_finite() {
            dp = legendre(n, x).1;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // root x > 0 maps to the upper half of [0, 1]
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[n - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    QuadRule1D { nodes, weights }
}

/// Interpolatory rule on the k+1 subcell centers (2m+1)/(2(k+1)), exact up to degree k.
///
/// For k = 3 the tabulated rational weights are returned verbatim; other
/// degrees solve the moment system at the same points.
pub fn modified_newton_cotes(k: usize) -> Result<QuadRule1D> {
    let n = k + 1;
    let nodes: Vec<f64> = (0..n)
        .map(|m| (2 * m + 1) as f64 / (2 * n) as f64)
        .collect();
    if k == 3 {
        return Ok(QuadRule1D {
            nodes,
            weights: vec![
                1625.0 / 6000.0,
                1375.0 / 6000.0,
                1375.0 / 6000.0,
                1625.0 / 6000.0,
            ],
        });
    }
    if k > 7 {
        return Err(Error::Quadrature(format!(
            "modified Newton-Cotes rule for k={k} is not supported"
        )));
    }
    let weights = moment_weights(&nodes)?;
    Ok(QuadRule1D { nodes, weights })
}

/// Weights w with Σ_i w_i x_i^m = 1/(m+1) for m = 0..n-1.
pub(crate) fn moment_weights(nodes: &[f64]) -> Result<Vec<f64>> {
    let n = nodes.len();
    let v = DMatrix::from_fn(n, n, |m, i| nodes[i].powi(m as i32));
    let rhs = DVector::from_fn(n, |m, _| 1.0 / (m as f64 + 1.0));
    let w = v
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Quadrature("singular moment system".into()))?;
    Ok(w.iter().copied().collect())
}

pub fn tensorize(rule: &QuadRule1D) -> QuadRule2D {
    let n = rule.len();
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            points.push([rule.nodes[i], rule.nodes[j]]);
            weights.push(rule.weights[i] * rule.weights[j]);
        }
    }
    QuadRule2D { points, weights }
}
