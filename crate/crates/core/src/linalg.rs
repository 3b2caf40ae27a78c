//! Flat-vector helpers shared by the Krylov solver, Newton iteration, and smoothers.
//!
//! All reductions run sequentially in index order so results are reproducible
//! bit for bit regardless of how operator evaluations are parallelized.

/// Inner product used for norms and orthogonalization.
#[derive(Debug, Clone, Copy)]
pub enum InnerProduct<'a> {
    Euclidean,
    /// Σ w_i x_i y_i with non-negative weights.
    Weighted(&'a [f64]),
}

impl InnerProduct<'_> {
    pub fn dot(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            InnerProduct::Euclidean => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            InnerProduct::Weighted(w) => {
                debug_assert_eq!(w.len(), x.len());
                x.iter()
                    .zip(y)
                    .zip(w.iter())
                    .map(|((a, b), w)| w * a * b)
                    .sum()
            }
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.dot(x, x).sqrt()
    }
}

/// y ← y + a·x
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(a: f64, x: &mut [f64]) {
    for v in x {
        *v *= a;
    }
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn is_zero(x: &[f64]) -> bool {
    x.iter().all(|&v| v == 0.0)
}

/// Finite-difference step for a directional derivative along a direction
/// of norm `dir_norm` at a point whose full (background included) state has
/// norm `state_norm`.
pub fn fd_epsilon(dir_norm: f64, state_norm: f64) -> f64 {
    f64::EPSILON.sqrt() * state_norm.max(1.0) / dir_norm
}
