//! Gauss quadrature rules from the Golub–Welsch eigenvalue problem.

use crate::error::{Error, Result};
use crate::linalg::{self, RMatrix};

/// Nodes and weights; weights are normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn golub_welsch(diag: &[f64], off: &[f64]) -> Result<Rule> {
    let n = diag.len();
    let mut j = RMatrix::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = linalg::sym_eigen(&j)?;
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    })
}

/// Gauss–Hermite rule for the standard normal density: `E[f(Z)] ≈ Σ w_i f(x_i)`.
pub fn gauss_hermite(order: usize) -> Result<Rule> {
    if order == 0 {
        return Err(Error::InvalidInput("quadrature order must be >= 1".into()));
    }
    let diag = vec![0.0; order];
    let off: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
    golub_welsch(&diag, &off)
}

/// Generalized Gauss–Laguerre rule for the density `t^α e^{-t} / Γ(α+1)` on `(0, ∞)`.
pub fn gauss_laguerre(order: usize, alpha: f64) -> Result<Rule> {
    if order == 0 {
        return Err(Error::InvalidInput("quadrature order must be >= 1".into()));
    }
    if !(alpha > -1.0) {
        return Err(Error::InvalidInput(format!("alpha must be > -1, got {alpha}")));
    }
    let diag: Vec<f64> = (0..order).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..order).map(|k| (k as f64 * (k as f64 + alpha)).sqrt()).collect();
    golub_welsch(&diag, &off)
}
