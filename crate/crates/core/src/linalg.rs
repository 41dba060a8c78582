//! Small dense linear-algebra helpers shared by the other modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// Eigendecomposition of a real symmetric matrix.
pub fn sym_eigen(m: &RMatrix) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m.clone(), EIG_EPS, EIG_MAX_ITER)
        .ok_or_else(|| Error::Numeric("symmetric eigendecomposition did not converge".into()))
}

/// Eigendecomposition of a complex hermitian matrix.
pub fn herm_eigen(m: &CMatrix) -> Result<SymmetricEigen<Complex64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m.clone(), EIG_EPS, EIG_MAX_ITER)
        .ok_or_else(|| Error::Numeric("hermitian eigendecomposition did not converge".into()))
}

/// `f(M)` for real symmetric `M`, via `V f(Λ) Vᵀ`.
pub fn sym_apply(m: &RMatrix, f: impl Fn(f64) -> f64) -> Result<RMatrix> {
    let eig = sym_eigen(m)?;
    Ok(reconstruct(&eig.eigenvectors, &eig.eigenvalues.map(f)))
}

fn reconstruct(vecs: &RMatrix, vals: &DVector<f64>) -> RMatrix {
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= vals[j];
    }
    let mut out = &scaled * vecs.transpose();
    symmetrize(&mut out);
    out
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut RMatrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

/// `e^{-τ M}` for real symmetric `M`.
pub fn sym_expm_neg(m: &RMatrix, tau: f64) -> Result<RMatrix> {
    sym_apply(m, |lambda| (-tau * lambda).exp())
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn max_abs_real(m: &RMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.norm()))
}

pub fn max_asymmetry(m: &RMatrix) -> f64 {
    max_abs_real(&(m - m.transpose()))
}

/// Operator 2-norm (largest singular value).
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Hermitian part `(M + M†)/2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Smallest eigenvalue of the hermitian part of `m`.
pub fn herm_part_min_eig(m: &CMatrix) -> Result<f64> {
    let eig = herm_eigen(&hermitian_part(m))?;
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

pub fn min_eigenvalue(m: &RMatrix) -> Result<f64> {
    let eig = sym_eigen(m)?;
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Binomial coefficient as `u128`, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}
