//! Time-sliced quadratic forms in a background auxiliary field and their inverses.
//!
//! A [`BlockOperator`] is an `(nτ+1)×(nτ+1)` grid of `|Λ|×|Λ|` blocks with a
//! block diagonal, a block superdiagonal and, for the grand-canonical
//! operator `K`, a single corner block at `(nτ, 0)`. All variants are stored
//! in that compressed form; [`BlockOperator::to_dense`] expands on demand.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::OneBodyOperator;
use crate::linalg::{self, CMatrix, RMatrix};

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Auxiliary field `h_{jτ,x}` for `jτ ∈ {1..nτ}`; the slice `jτ = 0` is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxField {
    ntau: usize,
    sites: usize,
    values: Vec<Complex64>,
}

impl AuxField {
    pub fn zeros(ntau: usize, sites: usize) -> Self {
        Self { ntau, sites, values: vec![Complex64::new(0.0, 0.0); ntau * sites] }
    }

    /// Real field from slice-major values (`values[(jτ-1)·|Λ| + x]`).
    pub fn from_real(ntau: usize, sites: usize, values: &[f64]) -> Result<Self> {
        Self::from_complex(ntau, sites, values.iter().map(|&h| Complex64::new(h, 0.0)).collect())
    }

    pub fn from_complex(ntau: usize, sites: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != ntau * sites {
            return Err(Error::InvalidInput(format!(
                "auxiliary field has {} values, expected {}",
                values.len(),
                ntau * sites
            )));
        }
        if values.iter().any(|h| !(h.re.is_finite() && h.im.is_finite())) {
            return Err(Error::InvalidInput("auxiliary field has non-finite values".into()));
        }
        Ok(Self { ntau, sites, values })
    }

    pub fn ntau(&self) -> usize {
        self.ntau
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// `h_{jτ,x}`, with `h_{0,x} = 0`.
    pub fn get(&self, jtau: usize, x: usize) -> Complex64 {
        if jtau == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.values[(jtau - 1) * self.sites + x]
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|h| h.im == 0.0)
    }

    pub fn sum(&self) -> Complex64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Unit diagonal, superdiagonal `-e^{-ε𝓔} e^{i√ε h_{jτ+1}}`.
    Q,
    /// Diagonal `e^{-i√ε h}`, superdiagonal `-e^{-ε𝓔}`.
    Q1,
    /// Diagonal `(1 - i√ε h) e^{-εu}`, superdiagonal `-e^{-εẼ}`.
    Q2,
    /// Diagonal `1 - i√ε h`, superdiagonal `-(1 - εẼ)`.
    Q3,
    /// Diagonal `1 + εẼ - i√ε h`, superdiagonal `-1`.
    Q4,
    /// `Q` with the periodic corner block `-1` at `(nτ, 0)`.
    K,
}

impl Variant {
    pub fn is_triangular(self) -> bool {
        !matches!(self, Variant::K)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Q => "Q",
            Variant::Q1 => "Q1",
            Variant::Q2 => "Q2",
            Variant::Q3 => "Q3",
            Variant::Q4 => "Q4",
            Variant::K => "K",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "Q" => Ok(Variant::Q),
            "Q1" => Ok(Variant::Q1),
            "Q2" => Ok(Variant::Q2),
            "Q3" => Ok(Variant::Q3),
            "Q4" => Ok(Variant::Q4),
            "K" => Ok(Variant::K),
            other => Err(Error::InvalidInput(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockOperator {
    variant: Variant,
    ntau: usize,
    sites: usize,
    eps: f64,
    diag: Vec<CMatrix>,
    /// `sup[j]` is the block at `(j, j+1)`.
    sup: Vec<CMatrix>,
    corner: Option<CMatrix>,
    diag_is_diagonal: bool,
}

impl BlockOperator {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn ntau(&self) -> usize {
        self.ntau
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn block(&self, j: usize, jp: usize) -> CMatrix {
        if j == jp {
            self.diag[j].clone()
        } else if jp == j + 1 {
            self.sup[j].clone()
        } else if j == self.ntau && jp == 0 && self.corner.is_some() {
            self.corner.clone().unwrap()
        } else {
            CMatrix::zeros(self.sites, self.sites)
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let n = self.sites;
        let dim = (self.ntau + 1) * n;
        let mut out = CMatrix::zeros(dim, dim);
        for j in 0..=self.ntau {
            out.view_mut((j * n, j * n), (n, n)).copy_from(&self.diag[j]);
            if j < self.ntau {
                out.view_mut((j * n, (j + 1) * n), (n, n)).copy_from(&self.sup[j]);
            }
        }
        if let Some(c) = &self.corner {
            out.view_mut((self.ntau * n, 0), (n, n)).copy_from(c);
        }
        out
    }

    /// Transfer factor `A_{jτ}` (minus the superdiagonal block in row `jτ-1`).
    pub fn transfer(&self, jtau: usize) -> CMatrix {
        -self.sup[jtau - 1].clone()
    }

    fn diag_inverse(&self, j: usize) -> Result<CMatrix> {
        let d = &self.diag[j];
        if self.diag_is_diagonal {
            let mut inv = CMatrix::zeros(self.sites, self.sites);
            for x in 0..self.sites {
                let dx = d[(x, x)];
                if dx.norm() == 0.0 {
                    return Err(Error::Numeric(format!("diagonal block {j} is singular")));
                }
                inv[(x, x)] = ONE / dx;
            }
            Ok(inv)
        } else {
            d.clone()
                .try_inverse()
                .ok_or_else(|| Error::Numeric(format!("diagonal block {j} is singular")))
        }
    }
}

fn diag_matrix(values: impl Iterator<Item = Complex64>, n: usize) -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_iterator(n, values))
}

/// Builds one of the block operators for the field `h`.
///
/// `etilde` defaults to `e` for the variants that use it; `u` is required for `Q2`.
/// For `K` the caller passes `𝓔 - μ` as `e`.
pub fn build_q(
    variant: Variant,
    e: &OneBodyOperator,
    etilde: Option<&OneBodyOperator>,
    u: Option<&[f64]>,
    h: &AuxField,
    beta: f64,
) -> Result<BlockOperator> {
    let n = e.num_sites();
    let ntau = h.ntau();
    if ntau == 0 {
        return Err(Error::InvalidInput("ntau must be >= 1".into()));
    }
    if h.sites() != n {
        return Err(Error::InvalidInput(format!("field has {} sites, operator has {n}", h.sites())));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
    }
    let et = etilde.unwrap_or(e);
    if et.num_sites() != n {
        return Err(Error::InvalidInput("modified kinetic term has the wrong size".into()));
    }
    let eps = beta / ntau as f64;
    let s = eps.sqrt();
    let id = CMatrix::identity(n, n);

    let mut diag = Vec::with_capacity(ntau + 1);
    let mut sup = Vec::with_capacity(ntau);
    let mut corner = None;
    let mut diag_is_diagonal = true;

    match variant {
        Variant::Q | Variant::K => {
            let k = linalg::to_complex(&linalg::sym_expm_neg(e.matrix(), eps)?);
            for _ in 0..=ntau {
                diag.push(id.clone());
            }
            for j in 1..=ntau {
                let phase = diag_matrix((0..n).map(|x| (I * s * h.get(j, x)).exp()), n);
                sup.push(-(&k * phase));
            }
            if variant == Variant::K {
                corner = Some(-id.clone());
            }
        }
        Variant::Q1 => {
            let k = linalg::to_complex(&linalg::sym_expm_neg(e.matrix(), eps)?);
            for j in 0..=ntau {
                diag.push(diag_matrix((0..n).map(|x| (-I * s * h.get(j, x)).exp()), n));
            }
            for _ in 1..=ntau {
                sup.push(-k.clone());
            }
        }
        Variant::Q2 => {
            let u = u.ok_or_else(|| Error::InvalidInput("Q2 requires the potential u".into()))?;
            if u.len() != n {
                return Err(Error::InvalidInput(format!("u has {} entries, expected {n}", u.len())));
            }
            let kt = linalg::to_complex(&linalg::sym_expm_neg(et.matrix(), eps)?);
            for j in 0..=ntau {
                diag.push(diag_matrix(
                    (0..n).map(|x| (ONE - I * s * h.get(j, x)) * (-eps * u[x]).exp()),
                    n,
                ));
            }
            for _ in 1..=ntau {
                sup.push(-kt.clone());
            }
        }
        Variant::Q3 => {
            let step = linalg::to_complex(&(RMatrix::identity(n, n) - et.matrix() * eps));
            for j in 0..=ntau {
                diag.push(diag_matrix((0..n).map(|x| ONE - I * s * h.get(j, x)), n));
            }
            for _ in 1..=ntau {
                sup.push(-step.clone());
            }
        }
        Variant::Q4 => {
            let base = linalg::to_complex(&(RMatrix::identity(n, n) + et.matrix() * eps));
            for j in 0..=ntau {
                diag.push(&base - diag_matrix((0..n).map(|x| I * s * h.get(j, x)), n));
            }
            for _ in 1..=ntau {
                sup.push(-id.clone());
            }
            diag_is_diagonal = n == 1 || et.matrix().iter().enumerate().all(|(k, &v)| k % (n + 1) == 0 || v == 0.0);
        }
    }

    Ok(BlockOperator { variant, ntau, sites: n, eps, diag, sup, corner, diag_is_diagonal })
}

/// Inverse of a [`BlockOperator`] as a full block grid.
#[derive(Debug, Clone)]
pub struct BlockCovariance {
    ntau: usize,
    sites: usize,
    blocks: Vec<CMatrix>,
    triangular: bool,
    residual: f64,
}

impl BlockCovariance {
    pub fn ntau(&self) -> usize {
        self.ntau
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn triangular(&self) -> bool {
        self.triangular
    }

    /// `‖op · cov - I‖_max`, recorded at inversion (zero for analytic constructions).
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn block(&self, j: usize, jp: usize) -> &CMatrix {
        &self.blocks[j * (self.ntau + 1) + jp]
    }

    pub fn entry(&self, j: usize, x: usize, jp: usize, xp: usize) -> Complex64 {
        self.block(j, jp)[(x, xp)]
    }

    pub fn to_dense(&self) -> CMatrix {
        let n = self.sites;
        let dim = (self.ntau + 1) * n;
        let mut out = CMatrix::zeros(dim, dim);
        for j in 0..=self.ntau {
            for jp in 0..=self.ntau {
                out.view_mut((j * n, jp * n), (n, n)).copy_from(self.block(j, jp));
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &BlockCovariance) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| linalg::max_abs(&(a - b)))
            .fold(0.0, f64::max)
    }
}

/// `‖op · cov - I‖_max` evaluated blockwise.
pub fn inverse_residual(op: &BlockOperator, blocks: &[CMatrix]) -> f64 {
    let m = op.ntau + 1;
    let id = CMatrix::identity(op.sites, op.sites);
    let mut worst = 0.0_f64;
    for j in 0..m {
        for jp in 0..m {
            let mut prod = &op.diag[j] * &blocks[j * m + jp];
            if j + 1 < m {
                prod += &op.sup[j] * &blocks[(j + 1) * m + jp];
            }
            if j == op.ntau {
                if let Some(c) = &op.corner {
                    prod += c * &blocks[jp];
                }
            }
            if j == jp {
                prod -= &id;
            }
            worst = worst.max(linalg::max_abs(&prod));
        }
    }
    worst
}

/// The chain block `C_{0,nτ}` of a triangular variant, by the terminating Neumann product.
pub fn chain_block(op: &BlockOperator) -> Result<CMatrix> {
    if !op.variant.is_triangular() {
        return Err(Error::InvalidInput("chain block is defined for the triangular variants".into()));
    }
    let mut acc = op.diag_inverse(op.ntau)?;
    for j in (0..op.ntau).rev() {
        acc = op.diag_inverse(j)? * op.transfer(j + 1) * acc;
    }
    Ok(acc)
}

/// Inverts `op` blockwise: back-substitution for the triangular variants and
/// the closed resolvent form (with a dense solve for `(1 - P)^{-1}`) for `K`.
pub fn invert(op: &BlockOperator) -> Result<BlockCovariance> {
    let m = op.ntau + 1;
    let n = op.sites;
    let mut blocks = vec![CMatrix::zeros(n, n); m * m];

    let dinv: Vec<CMatrix> = (0..m).map(|j| op.diag_inverse(j)).collect::<Result<_>>()?;
    if op.variant.is_triangular() {
        for jp in 0..m {
            blocks[jp * m + jp] = dinv[jp].clone();
            for j in (0..jp).rev() {
                blocks[j * m + jp] = &dinv[j] * op.transfer(j + 1) * &blocks[(j + 1) * m + jp];
            }
        }
    } else {
        // A_0 = 1; prefix[j] = A_1 ⋯ A_j, suffix[j] = A_{j+1} ⋯ A_nτ.
        let id = CMatrix::identity(n, n);
        let transfers: Vec<CMatrix> = (1..m).map(|j| op.transfer(j)).collect();
        let mut prefix = vec![id.clone(); m];
        for j in 1..m {
            prefix[j] = &prefix[j - 1] * &transfers[j - 1];
        }
        let mut suffix = vec![id.clone(); m];
        for j in (0..op.ntau).rev() {
            suffix[j] = &transfers[j] * &suffix[j + 1];
        }
        let p = &prefix[op.ntau];
        let one_minus_p = &id - p;
        let smallest = one_minus_p
            .clone()
            .singular_values()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(smallest > 1e-13) {
            return Err(Error::Inversion { smallest_singular_value: smallest });
        }
        let resolvent = one_minus_p
            .try_inverse()
            .ok_or(Error::Inversion { smallest_singular_value: smallest })?;
        for j in 0..m {
            let left = &suffix[j] * &resolvent;
            // forward part: A_{j+1} ⋯ A_{j'}
            let mut forward = id.clone();
            for jp in 0..m {
                let mut g = &left * &prefix[jp];
                if jp >= j {
                    if jp > j {
                        forward = &forward * &transfers[jp - 1];
                    }
                    g += &forward;
                }
                blocks[j * m + jp] = g;
            }
        }
    }

    let residual = inverse_residual(op, &blocks);
    Ok(BlockCovariance { ntau: op.ntau, sites: n, blocks, triangular: op.variant.is_triangular(), residual })
}

/// Free grand-canonical propagator evaluated spectrally.
pub fn green_free(e_minus_mu: &OneBodyOperator, beta: f64, ntau: usize) -> Result<BlockCovariance> {
    if ntau == 0 {
        return Err(Error::InvalidInput("ntau must be >= 1".into()));
    }
    let emin = e_minus_mu.min_eigenvalue()?;
    if !(emin > 0.0) {
        return Err(Error::InvalidInput(format!("E - mu must be positive definite (min eigenvalue {emin})")));
    }
    let n = e_minus_mu.num_sites();
    let eig = linalg::sym_eigen(e_minus_mu.matrix())?;
    let eps = beta / ntau as f64;
    let m = ntau + 1;
    let mut blocks = Vec::with_capacity(m * m);
    for j in 0..m {
        for jp in 0..m {
            let (tau, taup) = (j as f64 * eps, jp as f64 * eps);
            let lag = if taup >= tau { taup - tau } else { beta - (tau - taup) };
            let vals = eig.eigenvalues.map(|l| (-lag * l).exp() / (1.0 - (-beta * l).exp()));
            let mut scaled = eig.eigenvectors.clone();
            for (k, mut c) in scaled.column_iter_mut().enumerate() {
                c *= vals[k];
            }
            blocks.push(linalg::to_complex(&(&scaled * eig.eigenvectors.transpose())));
        }
    }
    Ok(BlockCovariance { ntau, sites: n, blocks, triangular: false, residual: 0.0 })
}

/// Determinant of a block operator.
///
/// The triangular variants are products over the diagonal blocks (for `Q`
/// exactly one, never computed); `K` uses a dense LU determinant.
pub fn det_block(op: &BlockOperator) -> Complex64 {
    match op.variant {
        Variant::Q => ONE,
        Variant::Q1 | Variant::Q2 | Variant::Q3 => op
            .diag
            .iter()
            .flat_map(|d| (0..op.sites).map(move |x| d[(x, x)]))
            .product(),
        Variant::Q4 => op.diag.iter().map(|d| d.clone().determinant()).product(),
        Variant::K => op.to_dense().determinant(),
    }
}

/// `max_{entries} (|cov_h| - cov_0)`; positive values are violations of the uniform bound.
pub fn uniform_bound_violation(cov_h: &BlockCovariance, cov_0: &BlockCovariance) -> Result<f64> {
    if cov_h.ntau != cov_0.ntau || cov_h.sites != cov_0.sites {
        return Err(Error::InvalidInput("covariances have different shapes".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    for (a, b) in cov_h.blocks.iter().zip(&cov_0.blocks) {
        for (x, y) in a.iter().zip(b.iter()) {
            worst = worst.max(x.norm() - y.re);
        }
    }
    Ok(worst)
}

/// Smallest eigenvalue of `(op + op†)/2` on the full space.
pub fn herm_part_min_eig(op: &BlockOperator) -> Result<f64> {
    linalg::herm_part_min_eig(&op.to_dense())
}

/// `min eig(e^{-εu} - e^{-εẼ})`; positive when the `Q2` positivity hypothesis holds.
pub fn q2_hypothesis_margin(etilde: &OneBodyOperator, u: &[f64], eps: f64) -> Result<f64> {
    let n = etilde.num_sites();
    if u.len() != n {
        return Err(Error::InvalidInput("u has the wrong length".into()));
    }
    let mut diff = -linalg::sym_expm_neg(etilde.matrix(), eps)?;
    for x in 0..n {
        diff[(x, x)] += (-eps * u[x]).exp();
    }
    linalg::min_eigenvalue(&diff)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrotterRemainder {
    pub actual: f64,
    pub bound: f64,
}

/// `‖e^{t(A+B)} - e^{tA}e^{tB}‖₂` together with the integral-remainder bound
/// `t² e^{t(2‖B‖ + 4‖A‖)} ½‖[A,B]‖`.
pub fn trotter_remainder(a: &CMatrix, b: &CMatrix, t: f64) -> Result<TrotterRemainder> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("A and B must be square and of equal size".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("t must be >= 0, got {t}")));
    }
    let tc = Complex64::new(t, 0.0);
    let full = ((a + b) * tc).exp();
    let split = (a * tc).exp() * (b * tc).exp();
    let actual = linalg::op_norm(&(full - split));
    let comm = a * b - b * a;
    let bound = t * t * (t * (2.0 * linalg::op_norm(b) + 4.0 * linalg::op_norm(a))).exp() * 0.5 * linalg::op_norm(&comm);
    Ok(TrotterRemainder { actual, bound })
}
