//! Permanents and lattice-averaged permanents.

use num_complex::Complex64;

use crate::covariance::{self, AuxField, Variant};
use crate::error::{Error, Result};
use crate::lattice::OneBodyOperator;
use crate::linalg::{self, CMatrix};

pub const RYSER_MAX: usize = 20;
pub const NAIVE_BUDGET: f64 = 1e8;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `Σ_π Π_i M_{i,π(i)}` by Ryser's formula with Gray-code row-sum updates.
pub fn ryser_permanent(m: &CMatrix) -> Result<Complex64> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidInput(format!("permanent needs a square matrix, got {:?}", m.shape())));
    }
    if n > RYSER_MAX {
        return Err(Error::Scale(format!("permanent of order {n} exceeds the limit {RYSER_MAX}")));
    }
    if n == 0 {
        return Ok(ONE);
    }
    let mut row_sums = vec![ZERO; n];
    let mut total = ZERO;
    let mut gray: u32 = 0;
    for k in 1u32..(1u32 << n) {
        let bit = k.trailing_zeros() as usize;
        let mask = 1u32 << bit;
        gray ^= mask;
        if gray & mask != 0 {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s += m[(i, bit)];
            }
        } else {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s -= m[(i, bit)];
            }
        }
        let prod: Complex64 = row_sums.iter().product();
        if gray.count_ones().is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(if n.is_multiple_of(2) { total } else { -total })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PermanentMethod {
    Naive,
    #[default]
    Cycles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedPermanentResult {
    /// `Perm^Λ_N M`.
    pub value: Complex64,
    /// `Perm^Λ_N M / N!`, computed without forming `N!` for the cycle method.
    pub normalized: Complex64,
    pub method: PermanentMethod,
    pub n: usize,
    pub sites: usize,
}

/// The Λ-averaged permanent `Σ_π Σ_{x_1..x_N} Π_n w·M_{x_n, x_π(n)}`.
pub fn averaged_permanent(
    m: &CMatrix,
    n: usize,
    eta_weight: f64,
    method: PermanentMethod,
) -> Result<AveragedPermanentResult> {
    let sites = m.nrows();
    if m.ncols() != sites {
        return Err(Error::InvalidInput(format!("expected a square matrix, got {:?}", m.shape())));
    }
    if !eta_weight.is_finite() {
        return Err(Error::InvalidInput("eta weight must be finite".into()));
    }
    let (value, normalized) = match method {
        PermanentMethod::Naive => {
            let cost = (sites as f64).powi(n as i32) * 2f64.powi(n as i32);
            if cost > NAIVE_BUDGET || n > RYSER_MAX {
                return Err(Error::Scale(format!("naive averaged permanent: |Λ|^N 2^N = {cost:.3e} exceeds {NAIVE_BUDGET:e}")));
            }
            let value = naive(m, n)? * eta_weight.powi(n as i32);
            (value, value / linalg::factorial(n))
        }
        PermanentMethod::Cycles => {
            if n > 1_000_000 {
                return Err(Error::Scale(format!("cycle recursion for N = {n} exceeds the limit 10^6")));
            }
            let zn = cycle_recursion(m, n, eta_weight);
            (zn * linalg::factorial(n), zn)
        }
    };
    Ok(AveragedPermanentResult { value, normalized, method, n, sites })
}

fn naive(m: &CMatrix, n: usize) -> Result<Complex64> {
    let sites = m.nrows();
    if n == 0 {
        return Ok(ONE);
    }
    if sites == 0 {
        return Ok(ZERO);
    }
    let mut xs = vec![0usize; n];
    let mut sub = CMatrix::zeros(n, n);
    let mut total = ZERO;
    loop {
        for a in 0..n {
            for b in 0..n {
                sub[(a, b)] = m[(xs[a], xs[b])];
            }
        }
        total += ryser_permanent(&sub)?;
        let mut k = 0;
        loop {
            xs[k] += 1;
            if xs[k] < sites {
                break;
            }
            xs[k] = 0;
            k += 1;
            if k == n {
                return Ok(total);
            }
        }
    }
}

/// `Z_N = (1/N) Σ_k tr((wM)^k) Z_{N-k}`, `Z_0 = 1`.
fn cycle_recursion(m: &CMatrix, n: usize, w: f64) -> Complex64 {
    let wm = m * Complex64::new(w, 0.0);
    let mut traces = Vec::with_capacity(n);
    let mut power = wm.clone();
    for k in 1..=n {
        traces.push(power.trace());
        if k < n {
            power = &power * &wm;
        }
    }
    let mut z = vec![ONE; n + 1];
    for big in 1..=n {
        let mut acc = ZERO;
        for k in 1..=big {
            acc += traces[k - 1] * z[big - k];
        }
        z[big] = acc / big as f64;
    }
    z[n]
}

/// `(1/N!) Perm^Λ_N C(h)_{0,nτ}` for a triangular variant; the number of
/// slices is taken from `h`. `u` is only consulted for `Q2`.
pub fn hs_integrand(
    e: &OneBodyOperator,
    h: &AuxField,
    n: usize,
    beta: f64,
    variant: Variant,
    u: Option<&[f64]>,
) -> Result<Complex64> {
    let op = covariance::build_q(variant, e, None, u, h, beta)?;
    let chain = covariance::chain_block(&op)?;
    Ok(averaged_permanent(&chain, n, 1.0, PermanentMethod::Cycles)?.normalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::canonical_z_exact;
    use crate::lattice::{build_kinetic, InteractionOperator, KineticKind, TorusLattice};
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ryser_small_cases() {
        assert_eq!(ryser_permanent(&CMatrix::identity(2, 2)).unwrap(), ONE);
        assert!((ryser_permanent(&CMatrix::from_element(3, 3, ONE)).unwrap() - c(6.0, 0.0)).norm() < 1e-14);
        let m = CMatrix::from_row_slice(2, 2, &[c(0.3, 1.0), c(-2.0, 0.5), c(1.5, -0.7), c(0.2, 0.9)]);
        let want = m[(0, 0)] * m[(1, 1)] + m[(0, 1)] * m[(1, 0)];
        assert!((ryser_permanent(&m).unwrap() - want).norm() < 1e-14);
        assert!(matches!(ryser_permanent(&CMatrix::zeros(21, 21)), Err(Error::Scale(_))));
    }

    #[test]
    fn averaged_identity() {
        for method in [PermanentMethod::Naive, PermanentMethod::Cycles] {
            let r = averaged_permanent(&CMatrix::identity(2, 2), 2, 1.0, method).unwrap();
            assert!((r.value - c(6.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn single_site() {
        let m = CMatrix::from_element(1, 1, c(0.7, 0.2));
        for n in 0..6 {
            let r = averaged_permanent(&m, n, 1.0, PermanentMethod::Cycles).unwrap();
            assert!((r.normalized - m[(0, 0)].powu(n as u32)).norm() < 1e-14);
        }
    }

    #[test]
    fn eta_weight_scales_per_particle() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(2.0, 0.0)]);
        let a = averaged_permanent(&m, 3, 1.0, PermanentMethod::Naive).unwrap().value;
        let b = averaged_permanent(&m, 3, 0.5, PermanentMethod::Naive).unwrap().value;
        let cyc = averaged_permanent(&m, 3, 0.5, PermanentMethod::Cycles).unwrap().value;
        assert!((b - a * 0.125).norm() < 1e-13);
        assert!((cyc - b).norm() < 1e-12);
    }

    #[test]
    fn naive_budget() {
        let m = CMatrix::identity(10, 10);
        assert!(matches!(averaged_permanent(&m, 8, 1.0, PermanentMethod::Naive), Err(Error::Scale(_))));
    }

    #[test]
    fn free_bosons_as_permanent() {
        let lat = Arc::new(TorusLattice::unit(1, 3).unwrap());
        let e = build_kinetic(&lat, &KineticKind::Laplacian, 0.0).unwrap();
        let v = InteractionOperator::zero(&lat);
        let beta = 0.8;
        let m = linalg::to_complex(&linalg::sym_expm_neg(e.matrix(), beta).unwrap());
        for n in 1..=4 {
            let r = averaged_permanent(&m, n, 1.0, PermanentMethod::Cycles).unwrap();
            let z = canonical_z_exact(&e, &v, n, beta).unwrap();
            assert!((r.normalized.re - z).abs() < 1e-12 * z);
        }
    }

    #[test]
    fn integrand_scalar_chain() {
        let lat = Arc::new(TorusLattice::unit(1, 1).unwrap());
        let e = OneBodyOperator::from_matrix(lat, linalg::RMatrix::from_element(1, 1, 0.6)).unwrap();
        let h = AuxField::from_real(1, 1, &[0.9]).unwrap();
        let beta = 1.3;
        for n in 1..4 {
            let got = hs_integrand(&e, &h, n, beta, Variant::Q, None).unwrap();
            let step = (-beta * 0.6f64).exp() * (Complex64::i() * beta.sqrt() * 0.9).exp();
            assert!((got - step.powu(n as u32)).norm() < 1e-14);
        }
    }

    #[test]
    fn integrand_at_zero_field_is_free() {
        let lat = Arc::new(TorusLattice::unit(1, 2).unwrap());
        let e = build_kinetic(&lat, &KineticKind::LaplacianPlusMass { m2: 0.3 }, 0.0).unwrap();
        let z = canonical_z_exact(&e, &InteractionOperator::zero(&lat), 3, 1.0).unwrap();
        let got = hs_integrand(&e, &AuxField::zeros(6, 2), 3, 1.0, Variant::Q, None).unwrap();
        assert!((got.re - z).abs() < 1e-12 * z);
        assert!(got.im.abs() < 1e-14);
    }
}
