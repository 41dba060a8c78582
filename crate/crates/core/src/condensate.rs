//! Zero-mode quantities: the simplified condensate free energy, the
//! Bogoliubov quadratic form and dispersion, and real-space kernels of
//! `e^{-t E_B(p)}` on a periodic grid.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::OneBodyOperator;
use crate::linalg::{self, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensateParams {
    /// Inverse density `1/ρ`.
    pub sigma: f64,
    pub beta: f64,
    /// Mass term `v̂(0)`.
    pub m: f64,
    /// Onsite coupling.
    pub v: f64,
}

impl CondensateParams {
    pub fn new(sigma: f64, beta: f64, m: f64, v: f64) -> Result<Self> {
        let p = Self { sigma, beta, m, v };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.beta > 0.0 && self.v >= 0.0 && self.m.is_finite()) {
            return Err(Error::InvalidInput(format!("need sigma > 0, beta > 0, v >= 0; got {self:?}")));
        }
        if !(self.sigma.is_finite() && self.beta.is_finite() && self.v.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(())
    }
}

/// `F(γ) = σ[(1+βm)γ + (vβ/2)γ²] - 1 - ln(σγ)`.
pub fn f_gamma(p: &CondensateParams, gamma: f64) -> Result<f64> {
    p.validate()?;
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("F(γ) needs γ > 0, got {gamma}")));
    }
    Ok(p.sigma * ((1.0 + p.beta * p.m) * gamma + 0.5 * p.v * p.beta * gamma * gamma) - 1.0 - (p.sigma * gamma).ln())
}

/// `F'(γ) = σ(1+βm) + σvβγ - 1/γ`.
pub fn f_gamma_derivative(p: &CondensateParams, gamma: f64) -> Result<f64> {
    p.validate()?;
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("F'(γ) needs γ > 0, got {gamma}")));
    }
    Ok(p.sigma * (1.0 + p.beta * p.m) + p.sigma * p.v * p.beta * gamma - 1.0 / gamma)
}

/// The positive root of `σvβ γ² + σ(1+βm) γ - 1 = 0`.
pub fn gamma_star(p: &CondensateParams) -> Result<f64> {
    p.validate()?;
    let a = p.sigma * p.v * p.beta;
    let b = p.sigma * (1.0 + p.beta * p.m);
    let gamma = if a == 0.0 {
        if b <= 0.0 {
            return Err(Error::Domain("v = 0 and 1 + βm <= 0: F has no minimum".into()));
        }
        1.0 / b
    } else {
        let disc = (b * b + 4.0 * a).sqrt();
        if b >= 0.0 {
            2.0 / (b + disc)
        } else {
            (disc - b) / (2.0 * a)
        }
    };
    Ok(gamma)
}

/// `bL(c) = 1₂ ⊗ (1 + εm + ε𝓔) + εv [[|c|², c²], [c̄², |c|²]] ⊗ 1`.
pub fn bogoliubov_form(c: Complex64, eps: f64, m: f64, v: f64, e: &OneBodyOperator) -> CMatrix {
    let n = e.num_sites();
    let mut one = linalg::to_complex(e.matrix()) * Complex64::new(eps, 0.0);
    for x in 0..n {
        one[(x, x)] += Complex64::new(1.0 + eps * m, 0.0);
    }
    let c2 = c.norm_sqr();
    let cpart = CMatrix::from_row_slice(2, 2, &[Complex64::new(c2, 0.0), c * c, (c * c).conj(), Complex64::new(c2, 0.0)])
        * Complex64::new(eps * v, 0.0);
    linalg::kron(&CMatrix::identity(2, 2), &one) + linalg::kron(&cpart, &CMatrix::identity(n, n))
}

/// `E_B(p) = |p| √(w² + p²)`.
pub fn bogoliubov_dispersion(p_norm: f64, w: f64) -> f64 {
    p_norm.abs() * (w * w + p_norm * p_norm).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelReport {
    /// Minimum of the real-space kernel of `e^{-t E_B}` over the grid.
    pub min_value: f64,
    /// Kernel value at `r = 0`.
    pub origin_value: f64,
    /// Grid value at `r = 0` of the transform of `e^{-t|p|}` (`d = 3` only).
    pub poisson_grid: Option<f64>,
    /// `t / (π² (t² + r²)²)` at `r = 0` (`d = 3` only).
    pub poisson_ref: Option<f64>,
}

fn frequency(k: usize, n: usize, box_len: f64) -> f64 {
    let signed = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
    2.0 * std::f64::consts::PI * signed / box_len
}

/// Real-space kernel `K(r) = box^{-d} Σ_p e^{-t E_B(p)} e^{ipr}` on the
/// `grid_n^d` periodic grid with `p_k = 2πk/box`, `k ∈ [-n/2, n/2)`.
pub fn kernel_positivity(w: f64, t: f64, d: usize, grid_n: usize, box_len: f64) -> Result<KernelReport> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidInput(format!("dimension must be 1, 2 or 3, got {d}")));
    }
    if grid_n < 2 || !grid_n.is_power_of_two() {
        return Err(Error::InvalidInput(format!("grid_n must be a power of two >= 2, got {grid_n}")));
    }
    if !(box_len > 0.0 && t > 0.0 && w >= 0.0) || !(box_len.is_finite() && t.is_finite() && w.is_finite()) {
        return Err(Error::InvalidInput("need box > 0, t > 0, w >= 0".into()));
    }
    let total = grid_n.pow(d as u32);
    let freqs: Vec<f64> = (0..grid_n).map(|k| frequency(k, grid_n, box_len)).collect();
    let norm = box_len.powi(d as i32);

    let mut data = vec![Complex64::new(0.0, 0.0); total];
    let mut poisson_sum = 0.0;
    for (idx, slot) in data.iter_mut().enumerate() {
        let mut p2 = 0.0;
        let mut rest = idx;
        for _ in 0..d {
            let p = freqs[rest % grid_n];
            p2 += p * p;
            rest /= grid_n;
        }
        let p = p2.sqrt();
        *slot = Complex64::new((-t * bogoliubov_dispersion(p, w)).exp(), 0.0);
        if d == 3 {
            poisson_sum += (-t * p).exp();
        }
    }

    let fft = FftPlanner::new().plan_fft_inverse(grid_n);
    let mut line = vec![Complex64::new(0.0, 0.0); grid_n];
    let mut stride = 1;
    for _ in 0..d {
        for base in 0..total {
            if (base / stride) % grid_n != 0 {
                continue;
            }
            for (k, l) in line.iter_mut().enumerate() {
                *l = data[base + k * stride];
            }
            fft.process(&mut line);
            for (k, l) in line.iter().enumerate() {
                data[base + k * stride] = *l;
            }
        }
        stride *= grid_n;
    }

    let min_value = data.iter().map(|z| z.re / norm).fold(f64::INFINITY, f64::min);
    let origin_value = data[0].re / norm;
    let (poisson_grid, poisson_ref) = if d == 3 {
        (Some(poisson_sum / norm), Some(1.0 / (std::f64::consts::PI.powi(2) * t.powi(3))))
    } else {
        (None, None)
    };
    Ok(KernelReport { min_value, origin_value, poisson_grid, poisson_ref })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_kinetic, KineticKind, TorusLattice};
    use crate::linalg::RMatrix;
    use std::sync::Arc;

    fn params(sigma: f64, beta: f64, m: f64, v: f64) -> CondensateParams {
        CondensateParams::new(sigma, beta, m, v).unwrap()
    }

    #[test]
    fn f_examples() {
        assert!((f_gamma(&params(1.0, 1.0, 0.0, 1.0), 1.0).unwrap() - 0.5).abs() < 1e-15);
        let p = params(1.0, 1.0, 0.0, 0.0);
        assert_eq!(f_gamma(&p, 1.0).unwrap(), 0.0);
        assert!(f_gamma(&p, 0.9).unwrap() > 0.0 && f_gamma(&p, 1.1).unwrap() > 0.0);
        assert!(f_gamma(&p, 1e-6).unwrap() > 10.0);
        assert!(f_gamma(&p, 1e6).unwrap() > 1e5);
        assert!(matches!(f_gamma(&p, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gamma_star_examples() {
        let p = params(1.0, 1.0, 0.0, 1.0);
        let g = gamma_star(&p).unwrap();
        assert!((g - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!(f_gamma_derivative(&p, g).unwrap().abs() < 1e-12);
        assert_eq!(gamma_star(&params(1.0, 1.0, 0.0, 0.0)).unwrap(), 1.0);
        assert!(matches!(gamma_star(&params(1.0, 1.0, -2.0, 0.0)), Err(Error::Domain(_))));
        let g = gamma_star(&params(1.0, 1.0, -3.0, 0.5)).unwrap();
        assert!(f_gamma_derivative(&params(1.0, 1.0, -3.0, 0.5), g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gamma_star_decreases_with_sigma() {
        for v in [0.0, 0.5, 2.0] {
            for m in [0.0, 0.3] {
                let mut last = f64::INFINITY;
                for k in 1..20 {
                    let g = gamma_star(&params(0.25 * k as f64, 1.5, m, v)).unwrap();
                    assert!(g < last);
                    last = g;
                }
            }
        }
    }

    #[test]
    fn f_is_convex() {
        let p = params(0.7, 2.0, 0.1, 1.3);
        let h = 1e-3;
        for k in 1..400 {
            let g = 0.01 * k as f64;
            let second = f_gamma(&p, g + h).unwrap() - 2.0 * f_gamma(&p, g).unwrap() + f_gamma(&p, g - h).unwrap();
            assert!(second >= -1e-12);
        }
    }

    fn single_site(e: f64) -> OneBodyOperator {
        let lat = Arc::new(TorusLattice::unit(1, 1).unwrap());
        OneBodyOperator::from_matrix(lat, RMatrix::from_element(1, 1, e)).unwrap()
    }

    #[test]
    fn form_structure() {
        let lat = Arc::new(TorusLattice::unit(1, 3).unwrap());
        let e = build_kinetic(&lat, &KineticKind::Laplacian, 0.0).unwrap();
        let b0 = bogoliubov_form(Complex64::new(0.0, 0.0), 0.1, 0.2, 1.0, &e);
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(b0[(x, 3 + y)], Complex64::new(0.0, 0.0));
                assert_eq!(b0[(x, y)], b0[(3 + x, 3 + y)]);
            }
        }
        let c = Complex64::new(0.6, -0.8);
        let b = bogoliubov_form(c, 0.1, 0.2, 1.0, &e);
        assert!(linalg::max_abs(&(&b - b.adjoint())) < 1e-14);
        let lower = linalg::min_eigenvalue(&(RMatrix::identity(3, 3) * 1.02 + e.matrix() * 0.1)).unwrap();
        assert!(linalg::herm_part_min_eig(&b).unwrap() >= lower - 1e-14);

        let cpart = &b - &b0;
        let mut eig: Vec<f64> = linalg::herm_eigen(&cpart).unwrap().eigenvalues.iter().cloned().collect();
        eig.sort_by(f64::total_cmp);
        assert!(eig[0].abs() < 1e-14);
        assert!((eig[5] - 2.0 * c.norm_sqr() * 0.1).abs() < 1e-14);
    }

    #[test]
    fn form_determinant_is_one_plus_order_eps() {
        let (m, e, v) = (0.3, 0.5, 1.2);
        let c = Complex64::new(0.4, 0.7);
        let lin = |eps: f64| {
            let det = bogoliubov_form(c, eps, m, v, &single_site(e)).determinant();
            assert!(det.im.abs() < 1e-14);
            (det.re - 1.0) / eps
        };
        let want = 2.0 * (m + e + v * c.norm_sqr());
        let (a, b) = (lin(1e-3), lin(5e-4));
        assert!((a - want).abs() < 1e-2 && (b - want).abs() < 0.55 * (a - want).abs());
    }

    #[test]
    fn dispersion() {
        assert_eq!(bogoliubov_dispersion(0.0, 1.0), 0.0);
        assert!((bogoliubov_dispersion(1.0, 2.0) - 5f64.sqrt()).abs() < 1e-15);
        assert!((bogoliubov_dispersion(1e-6, 1.5) / (1.5 * 1e-6) - 1.0).abs() < 1e-9);
        for w in [0.0, 0.5, 1.0, 3.0] {
            for k in 0..500 {
                let p = 0.02 * k as f64;
                assert!(bogoliubov_dispersion(p, w) <= p * p + 0.5 * w * w + 1e-12);
            }
        }
    }

    #[test]
    fn kernel_one_dimension() {
        let r = kernel_positivity(1.0, 1.0, 1, 1024, 200.0).unwrap();
        assert!(r.min_value >= -1e-6, "{}", r.min_value);
        assert!(r.poisson_ref.is_none());
        let r = kernel_positivity(1.0, 20.0, 1, 1024, 200.0).unwrap();
        assert!(r.min_value >= -1e-8);
    }

    #[test]
    fn kernel_gaussian_limit() {
        // w = 0, d = 1: E_B = p², kernel is the heat kernel at r = 0.
        let t = 0.5;
        let r = kernel_positivity(0.0, t, 1, 512, 60.0).unwrap();
        assert!((r.origin_value - 1.0 / (4.0 * std::f64::consts::PI * t).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn kernel_input_checks() {
        assert!(kernel_positivity(1.0, 1.0, 4, 64, 10.0).is_err());
        assert!(kernel_positivity(1.0, 1.0, 1, 100, 10.0).is_err());
        assert!(kernel_positivity(1.0, 0.0, 1, 64, 10.0).is_err());
    }
}
