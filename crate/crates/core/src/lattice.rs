//! Discrete torus geometry and the one- and two-body operators living on it.
//!
//! Sites are indexed in row-major order with the first coordinate varying
//! fastest: `index = Σ_i c_i L^i`. Spatial sums carry the weight `η^d`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, RMatrix};

const SYMMETRY_TOL: f64 = 1e-14;
const NONNEG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TorusLattice {
    d: usize,
    l: usize,
    eta: f64,
}

impl TorusLattice {
    pub fn new(d: usize, l: usize, eta: f64) -> Result<Self> {
        if d == 0 || l == 0 {
            return Err(Error::InvalidLattice(format!(
                "dimension and side length must be positive (d={d}, L={l})"
            )));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidLattice(format!("lattice spacing must be > 0, got {eta}")));
        }
        if l.checked_pow(d as u32).is_none() {
            return Err(Error::InvalidLattice("site count overflows".into()));
        }
        Ok(Self { d, l, eta })
    }

    /// Unit-spacing torus.
    pub fn unit(d: usize, l: usize) -> Result<Self> {
        Self::new(d, l, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.l
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn num_sites(&self) -> usize {
        self.l.pow(self.d as u32)
    }

    /// `η^d`, the weight of one site in a spatial integral.
    pub fn site_weight(&self) -> f64 {
        self.eta.powi(self.d as i32)
    }

    pub fn coords(&self, index: usize) -> Vec<usize> {
        let mut rest = index;
        (0..self.d)
            .map(|_| {
                let c = rest % self.l;
                rest /= self.l;
                c
            })
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .rev()
            .fold(0, |acc, &c| acc * self.l + (c % self.l))
    }

    /// Site index of `x - y`, componentwise modulo `L`.
    pub fn displacement(&self, x: usize, y: usize) -> usize {
        let cx = self.coords(x);
        let cy = self.coords(y);
        let diff: Vec<usize> = cx
            .iter()
            .zip(&cy)
            .map(|(a, b)| (a + self.l - b) % self.l)
            .collect();
        self.index(&diff)
    }

    /// Site index of `x + z`.
    pub fn translate(&self, x: usize, z: usize) -> usize {
        let cx = self.coords(x);
        let cz = self.coords(z);
        let sum: Vec<usize> = cx.iter().zip(&cz).map(|(a, b)| (a + b) % self.l).collect();
        self.index(&sum)
    }

    /// Index of the displacement `-z`.
    pub fn negate(&self, z: usize) -> usize {
        let c: Vec<usize> = self.coords(z).iter().map(|&a| (self.l - a) % self.l).collect();
        self.index(&c)
    }

    /// Periodic graph distance of displacement `z` from the origin.
    pub fn graph_norm(&self, z: usize) -> usize {
        self.coords(z).iter().map(|&a| a.min(self.l - a)).sum()
    }

    /// The `2d` directed nearest neighbours of `x` (with repetitions when `L ≤ 2`).
    pub fn neighbors(&self, x: usize) -> Vec<usize> {
        let c = self.coords(x);
        let mut out = Vec::with_capacity(2 * self.d);
        for axis in 0..self.d {
            for step in [1, self.l - 1] {
                let mut n = c.clone();
                n[axis] = (n[axis] + step) % self.l;
                out.push(self.index(&n));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KineticKind {
    Laplacian,
    LaplacianPlusMass { m2: f64 },
    /// `-Δ + W` with a site-dependent potential.
    ExternalPotential(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct OneBodyOperator {
    lattice: Arc<TorusLattice>,
    matrix: RMatrix,
    translation_invariant: bool,
}

impl OneBodyOperator {
    /// Wraps an arbitrary real symmetric matrix.
    pub fn from_matrix(lattice: Arc<TorusLattice>, matrix: RMatrix) -> Result<Self> {
        let n = lattice.num_sites();
        if matrix.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "one-body matrix has shape {:?}, lattice has {n} sites",
                matrix.shape()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("one-body matrix has non-finite entries".into()));
        }
        let asym = linalg::max_asymmetry(&matrix);
        if asym > SYMMETRY_TOL * (1.0 + linalg::max_abs_real(&matrix)) {
            return Err(Error::InvalidInput(format!("one-body matrix not symmetric ({asym:e})")));
        }
        let translation_invariant = is_translation_invariant(&lattice, &matrix, 1e-12);
        Ok(Self { lattice, matrix, translation_invariant })
    }

    pub fn lattice(&self) -> &Arc<TorusLattice> {
        &self.lattice
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.matrix
    }

    pub fn translation_invariant(&self) -> bool {
        self.translation_invariant
    }

    pub fn num_sites(&self) -> usize {
        self.matrix.nrows()
    }

    /// `𝓔 + α·1`.
    pub fn shifted(&self, alpha: f64) -> Self {
        let mut matrix = self.matrix.clone();
        for i in 0..matrix.nrows() {
            matrix[(i, i)] += alpha;
        }
        Self { lattice: self.lattice.clone(), matrix, translation_invariant: self.translation_invariant }
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        linalg::min_eigenvalue(&self.matrix)
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        let eig = linalg::sym_eigen(&self.matrix)?;
        Ok(eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    }
}

fn is_translation_invariant(lattice: &TorusLattice, m: &RMatrix, tol: f64) -> bool {
    let n = lattice.num_sites();
    (0..n).all(|x| {
        (0..n).all(|y| {
            let dz = lattice.displacement(x, y);
            (m[(x, y)] - m[(dz, 0)]).abs() <= tol
        })
    })
}

/// Builds `𝓔 - μ` for the chosen kinetic term, with
/// `(-Δ f)(x) = η^{-2} Σ_{|e|=1} (f(x) - f(x+e))`.
pub fn build_kinetic(lattice: &Arc<TorusLattice>, kind: &KineticKind, mu: f64) -> Result<OneBodyOperator> {
    let n = lattice.num_sites();
    let inv_eta2 = lattice.eta().powi(-2);
    let mut m = RMatrix::zeros(n, n);
    for x in 0..n {
        m[(x, x)] += 2.0 * lattice.dim() as f64 * inv_eta2;
        for y in lattice.neighbors(x) {
            m[(x, y)] -= inv_eta2;
        }
    }
    let mut translation_invariant = true;
    match kind {
        KineticKind::Laplacian => {}
        KineticKind::LaplacianPlusMass { m2 } => {
            if !(*m2 >= 0.0 && m2.is_finite()) {
                return Err(Error::InvalidInput(format!("mass term must be >= 0, got {m2}")));
            }
            for x in 0..n {
                m[(x, x)] += m2;
            }
        }
        KineticKind::ExternalPotential(w) => {
            if w.len() != n {
                return Err(Error::InvalidInput(format!("potential has {} entries, expected {n}", w.len())));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("potential has non-finite entries".into()));
            }
            for x in 0..n {
                m[(x, x)] += w[x];
            }
            translation_invariant = false;
        }
    }
    for x in 0..n {
        m[(x, x)] -= mu;
    }
    Ok(OneBodyOperator { lattice: lattice.clone(), matrix: m, translation_invariant })
}

#[derive(Debug, Clone, PartialEq)]
pub enum InteractionKind {
    /// `v_{x,y} = v0 η^{-d} δ_{x,y}`.
    Onsite(f64),
    /// Full table `v(z)` indexed by displacement site index; must satisfy `v(z) = v(-z)`.
    Profile(Vec<f64>),
    /// `v(z) = p[|z|]` with `|z|` the periodic graph distance, zero beyond the table.
    Radial(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct InteractionOperator {
    lattice: Arc<TorusLattice>,
    matrix: RMatrix,
    nonnegative: bool,
}

impl InteractionOperator {
    pub fn from_matrix(lattice: Arc<TorusLattice>, matrix: RMatrix) -> Result<Self> {
        let n = lattice.num_sites();
        if matrix.shape() != (n, n) {
            return Err(Error::InvalidInteraction(format!(
                "interaction matrix has shape {:?}, lattice has {n} sites",
                matrix.shape()
            )));
        }
        if linalg::max_asymmetry(&matrix) > SYMMETRY_TOL * (1.0 + linalg::max_abs_real(&matrix)) {
            return Err(Error::InvalidInteraction("interaction matrix is not symmetric".into()));
        }
        let nonnegative = linalg::min_eigenvalue(&matrix)? >= -NONNEG_TOL;
        Ok(Self { lattice, matrix, nonnegative })
    }

    pub fn zero(lattice: &Arc<TorusLattice>) -> Self {
        let n = lattice.num_sites();
        Self { lattice: lattice.clone(), matrix: RMatrix::zeros(n, n), nonnegative: true }
    }

    pub fn lattice(&self) -> &Arc<TorusLattice> {
        &self.lattice
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.matrix
    }

    pub fn nonnegative(&self) -> bool {
        self.nonnegative
    }

    /// True when `v` is diagonal.
    pub fn is_onsite(&self) -> bool {
        let n = self.matrix.nrows();
        (0..n).all(|x| (0..n).all(|y| x == y || self.matrix[(x, y)] == 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&x| x == 0.0)
    }

    /// `v(x, y)` as a function of site indices.
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.matrix[(x, y)]
    }
}

pub fn build_interaction(lattice: &Arc<TorusLattice>, kind: &InteractionKind) -> Result<InteractionOperator> {
    let n = lattice.num_sites();
    let table: Vec<f64> = match kind {
        InteractionKind::Onsite(v0) => {
            if !v0.is_finite() {
                return Err(Error::InvalidInteraction(format!("non-finite coupling {v0}")));
            }
            let mut t = vec![0.0; n];
            t[0] = v0 / lattice.site_weight();
            t
        }
        InteractionKind::Profile(p) => {
            if p.len() != n {
                return Err(Error::InvalidInteraction(format!(
                    "profile has {} entries, expected one per displacement ({n})",
                    p.len()
                )));
            }
            for z in 0..n {
                let mz = lattice.negate(z);
                if (p[z] - p[mz]).abs() > SYMMETRY_TOL * (1.0 + p[z].abs()) {
                    return Err(Error::InvalidInteraction(format!(
                        "profile is not symmetric under z -> -z at displacement {z}"
                    )));
                }
            }
            p.clone()
        }
        InteractionKind::Radial(p) => (0..n)
            .map(|z| p.get(lattice.graph_norm(z)).copied().unwrap_or(0.0))
            .collect(),
    };
    let mut m = RMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            m[(x, y)] = table[lattice.displacement(x, y)];
        }
    }
    InteractionOperator::from_matrix(lattice.clone(), m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticReport {
    pub ok: bool,
    pub worst_entry: f64,
}

/// Checks that every entry of `e^{-τ𝓔}` is nonnegative (up to `tol`) for each `τ`.
pub fn check_stochastic(e: &OneBodyOperator, taus: &[f64], tol: f64) -> Result<StochasticReport> {
    if taus.is_empty() {
        return Err(Error::InvalidInput("at least one time step is required".into()));
    }
    let eig = linalg::sym_eigen(e.matrix())?;
    let mut worst = f64::INFINITY;
    for &tau in taus {
        let vals: DVector<f64> = eig.eigenvalues.map(|l| (-tau * l).exp());
        let mut scaled = eig.eigenvectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= vals[j];
        }
        let k = &scaled * eig.eigenvectors.transpose();
        worst = k.iter().cloned().fold(worst, f64::min);
    }
    Ok(StochasticReport { ok: worst >= -tol, worst_entry: worst })
}

/// `e^{-τ𝓔}` via symmetric eigendecomposition.
pub fn semigroup(e: &OneBodyOperator, tau: f64) -> Result<RMatrix> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput(format!("semigroup time must be >= 0, got {tau}")));
    }
    if tau == 0.0 {
        let n = e.num_sites();
        return Ok(RMatrix::identity(n, n));
    }
    linalg::sym_expm_neg(e.matrix(), tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(l: usize) -> Arc<TorusLattice> {
        Arc::new(TorusLattice::unit(1, l).unwrap())
    }

    #[test]
    fn coordinates_round_trip() {
        let lat = TorusLattice::unit(3, 4).unwrap();
        assert_eq!(lat.num_sites(), 64);
        for i in 0..lat.num_sites() {
            assert_eq!(lat.index(&lat.coords(i)), i);
        }
        let x = lat.index(&[1, 0, 3]);
        let y = lat.index(&[3, 2, 0]);
        assert_eq!(lat.coords(lat.displacement(x, y)), vec![2, 2, 3]);
        assert_eq!(lat.translate(y, lat.displacement(x, y)), x);
    }

    #[test]
    fn invalid_lattice_rejected() {
        assert!(matches!(TorusLattice::unit(0, 3), Err(Error::InvalidLattice(_))));
        assert!(matches!(TorusLattice::unit(1, 0), Err(Error::InvalidLattice(_))));
        assert!(matches!(TorusLattice::new(1, 3, 0.0), Err(Error::InvalidLattice(_))));
    }

    #[test]
    fn two_site_laplacian_doubles_the_bond() {
        let e = build_kinetic(&ring(2), &KineticKind::Laplacian, 0.0).unwrap();
        assert_eq!(e.matrix(), &RMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        assert!(e.translation_invariant());
    }

    #[test]
    fn mass_and_shift() {
        let e = build_kinetic(&ring(4), &KineticKind::LaplacianPlusMass { m2: 1.0 }, 0.0).unwrap();
        for x in 0..4 {
            assert_eq!(e.matrix()[(x, x)], 3.0);
            assert_eq!(e.matrix()[(x, (x + 1) % 4)], -1.0);
            assert_eq!(e.matrix()[(x, (x + 2) % 4)], 0.0);
        }
        let e = build_kinetic(&ring(3), &KineticKind::Laplacian, -0.5).unwrap();
        assert_eq!(e.matrix()[(1, 1)], 2.5);
    }

    #[test]
    fn external_potential_breaks_translation_invariance() {
        let e = build_kinetic(&ring(3), &KineticKind::ExternalPotential(vec![0.0, 1.0, 0.0]), 0.0).unwrap();
        assert!(!e.translation_invariant());
        assert_eq!(e.matrix()[(1, 1)], 3.0);
        assert!(build_kinetic(&ring(3), &KineticKind::LaplacianPlusMass { m2: -1.0 }, 0.0).is_err());
    }

    #[test]
    fn interaction_kinds() {
        let v = build_interaction(&ring(3), &InteractionKind::Onsite(2.0)).unwrap();
        assert_eq!(v.matrix(), &RMatrix::from_diagonal_element(3, 3, 2.0));
        assert!(v.nonnegative());

        let v = build_interaction(&ring(4), &InteractionKind::Radial(vec![1.0, 0.25])).unwrap();
        assert_eq!(v.matrix().row(0).iter().cloned().collect::<Vec<_>>(), vec![1.0, 0.25, 0.0, 0.25]);
        assert_eq!(v.matrix().row(2).iter().cloned().collect::<Vec<_>>(), vec![0.0, 0.25, 1.0, 0.25]);

        let v = build_interaction(&ring(4), &InteractionKind::Profile(vec![1.0, 0.25, 0.0, 0.25])).unwrap();
        assert_eq!(v.matrix()[(3, 0)], 0.25);

        let v = build_interaction(&ring(2), &InteractionKind::Onsite(0.0)).unwrap();
        assert!(v.is_zero());
        assert!(v.nonnegative());

        let err = build_interaction(&ring(4), &InteractionKind::Profile(vec![1.0, 0.5, 0.0, 0.25]));
        assert!(matches!(err, Err(Error::InvalidInteraction(_))));
    }

    #[test]
    fn negative_profile_clears_nonnegativity_flag() {
        let v = build_interaction(&ring(4), &InteractionKind::Radial(vec![0.0, 1.0])).unwrap();
        assert!(!v.nonnegative());
    }

    #[test]
    fn stochastic_examples() {
        let lat1 = ring(1);
        let e = OneBodyOperator::from_matrix(lat1, RMatrix::from_element(1, 1, 0.7)).unwrap();
        let r = check_stochastic(&e, &[2.0], 1e-12).unwrap();
        assert!(r.ok);
        assert!((r.worst_entry - (-1.4f64).exp()).abs() < 1e-15);

        let lap = build_kinetic(&ring(4), &KineticKind::Laplacian, 0.0).unwrap();
        assert!(check_stochastic(&lap, &[0.1, 1.0, 10.0], 1e-12).unwrap().ok);

        let bad = OneBodyOperator::from_matrix(ring(2), RMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let r = check_stochastic(&bad, &[1.0], 1e-12).unwrap();
        assert!(!r.ok);
        assert!((r.worst_entry + 1f64.sinh()).abs() < 1e-14);
        assert!(check_stochastic(&bad, &[], 1e-12).is_err());
    }

    #[test]
    fn semigroup_examples() {
        let lap = build_kinetic(&ring(5), &KineticKind::Laplacian, 0.0).unwrap();
        assert_eq!(semigroup(&lap, 0.0).unwrap(), RMatrix::identity(5, 5));
        let e = OneBodyOperator::from_matrix(ring(1), RMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((semigroup(&e, 2.0).unwrap()[(0, 0)] - (-2.0f64).exp()).abs() < 1e-16);
        assert!(semigroup(&e, -1.0).is_err());
    }

    #[test]
    fn laplacian_semigroup_conserves_probability() {
        for l in 2..=6 {
            let lap = build_kinetic(&ring(l), &KineticKind::Laplacian, 0.0).unwrap();
            for tau in [0.01, 0.1, 1.0, 10.0] {
                let k = semigroup(&lap, tau).unwrap();
                for row in k.row_iter() {
                    assert!((row.sum() - 1.0).abs() < 1e-12);
                }
                assert!(k.iter().all(|&x| x >= -1e-13));
            }
        }
    }

    #[test]
    fn translation_invariant_semigroup_is_circulant() {
        let lat = Arc::new(TorusLattice::unit(2, 3).unwrap());
        let e = build_kinetic(&lat, &KineticKind::LaplacianPlusMass { m2: 0.3 }, 0.0).unwrap();
        let k = semigroup(&e, 0.7).unwrap();
        for x in 0..9 {
            for y in 0..9 {
                let z = lat.displacement(x, y);
                assert!((k[(x, y)] - k[(z, 0)]).abs() < 1e-12);
            }
        }
    }
}
