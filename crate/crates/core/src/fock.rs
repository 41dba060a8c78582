//! Exact second-quantized evaluation in fixed-particle-number sectors.
//!
//! Operators are stored densely in the occupation-number basis. The
//! many-body modules use unit site weights: the one-body matrix `𝓔_{x,y}`
//! enters as `Σ_{x,y} 𝓔_{x,y} a†_x a_y` with canonical commutators.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{InteractionOperator, OneBodyOperator, TorusLattice};
use crate::linalg::{self, CMatrix, RMatrix};

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Ordered occupation-number basis of the `N`-boson sector.
#[derive(Debug, Clone)]
pub struct OccupationBasis {
    lattice: Arc<TorusLattice>,
    n_particles: usize,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl OccupationBasis {
    pub fn new(lattice: &Arc<TorusLattice>, n_particles: usize) -> Result<Self> {
        Self::with_cap(lattice, n_particles, DEFAULT_STATE_CAP)
    }

    pub fn with_cap(lattice: &Arc<TorusLattice>, n_particles: usize, cap: usize) -> Result<Self> {
        let sites = lattice.num_sites();
        let size = sector_dimension(sites, n_particles)
            .filter(|&s| s <= cap as u128)
            .ok_or_else(|| {
                Error::Scale(format!("{n_particles} bosons on {sites} sites exceeds the {cap}-state cap"))
            })? as usize;

        let mut states = Vec::with_capacity(size);
        let mut current = vec![0u32; sites];
        fill_states(&mut states, &mut current, 0, n_particles as u32);
        debug_assert_eq!(states.len(), size);
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self { lattice: lattice.clone(), n_particles, states, index })
    }

    pub fn lattice(&self) -> &Arc<TorusLattice> {
        &self.lattice
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn position(&self, state: &[u32]) -> Option<usize> {
        self.index.get(state).copied()
    }
}

/// `binomial(|Λ| + N - 1, |Λ| - 1)`.
pub fn sector_dimension(sites: usize, n_particles: usize) -> Option<u128> {
    linalg::binomial((sites + n_particles - 1) as u64, (sites - 1) as u64)
}

fn fill_states(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, site: usize, remaining: u32) {
    if site + 1 == current.len() {
        current[site] = remaining;
        out.push(current.clone());
        return;
    }
    for k in 0..=remaining {
        current[site] = k;
        fill_states(out, current, site + 1, remaining - k);
    }
    current[site] = 0;
}

/// A number-conserving operator restricted to one sector.
#[derive(Debug, Clone)]
pub struct SectorOperator {
    basis: Arc<OccupationBasis>,
    matrix: RMatrix,
}

impl SectorOperator {
    pub fn basis(&self) -> &Arc<OccupationBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.matrix
    }
}

/// Calls `visit(target, amplitude)` for every nonzero `⟨target| a†_x a_y |state⟩`.
fn for_each_hop(
    basis: &OccupationBasis,
    state: &[u32],
    x: usize,
    y: usize,
    mut visit: impl FnMut(usize, f64),
) {
    if x == y {
        if state[x] > 0 {
            visit(basis.position(state).expect("state in basis"), state[x] as f64);
        }
        return;
    }
    if state[y] == 0 {
        return;
    }
    let amp = (state[y] as f64 * (state[x] as f64 + 1.0)).sqrt();
    let mut target = state.to_vec();
    target[y] -= 1;
    target[x] += 1;
    let pos = basis
        .position(&target)
        .expect("hopping preserves particle number, so the target is in the basis");
    visit(pos, amp);
}

/// Sector matrix of `Σ_{x,y} F_{x,y} a†_x a_y` for a complex one-body `F`.
pub fn one_body_sector(basis: &OccupationBasis, f: &CMatrix) -> Result<CMatrix> {
    let sites = basis.lattice().num_sites();
    if f.shape() != (sites, sites) {
        return Err(Error::InvalidInput("one-body insertion has the wrong shape".into()));
    }
    let dim = basis.len();
    let mut m = CMatrix::zeros(dim, dim);
    for (col, state) in basis.states().iter().enumerate() {
        for x in 0..sites {
            for y in 0..sites {
                let fxy = f[(x, y)];
                if fxy == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for_each_hop(basis, state, x, y, |row, amp| m[(row, col)] += fxy * amp);
            }
        }
    }
    Ok(m)
}

/// `(H0_N, V_N)` with `H0 = ⟨a†, 𝓔 a⟩` and `V = ½ Σ v_{x,y} n_x n_y`.
pub fn hamiltonian_sector(
    e: &OneBodyOperator,
    v: &InteractionOperator,
    basis: &Arc<OccupationBasis>,
) -> Result<(SectorOperator, SectorOperator)> {
    let sites = basis.lattice().num_sites();
    if e.num_sites() != sites || v.matrix().nrows() != sites {
        return Err(Error::InvalidInput(format!(
            "operators act on {} / {} sites, basis lattice has {sites}",
            e.num_sites(),
            v.matrix().nrows()
        )));
    }
    let dim = basis.len();
    let em = e.matrix();
    let mut h0 = RMatrix::zeros(dim, dim);
    let mut pot = RMatrix::zeros(dim, dim);
    for (col, state) in basis.states().iter().enumerate() {
        for x in 0..sites {
            for y in 0..sites {
                let exy = em[(x, y)];
                if exy == 0.0 {
                    continue;
                }
                for_each_hop(basis, state, x, y, |row, amp| h0[(row, col)] += exy * amp);
            }
        }
        let mut diag = 0.0;
        for x in 0..sites {
            for y in 0..sites {
                diag += v.at(x, y) * state[x] as f64 * state[y] as f64;
            }
        }
        pot[(col, col)] = 0.5 * diag;
    }
    Ok((
        SectorOperator { basis: basis.clone(), matrix: h0 },
        SectorOperator { basis: basis.clone(), matrix: pot },
    ))
}

fn sector_hamiltonian(e: &OneBodyOperator, v: &InteractionOperator, n: usize) -> Result<(Arc<OccupationBasis>, RMatrix, RMatrix)> {
    let basis = Arc::new(OccupationBasis::new(e.lattice(), n)?);
    let (h0, pot) = hamiltonian_sector(e, v, &basis)?;
    Ok((basis, h0.matrix, pot.matrix))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")))
    }
}

/// `tr e^{-β H_N}` by exact diagonalization.
pub fn canonical_z_exact(e: &OneBodyOperator, v: &InteractionOperator, n: usize, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let (_, h0, pot) = sector_hamiltonian(e, v, n)?;
    let eig = linalg::sym_eigen(&(h0 + pot))?;
    Ok(eig.eigenvalues.iter().map(|&l| (-beta * l).exp()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrotterOrder {
    /// `(e^{-εH0} e^{-εV})^{nτ}`.
    #[default]
    KineticFirst,
    /// `(e^{-εV} e^{-εH0})^{nτ}`.
    InteractionFirst,
}

/// `tr[(e^{-εH0_N} e^{-εV_N})^{nτ}]` with `ε = β/nτ`.
pub fn canonical_z_trotter(e: &OneBodyOperator, v: &InteractionOperator, n: usize, beta: f64, ntau: usize) -> Result<f64> {
    canonical_z_trotter_ordered(e, v, n, beta, ntau, TrotterOrder::KineticFirst)
}

pub fn canonical_z_trotter_ordered(
    e: &OneBodyOperator,
    v: &InteractionOperator,
    n: usize,
    beta: f64,
    ntau: usize,
    order: TrotterOrder,
) -> Result<f64> {
    check_beta(beta)?;
    if ntau == 0 {
        return Err(Error::InvalidInput("ntau must be >= 1".into()));
    }
    let eps = beta / ntau as f64;
    let (_, h0, pot) = sector_hamiltonian(e, v, n)?;
    let kin = linalg::sym_expm_neg(&h0, eps)?;
    let weights: Vec<f64> = (0..pot.nrows()).map(|i| (-eps * pot[(i, i)]).exp()).collect();
    let mut step = kin;
    match order {
        TrotterOrder::KineticFirst => {
            for (j, mut col) in step.column_iter_mut().enumerate() {
                col *= weights[j];
            }
        }
        TrotterOrder::InteractionFirst => {
            for (i, mut row) in step.row_iter_mut().enumerate() {
                row *= weights[i];
            }
        }
    }
    Ok(matrix_power(&step, ntau).trace())
}

pub(crate) fn matrix_power(m: &RMatrix, mut k: usize) -> RMatrix {
    let n = m.nrows();
    let mut result = RMatrix::identity(n, n);
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStop {
    /// Last term fell below `1e-16` of the partial sum.
    Converged,
    /// The cutoff was reached first.
    Cutoff,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrandSum {
    pub value: f64,
    pub tail_estimate: f64,
    pub terms: Vec<f64>,
    pub stop: SeriesStop,
}

/// `Σ_{N=0}^{Ncut} e^{βμN} Z_N`, stopping early once terms are negligible.
pub fn grand_z_exact(
    e: &OneBodyOperator,
    v: &InteractionOperator,
    mu: f64,
    beta: f64,
    ncut: usize,
) -> Result<GrandSum> {
    check_beta(beta)?;
    if v.is_zero() {
        let emin = e.min_eigenvalue()?;
        if mu >= emin {
            return Err(Error::Divergence(format!(
                "free bosons need mu < min spec E = {emin}, got mu = {mu}"
            )));
        }
    }
    let mut terms = Vec::new();
    let mut sum = 0.0;
    let mut stop = SeriesStop::Cutoff;
    for n in 0..=ncut {
        let term = (beta * mu * n as f64).exp() * canonical_z_exact(e, v, n, beta)?;
        terms.push(term);
        sum += term;
        if n > 0 && term < 1e-16 * sum {
            stop = SeriesStop::Converged;
            break;
        }
    }
    let k = terms.len();
    let tail_estimate = if k >= 2 {
        let ratio = terms[k - 1] / terms[k - 2];
        if ratio >= 1.0 {
            if stop == SeriesStop::Cutoff {
                return Err(Error::Divergence(format!(
                    "terms still growing at N = {} (ratio {ratio})",
                    k - 1
                )));
            }
            f64::INFINITY
        } else {
            terms[k - 1] * ratio / (1.0 - ratio)
        }
    } else {
        0.0
    };
    Ok(GrandSum { value: sum, tail_estimate, terms, stop })
}

/// `⟨a†_x a_y⟩` in the canonical ensemble.
pub fn canonical_correlation(
    e: &OneBodyOperator,
    v: &InteractionOperator,
    n: usize,
    beta: f64,
    x: usize,
    y: usize,
) -> Result<Complex64> {
    check_beta(beta)?;
    let sites = e.num_sites();
    if x >= sites || y >= sites {
        return Err(Error::InvalidInput(format!("site index out of range ({x}, {y})")));
    }
    let (basis, h0, pot) = sector_hamiltonian(e, v, n)?;
    let eig = linalg::sym_eigen(&(h0 + pot))?;
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let boltz: DVector<f64> = eig.eigenvalues.map(|l| (-beta * (l - lmin)).exp());
    let z = boltz.sum();

    let mut rho = eig.eigenvectors.clone();
    for (j, mut col) in rho.column_iter_mut().enumerate() {
        col *= boltz[j];
    }
    let rho = &rho * eig.eigenvectors.transpose();

    let mut trace = 0.0;
    for (col, state) in basis.states().iter().enumerate() {
        for_each_hop(&basis, state, x, y, |row, amp| trace += rho[(col, row)] * amp);
    }
    Ok(Complex64::new(trace / z, 0.0))
}

/// Coherent vector `e^{⟨a, a†⟩}Ω` truncated to sectors `0..=nmax`.
#[derive(Debug, Clone)]
pub struct CoherentVector {
    amplitudes: Vec<Complex64>,
    nmax: usize,
    sectors: Vec<(Arc<OccupationBasis>, DVector<Complex64>)>,
}

impl CoherentVector {
    pub fn new(lattice: &Arc<TorusLattice>, amplitudes: &[Complex64], nmax: usize) -> Result<Self> {
        if amplitudes.len() != lattice.num_sites() {
            return Err(Error::InvalidInput("amplitude array does not match the lattice".into()));
        }
        let mut sectors = Vec::with_capacity(nmax + 1);
        for n in 0..=nmax {
            let basis = Arc::new(OccupationBasis::new(lattice, n)?);
            let coeffs = DVector::from_iterator(
                basis.len(),
                basis.states().iter().map(|state| {
                    state.iter().zip(amplitudes).fold(Complex64::new(1.0, 0.0), |acc, (&k, &a)| {
                        acc * a.powu(k) / linalg::factorial(k as usize).sqrt()
                    })
                }),
            );
            sectors.push((basis, coeffs));
        }
        Ok(Self { amplitudes: amplitudes.to_vec(), nmax, sectors })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    pub fn sector(&self, n: usize) -> Option<&(Arc<OccupationBasis>, DVector<Complex64>)> {
        self.sectors.get(n)
    }

    /// Truncated inner product `Σ_{N ≤ nmax} ⟨self|P_N other⟩`.
    pub fn inner(&self, other: &CoherentVector) -> Complex64 {
        self.sectors
            .iter()
            .zip(&other.sectors)
            .map(|((_, a), (_, b))| a.dotc(b))
            .sum()
    }
}

/// `⟨coh a_left| (1 + dΓ(F)) P_N |coh a_right⟩` in closed form.
pub fn projected_matrix_element(
    a_left: &[Complex64],
    a_right: &[Complex64],
    n: usize,
    f: Option<&CMatrix>,
) -> Result<Complex64> {
    if a_left.len() != a_right.len() {
        return Err(Error::InvalidInput("amplitude arrays differ in length".into()));
    }
    let overlap: Complex64 = a_left.iter().zip(a_right).map(|(l, r)| l.conj() * r).sum();
    let base = overlap.powu(n as u32) / linalg::factorial(n);
    let Some(f) = f else {
        return Ok(base);
    };
    let sites = a_left.len();
    if f.shape() != (sites, sites) {
        return Err(Error::InvalidInput("insertion has the wrong shape".into()));
    }
    if n == 0 {
        return Ok(base);
    }
    let mut sandwich = Complex64::new(0.0, 0.0);
    for x in 0..sites {
        for y in 0..sites {
            sandwich += a_left[x].conj() * f[(x, y)] * a_right[y];
        }
    }
    Ok(base + overlap.powu(n as u32 - 1) / linalg::factorial(n - 1) * sandwich)
}
