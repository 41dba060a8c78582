//! Interacting random-walk representation of the canonical partition function.
//!
//! After the auxiliary field is integrated out exactly, `Z^{(nτ)}` is a sum
//! over `N` walks on Λ with kinetic weights `(e^{-ε𝓔})_{y_{j-1}, y_j}`, an
//! interaction that is local in the time index, and endpoints glued by a
//! permutation. [`z_walks_enumerate`] sums the paths literally;
//! [`z_walks_transfer`] contracts the same sum with an `N`-particle transfer
//! operator on Λ^N.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{InteractionOperator, OneBodyOperator};
use crate::linalg::{self, RMatrix};
use crate::quadrature;

pub const ENUMERATION_BUDGET: f64 = 1e7;
pub const TRANSFER_MAX_STATES: usize = 10_000;
const LAGUERRE_ORDER: usize = 96;

/// `N` walks `y^k_0 … y^k_{nτ}` whose endpoints are glued by `permutation`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkConfig {
    pub permutation: Vec<usize>,
    pub paths: Vec<Vec<usize>>,
}

impl WalkConfig {
    pub fn new(permutation: Vec<usize>, paths: Vec<Vec<usize>>, sites: usize) -> Result<Self> {
        let n = paths.len();
        if permutation.len() != n {
            return Err(Error::InvalidInput("permutation and paths have different lengths".into()));
        }
        let mut seen = vec![false; n];
        for &p in &permutation {
            if p >= n || seen[p] {
                return Err(Error::InvalidInput(format!("{permutation:?} is not a permutation")));
            }
            seen[p] = true;
        }
        let len = paths.first().map_or(0, Vec::len);
        if len < 2 || paths.iter().any(|p| p.len() != len) {
            return Err(Error::InvalidInput("paths must share a length of at least two".into()));
        }
        if paths.iter().flatten().any(|&y| y >= sites) {
            return Err(Error::InvalidInput("path leaves the lattice".into()));
        }
        for k in 0..n {
            if paths[k][len - 1] != paths[permutation[k]][0] {
                return Err(Error::InvalidInput(format!("walk {k} does not end where walk {} starts", permutation[k])));
            }
        }
        Ok(Self { permutation, paths })
    }

    pub fn ntau(&self) -> usize {
        self.paths[0].len() - 1
    }
}

/// `𝒱(y) = ½ Σ_{k,k'} ε Σ_{jτ=1}^{nτ} v(y^k_{jτ} - y^{k'}_{jτ})`.
///
/// With `include_self = false` the diagonal `k = k'` terms are dropped.
pub fn interaction_functional(
    paths: &[Vec<usize>],
    v: &InteractionOperator,
    eps: f64,
    include_self: bool,
) -> Result<f64> {
    let Some(first) = paths.first() else {
        return Ok(0.0);
    };
    if paths.iter().any(|p| p.len() != first.len()) {
        return Err(Error::InvalidInput("paths have different lengths".into()));
    }
    let mut total = 0.0;
    for j in 1..first.len() {
        for (k, a) in paths.iter().enumerate() {
            for (kp, b) in paths.iter().enumerate() {
                if include_self || k != kp {
                    total += v.at(a[j], b[j]);
                }
            }
        }
    }
    Ok(0.5 * eps * total)
}

fn time_step(e: &OneBodyOperator, beta: f64, ntau: usize) -> Result<(f64, RMatrix)> {
    if ntau == 0 {
        return Err(Error::InvalidInput("ntau must be >= 1".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
    }
    let eps = beta / ntau as f64;
    Ok((eps, linalg::sym_expm_neg(e.matrix(), eps)?))
}

fn check_sizes(e: &OneBodyOperator, v: &InteractionOperator) -> Result<usize> {
    let n = e.num_sites();
    if v.matrix().nrows() != n {
        return Err(Error::InvalidInput("kinetic and interaction operators live on different lattices".into()));
    }
    Ok(n)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Literal path sum `(1/N!) Σ_π Σ_x Σ_paths e^{-𝒱} Π_k Π_j (e^{-ε𝓔})_{y^k_{j-1}, y^k_j}`.
pub fn z_walks_enumerate(
    e: &OneBodyOperator,
    v: &InteractionOperator,
    n: usize,
    beta: f64,
    ntau: usize,
) -> Result<f64> {
    let sites = check_sizes(e, v)?;
    let (eps, k) = time_step(e, beta, ntau)?;
    let cost = (sites as f64).powi(((ntau - 1) * n) as i32) * linalg::factorial(n);
    if cost > ENUMERATION_BUDGET {
        return Err(Error::Scale(format!("walk enumeration cost {cost:.3e} exceeds {ENUMERATION_BUDGET:e}")));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let perms = permutations(n);
    let free = n * (ntau - 1);
    let mut total = 0.0;
    let mut carry = 0.0;
    let mut starts = vec![0usize; n];
    let mut paths = vec![vec![0usize; ntau + 1]; n];
    loop {
        for pi in &perms {
            let mut inner = vec![0usize; free];
            loop {
                for kk in 0..n {
                    paths[kk][0] = starts[kk];
                    paths[kk][ntau] = starts[pi[kk]];
                    for j in 1..ntau {
                        paths[kk][j] = inner[kk * (ntau - 1) + j - 1];
                    }
                }
                let mut w = 1.0;
                for path in &paths {
                    for j in 1..=ntau {
                        w *= k[(path[j - 1], path[j])];
                    }
                }
                if w != 0.0 {
                    // Neumaier summation: up to 1e7 positive terms.
                    let term = w * (-interaction_functional(&paths, v, eps, true)?).exp();
                    let t = total + term;
                    carry += if total.abs() >= term.abs() { (total - t) + term } else { (term - t) + total };
                    total = t;
                }
                if !odometer(&mut inner, sites) {
                    break;
                }
            }
        }
        if !odometer(&mut starts, sites) {
            break;
        }
    }
    Ok((total + carry) / linalg::factorial(n))
}

fn odometer(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Tuples of Λ^N indexed by `Σ_k x_k |Λ|^k`, grouped into permutation orbits.
struct TupleSpace {
    sites: usize,
    n: usize,
    len: usize,
    orbits: Vec<Vec<usize>>,
}

impl TupleSpace {
    fn new(sites: usize, n: usize) -> Result<Self> {
        let len = (sites as u128)
            .checked_pow(n as u32)
            .filter(|&l| l <= TRANSFER_MAX_STATES as u128)
            .ok_or_else(|| Error::Scale(format!("|Λ|^N = {sites}^{n} exceeds {TRANSFER_MAX_STATES}")))?
            as usize;
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut orbits: Vec<Vec<usize>> = Vec::new();
        let mut x = vec![0usize; n];
        for idx in 0..len {
            let mut key = x.clone();
            key.sort_unstable();
            let o = *index.entry(key).or_insert_with(|| {
                orbits.push(Vec::new());
                orbits.len() - 1
            });
            orbits[o].push(idx);
            odometer(&mut x, sites);
        }
        Ok(Self { sites, n, len, orbits })
    }

    fn tuple(&self, mut idx: usize) -> Vec<usize> {
        let mut x = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            x.push(idx % self.sites);
            idx /= self.sites;
        }
        x
    }

    fn occupations(&self, idx: usize) -> Vec<usize> {
        let mut m = vec![0usize; self.sites];
        for x in self.tuple(idx) {
            m[x] += 1;
        }
        m
    }

    /// `ψ ← K^{⊗N} ψ`, one coordinate at a time.
    fn apply_kinetic(&self, k: &RMatrix, psi: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        let mut stride = 1;
        for _ in 0..self.n {
            for (idx, out) in scratch.iter_mut().enumerate() {
                let a = (idx / stride) % self.sites;
                let base = idx - a * stride;
                *out = (0..self.sites).map(|b| k[(a, b)] * psi[base + b * stride]).sum();
            }
            std::mem::swap(psi, scratch);
            stride *= self.sites;
        }
    }

    /// `Σ_O (1/|O|) ⟨initial·1_O, (K·diag(slice))^{nτ} 1_O⟩`, which equals
    /// `(1/N!) Σ_π Σ_x [initial (K·diag(slice))^{nτ}]_{x, πx}`.
    fn symmetrized_trace(&self, k: &RMatrix, ntau: usize, initial: &[f64], slice: &[f64]) -> f64 {
        let per_orbit: Vec<f64> = self
            .orbits
            .par_iter()
            .map(|orbit| {
                let mut psi = vec![0.0; self.len];
                for &i in orbit {
                    psi[i] = 1.0;
                }
                let mut scratch = vec![0.0; self.len];
                for _ in 0..ntau {
                    for (p, w) in psi.iter_mut().zip(slice) {
                        *p *= w;
                    }
                    self.apply_kinetic(k, &mut psi, &mut scratch);
                }
                orbit.iter().map(|&i| initial[i] * psi[i]).sum::<f64>() / orbit.len() as f64
            })
            .collect();
        per_orbit.iter().sum()
    }
}

/// `(1/N!) Σ_π Σ_x [T^{nτ}]_{x,πx}` with `T = (e^{-ε𝓔})^{⊗N} diag(e^{-ε V_N})`.
pub fn z_walks_transfer(
    e: &OneBodyOperator,
    v: &InteractionOperator,
    n: usize,
    beta: f64,
    ntau: usize,
) -> Result<f64> {
    let sites = check_sizes(e, v)?;
    let (eps, k) = time_step(e, beta, ntau)?;
    if n == 0 {
        return Ok(1.0);
    }
    let space = TupleSpace::new(sites, n)?;
    let slice: Vec<f64> = (0..space.len)
        .map(|idx| {
            let x = space.tuple(idx);
            let mut vn = 0.0;
            for &a in &x {
                for &b in &x {
                    vn += v.at(a, b);
                }
            }
            (-0.5 * eps * vn).exp()
        })
        .collect();
    Ok(space.symmetrized_trace(&k, ntau, &vec![1.0; space.len], &slice))
}

/// The transfer sum restricted to the identity permutation, `tr(T^{nτ})/N!`
/// (distinguishable walks with the same normalization).
pub fn z_walks_transfer_identity_only(
    e: &OneBodyOperator,
    v: &InteractionOperator,
    n: usize,
    beta: f64,
    ntau: usize,
) -> Result<f64> {
    let sites = check_sizes(e, v)?;
    let (eps, k) = time_step(e, beta, ntau)?;
    let space = TupleSpace::new(sites, n)?;
    let mut total = 0.0;
    let mut psi = vec![0.0; space.len];
    let mut scratch = vec![0.0; space.len];
    for start in 0..space.len {
        psi.iter_mut().for_each(|p| *p = 0.0);
        psi[start] = 1.0;
        for _ in 0..ntau {
            for (idx, p) in psi.iter_mut().enumerate() {
                let x = space.tuple(idx);
                let vn: f64 = x.iter().flat_map(|&a| x.iter().map(move |&b| (a, b))).map(|(a, b)| v.at(a, b)).sum();
                *p *= (-0.5 * eps * vn).exp();
            }
            space.apply_kinetic(&k, &mut psi, &mut scratch);
        }
        total += psi[start];
    }
    Ok(total / linalg::factorial(n))
}

/// `E[(1 - i√ε h)^{-m}]` for `h ~ N(0, v)`, i.e. `(1/Γ(m)) ∫ t^{m-1} e^{-t - t² εv/2} dt`.
pub fn resolvent_moment(m: usize, eps_v: f64) -> Result<f64> {
    if m == 0 {
        return Ok(1.0);
    }
    let rule = quadrature::gauss_laguerre(LAGUERRE_ORDER, m as f64 - 1.0)?;
    Ok(rule.integrate(|t| (-0.5 * eps_v * t * t).exp()))
}

/// `E[e^{-i√ε h} (1 - i√ε h)^{-(m+1)}] = (1/m!) ∫ t^m e^{-t - (t-1)² εv/2} dt`.
pub fn phased_resolvent_moment(m: usize, eps_v: f64) -> Result<f64> {
    let rule = quadrature::gauss_laguerre(LAGUERRE_ORDER, m as f64)?;
    Ok(rule.integrate(|t| (-0.5 * eps_v * (t - 1.0) * (t - 1.0)).exp()))
}

/// Exact Gaussian average of `(1/N!) Perm^Λ_N C₂(h, u)_{0,nτ}` with `u_x = ½ v_{x,x}`
/// and `Ẽ = 𝓔`, for an onsite interaction.
///
/// With `include_b` the average carries the weight
/// `B = Π_{jτ ≥ 1, x} e^{-i√ε h} / ((1 - i√ε h) e^{-εu})`.
pub fn z2_transfer_onsite(
    e: &OneBodyOperator,
    v: &InteractionOperator,
    n: usize,
    beta: f64,
    ntau: usize,
    include_b: bool,
) -> Result<f64> {
    let sites = check_sizes(e, v)?;
    if !v.is_onsite() {
        return Err(Error::InvalidInput("the exact Z2 transfer needs an onsite interaction".into()));
    }
    let vx: Vec<f64> = (0..sites).map(|x| v.at(x, x)).collect();
    if vx.iter().any(|&a| a < 0.0) {
        return Err(Error::InvalidInput("onsite interaction must be nonnegative".into()));
    }
    let (eps, k) = time_step(e, beta, ntau)?;
    let u: Vec<f64> = vx.iter().map(|a| 0.5 * a).collect();

    // moments[x][m]
    let mut moments = Vec::with_capacity(sites);
    for x in 0..sites {
        let row: Vec<f64> = (0..=n)
            .map(|m| {
                if include_b {
                    Ok(phased_resolvent_moment(m, eps * vx[x])? * (eps * u[x] * (m as f64 + 1.0)).exp())
                } else {
                    Ok(resolvent_moment(m, eps * vx[x])? * (eps * u[x] * m as f64).exp())
                }
            })
            .collect::<Result<_>>()?;
        moments.push(row);
    }
    let empty: f64 = (0..sites).map(|x| moments[x][0]).product();
    if n == 0 {
        return Ok(empty.powi(ntau as i32));
    }
    let space = TupleSpace::new(sites, n)?;
    let mut initial = Vec::with_capacity(space.len);
    let mut slice = Vec::with_capacity(space.len);
    for idx in 0..space.len {
        let occ = space.occupations(idx);
        initial.push(occ.iter().zip(&u).map(|(&m, &ux)| (eps * ux * m as f64).exp()).product());
        slice.push(occ.iter().enumerate().map(|(x, &m)| moments[x][m]).product());
    }
    Ok(space.symmetrized_trace(&k, ntau, &initial, &slice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::canonical_z_trotter;
    use crate::lattice::{build_interaction, build_kinetic, InteractionKind, KineticKind, TorusLattice};
    use crate::quadrature::gauss_hermite;
    use std::sync::Arc;

    fn ring(l: usize, v0: f64) -> (OneBodyOperator, InteractionOperator) {
        let lat = Arc::new(TorusLattice::unit(1, l).unwrap());
        (
            build_kinetic(&lat, &KineticKind::Laplacian, 0.0).unwrap(),
            build_interaction(&lat, &InteractionKind::Onsite(v0)).unwrap(),
        )
    }

    #[test]
    fn functional_examples() {
        let (_, v) = ring(3, 0.7);
        let beta = 1.5;
        let ntau = 5;
        let eps = beta / ntau as f64;
        let a = vec![vec![0, 1, 2, 0, 1, 2]];
        assert!((interaction_functional(&a, &v, eps, true).unwrap() - 0.5 * beta * 0.7).abs() < 1e-14);
        let pinned = vec![vec![1; 6], vec![1; 6]];
        assert!((interaction_functional(&pinned, &v, eps, true).unwrap() - 2.0 * beta * 0.7).abs() < 1e-14);
        let apart = vec![vec![0; 6], vec![2; 6]];
        assert!((interaction_functional(&apart, &v, eps, true).unwrap() - beta * 0.7).abs() < 1e-14);
        assert_eq!(interaction_functional(&apart, &v, eps, false).unwrap(), 0.0);
        assert!(interaction_functional(&[vec![0; 3], vec![0; 4]], &v, eps, true).is_err());
    }

    #[test]
    fn single_site_single_walk() {
        let lat = Arc::new(TorusLattice::unit(1, 1).unwrap());
        let e = OneBodyOperator::from_matrix(lat.clone(), RMatrix::from_element(1, 1, 0.4)).unwrap();
        let v = build_interaction(&lat, &InteractionKind::Onsite(1.2)).unwrap();
        let want = (-0.7 * (0.4 + 0.6f64)).exp();
        assert!((z_walks_enumerate(&e, &v, 1, 0.7, 3).unwrap() - want).abs() < 1e-15);
        assert!((z_walks_transfer(&e, &v, 1, 0.7, 3).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn enumeration_matches_transfer() {
        let (e, v) = ring(2, 0.9);
        for ntau in 1..=3 {
            let a = z_walks_enumerate(&e, &v, 2, 1.0, ntau).unwrap();
            let b = z_walks_transfer(&e, &v, 2, 1.0, ntau).unwrap();
            assert!((a - b).abs() < 1e-12 * b, "ntau={ntau}: {a} vs {b}");
        }
    }

    #[test]
    fn transfer_matches_second_quantized_trotter() {
        for (l, n) in [(2, 2), (3, 2), (3, 3)] {
            let (e, v) = ring(l, 1.3);
            for ntau in [1, 4, 16] {
                let a = z_walks_transfer(&e, &v, n, 0.9, ntau).unwrap();
                let b = canonical_z_trotter(&e, &v, n, 0.9, ntau).unwrap();
                assert!((a - b).abs() < 1e-11 * b, "|Λ|={l} N={n} nτ={ntau}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bose_symmetrization_matters() {
        let (e, v) = ring(3, 0.5);
        let sym = z_walks_transfer(&e, &v, 2, 1.0, 4).unwrap();
        let id = z_walks_transfer_identity_only(&e, &v, 2, 1.0, 4).unwrap();
        assert!((sym - id).abs() > 1e-3 * sym);
    }

    #[test]
    fn interaction_lowers_z() {
        let mut last = f64::INFINITY;
        for v0 in [0.0, 0.5, 1.0, 2.0] {
            let (e, v) = ring(3, v0);
            let z = z_walks_transfer(&e, &v, 2, 1.0, 6).unwrap();
            assert!(z < last);
            last = z;
        }
    }

    #[test]
    fn scale_limits() {
        let (e, v) = ring(11, 0.5);
        assert!(matches!(z_walks_transfer(&e, &v, 4, 1.0, 2), Err(Error::Scale(_))));
        assert!(matches!(z_walks_enumerate(&e, &v, 2, 1.0, 8), Err(Error::Scale(_))));
    }

    #[test]
    fn resolvent_moments_against_hermite() {
        let rule = gauss_hermite(200).unwrap();
        for eps_v in [0.01f64, 0.125, 0.5] {
            let s = eps_v.sqrt();
            for m in 0..5 {
                let re = rule.integrate(|z| (num_complex::Complex64::new(1.0, -s * z)).powi(-(m as i32)).re);
                assert!((resolvent_moment(m, eps_v).unwrap() - re).abs() < 1e-12, "m={m} εv={eps_v}");
                let re = rule.integrate(|z| {
                    let c = num_complex::Complex64::new(1.0, -s * z);
                    ((num_complex::Complex64::new(0.0, -s * z)).exp() * c.powi(-(m as i32 + 1))).re
                });
                let got = phased_resolvent_moment(m, eps_v).unwrap();
                assert!((got - re).abs() < 1e-11, "m={m} εv={eps_v}: {got} vs {re}");
            }
        }
    }

    #[test]
    fn z2_without_interaction_is_free() {
        let (e, v) = ring(2, 0.0);
        let z = canonical_z_trotter(&e, &v, 2, 1.0, 4).unwrap();
        assert!((z2_transfer_onsite(&e, &v, 2, 1.0, 4, false).unwrap() - z).abs() < 1e-12 * z);
        assert!((z2_transfer_onsite(&e, &v, 2, 1.0, 4, true).unwrap() - z).abs() < 1e-12 * z);
    }
}
