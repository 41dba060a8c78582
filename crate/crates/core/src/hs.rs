//! Gaussian auxiliary fields: sampling, Monte Carlo estimators, and Gaussian
//! integration-by-parts and moment identities.

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::covariance::{self, AuxField, Variant};
use crate::error::{Error, Result};
use crate::lattice::{InteractionOperator, OneBodyOperator};
use crate::linalg::{self, CMatrix, RMatrix};
use crate::permanent::{self, ryser_permanent};
use crate::quadrature;

const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factorization {
    Cholesky,
    /// `V diag(√λ₊)`, used when `v` is only semidefinite.
    Eigen,
}

/// Time-local Gaussian measure: each slice `h_{jτ,·}` is independently `N(0, v)`.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    v: InteractionOperator,
    ntau: usize,
    factor: RMatrix,
    method: Factorization,
}

impl GaussianSpec {
    pub fn new(v: &InteractionOperator, ntau: usize) -> Result<Self> {
        if ntau == 0 {
            return Err(Error::InvalidInput("ntau must be >= 1".into()));
        }
        let m = v.matrix();
        let scale = linalg::max_abs_real(m).max(1.0);
        let (factor, method) = match Cholesky::new(m.clone()) {
            Some(ch) => (ch.l(), Factorization::Cholesky),
            None => {
                let eig = linalg::sym_eigen(m)?;
                let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                if lmin < -1e-12 * scale {
                    return Err(Error::Factorization(format!(
                        "interaction is not positive semidefinite (eigenvalue {lmin:.3e})"
                    )));
                }
                let mut f = eig.eigenvectors.clone();
                for (k, mut col) in f.column_iter_mut().enumerate() {
                    col *= eig.eigenvalues[k].max(0.0).sqrt();
                }
                (f, Factorization::Eigen)
            }
        };
        let err = linalg::max_abs_real(&(&factor * factor.transpose() - m));
        if err > 1e-12 * scale {
            return Err(Error::Factorization(format!("factor reproduces v only to {err:.3e}")));
        }
        Ok(Self { v: v.clone(), ntau, factor, method })
    }

    pub fn v(&self) -> &InteractionOperator {
        &self.v
    }

    pub fn ntau(&self) -> usize {
        self.ntau
    }

    pub fn sites(&self) -> usize {
        self.factor.nrows()
    }

    pub fn factor(&self) -> &RMatrix {
        &self.factor
    }

    pub fn method(&self) -> Factorization {
        self.method
    }
}

/// The random stream for sample `index`: independent of the worker layout.
pub fn sample_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_aux<R: Rng + ?Sized>(spec: &GaussianSpec, rng: &mut R) -> AuxField {
    let n = spec.sites();
    let mut values = Vec::with_capacity(spec.ntau * n);
    let mut z = vec![0.0; n];
    for _ in 0..spec.ntau {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for x in 0..n {
            let hx: f64 = (0..n).map(|y| spec.factor[(x, y)] * z[y]).sum();
            values.push(Complex64::new(hx, 0.0));
        }
    }
    AuxField::from_complex(spec.ntau, n, values).expect("sampled field has the declared shape")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub nsamples: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the rayon default.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    pub mean: Complex64,
    /// Standard error of the real part.
    pub stderr: f64,
    /// Standard error of the imaginary part.
    pub stderr_im: f64,
    pub nsamples: usize,
    pub seed: u64,
    /// `|Im mean|`.
    pub imaginary_residual: f64,
    /// Samples that failed a per-sample check (still included in the mean).
    pub failures: usize,
}

impl MCEstimate {
    pub fn zscore(&self, exact: f64) -> f64 {
        let d = (self.mean.re - exact).abs();
        if self.stderr == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / self.stderr
        }
    }
}

/// Evaluates `f` on the stream of every sample on a dedicated pool and reduces
/// in index order, so the result only depends on `seed`.
fn run_samples<F>(cfg: &McConfig, f: F) -> Result<MCEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Result<(Complex64, bool)> + Sync,
{
    if cfg.nsamples < 2 {
        return Err(Error::InvalidInput("at least two samples are required".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    // Welford updates in index order
    let (mut mean, mut m2_re, mut m2_im) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
    let mut count = 0.0;
    let mut failures = 0;
    let mut start = 0;
    while start < cfg.nsamples {
        let end = (start + CHUNK).min(cfg.nsamples);
        let chunk: Vec<(Complex64, bool)> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| f(&mut sample_stream(cfg.seed, i as u64)))
                .collect::<Result<_>>()
        })?;
        for (val, failed) in chunk {
            count += 1.0;
            let delta = val - mean;
            mean += delta / count;
            m2_re += delta.re * (val.re - mean.re);
            m2_im += delta.im * (val.im - mean.im);
            failures += failed as usize;
        }
        start = end;
    }
    let n = cfg.nsamples as f64;
    let var_re = (m2_re / (n - 1.0)).max(0.0);
    let var_im = (m2_im / (n - 1.0)).max(0.0);
    if !(mean.re.is_finite() && mean.im.is_finite()) {
        return Err(Error::Numeric("Monte Carlo mean is not finite".into()));
    }
    Ok(MCEstimate {
        mean,
        stderr: (var_re / n).sqrt(),
        stderr_im: (var_im / n).sqrt(),
        nsamples: cfg.nsamples,
        seed: cfg.seed,
        imaginary_residual: mean.im.abs(),
        failures,
    })
}

/// `u_x = ½ v_{x,x}`.
pub fn half_onsite(v: &InteractionOperator) -> Vec<f64> {
    (0..v.matrix().nrows()).map(|x| 0.5 * v.at(x, x)).collect()
}

/// `B(h,u) = Π_{jτ≥1, x} e^{-i√ε h} / ((1 - i√ε h) e^{-εu_x})`.
pub fn b_weight(h: &AuxField, u: &[f64], eps: f64) -> Complex64 {
    let s = eps.sqrt();
    let mut b = Complex64::new(1.0, 0.0);
    for j in 1..=h.ntau() {
        for (x, &ux) in u.iter().enumerate() {
            let a = Complex64::new(0.0, -s) * h.get(j, x);
            b *= a.exp() / ((Complex64::new(1.0, 0.0) + a) * (-eps * ux).exp());
        }
    }
    b
}

/// Per-sample integrand of [`estimate_zc`] for a given field.
pub fn zc_sample(
    e: &OneBodyOperator,
    v: &InteractionOperator,
    h: &AuxField,
    n: usize,
    beta: f64,
    variant: Variant,
    include_b: bool,
) -> Result<Complex64> {
    if variant == Variant::K {
        return Err(Error::InvalidInput("the canonical estimator needs a triangular variant".into()));
    }
    if include_b && variant != Variant::Q2 {
        return Err(Error::InvalidInput("the B weight applies to Q2 only".into()));
    }
    let u = half_onsite(v);
    let val = permanent::hs_integrand(e, h, n, beta, variant, Some(&u))?;
    if include_b {
        Ok(val * b_weight(h, &u, beta / h.ntau() as f64))
    } else {
        Ok(val)
    }
}

/// Monte Carlo estimate of `(1/N!) E_h[Perm^Λ_N C(h)_{0,nτ}]` for a triangular variant.
///
/// `Q2` uses `u_x = ½ v_{x,x}` and `Ẽ = 𝓔`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_zc(
    e: &OneBodyOperator,
    v: &InteractionOperator,
    n: usize,
    beta: f64,
    ntau: usize,
    variant: Variant,
    include_b: bool,
    cfg: &McConfig,
) -> Result<MCEstimate> {
    let spec = GaussianSpec::new(v, ntau)?;
    if spec.sites() != e.num_sites() {
        return Err(Error::InvalidInput("kinetic and interaction operators live on different lattices".into()));
    }
    run_samples(cfg, |rng| {
        let h = sample_aux(&spec, rng);
        Ok((zc_sample(e, v, &h, n, beta, variant, include_b)?, false))
    })
}

/// Monte Carlo estimate of `E_h[1/det K(h)]`; samples whose `K(h)` has a
/// non-positive hermitian part are counted in `failures`.
pub fn estimate_zg(
    e_minus_mu: &OneBodyOperator,
    v: &InteractionOperator,
    beta: f64,
    ntau: usize,
    cfg: &McConfig,
) -> Result<MCEstimate> {
    let spec = GaussianSpec::new(v, ntau)?;
    if spec.sites() != e_minus_mu.num_sites() {
        return Err(Error::InvalidInput("kinetic and interaction operators live on different lattices".into()));
    }
    run_samples(cfg, |rng| {
        let h = sample_aux(&spec, rng);
        let k = covariance::build_q(Variant::K, e_minus_mu, None, None, &h, beta)?;
        let failed = covariance::herm_part_min_eig(&k)? <= 0.0;
        let det = covariance::det_block(&k);
        if det.norm() == 0.0 {
            return Err(Error::Inversion { smallest_singular_value: 0.0 });
        }
        Ok((det.inv(), failed))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue {
    pub phi: Complex64,
    /// `-log Φ`, continued along the ray from 0.
    pub v: Complex64,
    pub terms_used: usize,
}

const PHI_MAX_TERMS: usize = 100_000;

fn phi_series(z: Complex64, eps_v: f64, tol: f64) -> Result<(Complex64, usize)> {
    let mut sum = Complex64::new(1.0, 0.0);
    let mut power = Complex64::new(1.0, 0.0);
    for k in 1..PHI_MAX_TERMS {
        power *= z / k as f64;
        let term = power * (-0.5 * eps_v * (k * k) as f64).exp();
        sum += term;
        if (k as f64) > z.norm() && term.norm() < tol * sum.norm() {
            return Ok((sum, k + 1));
        }
        if power.norm() == 0.0 {
            return Ok((sum, k + 1));
        }
    }
    Err(Error::Numeric(format!("Φ series did not converge within {PHI_MAX_TERMS} terms")))
}

/// `Φ(z) = Σ_n zⁿ/n! e^{-εv n²/2}` and `𝒱 = -log Φ` on the principal branch.
///
/// The argument of `Φ` is tracked along `t z`, `t ∈ [0,1]`; a zero of `Φ` on
/// the ray or a continued logarithm outside the principal strip is a branch error.
pub fn phi_onsite(z: Complex64, eps_v: f64, tol: f64) -> Result<PhiValue> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be > 0, got {tol}")));
    }
    if !(eps_v >= 0.0) || !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidInput("need finite z and eps_v >= 0".into()));
    }
    let (phi, terms_used) = phi_series(z, eps_v, tol)?;
    if phi.norm() > z.norm().exp() * (1.0 + 1e-12) {
        return Err(Error::Numeric(format!("|Φ(z)| = {} exceeds e^|z|", phi.norm())));
    }

    let mut arg = 0.0;
    let mut prev = Complex64::new(1.0, 0.0);
    let steps = 64 + (8.0 * z.norm()).ceil() as usize;
    for i in 1..=steps {
        let cur = if i == steps { phi } else { phi_series(z * (i as f64 / steps as f64), eps_v, tol)?.0 };
        if cur.norm() < 1e-300 {
            return Err(Error::Branch("Φ vanishes on the ray from 0".into()));
        }
        let step = (cur / prev).arg();
        if step.abs() > 1.0 {
            return Err(Error::Branch("argument of Φ jumps along the ray; Φ is near a zero".into()));
        }
        arg += step;
        prev = cur;
    }
    if (arg - phi.arg()).abs() > 1e-9 {
        return Err(Error::Branch(format!(
            "continued log Φ has argument {arg:.6}, outside the principal branch"
        )));
    }
    Ok(PhiValue { phi, v: -phi.ln(), terms_used })
}

/// Second-order small-`z` expansions of `𝒱 = -log Φ`: the one that follows
/// from the series, `-e^{-a/2} z - ½(e^{-2a} - e^{-a}) z²` with `a = εv`,
/// and the form `z + ½ a z²`.
pub fn v_small_z_expansions(z: Complex64, eps_v: f64) -> (Complex64, Complex64) {
    let a = eps_v;
    let series = -z * (-0.5 * a).exp() - 0.5 * z * z * ((-2.0 * a).exp() - (-a).exp());
    let stated = z + 0.5 * a * z * z;
    (series, stated)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteinF {
    /// `G ≡ 1`.
    Constant,
    /// `G = h_y`.
    Coordinate { y: usize },
    /// `G = e^{i a h_y}`.
    Phase { a: f64, y: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteinResidual {
    /// `|E[h_x G] - Σ_y v_{x,y} E[∂_y G]|`.
    pub residual: f64,
    /// `|E[Δ_ε(h_x) G] + (ε/2) v_{x,x} E[G]|` with `Δ_ε(h) = e^{-i√ε h} - 1 + i√ε h`.
    pub delta_term: f64,
}

/// Gaussian integration by parts for one slice of the auxiliary field,
/// evaluated with a tensor Gauss–Hermite rule over `(h_x, h_y)`.
pub fn stein_residual(
    v: &InteractionOperator,
    jtau: usize,
    x: usize,
    kind: SteinF,
    ntau: usize,
    eps: f64,
    quad_order: usize,
) -> Result<SteinResidual> {
    if quad_order < 2 {
        return Err(Error::InvalidInput(format!("quadrature order must be >= 2, got {quad_order}")));
    }
    if jtau == 0 || jtau > ntau {
        return Err(Error::InvalidInput(format!("slice {jtau} outside 1..={ntau}")));
    }
    let sites = v.matrix().nrows();
    let y = match kind {
        SteinF::Constant => x,
        SteinF::Coordinate { y } | SteinF::Phase { y, .. } => y,
    };
    if x >= sites || y >= sites {
        return Err(Error::InvalidInput("site out of range".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be > 0".into()));
    }
    let block = RMatrix::from_row_slice(2, 2, &[v.at(x, x), v.at(x, y), v.at(y, x), v.at(y, y)]);
    let eig = linalg::sym_eigen(&block)?;
    if eig.eigenvalues.iter().any(|&l| l < -1e-12 * linalg::max_abs_real(&block).max(1.0)) {
        return Err(Error::Factorization("interaction block is not positive semidefinite".into()));
    }
    let mut f = eig.eigenvectors.clone();
    for (k, mut col) in f.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[k].max(0.0).sqrt();
    }
    let rule = quadrature::gauss_hermite(quad_order)?;
    let i = Complex64::i();
    let s = eps.sqrt();
    let g = |hy: f64| -> (Complex64, Complex64) {
        match kind {
            SteinF::Constant => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            SteinF::Coordinate { .. } => (Complex64::new(hy, 0.0), Complex64::new(1.0, 0.0)),
            SteinF::Phase { a, .. } => {
                let e = (i * a * hy).exp();
                (e, i * a * e)
            }
        }
    };
    let (mut lhs, mut deriv, mut delta, mut mean_g) =
        (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for (z1, w1) in rule.nodes.iter().zip(&rule.weights) {
        for (z2, w2) in rule.nodes.iter().zip(&rule.weights) {
            let w = w1 * w2;
            let hx = f[(0, 0)] * z1 + f[(0, 1)] * z2;
            let hy = f[(1, 0)] * z1 + f[(1, 1)] * z2;
            let (gv, dg) = g(hy);
            lhs += gv * (w * hx);
            deriv += dg * w;
            mean_g += gv * w;
            let d = (-i * s * hx).exp() - 1.0 + i * s * hx;
            delta += d * gv * w;
        }
    }
    let rhs = deriv * v.at(x, y);
    Ok(SteinResidual {
        residual: (lhs - rhs).norm(),
        delta_term: (delta + mean_g * (0.5 * eps * v.at(x, x))).norm(),
    })
}

/// `Σ_{π ∈ S_K} Π_k (Q^{-1})_{n_k, m_π(k)}` for `pairs = [(m_k, n_k)]`.
pub fn gaussian_moment_perm(q: &CMatrix, pairs: &[(usize, usize)]) -> Result<Complex64> {
    let n = q.nrows();
    if q.ncols() != n || n == 0 {
        return Err(Error::InvalidInput("Q must be square and non-empty".into()));
    }
    if pairs.iter().any(|&(m, k)| m >= n || k >= n) {
        return Err(Error::InvalidInput("pair index out of range".into()));
    }
    let lmin = linalg::herm_part_min_eig(q)?;
    if !(lmin > 0.0) {
        return Err(Error::InvalidInput(format!("Q + Q† is not positive (min eigenvalue {lmin:.3e})")));
    }
    let qinv = q.clone().try_inverse().ok_or_else(|| Error::Numeric("Q is singular".into()))?;
    let kk = pairs.len();
    let m = CMatrix::from_fn(kk, kk, |k, l| qinv[(pairs[k].1, pairs[l].0)]);
    ryser_permanent(&m)
}
