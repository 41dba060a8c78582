//! Invariant suite run by `boselab check`.

use std::sync::Arc;

use boselab::condensate::{gamma_star, kernel_positivity, CondensateParams};
use boselab::covariance::{build_q, det_block, green_free, invert, trotter_remainder, uniform_bound_violation, AuxField, Variant};
use boselab::fock::{canonical_z_exact, canonical_z_trotter};
use boselab::hs::{estimate_zc, gaussian_moment_perm, half_onsite, sample_aux, sample_stream, stein_residual, GaussianSpec, McConfig, SteinF};
use boselab::lattice::{build_interaction, build_kinetic};
use boselab::linalg::{self, CMatrix};
use boselab::permanent::{averaged_permanent, PermanentMethod};
use boselab::walks::{z_walks_enumerate, z_walks_transfer};
use boselab::{Error, InteractionKind, InteractionOperator, KineticKind, OneBodyOperator, TorusLattice};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{Report, Table};

type Outcome = Result<(bool, String), Error>;
type Invariant<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Sizes {
    max_sites: usize,
    max_n: usize,
    ntaus: &'static [usize],
    draws: u64,
    nsamples: usize,
    max_paths: f64,
}

const QUICK: Sizes = Sizes { max_sites: 3, max_n: 3, ntaus: &[2, 4, 8], draws: 200, nsamples: 4_000, max_paths: 2e6 };
const FULL: Sizes = Sizes { max_sites: 4, max_n: 4, ntaus: &[2, 4, 8, 16], draws: 2_000, nsamples: 40_000, max_paths: 1e7 };

fn ring(l: usize) -> Result<Arc<TorusLattice>, Error> {
    Ok(Arc::new(TorusLattice::unit(1, l)?))
}

fn laplacian(lat: &Arc<TorusLattice>) -> Result<OneBodyOperator, Error> {
    build_kinetic(lat, &KineticKind::Laplacian, 0.0)
}

fn onsite(lat: &Arc<TorusLattice>, v0: f64) -> Result<InteractionOperator, Error> {
    build_interaction(lat, &InteractionKind::Onsite(v0))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn representation_chain(s: &Sizes) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for l in 2..=s.max_sites.min(3) {
        let lat = ring(l)?;
        let e = laplacian(&lat)?;
        for v0 in [0.0, 0.5, 2.0] {
            let v = onsite(&lat, v0)?;
            for n in 1..=s.max_n.min(3) {
                for &nt in s.ntaus {
                    cases += 1;
                    let trotter = canonical_z_trotter(&e, &v, n, 1.0, nt)?;
                    let transfer = z_walks_transfer(&e, &v, n, 1.0, nt)?;
                    worst = worst.max(rel(transfer, trotter));
                    let paths = (l as f64).powi(((nt - 1) * n) as i32) * linalg::factorial(n);
                    if paths > s.max_paths {
                        continue;
                    }
                    match z_walks_enumerate(&e, &v, n, 1.0, nt) {
                        Ok(z) => worst = worst.max(rel(z, trotter)),
                        Err(Error::Scale(_)) => {}
                        Err(err) => return Err(err),
                    }
                }
            }
        }
    }
    Ok((worst <= 1e-10, format!("{cases} cases, max rel err {worst:.2e} (tol 1e-10)")))
}

fn free_permanent(s: &Sizes) -> Outcome {
    let mut worst: f64 = 0.0;
    for l in 1..=s.max_sites {
        let lat = ring(l)?;
        let e = build_kinetic(&lat, &KineticKind::LaplacianPlusMass { m2: 0.4 }, 0.0)?;
        let m = linalg::to_complex(&linalg::sym_expm_neg(e.matrix(), 1.0)?);
        for n in 1..=s.max_n {
            let z = canonical_z_exact(&e, &InteractionOperator::zero(&lat), n, 1.0)?;
            let p = averaged_permanent(&m, n, 1.0, PermanentMethod::Cycles)?;
            worst = worst.max(rel(p.normalized.re, z));
        }
    }
    Ok((worst <= 1e-10, format!("max rel err {worst:.2e} (tol 1e-10)")))
}

fn determinant_residual(s: &Sizes, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut det_ok = true;
    let max_ntau = *s.ntaus.last().unwrap();
    for _ in 0..s.draws / 10 {
        let lat = ring(rng.random_range(1..=s.max_sites))?;
        let ntau = rng.random_range(1..=max_ntau);
        let v = onsite(&lat, rng.random_range(0.2..2.0))?;
        let h = sample_aux(&GaussianSpec::new(&v, ntau)?, &mut rng);
        let u = half_onsite(&v);
        let e = laplacian(&lat)?;
        let em = build_kinetic(&lat, &KineticKind::LaplacianPlusMass { m2: 0.3 }, -0.2)?;
        for variant in [Variant::Q, Variant::Q1, Variant::Q2, Variant::Q3, Variant::Q4, Variant::K] {
            let op = if variant == Variant::K {
                build_q(variant, &em, None, None, &h, 1.0)?
            } else {
                build_q(variant, &e, None, Some(&u), &h, 1.0)?
            };
            worst = worst.max(invert(&op)?.residual());
            if variant == Variant::Q {
                det_ok &= det_block(&op) == Complex64::new(1.0, 0.0);
            }
        }
    }
    Ok((det_ok && worst <= 1e-11, format!("det Q = 1: {det_ok}, max residual {worst:.2e} (tol 1e-11)")))
}

fn green_function(s: &Sizes) -> Outcome {
    let lat = ring(s.max_sites)?;
    let em = build_kinetic(&lat, &KineticKind::LaplacianPlusMass { m2: 0.4 }, -0.2)?;
    let ntau = *s.ntaus.last().unwrap();
    let g = invert(&build_q(Variant::K, &em, None, None, &AuxField::zeros(ntau, s.max_sites), 1.0)?)?;
    let diff = g.max_abs_diff(&green_free(&em, 1.0, ntau)?);
    Ok((diff <= 1e-12, format!("max |G(0) - G_free| {diff:.2e} (tol 1e-12)")))
}

fn uniform_bound(s: &Sizes, seed: u64) -> Outcome {
    let ntau = 8;
    let lat = ring(3)?;
    let v = onsite(&lat, 1.0)?;
    let spec = GaussianSpec::new(&v, ntau)?;
    let e = laplacian(&lat)?;
    let em = build_kinetic(&lat, &KineticKind::LaplacianPlusMass { m2: 0.5 }, -0.3)?;
    let mut worst = f64::NEG_INFINITY;
    for (op_e, variant) in [(&e, Variant::Q), (&em, Variant::K)] {
        let c0 = invert(&build_q(variant, op_e, None, None, &AuxField::zeros(ntau, 3), 1.0)?)?;
        for i in 0..s.draws {
            let h = sample_aux(&spec, &mut sample_stream(seed, i));
            let c = invert(&build_q(variant, op_e, None, None, &h, 1.0)?)?;
            worst = worst.max(uniform_bound_violation(&c, &c0)?);
        }
    }
    Ok((worst <= 1e-12, format!("{} draws per variant, max violation {worst:.2e} (tol 1e-12)", s.draws)))
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let m = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    linalg::hermitian_part(&m)
}

fn commutator_bound(s: &Sizes, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let pairs = s.draws / 10;
    for _ in 0..pairs {
        let a = random_hermitian(&mut rng, 4);
        let b = random_hermitian(&mut rng, 4);
        for t in [0.005, 0.02, 0.1] {
            let r = trotter_remainder(&a, &b, t)?;
            violations += (r.actual > r.bound) as usize;
        }
    }
    Ok((violations == 0, format!("{violations}/{} violations", 3 * pairs)))
}

fn stein(_: &Sizes) -> Outcome {
    let lat = ring(4)?;
    let v = build_interaction(&lat, &InteractionKind::Radial(vec![1.0, 0.35, 0.1]))?;
    let mut worst: f64 = 0.0;
    for kind in [SteinF::Constant, SteinF::Coordinate { y: 1 }, SteinF::Phase { a: 1.1, y: 2 }] {
        for x in 0..4 {
            worst = worst.max(stein_residual(&v, 3, x, kind, 8, 0.125, 40)?.residual);
        }
    }
    Ok((worst <= 1e-10, format!("max residual {worst:.2e} (tol 1e-10)")))
}

fn brute_moment(qinv: &CMatrix, pairs: &[(usize, usize)]) -> Complex64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    perms(pairs.len())
        .iter()
        .map(|pi| (0..pairs.len()).map(|k| qinv[(pairs[k].1, pairs[pi[k]].0)]).product::<Complex64>())
        .sum()
}

fn moment_permanent(_: &Sizes, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(1..=3);
        let noise = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-0.4..0.4), rng.random_range(-1.0..1.0)));
        let q = CMatrix::identity(n, n) * Complex64::new(1.5, 0.0) + noise;
        let qinv = q.clone().try_inverse().ok_or_else(|| Error::Numeric("singular test matrix".into()))?;
        for k in 1..=3 {
            let pairs: Vec<(usize, usize)> = (0..k).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
            let got = match gaussian_moment_perm(&q, &pairs) {
                Ok(g) => g,
                Err(Error::InvalidInput(_)) => continue,
                Err(err) => return Err(err),
            };
            worst = worst.max((got - brute_moment(&qinv, &pairs)).norm());
        }
    }
    Ok((worst <= 1e-12, format!("max err {worst:.2e} (tol 1e-12)")))
}

fn condensate(s: &Sizes) -> Outcome {
    let g = gamma_star(&CondensateParams::new(1.0, 1.0, 0.0, 1.0)?)?;
    let gerr = (g - (5f64.sqrt() - 1.0) / 2.0).abs();
    let grids: &[(usize, usize, f64)] =
        if s.max_sites <= 3 { &[(1, 4096, 400.0)] } else { &[(1, 4096, 400.0), (2, 256, 40.0), (3, 64, 16.0)] };
    let mut min_kernel = f64::INFINITY;
    for w in [0.5, 1.0, 2.0] {
        for t in [0.5, 1.0, 2.0] {
            for &(d, n, bx) in grids {
                min_kernel = min_kernel.min(kernel_positivity(w, t, d, n, bx)?.min_value);
            }
        }
    }
    Ok((
        gerr <= 1e-12 && min_kernel >= -1e-6,
        format!("|γ* - (√5-1)/2| {gerr:.1e} (tol 1e-12), min kernel {min_kernel:.2e} (≥ -1e-6)"),
    ))
}

fn hs_consistency(s: &Sizes, seed: u64, workers: usize) -> Outcome {
    let lat = ring(2)?;
    let e = laplacian(&lat)?;
    let v = onsite(&lat, 1.0)?;
    let ntau = *s.ntaus.last().unwrap();
    let exact = z_walks_transfer(&e, &v, 2, 1.0, ntau)?;
    let est = estimate_zc(&e, &v, 2, 1.0, ntau, Variant::Q, false, &McConfig { nsamples: s.nsamples, seed, workers })?;
    let z = est.zscore(exact);
    Ok((z <= 4.0, format!("{:.6} ± {:.6} vs {exact:.6}, z = {z:.2} (tol 4)", est.mean.re, est.stderr)))
}

pub fn run(quick: bool, seed: u64, workers: usize) -> Report {
    let s = if quick { &QUICK } else { &FULL };
    let checks: Vec<Invariant> = vec![
        ("representation_chain", Box::new(|| representation_chain(s))),
        ("free_permanent", Box::new(|| free_permanent(s))),
        ("determinant_residual", Box::new(|| determinant_residual(s, seed))),
        ("green_function", Box::new(|| green_function(s))),
        ("uniform_bound", Box::new(|| uniform_bound(s, seed))),
        ("commutator_bound", Box::new(|| commutator_bound(s, seed))),
        ("stein_identity", Box::new(|| stein(s))),
        ("moment_permanent", Box::new(|| moment_permanent(s, seed))),
        ("condensate", Box::new(|| condensate(s))),
        ("hs_consistency", Box::new(|| hs_consistency(s, seed, workers))),
    ];
    let mut table = Table::new(&["invariant", "status", "detail"]);
    let mut passed = 0;
    for (name, f) in &checks {
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(err) => (false, format!("error: {err}")),
        };
        passed += ok as usize;
        table.push(vec![(*name).into(), (if ok { "PASS" } else { "FAIL" }).into(), detail.into()]);
    }
    let mut report = Report::new(table);
    report.summary.push(("passed", passed.into()));
    report.summary.push(("total", checks.len().into()));
    report.failed = passed < checks.len();
    report
}
