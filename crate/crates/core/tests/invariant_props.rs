use std::sync::Arc;

use boselab::condensate::bogoliubov_dispersion;
use boselab::covariance::{build_q, det_block, invert, AuxField, Variant};
use boselab::fock::canonical_correlation;
use boselab::lattice::{build_interaction, build_kinetic, semigroup};
use boselab::linalg::{self, CMatrix};
use boselab::{InteractionKind, KineticKind, OneBodyOperator, TorusLattice};
use num_complex::Complex64;
use proptest::prelude::*;

const VARIANTS: [Variant; 6] = [Variant::Q, Variant::Q1, Variant::Q2, Variant::Q3, Variant::Q4, Variant::K];

fn ring(l: usize) -> Arc<TorusLattice> {
    Arc::new(TorusLattice::unit(1, l).unwrap())
}

fn kinetic(l: usize, m2: f64, mu: f64) -> OneBodyOperator {
    build_kinetic(&ring(l), &KineticKind::LaplacianPlusMass { m2 }, mu).unwrap()
}

fn field(ntau: usize, sites: usize, re: &[f64], im: &[f64]) -> AuxField {
    let vals = re.iter().zip(im).take(ntau * sites).map(|(&a, &b)| Complex64::new(a, b)).collect();
    AuxField::from_complex(ntau, sites, vals).unwrap()
}

fn op_for(variant: Variant, l: usize, h: &AuxField) -> boselab::covariance::BlockOperator {
    let u = vec![0.3; l];
    let e = if variant == Variant::K { kinetic(l, 0.3, -0.2) } else { kinetic(l, 0.0, 0.0) };
    build_q(variant, &e, None, Some(&u), h, 1.0).unwrap()
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inverse_matches_dense_lu(
        l in 1usize..=3,
        ntau in 1usize..=8,
        vi in 0usize..6,
        re in prop::collection::vec(-2.0f64..2.0, 24),
    ) {
        let variant = VARIANTS[vi];
        let h = field(ntau, l, &re, &vec![0.0; 24]);
        let op = op_for(variant, l, &h);
        let cov = invert(&op).unwrap();
        let dense = op.to_dense().try_inverse().unwrap();
        prop_assert!(max_abs(&(cov.to_dense() - &dense)) <= 1e-10 * max_abs(&dense).max(1.0));
        prop_assert!(cov.residual() <= 1e-11);
    }

    #[test]
    fn triangular_inverses_have_exact_zero_lower_blocks(
        l in 1usize..=3,
        ntau in 1usize..=8,
        vi in 0usize..5,
        re in prop::collection::vec(-2.0f64..2.0, 24),
    ) {
        let h = field(ntau, l, &re, &vec![0.0; 24]);
        let cov = invert(&op_for(VARIANTS[vi], l, &h)).unwrap();
        for j in 1..=ntau {
            for jp in 0..j {
                prop_assert!(cov.block(j, jp).iter().all(|z| z.re == 0.0 && z.im == 0.0));
            }
        }
    }

    #[test]
    fn free_covariance_is_the_semigroup(l in 1usize..=4, ntau in 1usize..=10, m2 in 0.0f64..1.0) {
        let e = kinetic(l, m2, 0.0);
        let cov = invert(&build_q(Variant::Q, &e, None, None, &AuxField::zeros(ntau, l), 1.0).unwrap()).unwrap();
        let eps = 1.0 / ntau as f64;
        for j in 0..=ntau {
            for jp in j..=ntau {
                let want = linalg::to_complex(&semigroup(&e, (jp - j) as f64 * eps).unwrap());
                prop_assert!(max_abs(&(cov.block(j, jp) - want)) <= 1e-12);
            }
        }
    }

    #[test]
    fn q1_first_row_equals_q(
        l in 1usize..=3,
        ntau in 1usize..=8,
        re in prop::collection::vec(-2.0f64..2.0, 24),
    ) {
        let h = field(ntau, l, &re, &vec![0.0; 24]);
        let e = kinetic(l, 0.0, 0.0);
        let c = invert(&build_q(Variant::Q, &e, None, None, &h, 1.0).unwrap()).unwrap();
        let c1 = invert(&build_q(Variant::Q1, &e, None, None, &h, 1.0).unwrap()).unwrap();
        for jp in 0..=ntau {
            prop_assert!(max_abs(&(c.block(0, jp) - c1.block(0, jp))) <= 1e-12);
        }
    }

    #[test]
    fn complex_fields_inside_the_tube(
        l in 1usize..=3,
        ntau in 1usize..=8,
        re in prop::collection::vec(-2.0f64..2.0, 24),
        im in prop::collection::vec(-0.9f64..0.9, 24),
    ) {
        let bound = (ntau as f64).sqrt();
        let im: Vec<f64> = im.iter().map(|t| t * bound).collect();
        let h = field(ntau, l, &re, &im);
        let op = op_for(Variant::Q, l, &h);
        prop_assert_eq!(det_block(&op), Complex64::new(1.0, 0.0));
        prop_assert!(invert(&op).unwrap().residual() <= 1e-9);
    }

    #[test]
    fn correlation_is_shift_invariant(
        l in 2usize..=3,
        n in 1usize..=3,
        alpha in -3.0f64..3.0,
        v0 in 0.0f64..2.0,
    ) {
        let lat = ring(l);
        let e = build_kinetic(&lat, &KineticKind::Laplacian, 0.0).unwrap();
        let v = build_interaction(&lat, &InteractionKind::Onsite(v0)).unwrap();
        let a = canonical_correlation(&e, &v, n, 1.0, 0, 1).unwrap();
        let b = canonical_correlation(&e.shifted(alpha), &v, n, 1.0, 0, 1).unwrap();
        prop_assert!((a - b).norm() <= 1e-11);
    }

    #[test]
    fn semigroup_composes(l in 1usize..=8, s in 0.05f64..1.0, t in 0.05f64..1.0, m2 in 0.0f64..1.0) {
        let e = kinetic(l, m2, 0.0);
        let lhs = semigroup(&e, s).unwrap() * semigroup(&e, t).unwrap();
        let rhs = semigroup(&e, s + t).unwrap();
        prop_assert!((lhs - rhs).abs().max() <= 1e-12);
    }

    #[test]
    fn dispersion_below_interpolation(p in 0.0f64..50.0, w in 0.0f64..10.0) {
        prop_assert!(bogoliubov_dispersion(p, w) <= p * p + 0.5 * w * w + 1e-12 * (1.0 + p * p));
    }
}

#[test]
fn q2_free_covariance_drifts_like_one_over_ntau() {
    let e = kinetic(3, 0.0, 0.0);
    let u = [0.2, 0.5, 0.9];
    let shifted = {
        let mut m = e.matrix().clone();
        for (x, ux) in u.iter().enumerate() {
            m[(x, x)] -= ux;
        }
        m
    };
    let drift = |ntau: usize| {
        let op = build_q(Variant::Q2, &e, None, Some(&u), &AuxField::zeros(ntau, 3), 1.0).unwrap();
        let cov = invert(&op).unwrap();
        let eps = 1.0 / ntau as f64;
        let mut worst: f64 = 0.0;
        for j in 0..=ntau {
            for jp in j..=ntau {
                let want = linalg::to_complex(&linalg::sym_expm_neg(&shifted, (jp - j) as f64 * eps).unwrap());
                worst = worst.max(max_abs(&(cov.block(j, jp) - want)));
            }
        }
        worst
    };
    let d: Vec<f64> = [8, 16, 32, 64].iter().map(|&n| drift(n)).collect();
    for w in d.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..2.3).contains(&ratio), "{d:?}");
    }
}
