use std::sync::Arc;

use boselab::covariance::Variant;
use boselab::fock::canonical_z_trotter;
use boselab::hs::{estimate_zc, McConfig};
use boselab::lattice::{build_interaction, build_kinetic};
use boselab::walks::{z2_transfer_onsite, z_walks_enumerate, z_walks_transfer};
use boselab::{InteractionKind, KineticKind, TorusLattice};

fn ring(l: usize) -> Arc<TorusLattice> {
    Arc::new(TorusLattice::unit(1, l).unwrap())
}

#[test]
fn enumeration_stays_accurate_for_many_paths() {
    // 3^9 · 3! ≈ 1.2e5 path tuples.
    let lat = ring(3);
    let e = build_kinetic(&lat, &KineticKind::Laplacian, 0.0).unwrap();
    let v = build_interaction(&lat, &InteractionKind::Onsite(0.5)).unwrap();
    let en = z_walks_enumerate(&e, &v, 3, 1.0, 4).unwrap();
    let tr = canonical_z_trotter(&e, &v, 3, 1.0, 4).unwrap();
    assert!((en - tr).abs() / tr < 1e-13, "{en} vs {tr}");
}

#[test]
fn q2_estimator_matches_exact_average() {
    let lat = ring(2);
    let e = build_kinetic(&lat, &KineticKind::Laplacian, 0.0).unwrap();
    let v = build_interaction(&lat, &InteractionKind::Onsite(1.0)).unwrap();
    for include_b in [false, true] {
        let exact = z2_transfer_onsite(&e, &v, 2, 1.0, 4, include_b).unwrap();
        let est = estimate_zc(&e, &v, 2, 1.0, 4, Variant::Q2, include_b, &McConfig { nsamples: 40_000, seed: 3, workers: 0 })
            .unwrap();
        assert!(est.zscore(exact) < 4.0, "B = {include_b}: {:?} vs {exact}", est.mean);
        assert!(est.mean.im.abs() < 4.0 * est.stderr_im.max(1e-12));
    }
}

#[test]
fn q_estimator_matches_transfer() {
    let lat = ring(3);
    let e = build_kinetic(&lat, &KineticKind::LaplacianPlusMass { m2: 0.2 }, 0.0).unwrap();
    let v = build_interaction(&lat, &InteractionKind::Radial(vec![0.8, 0.2])).unwrap();
    let exact = z_walks_transfer(&e, &v, 2, 1.0, 4).unwrap();
    let est = estimate_zc(&e, &v, 2, 1.0, 4, Variant::Q, false, &McConfig { nsamples: 40_000, seed: 11, workers: 0 }).unwrap();
    assert!(est.zscore(exact) < 4.0, "{:?} ± {} vs {exact}", est.mean, est.stderr);
}
