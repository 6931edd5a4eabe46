mod common;

use common::checks::{coarsest_triplets, composite_p, correction_forms, eigen_sweep_forms};
use common::toy_hierarchy;

#[test]
fn coarsest_eigenpairs_are_singular_triplets() {
    let h = toy_hierarchy(16, 4, 2.0, 0.05, 501);
    assert_eq!(h.num_levels(), 3);
    let (sv, trip, vecs) = coarsest_triplets(&h, 6);
    assert!(sv <= 1e-10 && trip <= 1e-10 && vecs <= 1e-10, "{sv:e} {trip:e} {vecs:e}");
}

#[test]
fn eigen_sweeps_agree_in_both_forms() {
    let h = toy_hierarchy(8, 4, 2.0, 0.05, 502);
    assert!(eigen_sweep_forms(&h, 8, 503) <= 1e-12);
}

#[test]
fn petrov_galerkin_correction_is_galerkin() {
    let h = toy_hierarchy(8, 4, 2.0, 0.05, 502);
    assert!(correction_forms(&h, 10, 504) <= 1e-10);
}

#[test]
fn mass_matrices_and_coarse_operators_agree() {
    let h = toy_hierarchy(16, 4, 3.0, 0.1, 505);
    for l in 1..h.num_levels() {
        let p = composite_p(&h, l);
        let g0 = &h.level(0).gamma5;
        let rh = p.scale_rows(g0.signs());
        let q = rh.adjoint().matmul(&rh);
        let t = p.adjoint().matmul(&p);
        let scale = t.frobenius_norm();
        let one = wilson_bamg::C64::new(-1.0, 0.0);
        assert!(q.add_scaled(one, &t).frobenius_norm() <= 1e-12 * scale);
        assert!(t.add_scaled(one, &h.level(l).t).frobenius_norm() <= 1e-12 * scale);
        // R D P = P^H Z P = Z_c, and the gamma5-symmetric coarse operator
        // P^H D P satisfies Gamma5_c (P^H D P) = Z_c.
        let zn = h.level(l).z.frobenius_norm();
        let rdp = rh.adjoint().matmul(&h.level(0).d()).matmul(&p);
        assert!(rdp.add_scaled(one, &h.level(l).z).frobenius_norm() <= 1e-12 * zn, "level {l}");
        let pdp = p.adjoint().matmul(&h.level(0).d()).matmul(&p);
        let lhs = pdp.scale_rows(h.level(l).gamma5.signs());
        assert!(lhs.add_scaled(one, &h.level(l).z).frobenius_norm() <= 1e-12 * zn, "level {l}");
    }
}
