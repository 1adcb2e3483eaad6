mod common;

use std::collections::BTreeSet;

use common::{fixture, OMEGA};
use elastomono::fem::{assemble, factorize};
use elastomono::materials::{Alpha, TABLE1_BACKGROUND, TABLE1_INCLUSION};
use elastomono::mesh::{voxel_box_elements, Aabb};
use elastomono::ntd::{frechet_block, frechet_matrix, frechet_matrix_assembled, ntd_matrix, Perturbation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn snapshot_and_assembled_routes_agree() {
    let fx = fixture(4, 2, Aabb::new([0.0; 3], [0.5; 3]));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ne = fx.mesh.num_elements();
    let h = Perturbation {
        lambda: (0..ne).map(|_| rng.random_range(-1e5..1e5)).collect(),
        mu: (0..ne).map(|_| rng.random_range(-1e3..1e3)).collect(),
        rho: (0..ne).map(|_| rng.random_range(-10.0..10.0)).collect(),
    };
    let a = frechet_matrix(&fx.snapshots, &h).unwrap().d;
    let b = frechet_matrix_assembled(&fx.mesh, &fx.sol0.u, &h, OMEGA).unwrap();
    let rel = (&a - &b).norm() / b.norm();
    assert!(rel <= 1e-10, "{rel}");
}

#[test]
fn second_order_remainder() {
    let fx = fixture(4, 2, Aabb::new([0.0; 3], [0.5; 3]));
    let elems = voxel_box_elements(&fx.mesh, &Aabb::new([0.0; 3], [1.0; 3]));
    let d_lambda = TABLE1_INCLUSION.lambda - TABLE1_BACKGROUND.lambda;
    let d_mu = TABLE1_INCLUSION.mu - TABLE1_BACKGROUND.mu;
    let h = Perturbation::indicator(fx.mesh.num_elements(), &elems, [d_lambda, d_mu, 0.0]);
    let d = frechet_matrix(&fx.snapshots, &h).unwrap().d;
    let none = BTreeSet::new();
    let ts = [1e-2, 1e-3, 1e-4];
    let rs: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let f = h.scale(t).apply_to(&fx.background);
            let fac = factorize(&assemble(&fx.mesh, &f, OMEGA, &none).unwrap()).unwrap();
            let (g, _) = ntd_matrix(&fac, &fx.basis, &f).unwrap();
            (&g.g - &fx.g0.g - t * &d).norm()
        })
        .collect();
    let slope = (rs[2].ln() - rs[0].ln()) / (ts[2].ln() - ts[0].ln());
    assert!((slope - 2.0).abs() <= 0.2, "slope {slope}, remainders {rs:?}");
}

#[test]
fn block_linearization_is_negative_semidefinite() {
    let fx = fixture(4, 2, Aabb::new([0.0; 3], [0.5; 3]));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let lo: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(0..3) as f64 * 0.5 - 1.0);
        let region = Aabb::new(lo, lo.map(|x| x + 1.0));
        let elems = voxel_box_elements(&fx.mesh, &region);
        let alpha = Alpha::new(rng.random_range(0.0..2e4), rng.random_range(0.0..400.0), rng.random_range(0.0..50.0));
        let d = frechet_block(&fx.snapshots, &elems, alpha).unwrap();
        let ev = d.symmetric_eigenvalues();
        assert!(ev.max() <= 1e-10 * ev.amax());
    }
}

#[test]
fn uniform_load_rescaling_scales_quadratically() {
    let fx = fixture(4, 2, Aabb::new([0.0; 3], [0.5; 3]));
    let fac = factorize(&assemble(&fx.mesh, &fx.background, OMEGA, &BTreeSet::new()).unwrap()).unwrap();
    let scaled = fx.basis.scaled(-3.0);
    let (g0s, _) = ntd_matrix(&fac, &scaled, &fx.background).unwrap();
    assert!((&g0s.g - 9.0 * &fx.g0.g).amax() <= 1e-12 * g0s.g.amax());
}
