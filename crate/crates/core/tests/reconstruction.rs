mod common;

use std::collections::BTreeSet;

use common::{fixture, OMEGA};
use elastomono::fem::{assemble, factorize};
use elastomono::materials::{default_alphas, Alpha, DEFAULT_ALPHA_SCALE};
use elastomono::mesh::Aabb;
use elastomono::ntd::{ntd_matrix, SnapshotFields};
use elastomono::recon::{
    count_negative_eigenvalues, reconstruct, reconstruct_mu, run_block_tests, test_block, TestGrid, TestOperators,
    Threshold,
};
use elastomono::Error;

fn inclusion() -> Aabb {
    Aabb::new([0.0; 3], [0.5; 3])
}

#[test]
fn no_inclusion_means_pure_linearization() {
    let fx = fixture(4, 2, inclusion());
    let grid = TestGrid::new(&fx.mesh, 2).unwrap();
    let ops = TestOperators::new(&fx.g0.g, &fx.g0.g, &fx.snapshots).unwrap();
    let alpha = Alpha::new(18760.0, 0.0, 0.0);
    for elems in &grid.elements {
        let out = test_block(&ops, elems, alpha, 0).unwrap();
        let d = elastomono::ntd::frechet_block(&fx.snapshots, elems, alpha).unwrap();
        assert_eq!(out.count, count_negative_eigenvalues(&d, ops.eps_rel).unwrap());
        assert!(out.count > 0);
        assert!(!out.inside);
    }
    let reps = run_block_tests(&ops, &grid, &[alpha]).unwrap();
    let r = reps[0].clone().with_threshold(Threshold::Fixed(reps[0].counts.iter().min().unwrap() - 1));
    assert!(r.mask().iter().all(|&m| !m));
}

#[test]
fn zero_weights_make_blocks_indistinguishable() {
    let fx = fixture(4, 2, inclusion());
    let grid = TestGrid::new(&fx.mesh, 2).unwrap();
    let ops = TestOperators::new(&fx.g.g, &fx.g0.g, &fx.snapshots).unwrap();
    let counts: Vec<usize> = grid
        .elements
        .iter()
        .map(|e| test_block(&ops, e, Alpha::ZERO, 10).unwrap().count)
        .collect();
    assert!(counts.windows(2).all(|w| w[0] == w[1]));
    assert!(matches!(run_block_tests(&ops, &grid, &[Alpha::ZERO]), Err(Error::ZeroAlpha)));
    assert!(matches!(reconstruct_mu(&ops, &grid, 0.0, Threshold::Auto), Err(Error::ZeroAlpha)));
}

#[test]
fn masks_grow_with_threshold_and_counts_grow_with_alpha() {
    let fx = fixture(4, 2, inclusion());
    let grid = TestGrid::new(&fx.mesh, 4).unwrap();
    let ops = TestOperators::new(&fx.g.g, &fx.g0.g, &fx.snapshots).unwrap();
    let alpha = default_alphas(&fx.field, DEFAULT_ALPHA_SCALE, OMEGA);
    let reps = run_block_tests(&ops, &grid, &[alpha.scale(0.5), alpha, alpha.scale(2.0)]).unwrap();
    for w in reps.windows(2) {
        for b in 0..grid.len() {
            assert!(w[1].counts[b] >= w[0].counts[b], "block {b}");
        }
    }
    let max = *reps[1].counts.iter().max().unwrap();
    let mut prev = vec![false; grid.len()];
    for t in 0..=max {
        let m = reps[1].mask_at(t);
        assert!(prev.iter().zip(&m).all(|(&a, &b)| !a || b));
        prev = m;
    }
}

#[test]
fn classification_is_invariant_under_load_rescaling() {
    let fx = fixture(4, 2, inclusion());
    let grid = TestGrid::new(&fx.mesh, 4).unwrap();
    let alpha = default_alphas(&fx.field, DEFAULT_ALPHA_SCALE, OMEGA);
    let ops = TestOperators::new(&fx.g.g, &fx.g0.g, &fx.snapshots).unwrap();
    let base = reconstruct(&ops, &grid, Alpha::new(alpha.lambda, 0.0, 0.0), Threshold::Fixed(20), alpha.mu, Threshold::Fixed(20)).unwrap();

    let scaled = fx.basis.scaled(7.5);
    let none = BTreeSet::new();
    let f0 = factorize(&assemble(&fx.mesh, &fx.background, OMEGA, &none).unwrap()).unwrap();
    let f1 = factorize(&assemble(&fx.mesh, &fx.field, OMEGA, &none).unwrap()).unwrap();
    let (g0, sol0) = ntd_matrix(&f0, &scaled, &fx.background).unwrap();
    let (g, _) = ntd_matrix(&f1, &scaled, &fx.field).unwrap();
    let snap = SnapshotFields::new(&fx.mesh, &sol0, OMEGA).unwrap();
    let ops = TestOperators::new(&g.g, &g0.g, &snap).unwrap();
    let other = reconstruct(&ops, &grid, Alpha::new(alpha.lambda, 0.0, 0.0), Threshold::Fixed(20), alpha.mu, Threshold::Fixed(20)).unwrap();
    assert_eq!(base.report_d.counts, other.report_d.counts);
    assert_eq!(base.report_d2.counts, other.report_d2.counts);
    assert_eq!(base.classification, other.classification);
}

#[test]
fn mismatched_operators_are_rejected() {
    let fx = fixture(4, 2, inclusion());
    let small = nalgebra::DMatrix::<f64>::zeros(3, 3);
    assert!(matches!(TestOperators::new(&small, &fx.g0.g, &fx.snapshots), Err(Error::Dimension(_))));
}
