#![allow(dead_code)]

use std::collections::BTreeSet;

use elastomono::fem::{assemble, factorize, SolutionSet};
use elastomono::materials::{Inclusion, MaterialField, TABLE1_BACKGROUND, TABLE1_INCLUSION};
use elastomono::mesh::{build_cube_mesh, build_patches, Aabb, Mesh, PatchSet};
use elastomono::ntd::{build_load_basis, ntd_matrix, LoadBasis, LoadMode, NtdMatrix, SnapshotFields};

pub struct Fixture {
    pub mesh: Mesh,
    pub patches: PatchSet,
    pub basis: LoadBasis,
    pub background: MaterialField,
    pub field: MaterialField,
    pub g0: NtdMatrix,
    pub g: NtdMatrix,
    pub sol0: SolutionSet,
    pub snapshots: SnapshotFields,
}

pub const OMEGA: f64 = 50.0;

/// Table 1 media on a small mesh with one stiff inclusion box.
pub fn fixture(n: usize, m: usize, region: Aabb) -> Fixture {
    let mesh = build_cube_mesh(Aabb::cube(-1.0, 1.0), n).unwrap();
    let patches = build_patches(&mesh, m).unwrap();
    let basis = build_load_basis(&mesh, &patches, LoadMode::All);
    let background = MaterialField::homogeneous(&mesh, TABLE1_BACKGROUND).unwrap();
    let inc = Inclusion {
        region,
        lambda: Some(TABLE1_INCLUSION.lambda),
        mu: Some(TABLE1_INCLUSION.mu),
        rho: None,
    };
    let field = MaterialField::with_inclusions(&mesh, TABLE1_BACKGROUND, &[inc]).unwrap();
    let none = BTreeSet::new();
    let f0 = factorize(&assemble(&mesh, &background, OMEGA, &none).unwrap()).unwrap();
    let f1 = factorize(&assemble(&mesh, &field, OMEGA, &none).unwrap()).unwrap();
    let (g0, sol0) = ntd_matrix(&f0, &basis, &background).unwrap();
    let (g, _) = ntd_matrix(&f1, &basis, &field).unwrap();
    let snapshots = SnapshotFields::new(&mesh, &sol0, OMEGA).unwrap();
    Fixture {
        mesh,
        patches,
        basis,
        background,
        field,
        g0,
        g,
        sol0,
        snapshots,
    }
}

/// Cyclic Jacobi rotations; slow but independent of any library eigensolver.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let total: f64 = m.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}
