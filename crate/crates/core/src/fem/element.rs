//! Trilinear hexahedral element with 2×2×2 Gauss quadrature.

use nalgebra::{DMatrix, SMatrix};

use crate::mesh::LOCAL_NODES;

pub type Mat24 = SMatrix<f64, 24, 24>;

const GAUSS: f64 = 0.577_350_269_189_625_8;

/// Rows of [`QuadratureOperator`]: 6 strain rows per point.
pub const STRAIN_ROWS: usize = 48;
/// 1 divergence row per point.
pub const DIV_ROWS: usize = 8;
/// 3 displacement rows per point.
pub const VALUE_ROWS: usize = 24;
pub const QUAD_ROWS: usize = STRAIN_ROWS + DIV_ROWS + VALUE_ROWS;

pub(crate) fn gauss_points() -> [[f64; 3]; 8] {
    let mut out = [[0.0; 3]; 8];
    for (q, p) in out.iter_mut().enumerate() {
        *p = [
            if q & 1 == 0 { -GAUSS } else { GAUSS },
            if q & 2 == 0 { -GAUSS } else { GAUSS },
            if q & 4 == 0 { -GAUSS } else { GAUSS },
        ];
    }
    out
}

pub(crate) fn shape(xi: [f64; 3]) -> [f64; 8] {
    LOCAL_NODES.map(|r| 0.125 * (1.0 + r[0] * xi[0]) * (1.0 + r[1] * xi[1]) * (1.0 + r[2] * xi[2]))
}

/// Physical gradients of the 8 shape functions for an element of edge `h`.
pub(crate) fn shape_gradients(xi: [f64; 3], h: f64) -> [[f64; 3]; 8] {
    let s = 2.0 / h;
    LOCAL_NODES.map(|r| {
        let f = [1.0 + r[0] * xi[0], 1.0 + r[1] * xi[1], 1.0 + r[2] * xi[2]];
        [
            0.125 * r[0] * f[1] * f[2] * s,
            0.125 * f[0] * r[1] * f[2] * s,
            0.125 * f[0] * f[1] * r[2] * s,
        ]
    })
}

/// Unit-coefficient element matrices for a cube of edge `h`:
/// `k_mu` integrates `2 ε(u):ε(v)`, `k_lambda` integrates `div u · div v`,
/// `mass` integrates `u·v`.
#[derive(Debug, Clone)]
pub struct ElementMatrices {
    pub h: f64,
    pub k_mu: Mat24,
    pub k_lambda: Mat24,
    pub mass: Mat24,
}

pub fn element_matrices(h: f64) -> ElementMatrices {
    assert!(h > 0.0, "element edge must be positive");
    let w = (0.5 * h).powi(3);
    let mut k_mu = Mat24::zeros();
    let mut k_lambda = Mat24::zeros();
    let mut mass = Mat24::zeros();
    // Voigt order xx, yy, zz, xy, yz, xz with engineering shear strains.
    let d_mu = [2.0, 2.0, 2.0, 1.0, 1.0, 1.0];
    for xi in gauss_points() {
        let g = shape_gradients(xi, h);
        let n = shape(xi);
        let mut b = SMatrix::<f64, 6, 24>::zeros();
        for a in 0..8 {
            let [dx, dy, dz] = g[a];
            let c = 3 * a;
            b[(0, c)] = dx;
            b[(1, c + 1)] = dy;
            b[(2, c + 2)] = dz;
            b[(3, c)] = dy;
            b[(3, c + 1)] = dx;
            b[(4, c + 1)] = dz;
            b[(4, c + 2)] = dy;
            b[(5, c)] = dz;
            b[(5, c + 2)] = dx;
        }
        let mut db = b;
        for r in 0..6 {
            for c in 0..24 {
                db[(r, c)] *= d_mu[r];
            }
        }
        k_mu += w * b.transpose() * db;
        let mut div = SMatrix::<f64, 1, 24>::zeros();
        for c in 0..24 {
            div[c] = b[(0, c)] + b[(1, c)] + b[(2, c)];
        }
        k_lambda += w * div.transpose() * div;
        let mut nm = SMatrix::<f64, 3, 24>::zeros();
        for a in 0..8 {
            for comp in 0..3 {
                nm[(comp, 3 * a + comp)] = n[a];
            }
        }
        mass += w * nm.transpose() * nm;
    }
    ElementMatrices {
        h,
        k_mu,
        k_lambda,
        mass,
    }
}

/// Linear map from the 24 nodal displacements of an element to weighted
/// quadrature-point fields, arranged so that the Gram matrices of its row
/// groups reproduce the element integrals:
/// strain rows give `∫ 2 ε:ε`, divergence rows `∫ (div)²`, value rows `∫ |u|²`.
#[derive(Debug, Clone)]
pub struct QuadratureOperator {
    pub h: f64,
    pub rows: DMatrix<f64>,
}

/// Weighted fields at one point for a local displacement vector.
fn point_fields(u: &[f64; 24], xi: [f64; 3], h: f64, out: &mut [f64; 10]) {
    let g = shape_gradients(xi, h);
    let n = shape(xi);
    let mut grad = [[0.0; 3]; 3];
    let mut val = [0.0; 3];
    for a in 0..8 {
        for i in 0..3 {
            let ua = u[3 * a + i];
            val[i] += n[a] * ua;
            for j in 0..3 {
                grad[i][j] += ua * g[a][j];
            }
        }
    }
    let eps = |i: usize, j: usize| 0.5 * (grad[i][j] + grad[j][i]);
    let w = (0.5 * h).powi(3);
    let s2 = (2.0 * w).sqrt();
    let s1 = w.sqrt();
    // 2 ε:ε = 2 Σ ε_ii² + 4 Σ_{i<j} ε_ij²
    out[0] = s2 * eps(0, 0);
    out[1] = s2 * eps(1, 1);
    out[2] = s2 * eps(2, 2);
    out[3] = 2.0 * s1 * eps(0, 1);
    out[4] = 2.0 * s1 * eps(1, 2);
    out[5] = 2.0 * s1 * eps(0, 2);
    out[6] = s1 * (grad[0][0] + grad[1][1] + grad[2][2]);
    out[7] = s1 * val[0];
    out[8] = s1 * val[1];
    out[9] = s1 * val[2];
}

pub fn quadrature_operator(h: f64) -> QuadratureOperator {
    let pts = gauss_points();
    let mut rows = DMatrix::zeros(QUAD_ROWS, 24);
    let mut fields = [0.0; 10];
    for col in 0..24 {
        let mut u = [0.0; 24];
        u[col] = 1.0;
        for (q, xi) in pts.iter().enumerate() {
            point_fields(&u, *xi, h, &mut fields);
            for r in 0..6 {
                rows[(6 * q + r, col)] = fields[r];
            }
            rows[(STRAIN_ROWS + q, col)] = fields[6];
            for r in 0..3 {
                rows[(STRAIN_ROWS + DIV_ROWS + 3 * q + r, col)] = fields[7 + r];
            }
        }
    }
    QuadratureOperator { h, rows }
}
