//! Galerkin discretization of the time-harmonic Navier equation
//! `-∇·(ℂ ε(u)) - ω² ρ u = 0` with traction data, using trilinear hexahedra.

mod element;
mod ldlt;
mod sparse;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use element::{
    element_matrices, quadrature_operator, ElementMatrices, Mat24, QuadratureOperator, DIV_ROWS, QUAD_ROWS,
    STRAIN_ROWS, VALUE_ROWS,
};
pub use ldlt::{BandLdlt, Inertia, ZERO_PIVOT_RTOL};
pub use sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::materials::MaterialField;
use crate::mesh::{CubeFace, Mesh, PatchSet, LOCAL_FACE_NODES};

pub const DEFAULT_SOLVE_RTOL: f64 = 1e-8;
const MAX_REFINEMENT_STEPS: usize = 3;

/// Global dof numbers of an element, node-major.
pub fn element_dofs(conn: &[usize; 8]) -> [usize; 24] {
    let mut d = [0usize; 24];
    for (a, &node) in conn.iter().enumerate() {
        for c in 0..3 {
            d[3 * a + c] = 3 * node + c;
        }
    }
    d
}

/// Assembles `Σ_e (μ_e K_μ + λ_e K_λ − ω² ρ_e M)` over all elements with
/// nonzero coefficients. Coefficients may have any sign, which lets the same
/// routine assemble parameter perturbations.
pub fn assemble_weighted(mesh: &Mesh, lambda: &[f64], mu: &[f64], rho: &[f64], omega: f64) -> Result<CsrMatrix> {
    let ne = mesh.num_elements();
    for len in [lambda.len(), mu.len(), rho.len()] {
        if len != ne {
            return Err(Error::FieldLength { expected: ne, got: len });
        }
    }
    let em = element_matrices(mesh.h());
    let w2 = omega * omega;
    let mut trip = Vec::with_capacity(ne * 24 * 24);
    for (e, conn) in mesh.elements.iter().enumerate() {
        if lambda[e] == 0.0 && mu[e] == 0.0 && rho[e] == 0.0 {
            continue;
        }
        let local = mu[e] * em.k_mu + lambda[e] * em.k_lambda - (w2 * rho[e]) * em.mass;
        let dofs = element_dofs(conn);
        for i in 0..24 {
            for j in i..24 {
                let v = 0.5 * (local[(i, j)] + local[(j, i)]);
                trip.push((dofs[i], dofs[j], v));
                if i != j {
                    trip.push((dofs[j], dofs[i], v));
                }
            }
        }
    }
    let nd = mesh.num_dofs();
    Ok(CsrMatrix::from_triplets(nd, nd, trip))
}

/// System matrix `S = K(λ, μ) − ω² M(ρ)` with Dirichlet dofs eliminated.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    /// Matrix on the free dofs only.
    pub matrix: CsrMatrix,
    pub omega: f64,
    pub dirichlet_dofs: Vec<usize>,
    pub free_dofs: Vec<usize>,
    pub full_dim: usize,
}

impl SystemMatrix {
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_dim];
        for (&d, &v) in self.free_dofs.iter().zip(reduced) {
            out[d] = v;
        }
        out
    }

    /// `S u` for a full-length vector; constrained entries of the result are zero.
    pub fn apply(&self, full: &[f64]) -> Vec<f64> {
        let x = self.restrict(full);
        let mut y = vec![0.0; x.len()];
        self.matrix.matvec(&x, &mut y);
        self.expand(&y)
    }
}

pub fn dirichlet_dofs(mesh: &Mesh, faces: &BTreeSet<CubeFace>) -> Vec<usize> {
    let mut dofs: Vec<usize> = faces
        .iter()
        .flat_map(|&f| mesh.nodes_on_face(f))
        .flat_map(|node| (0..3).map(move |c| 3 * node + c))
        .collect();
    dofs.sort_unstable();
    dofs.dedup();
    dofs
}

pub fn assemble(mesh: &Mesh, field: &MaterialField, omega: f64, dirichlet: &BTreeSet<CubeFace>) -> Result<SystemMatrix> {
    let full = assemble_weighted(mesh, &field.lambda, &field.mu, &field.rho, omega)?;
    let fixed = dirichlet_dofs(mesh, dirichlet);
    let mut is_fixed = vec![false; mesh.num_dofs()];
    fixed.iter().for_each(|&d| is_fixed[d] = true);
    let free: Vec<usize> = (0..mesh.num_dofs()).filter(|&d| !is_fixed[d]).collect();
    let matrix = if fixed.is_empty() {
        full
    } else {
        full.principal_submatrix(&free)
    };
    Ok(SystemMatrix {
        matrix,
        omega,
        dirichlet_dofs: fixed,
        free_dofs: free,
        full_dim: mesh.num_dofs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LoadDirection {
    Normal,
    T1,
    T2,
}

impl LoadDirection {
    pub const ALL: [LoadDirection; 3] = [LoadDirection::Normal, LoadDirection::T1, LoadDirection::T2];

    pub fn vector(self, face: CubeFace) -> [f64; 3] {
        let fr = face.frame();
        match self {
            LoadDirection::Normal => fr.normal,
            LoadDirection::T1 => fr.t1,
            LoadDirection::T2 => fr.t2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LoadDirection::Normal => "normal",
            LoadDirection::T1 => "t1",
            LoadDirection::T2 => "t2",
        }
    }
}

/// Consistent nodal load of a unit (1 Pa) constant traction on one patch.
pub fn load_vector(mesh: &Mesh, patches: &PatchSet, patch: usize, dir: LoadDirection) -> Result<Vec<f64>> {
    let p = patches.patches.get(patch).ok_or(Error::InvalidPatch(patch))?;
    let g = dir.vector(p.face);
    let h = mesh.h();
    let corner = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let gp = 1.0 / 3f64.sqrt();
    let jac = 0.25 * h * h;
    let mut f = vec![0.0; mesh.num_dofs()];
    for &bf_idx in &p.faces {
        let bf = &mesh.boundary_faces[bf_idx];
        let nodes = LOCAL_FACE_NODES[bf.local_face].map(|l| mesh.elements[bf.element][l]);
        for (s, t) in [(-gp, -gp), (gp, -gp), (gp, gp), (-gp, gp)] {
            for (a, &node) in nodes.iter().enumerate() {
                let phi = 0.25 * (1.0 + corner[a][0] * s) * (1.0 + corner[a][1] * t);
                for c in 0..3 {
                    f[3 * node + c] += jac * phi * g[c];
                }
            }
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceReport {
    pub inertia: Inertia,
    pub near_singular: bool,
    pub pivot_ratio: f64,
}

/// Inertia of `S` from its `L D Lᵀ` pivots.
pub fn resonance_guard(system: &SystemMatrix) -> ResonanceReport {
    report_for(&BandLdlt::factor(&system.matrix))
}

fn report_for(ldlt: &BandLdlt) -> ResonanceReport {
    let pivot_ratio = ldlt.pivot_ratio();
    ResonanceReport {
        inertia: ldlt.inertia(),
        near_singular: ldlt.is_singular() || pivot_ratio < ZERO_PIVOT_RTOL,
        pivot_ratio,
    }
}

/// Factorized system, reusable for any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct Factorization {
    system: SystemMatrix,
    ldlt: BandLdlt,
    report: ResonanceReport,
    pub rtol: f64,
}

#[derive(Debug, Clone)]
pub struct SolutionSet {
    /// One full-length nodal displacement vector per column.
    pub u: DMatrix<f64>,
    /// `‖S u − f‖ / ‖f‖` per column.
    pub residuals: Vec<f64>,
}

pub fn factorize(system: &SystemMatrix) -> Result<Factorization> {
    let ldlt = BandLdlt::factor(&system.matrix);
    let report = report_for(&ldlt);
    if report.near_singular {
        return Err(Error::Resonance {
            omega: system.omega,
            inertia: report.inertia,
        });
    }
    Ok(Factorization {
        system: system.clone(),
        ldlt,
        report,
        rtol: DEFAULT_SOLVE_RTOL,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Factorization {
    pub fn report(&self) -> ResonanceReport {
        self.report
    }

    pub fn system(&self) -> &SystemMatrix {
        &self.system
    }

    /// Solves one full-length right-hand side with iterative refinement.
    pub fn solve_vec(&self, f: &[f64]) -> Result<(Vec<f64>, f64)> {
        let sys = &self.system;
        let b = sys.restrict(f);
        let bn = norm(&b);
        let mut x = b.clone();
        self.ldlt.solve_in_place(&mut x);
        let mut r = vec![0.0; b.len()];
        let mut rel = 0.0;
        for step in 0..=MAX_REFINEMENT_STEPS {
            sys.matrix.matvec(&x, &mut r);
            r.iter_mut().zip(&b).for_each(|(ri, bi)| *ri = bi - *ri);
            rel = if bn > 0.0 { norm(&r) / bn } else { norm(&r) };
            if rel <= self.rtol * 1e-3 || step == MAX_REFINEMENT_STEPS {
                break;
            }
            self.ldlt.solve_in_place(&mut r);
            x.iter_mut().zip(&r).for_each(|(xi, di)| *xi += di);
        }
        if !(rel <= self.rtol) {
            return Err(Error::Residual {
                residual: rel,
                tol: self.rtol,
            });
        }
        Ok((sys.expand(&x), rel))
    }

    /// Solves all columns of `f`. Columns are independent, so they are
    /// distributed over the rayon pool; the output does not depend on it.
    pub fn solve(&self, f: &DMatrix<f64>) -> Result<SolutionSet> {
        if f.nrows() != self.system.full_dim {
            return Err(Error::Dimension(format!(
                "load matrix has {} rows, system has {} dofs",
                f.nrows(),
                self.system.full_dim
            )));
        }
        let cols: Vec<(Vec<f64>, f64)> = (0..f.ncols())
            .into_par_iter()
            .map(|j| self.solve_vec(f.column(j).as_slice()))
            .collect::<Result<_>>()?;
        let mut u = DMatrix::zeros(f.nrows(), f.ncols());
        let mut residuals = Vec::with_capacity(cols.len());
        for (j, (x, r)) in cols.into_iter().enumerate() {
            u.column_mut(j).copy_from_slice(&x);
            residuals.push(r);
        }
        Ok(SolutionSet { u, residuals })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{Lame, TABLE1_BACKGROUND};
    use crate::mesh::{build_cube_mesh, build_patches, voxel_box_elements, Aabb};

    fn mesh(n: usize) -> Mesh {
        build_cube_mesh(Aabb::cube(-1.0, 1.0), n).unwrap()
    }

    fn one_face() -> BTreeSet<CubeFace> {
        [CubeFace::NegZ].into_iter().collect()
    }

    #[test]
    fn assembled_matrix_is_exactly_symmetric() {
        let m = mesh(3);
        let f = MaterialField::homogeneous(&m, TABLE1_BACKGROUND).unwrap();
        let s = assemble(&m, &f, 50.0, &BTreeSet::new()).unwrap();
        assert_eq!(s.matrix.max_asymmetry(), 0.0);
    }

    #[test]
    fn galerkin_consistency() {
        let m = mesh(2);
        let mut f = MaterialField::homogeneous(&m, Lame::new(2.0, 1.5, 0.7)).unwrap();
        f.lambda[3] = 5.0;
        f.mu[6] = 0.25;
        let omega = 1.3;
        let s = assemble(&m, &f, omega, &BTreeSet::new()).unwrap();
        let nd = m.num_dofs();
        let u: Vec<f64> = (0..nd).map(|i| (0.37 * i as f64).sin()).collect();
        let v: Vec<f64> = (0..nd).map(|i| (0.11 * i as f64 + 0.2).cos()).collect();
        let su = s.apply(&v);
        let lhs: f64 = u.iter().zip(&su).map(|(a, b)| a * b).sum();
        let em = element_matrices(m.h());
        let mut rhs = 0.0;
        for (e, conn) in m.elements.iter().enumerate() {
            let d = element_dofs(conn);
            let ue = nalgebra::SVector::<f64, 24>::from_fn(|i, _| u[d[i]]);
            let ve = nalgebra::SVector::<f64, 24>::from_fn(|i, _| v[d[i]]);
            rhs += f.mu[e] * (ue.transpose() * em.k_mu * ve)[0] + f.lambda[e] * (ue.transpose() * em.k_lambda * ve)[0]
                - omega * omega * f.rho[e] * (ue.transpose() * em.mass * ve)[0];
        }
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn locality_of_assembly() {
        let m = mesh(4);
        let a = MaterialField::homogeneous(&m, TABLE1_BACKGROUND).unwrap();
        let mut b = a.clone();
        let region = Aabb::new([0.0; 3], [0.5; 3]);
        let elems = voxel_box_elements(&m, &region);
        let mut touched = vec![false; m.num_dofs()];
        for &e in &elems {
            b.mu[e] *= 3.0;
            element_dofs(&m.elements[e]).iter().for_each(|&d| touched[d] = true);
        }
        let sa = assemble(&m, &a, 50.0, &BTreeSet::new()).unwrap().matrix;
        let sb = assemble(&m, &b, 50.0, &BTreeSet::new()).unwrap().matrix;
        for r in 0..sa.nrows {
            let (cols, vals) = sa.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if v != sb.get(r, c) {
                    assert!(touched[r] && touched[c]);
                }
            }
        }
    }

    #[test]
    fn linear_in_coefficients_when_static() {
        let m = mesh(3);
        let a = MaterialField::homogeneous(&m, TABLE1_BACKGROUND).unwrap();
        let sa = assemble(&m, &a, 0.0, &one_face()).unwrap().matrix;
        let sb = assemble(&m, &a.scaled_stiffness(2.5), 0.0, &one_face()).unwrap().matrix;
        let scale = sb.max_abs();
        for (x, y) in sa.values.iter().zip(&sb.values) {
            assert!((2.5 * x - y).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn clamped_static_is_positive_definite() {
        let m = mesh(4);
        let f = MaterialField::homogeneous(&m, TABLE1_BACKGROUND).unwrap();
        let s = assemble(&m, &f, 0.0, &one_face()).unwrap();
        let r = resonance_guard(&s);
        assert_eq!(r.inertia.negative, 0);
        assert_eq!(r.inertia.zero, 0);
        assert!(!r.near_singular);
        let ev = s.matrix.to_dense().symmetric_eigenvalues();
        assert!(ev.min() > 0.0);
    }

    #[test]
    fn free_static_has_rigid_modes() {
        let m = mesh(2);
        let f = MaterialField::homogeneous(&m, TABLE1_BACKGROUND).unwrap();
        let s = assemble(&m, &f, 0.0, &BTreeSet::new()).unwrap();
        let r = resonance_guard(&s);
        assert!(r.inertia.zero >= 6, "{}", r.inertia);
        assert!(r.near_singular);
        assert!(matches!(factorize(&s), Err(Error::Resonance { .. })));
    }

    #[test]
    fn dynamic_inertia_matches_dense_eigenvalues() {
        let m = mesh(3);
        let f = MaterialField::homogeneous(&m, TABLE1_BACKGROUND).unwrap();
        let s = assemble(&m, &f, 50.0, &BTreeSet::new()).unwrap();
        let r = resonance_guard(&s);
        let ev = s.matrix.to_dense().symmetric_eigenvalues();
        let neg = ev.iter().filter(|&&x| x < 0.0).count();
        assert_eq!(r.inertia.negative, neg);
        assert_eq!(r.inertia.zero, 0);
        assert_eq!(resonance_guard(&s), r);
    }

    #[test]
    fn load_vector_properties() {
        let m = mesh(4);
        let p = build_patches(&m, 2).unwrap();
        let area = (2.0f64 / 2.0).powi(2);
        for (id, patch) in p.patches.iter().enumerate() {
            for dir in LoadDirection::ALL {
                let f = load_vector(&m, &p, id, dir).unwrap();
                let g = dir.vector(patch.face);
                let total: f64 = (0..m.num_nodes()).map(|n| (0..3).map(|c| f[3 * n + c] * g[c]).sum::<f64>()).sum();
                assert!((total - area).abs() < 1e-13);
                let mut closure = vec![false; m.num_nodes()];
                for &bf in &patch.faces {
                    m.face_nodes(&m.boundary_faces[bf]).iter().for_each(|&nd| closure[nd] = true);
                }
                for nd in 0..m.num_nodes() {
                    if !closure[nd] {
                        assert!((0..3).all(|c| f[3 * nd + c] == 0.0));
                    }
                }
            }
        }
        assert!(matches!(load_vector(&m, &p, 24, LoadDirection::Normal), Err(Error::InvalidPatch(24))));
    }

    #[test]
    fn opposite_face_loads_are_mirror_images() {
        let m = mesh(4);
        let p = build_patches(&m, 2).unwrap();
        let n1 = m.n + 1;
        // reflection x -> -x maps node (i, j, k) to (n - i, j, k)
        let mirror = |node: usize| {
            let (i, j, k) = (node % n1, (node / n1) % n1, node / (n1 * n1));
            (n1 - 1 - i) + n1 * (j + n1 * k)
        };
        for local in 0..4 {
            let pos = CubeFace::PosX.index() * 4 + local;
            let neg = CubeFace::NegX.index() * 4 + local;
            let fp = load_vector(&m, &p, pos, LoadDirection::Normal).unwrap();
            let fn_ = load_vector(&m, &p, neg, LoadDirection::Normal).unwrap();
            for node in 0..m.num_nodes() {
                let mn = mirror(node);
                assert_eq!(fp[3 * node], -fn_[3 * mn]);
                assert_eq!(fp[3 * node + 1], fn_[3 * mn + 1]);
                assert_eq!(fp[3 * node + 2], fn_[3 * mn + 2]);
            }
        }
    }

    #[test]
    fn zero_load_gives_zero_displacement() {
        let m = mesh(3);
        let f = MaterialField::homogeneous(&m, TABLE1_BACKGROUND).unwrap();
        let s = assemble(&m, &f, 50.0, &BTreeSet::new()).unwrap();
        let fac = factorize(&s).unwrap();
        let sol = fac.solve(&DMatrix::zeros(m.num_dofs(), 2)).unwrap();
        assert!(sol.u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn clamped_traction_does_positive_work() {
        let m = mesh(4);
        let f = MaterialField::homogeneous(&m, TABLE1_BACKGROUND).unwrap();
        let s = assemble(&m, &f, 0.0, &one_face()).unwrap();
        let fac = factorize(&s).unwrap();
        let p = build_patches(&m, 1).unwrap();
        let load = load_vector(&m, &p, CubeFace::PosZ.index(), LoadDirection::Normal).unwrap();
        let (u, res) = fac.solve_vec(&load).unwrap();
        assert!(res <= 1e-8);
        let work: f64 = u.iter().zip(&load).map(|(a, b)| a * b).sum();
        assert!(work > 0.0);
        for &d in &s.dirichlet_dofs {
            assert_eq!(u[d], 0.0);
        }
    }

    #[test]
    fn patch_test_reproduces_uniaxial_state() {
        // Roller support on -z plus point constraints against rigid motion.
        let m = mesh(3);
        let (lam, mu) = (2.0, 1.0);
        let f = MaterialField::homogeneous(&m, Lame::new(lam, mu, 1.0)).unwrap();
        let full = assemble_weighted(&m, &f.lambda, &f.mu, &f.rho, 0.0).unwrap();
        let mut fixed: Vec<usize> = m.nodes_on_face(CubeFace::NegZ).iter().map(|&nd| 3 * nd + 2).collect();
        let origin = m.nodes.iter().position(|p| p[0] == -1.0 && p[1] == -1.0 && p[2] == -1.0).unwrap();
        let xnode = m.nodes.iter().position(|p| p[0] == 1.0 && p[1] == -1.0 && p[2] == -1.0).unwrap();
        fixed.extend([3 * origin, 3 * origin + 1, 3 * xnode + 1]);
        fixed.sort_unstable();
        let free: Vec<usize> = (0..m.num_dofs()).filter(|d| fixed.binary_search(d).is_err()).collect();
        let sys = SystemMatrix {
            matrix: full.principal_submatrix(&free),
            omega: 0.0,
            dirichlet_dofs: fixed,
            free_dofs: free,
            full_dim: m.num_dofs(),
        };
        let fac = factorize(&sys).unwrap();
        let p = build_patches(&m, 1).unwrap();
        let load = load_vector(&m, &p, CubeFace::PosZ.index(), LoadDirection::Normal).unwrap();
        let (u, _) = fac.solve_vec(&load).unwrap();
        // σ_zz = 1, others zero: ε_zz = (λ+μ)/(μ(3λ+2μ)), ε_xx = ε_yy = -λ/(2μ(3λ+2μ))
        let ezz = (lam + mu) / (mu * (3.0 * lam + 2.0 * mu));
        let exx = -lam / (2.0 * mu * (3.0 * lam + 2.0 * mu));
        for (nd, x) in m.nodes.iter().enumerate() {
            let expect = [exx * (x[0] + 1.0), exx * (x[1] + 1.0), ezz * (x[2] + 1.0)];
            for c in 0..3 {
                assert!((u[3 * nd + c] - expect[c]).abs() < 1e-10, "node {nd} comp {c}");
            }
        }
    }
}
