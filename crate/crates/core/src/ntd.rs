//! Galerkin Neumann-to-Dirichlet matrices and their linearization.
//!
//! For a basis of patch tractions `f_1 … f_N` the NtD matrix is
//! `G_ij = f_iᵀ S⁻¹ f_j`. Differentiating with respect to the material gives
//! `D[h]_ij = −u_iᵀ (K(h_λ, h_μ) − ω² M(h_ρ)) u_j` with `u_i = S⁻¹ f_i` the
//! background solutions, which is evaluated here from quadrature-point
//! fields of the stored solutions without any further solve.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_weighted, element_dofs, load_vector, quadrature_operator, Factorization, LoadDirection,
    QuadratureOperator, SolutionSet, DIV_ROWS, QUAD_ROWS, STRAIN_ROWS, VALUE_ROWS,
};
use crate::materials::{Alpha, MaterialField};
use crate::mesh::{Mesh, PatchSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadMode {
    All,
    NormalOnly,
    TangentialOnly,
}

impl LoadMode {
    pub const ALL: [LoadMode; 3] = [LoadMode::All, LoadMode::NormalOnly, LoadMode::TangentialOnly];

    pub fn directions(self) -> &'static [LoadDirection] {
        match self {
            LoadMode::All => &LoadDirection::ALL,
            LoadMode::NormalOnly => &[LoadDirection::Normal],
            LoadMode::TangentialOnly => &[LoadDirection::T1, LoadDirection::T2],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LoadMode::All => "all",
            LoadMode::NormalOnly => "normal_only",
            LoadMode::TangentialOnly => "tangential_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for LoadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct LoadBasis {
    pub mode: LoadMode,
    /// `(patch id, direction)` per column, patch-major.
    pub loads: Vec<(usize, LoadDirection)>,
    /// Full-length load vectors, one per column.
    pub f: DMatrix<f64>,
}

impl LoadBasis {
    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            mode: self.mode,
            loads: self.loads.clone(),
            f: &self.f * c,
        }
    }
}

pub fn build_load_basis(mesh: &Mesh, patches: &PatchSet, mode: LoadMode) -> LoadBasis {
    let loads: Vec<(usize, LoadDirection)> = (0..patches.len())
        .flat_map(|p| mode.directions().iter().map(move |&d| (p, d)))
        .collect();
    let mut f = DMatrix::zeros(mesh.num_dofs(), loads.len());
    for (j, &(p, d)) in loads.iter().enumerate() {
        let col = load_vector(mesh, patches, p, d).expect("patch ids come from the patch set");
        f.column_mut(j).copy_from_slice(&col);
    }
    LoadBasis { mode, loads, f }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub field_fingerprint: u64,
    pub omega: f64,
    pub mode: LoadMode,
}

#[derive(Debug, Clone)]
pub struct NtdMatrix {
    pub g: DMatrix<f64>,
    /// `max|G − Gᵀ| / max|G|` before symmetrization.
    pub asymmetry: f64,
    pub provenance: Provenance,
}

impl NtdMatrix {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

/// Relative asymmetry `max|A − Aᵀ| / max|A|` (zero for the zero matrix).
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..j {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// `A ← (A + Aᵀ)/2`, exactly symmetric afterwards.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// `G = Fᵀ U`, symmetrized.
pub fn ntd_from_solutions(basis: &LoadBasis, solutions: &SolutionSet, provenance: Provenance) -> Result<NtdMatrix> {
    if solutions.u.shape() != basis.f.shape() {
        return Err(Error::Dimension(format!(
            "solutions {:?} do not match load basis {:?}",
            solutions.u.shape(),
            basis.f.shape()
        )));
    }
    let mut g = basis.f.tr_mul(&solutions.u);
    let asymmetry = relative_asymmetry(&g);
    symmetrize(&mut g);
    Ok(NtdMatrix {
        g,
        asymmetry,
        provenance,
    })
}

/// Solves all loads against `factorization` and forms the NtD matrix.
pub fn ntd_matrix(
    factorization: &Factorization,
    basis: &LoadBasis,
    field: &MaterialField,
) -> Result<(NtdMatrix, SolutionSet)> {
    let sol = factorization.solve(&basis.f)?;
    let prov = Provenance {
        field_fingerprint: field.fingerprint(),
        omega: factorization.system().omega,
        mode: basis.mode,
    };
    Ok((ntd_from_solutions(basis, &sol, prov)?, sol))
}

/// Per-element parameter perturbation `(h_λ, h_μ, h_ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Perturbation {
    pub fn zeros(num_elements: usize) -> Self {
        Self {
            lambda: vec![0.0; num_elements],
            mu: vec![0.0; num_elements],
            rho: vec![0.0; num_elements],
        }
    }

    /// `(a_λ, a_μ, a_ρ) · χ_elements`.
    pub fn indicator(num_elements: usize, elements: &[usize], weights: [f64; 3]) -> Self {
        let mut p = Self::zeros(num_elements);
        for &e in elements {
            p.lambda[e] = weights[0];
            p.mu[e] = weights[1];
            p.rho[e] = weights[2];
        }
        p
    }

    /// `field − background` element by element.
    pub fn contrast(field: &MaterialField) -> Self {
        let b = field.background;
        Self {
            lambda: field.lambda.iter().map(|v| v - b.lambda).collect(),
            mu: field.mu.iter().map(|v| v - b.mu).collect(),
            rho: field.rho.iter().map(|v| v - b.rho).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let z = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Self {
            lambda: z(&self.lambda, &other.lambda),
            mu: z(&self.mu, &other.mu),
            rho: z(&self.rho, &other.rho),
        }
    }

    pub fn scale(&self, t: f64) -> Self {
        let s = |a: &[f64]| a.iter().map(|x| t * x).collect();
        Self {
            lambda: s(&self.lambda),
            mu: s(&self.mu),
            rho: s(&self.rho),
        }
    }

    /// `field + self`, keeping the background of `field`.
    pub fn apply_to(&self, field: &MaterialField) -> MaterialField {
        let mut out = field.clone();
        let add = |dst: &mut Vec<f64>, d: &[f64]| dst.iter_mut().zip(d).for_each(|(x, y)| *x += y);
        add(&mut out.lambda, &self.lambda);
        add(&mut out.mu, &self.mu);
        add(&mut out.rho, &self.rho);
        out
    }

    fn is_active(&self, e: usize) -> bool {
        self.lambda[e] != 0.0 || self.mu[e] != 0.0 || self.rho[e] != 0.0
    }
}

/// Background solutions plus what is needed to evaluate strain, divergence
/// and displacement at every quadrature point of any element on demand.
#[derive(Debug, Clone)]
pub struct SnapshotFields {
    pub u0: DMatrix<f64>,
    pub omega: f64,
    elements: Vec<[usize; 8]>,
    op: QuadratureOperator,
}

impl SnapshotFields {
    pub fn new(mesh: &Mesh, background: &SolutionSet, omega: f64) -> Result<Self> {
        if background.u.nrows() != mesh.num_dofs() {
            return Err(Error::Dimension(format!(
                "solutions have {} rows, mesh has {} dofs",
                background.u.nrows(),
                mesh.num_dofs()
            )));
        }
        Ok(Self {
            u0: background.u.clone(),
            omega,
            elements: mesh.elements.clone(),
            op: quadrature_operator(mesh.h()),
        })
    }

    pub fn num_loads(&self) -> usize {
        self.u0.ncols()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Weighted quadrature-point fields of element `e`, `QUAD_ROWS × N`.
    pub fn element_fields(&self, e: usize) -> DMatrix<f64> {
        let dofs = element_dofs(&self.elements[e]);
        let nl = self.num_loads();
        let local = DMatrix::from_fn(24, nl, |r, c| self.u0[(dofs[r], c)]);
        &self.op.rows * local
    }

    /// Stacked fields of a set of elements.
    pub fn block_fields(&self, elements: &[usize]) -> BlockFields {
        let nl = self.num_loads();
        let mut strain = DMatrix::zeros(STRAIN_ROWS * elements.len(), nl);
        let mut div = DMatrix::zeros(DIV_ROWS * elements.len(), nl);
        let mut value = DMatrix::zeros(VALUE_ROWS * elements.len(), nl);
        for (i, &e) in elements.iter().enumerate() {
            let x = self.element_fields(e);
            strain.rows_mut(i * STRAIN_ROWS, STRAIN_ROWS).copy_from(&x.rows(0, STRAIN_ROWS));
            div.rows_mut(i * DIV_ROWS, DIV_ROWS).copy_from(&x.rows(STRAIN_ROWS, DIV_ROWS));
            value
                .rows_mut(i * VALUE_ROWS, VALUE_ROWS)
                .copy_from(&x.rows(STRAIN_ROWS + DIV_ROWS, VALUE_ROWS));
        }
        BlockFields {
            strain,
            div,
            value,
            omega: self.omega,
        }
    }
}

/// Quadrature-point fields of all background solutions on one test block.
#[derive(Debug, Clone)]
pub struct BlockFields {
    strain: DMatrix<f64>,
    div: DMatrix<f64>,
    value: DMatrix<f64>,
    omega: f64,
}

impl BlockFields {
    /// Linearized NtD matrix for `(h_λ, h_μ, h_ρ) = (α₁, α₂, −α₃)·χ_B`:
    /// `−(α₂ Sᵀ S + α₁ Dᵀ D + ω² α₃ Vᵀ V)`, negative semidefinite.
    pub fn frechet(&self, alpha: Alpha) -> Result<DMatrix<f64>> {
        alpha.check_nonnegative()?;
        let nl = self.strain.ncols();
        let mut d = DMatrix::zeros(nl, nl);
        let terms = [
            (alpha.mu, &self.strain),
            (alpha.lambda, &self.div),
            (self.omega * self.omega * alpha.rho, &self.value),
        ];
        for (w, x) in terms {
            if w > 0.0 && x.nrows() > 0 {
                d.gemm_tr(-w, x, x, 1.0);
            }
        }
        symmetrize(&mut d);
        Ok(d)
    }
}

/// Linearized NtD matrix for a block with nonnegative weights.
pub fn frechet_block(snapshots: &SnapshotFields, elements: &[usize], alpha: Alpha) -> Result<DMatrix<f64>> {
    alpha.check_nonnegative()?;
    snapshots.block_fields(elements).frechet(alpha)
}

#[derive(Debug, Clone)]
pub struct FrechetMatrix {
    pub d: DMatrix<f64>,
    /// Relative asymmetry before symmetrization.
    pub asymmetry: f64,
}

/// Linearized NtD matrix in a general direction `h` (any signs),
/// accumulated element by element from quadrature-point fields.
pub fn frechet_matrix(snapshots: &SnapshotFields, h: &Perturbation) -> Result<FrechetMatrix> {
    if h.len() != snapshots.num_elements() {
        return Err(Error::FieldLength {
            expected: snapshots.num_elements(),
            got: h.len(),
        });
    }
    let nl = snapshots.num_loads();
    let w2 = snapshots.omega * snapshots.omega;
    let mut d = DMatrix::zeros(nl, nl);
    for e in (0..h.len()).filter(|&e| h.is_active(e)) {
        let x = snapshots.element_fields(e);
        let mut z = x.clone();
        for r in 0..QUAD_ROWS {
            let w = if r < STRAIN_ROWS {
                h.mu[e]
            } else if r < STRAIN_ROWS + DIV_ROWS {
                h.lambda[e]
            } else {
                -w2 * h.rho[e]
            };
            z.row_mut(r).scale_mut(w);
        }
        d.gemm_tr(-1.0, &x, &z, 1.0);
    }
    let asymmetry = relative_asymmetry(&d);
    symmetrize(&mut d);
    Ok(FrechetMatrix { d, asymmetry })
}

/// The same matrix as [`frechet_matrix`], through global assembly:
/// `−U₀ᵀ (K(h_λ, h_μ) − ω² M(h_ρ)) U₀`.
pub fn frechet_matrix_assembled(mesh: &Mesh, u0: &DMatrix<f64>, h: &Perturbation, omega: f64) -> Result<DMatrix<f64>> {
    let k = assemble_weighted(mesh, &h.lambda, &h.mu, &h.rho, omega)?;
    let ku = k.mul_dense(u0);
    Ok(-(u0.tr_mul(&ku)))
}
