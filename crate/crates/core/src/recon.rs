//! Linearized monotonicity tests on a grid of test blocks.
//!
//! For a test block `B` and weights `α ≥ 0` the test matrix is
//! `A_B = G₀ + D_B(α) − G`. Blocks inside the inclusion support give few
//! negative eigenvalues, blocks outside give many; the split is made with a
//! count threshold `M̃`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::materials::Alpha;
use crate::mesh::{voxel_box_elements, Aabb, Mesh};
use crate::ntd::{symmetrize, SnapshotFields};

pub const DEFAULT_EIG_RTOL: f64 = 1e-10;

/// `k × k × k` grid of element-aligned test blocks, x fastest.
#[derive(Debug, Clone)]
pub struct TestGrid {
    pub k: usize,
    pub blocks: Vec<Aabb>,
    pub elements: Vec<Vec<usize>>,
}

impl TestGrid {
    pub fn new(mesh: &Mesh, k: usize) -> Result<Self> {
        if k == 0 || mesh.n % k != 0 {
            return Err(Error::GridMismatch { n: mesh.n, k });
        }
        let side = mesh.bounds.extent(0) / k as f64;
        let mut blocks = Vec::with_capacity(k * k * k);
        for c in 0..k * k * k {
            let idx = [c % k, (c / k) % k, c / (k * k)];
            let min = [0, 1, 2].map(|a| mesh.bounds.min[a] + idx[a] as f64 * side);
            let max = [0, 1, 2].map(|a| mesh.bounds.min[a] + (idx[a] + 1) as f64 * side);
            blocks.push(Aabb::new(min, max));
        }
        // Centroid assignment, so each element lands in exactly one block.
        let mut elements = vec![Vec::new(); blocks.len()];
        let w = mesh.n / k;
        for e in 0..mesh.num_elements() {
            let c = mesh.element_coords(e);
            elements[c[0] / w + k * (c[1] / w + k * (c[2] / w))].push(e);
        }
        Ok(Self { k, blocks, elements })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn coords(&self, b: usize) -> [usize; 3] {
        let k = self.k;
        [b % k, (b / k) % k, b / (k * k)]
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.k * (c[1] + self.k * c[2])
    }

    pub fn is_boundary(&self, b: usize) -> bool {
        self.coords(b).iter().any(|&c| c == 0 || c + 1 == self.k)
    }

    /// Face neighbours (6-connectivity).
    pub fn neighbors(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coords(b);
        let k = self.k as isize;
        [(0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)]
            .into_iter()
            .filter_map(move |(axis, step): (usize, isize)| {
                let mut d = c.map(|x| x as isize);
                d[axis] += step;
                (d[axis] >= 0 && d[axis] < k).then(|| self.index(d.map(|x| x as usize)))
            })
    }

    /// Blocks that share at least one element with `region`.
    pub fn blocks_touching(&self, mesh: &Mesh, region: &Aabb) -> Vec<bool> {
        let inside = voxel_box_elements(mesh, region);
        let mut mask = vec![false; self.len()];
        for (b, elems) in self.elements.iter().enumerate() {
            mask[b] = elems.iter().any(|e| inside.binary_search(e).is_ok());
        }
        mask
    }
}

/// Eigenvalue extremes and the negative count of one symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSummary {
    pub negative: usize,
    pub min: f64,
    pub max: f64,
}

/// Number of eigenvalues `σ < −ε_rel · max(|σ_min|, |σ_max|)`, with multiplicity.
pub fn count_negative_eigenvalues(a: &DMatrix<f64>, eps_rel: f64) -> Result<usize> {
    Ok(eigen_summary(a, eps_rel)?.negative)
}

pub fn eigen_summary(a: &DMatrix<f64>, eps_rel: f64) -> Result<EigenSummary> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("matrix is {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if a.is_empty() {
        return Ok(EigenSummary {
            negative: 0,
            min: 0.0,
            max: 0.0,
        });
    }
    let ev = a.symmetric_eigenvalues();
    let (min, max) = (ev.min(), ev.max());
    let cut = -eps_rel * min.abs().max(max.abs());
    Ok(EigenSummary {
        negative: ev.iter().filter(|&&s| s < cut).count(),
        min,
        max,
    })
}

/// Shared inputs of all block tests.
pub struct TestOperators<'a> {
    /// NtD matrix of the measured medium.
    pub g: &'a DMatrix<f64>,
    /// NtD matrix of the background.
    pub g0: &'a DMatrix<f64>,
    pub snapshots: &'a SnapshotFields,
    pub eps_rel: f64,
}

impl<'a> TestOperators<'a> {
    pub fn new(g: &'a DMatrix<f64>, g0: &'a DMatrix<f64>, snapshots: &'a SnapshotFields) -> Result<Self> {
        let n = snapshots.num_loads();
        for (name, m) in [("G", g), ("G0", g0)] {
            if m.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "{name} is {:?}, load basis has {n} columns",
                    m.shape()
                )));
            }
        }
        Ok(Self {
            g,
            g0,
            snapshots,
            eps_rel: DEFAULT_EIG_RTOL,
        })
    }

    /// `G₀ − G`, the block-independent part of every test matrix.
    pub fn residual(&self) -> DMatrix<f64> {
        self.g0 - self.g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOutcome {
    pub count: usize,
    pub inside: bool,
    pub min_eig: f64,
    pub max_eig: f64,
}

/// Single-block test: `N_B` of `G₀ + D_B(α) − G` and the verdict `N_B ≤ M̃`.
pub fn test_block(ops: &TestOperators<'_>, elements: &[usize], alpha: Alpha, threshold: usize) -> Result<BlockOutcome> {
    let fields = ops.snapshots.block_fields(elements);
    let mut a = ops.residual() + fields.frechet(alpha)?;
    symmetrize(&mut a);
    let s = eigen_summary(&a, ops.eps_rel)?;
    Ok(BlockOutcome {
        count: s.negative,
        inside: s.negative <= threshold,
        min_eig: s.min,
        max_eig: s.max,
    })
}

/// How the count threshold `M̃` of a test is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    Fixed(usize),
    /// Use [`threshold_advisor`]; when no significant gap exists no block is
    /// accepted.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigencountReport {
    pub alpha: Alpha,
    /// `None` means no block is accepted.
    pub threshold: Option<usize>,
    pub advice: Option<ThresholdAdvice>,
    pub counts: Vec<usize>,
    pub min_eigs: Vec<f64>,
    pub max_eigs: Vec<f64>,
}

impl EigencountReport {
    pub fn mask(&self) -> Vec<bool> {
        match self.threshold {
            Some(t) => self.mask_at(t),
            None => vec![false; self.counts.len()],
        }
    }

    pub fn mask_at(&self, threshold: usize) -> Vec<bool> {
        self.counts.iter().map(|&c| c <= threshold).collect()
    }

    pub fn with_threshold(mut self, threshold: Threshold) -> Self {
        self.threshold = match threshold {
            Threshold::Fixed(t) => Some(t),
            Threshold::Auto => self.advice.as_ref().and_then(|a| a.suggested),
        };
        self
    }
}

/// Runs several weight choices over every block, sharing the block fields.
/// Blocks run in parallel; results are collected in block order. The
/// returned reports carry no threshold yet.
pub fn run_block_tests(ops: &TestOperators<'_>, grid: &TestGrid, alphas: &[Alpha]) -> Result<Vec<EigencountReport>> {
    for alpha in alphas {
        alpha.check_nonnegative()?;
        if alpha.is_zero() {
            return Err(Error::ZeroAlpha);
        }
    }
    let base = ops.residual();
    let per_block: Vec<Vec<EigenSummary>> = grid
        .elements
        .par_iter()
        .map(|elems| {
            let fields = ops.snapshots.block_fields(elems);
            alphas
                .iter()
                .map(|alpha| {
                    let mut a = &base + fields.frechet(*alpha)?;
                    symmetrize(&mut a);
                    eigen_summary(&a, ops.eps_rel)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(t, &alpha)| {
            let counts: Vec<usize> = per_block.iter().map(|b| b[t].negative).collect();
            EigencountReport {
                alpha,
                threshold: None,
                advice: threshold_advisor(&counts),
                counts,
                min_eigs: per_block.iter().map(|b| b[t].min).collect(),
                max_eigs: per_block.iter().map(|b| b[t].max).collect(),
            }
        })
        .collect())
}

/// Test for the support of the full perturbation.
pub fn reconstruct_d(ops: &TestOperators<'_>, grid: &TestGrid, alpha: Alpha, threshold: Threshold) -> Result<EigencountReport> {
    Ok(run_block_tests(ops, grid, &[alpha])?.remove(0).with_threshold(threshold))
}

/// Test for the support of `μ − μ₀` with `α = (0, α₂, 0)`.
pub fn reconstruct_mu(ops: &TestOperators<'_>, grid: &TestGrid, alpha_mu: f64, threshold: Threshold) -> Result<EigencountReport> {
    if !(alpha_mu > 0.0) {
        return Err(Error::ZeroAlpha);
    }
    reconstruct_d(ops, grid, Alpha::new(0.0, alpha_mu, 0.0), threshold)
}

/// Adds every unmarked region that cannot reach a boundary block through
/// unmarked blocks (face connectivity).
pub fn fill_cavities(mask: &[bool], grid: &TestGrid) -> Vec<bool> {
    let mut reached = vec![false; mask.len()];
    let mut queue: VecDeque<usize> = (0..mask.len()).filter(|&b| !mask[b] && grid.is_boundary(b)).collect();
    queue.iter().for_each(|&b| reached[b] = true);
    while let Some(b) = queue.pop_front() {
        for nb in grid.neighbors(b) {
            if !mask[nb] && !reached[nb] {
                reached[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    (0..mask.len()).map(|b| mask[b] || !reached[b]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Exterior,
    /// Inside the support of `μ − μ₀`.
    D2,
    /// Inside the full support but not in the `μ` support.
    DOnly,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Exterior => "exterior",
            Label::D2 => "D2",
            Label::DOnly => "D_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub labels: Vec<Label>,
    /// Blocks marked by the `μ` test but not by the full test. They keep the
    /// `D2` label and are listed here.
    pub inconsistent: Vec<usize>,
}

impl Classification {
    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

pub fn classify(mask_d: &[bool], mask_d2: &[bool]) -> Classification {
    let mut inconsistent = Vec::new();
    let labels = mask_d
        .iter()
        .zip(mask_d2)
        .enumerate()
        .map(|(b, (&d, &d2))| {
            if d2 {
                if !d {
                    inconsistent.push(b);
                }
                Label::D2
            } else if d {
                Label::DOnly
            } else {
                Label::Exterior
            }
        })
        .collect();
    Classification { labels, inconsistent }
}

/// Minimum ratio between the largest gap and the mean of the other gaps
/// for a split to be suggested.
pub const GAP_SIGNIFICANCE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdAdvice {
    /// Suggested `M̃` (floor of the gap midpoint) when the gap is significant.
    pub suggested: Option<usize>,
    /// Largest count at or below the gap and smallest count above it.
    pub gap: (usize, usize),
    pub lower_cluster: (usize, usize),
    pub upper_cluster: (usize, usize),
    /// Largest gap over the mean of the remaining gaps between distinct counts.
    pub gap_ratio: f64,
}

pub fn threshold_advisor(counts: &[usize]) -> Option<ThresholdAdvice> {
    let mut v: Vec<usize> = counts.to_vec();
    v.sort_unstable();
    v.dedup();
    let (&lo, &hi) = (v.first()?, v.last()?);
    if v.len() < 2 {
        return Some(ThresholdAdvice {
            suggested: None,
            gap: (lo, hi),
            lower_cluster: (lo, hi),
            upper_cluster: (hi, hi),
            gap_ratio: 0.0,
        });
    }
    let gaps: Vec<usize> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let (at, &largest) = gaps.iter().enumerate().max_by_key(|&(i, g)| (*g, std::cmp::Reverse(i))).unwrap();
    let rest: Vec<usize> = gaps.iter().enumerate().filter(|&(i, _)| i != at).map(|(_, &g)| g).collect();
    let baseline = if rest.is_empty() {
        1.0
    } else {
        (rest.iter().sum::<usize>() as f64 / rest.len() as f64).max(1.0)
    };
    let ratio = largest as f64 / baseline;
    let (below, above) = (v[at], v[at + 1]);
    Some(ThresholdAdvice {
        suggested: (ratio >= GAP_SIGNIFICANCE).then_some((below + above) / 2),
        gap: (below, above),
        lower_cluster: (lo, below),
        upper_cluster: (above, hi),
        gap_ratio: ratio,
    })
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub report_d: EigencountReport,
    pub report_d2: EigencountReport,
    pub mask_d: Vec<bool>,
    pub mask_d2: Vec<bool>,
    pub mask_d_filled: Vec<bool>,
    pub mask_d2_filled: Vec<bool>,
    pub classification: Classification,
}

impl ReconstructionResult {
    /// Blocks in the full support but not in the `μ` support.
    pub fn mask_green(&self) -> Vec<bool> {
        self.mask_d_filled
            .iter()
            .zip(&self.mask_d2_filled)
            .map(|(&d, &d2)| d && !d2)
            .collect()
    }
}

/// Both tests, cavity filling and the three-way labelling.
pub fn reconstruct(
    ops: &TestOperators<'_>,
    grid: &TestGrid,
    alpha_d: Alpha,
    threshold_d: Threshold,
    alpha_mu: f64,
    threshold_d2: Threshold,
) -> Result<ReconstructionResult> {
    if !(alpha_mu > 0.0) {
        return Err(Error::ZeroAlpha);
    }
    let mut reports = run_block_tests(ops, grid, &[alpha_d, Alpha::new(0.0, alpha_mu, 0.0)])?;
    let report_d2 = reports.pop().unwrap().with_threshold(threshold_d2);
    let report_d = reports.pop().unwrap().with_threshold(threshold_d);
    Ok(finish(grid, report_d, report_d2))
}

/// Masks, filling and labels from two finished reports.
pub fn finish(grid: &TestGrid, report_d: EigencountReport, report_d2: EigencountReport) -> ReconstructionResult {
    let mask_d = report_d.mask();
    let mask_d2 = report_d2.mask();
    let mask_d_filled = fill_cavities(&mask_d, grid);
    let mask_d2_filled = fill_cavities(&mask_d2, grid);
    let classification = classify(&mask_d_filled, &mask_d2_filled);
    ReconstructionResult {
        report_d,
        report_d2,
        mask_d,
        mask_d2,
        mask_d_filled,
        mask_d2_filled,
        classification,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cube_mesh;

    fn grid(k: usize) -> TestGrid {
        let mesh = build_cube_mesh(Aabb::cube(-1.0, 1.0), k).unwrap();
        TestGrid::new(&mesh, k).unwrap()
    }

    #[test]
    fn grid_layout() {
        let mesh = build_cube_mesh(Aabb::cube(-1.0, 1.0), 12).unwrap();
        let g = TestGrid::new(&mesh, 6).unwrap();
        assert_eq!(g.len(), 216);
        assert!(g.elements.iter().all(|e| e.len() == 8));
        let mut all: Vec<usize> = g.elements.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..mesh.num_elements()).collect::<Vec<_>>());
        assert!(matches!(TestGrid::new(&mesh, 5), Err(Error::GridMismatch { .. })));
        for (b, bx) in g.blocks.iter().enumerate() {
            for &e in &g.elements[b] {
                assert!(bx.contains(mesh.element_centroid(e)));
            }
        }
    }

    #[test]
    fn simple_counts() {
        let m = -DMatrix::<f64>::identity(3, 3);
        assert_eq!(count_negative_eigenvalues(&m, 0.0).unwrap(), 3);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -2.0, -2.0, 0.0]));
        assert_eq!(count_negative_eigenvalues(&d, 1e-10).unwrap(), 2);
        let mut bad = DMatrix::<f64>::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(matches!(count_negative_eigenvalues(&bad, 0.0), Err(Error::NonFinite)));
    }

    #[test]
    fn cavity_filling() {
        let g = grid(5);
        // hollow shell around the centre block
        let centre = g.index([2, 2, 2]);
        let shell: Vec<bool> = (0..g.len())
            .map(|b| {
                let c = g.coords(b);
                b != centre && c.iter().all(|&x| (1..=3).contains(&x))
            })
            .collect();
        let filled = fill_cavities(&shell, &g);
        assert!(filled[centre]);
        assert_eq!(filled.iter().filter(|&&x| x).count(), 27);
        assert_eq!(fill_cavities(&filled, &g), filled);

        let solid: Vec<bool> = (0..g.len()).map(|b| g.coords(b).iter().all(|&x| x >= 2 && x <= 3)).collect();
        assert_eq!(fill_cavities(&solid, &g), solid);
    }

    #[test]
    fn labels() {
        let d = [true, true, false, false];
        let d2 = [true, false, true, false];
        let c = classify(&d, &d2);
        assert_eq!(c.labels, vec![Label::D2, Label::DOnly, Label::D2, Label::Exterior]);
        assert_eq!(c.inconsistent, vec![2]);

        let same = classify(&d, &d);
        assert_eq!(same.count(Label::DOnly), 0);
        assert!(same.inconsistent.is_empty());
    }

    #[test]
    fn advisor() {
        let a = threshold_advisor(&[5, 6, 7, 40, 41]).unwrap();
        assert_eq!(a.suggested, Some(23));
        assert_eq!(a.gap, (7, 40));
        assert_eq!(a.lower_cluster, (5, 7));
        assert_eq!(a.upper_cluster, (40, 41));
        let u = threshold_advisor(&[5, 6, 7, 8, 9, 10]).unwrap();
        assert_eq!(u.suggested, None);
        assert!(threshold_advisor(&[]).is_none());
        assert_eq!(threshold_advisor(&[4, 4, 4]).unwrap().suggested, None);
    }
}
