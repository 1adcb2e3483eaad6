//! Verification suite: numbered property checks at desk scale.
//!
//! `fast` runs the cheap checks (2, 3, 4, 5, 8, 10 and linearity), `full`
//! adds the finite-difference slope, the two desk reconstructions and the
//! timing comparison.

use std::collections::BTreeSet;
use std::fmt;
use std::time::Instant;

use clap::ValueEnum;
use elastomono::fem::{assemble, factorize};
use elastomono::materials::{
    default_alphas, Alpha, Inclusion, MaterialField, DEFAULT_ALPHA_SCALE, TABLE1_BACKGROUND, TABLE1_INCLUSION,
};
use elastomono::mesh::{build_cube_mesh, build_patches, voxel_box_elements, Aabb, CubeFace, Mesh};
use elastomono::ntd::{
    build_load_basis, frechet_block, frechet_matrix, ntd_matrix, LoadBasis, LoadMode, NtdMatrix, Perturbation,
    SnapshotFields,
};
use elastomono::recon::{
    count_negative_eigenvalues, fill_cavities, reconstruct, TestGrid, TestOperators, Threshold,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliResult;
use crate::oracle;
use crate::pipeline::{solve_media, Setup, Solved};
use crate::scenario::{InclusionSpec, Scenario};
use crate::sweep::{restrict_to_mode, sample_blocks, time_blocks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Fast,
    Full,
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    /// Criterion number; 0 for the supplementary linearity check.
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        let id = if self.id == 0 { "-".to_string() } else { self.id.to_string() };
        write!(f, "[{tag}] {id:>2} {:<24} {} ({:.1}s)", self.name, self.detail, self.seconds)
    }
}

pub const OMEGA: f64 = 50.0;

/// The separated-inclusions desk scenario: a `μ` inclusion in the lower
/// corner block and a `λ` inclusion in the upper one, each one test block.
pub fn desk_scenario() -> Scenario {
    let mut s = Scenario::default();
    let third = 1.0 / 3.0;
    s.inclusions = vec![
        InclusionSpec {
            min: [-2.0 * third; 3],
            max: [-third; 3],
            lambda: None,
            mu: Some(TABLE1_INCLUSION.mu),
            rho: None,
        },
        InclusionSpec {
            min: [third; 3],
            max: [2.0 * third; 3],
            lambda: Some(TABLE1_INCLUSION.lambda),
            mu: None,
            rho: None,
        },
    ];
    s
}

fn timed(id: u8, name: &'static str, f: impl FnOnce() -> CliResult<(bool, String)>) -> CheckOutcome {
    let t = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        id,
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// 6³ mesh, `m = 2`, Table 1 background, direction `h₀ = (Δλ, Δμ, 0)·χ_box`.
struct FdCase {
    mesh: Mesh,
    basis: LoadBasis,
    background: MaterialField,
    g0: NtdMatrix,
    snapshots: SnapshotFields,
    h: Perturbation,
}

impl FdCase {
    fn new() -> CliResult<Self> {
        let mesh = build_cube_mesh(Aabb::cube(-1.0, 1.0), 6)?;
        let patches = build_patches(&mesh, 2)?;
        let basis = build_load_basis(&mesh, &patches, LoadMode::All);
        let background = MaterialField::homogeneous(&mesh, TABLE1_BACKGROUND)?;
        let fac = factorize(&assemble(&mesh, &background, OMEGA, &BTreeSet::new())?)?;
        let (g0, sol0) = ntd_matrix(&fac, &basis, &background)?;
        let snapshots = SnapshotFields::new(&mesh, &sol0, OMEGA)?;
        let elems = voxel_box_elements(&mesh, &Aabb::new([0.0; 3], [2.0 / 3.0; 3]));
        let h = Perturbation::indicator(
            mesh.num_elements(),
            &elems,
            [
                TABLE1_INCLUSION.lambda - TABLE1_BACKGROUND.lambda,
                TABLE1_INCLUSION.mu - TABLE1_BACKGROUND.mu,
                0.0,
            ],
        );
        Ok(Self {
            mesh,
            basis,
            background,
            g0,
            snapshots,
            h,
        })
    }

    fn ntd(&self, field: &MaterialField) -> CliResult<NtdMatrix> {
        let fac = factorize(&assemble(&self.mesh, field, OMEGA, &BTreeSet::new())?)?;
        Ok(ntd_matrix(&fac, &self.basis, field)?.0)
    }
}

fn check_fd_slope(case: &FdCase) -> CliResult<(bool, String)> {
    let d = frechet_matrix(&case.snapshots, &case.h)?.d;
    let ts = [1e-1, 1e-2, 1e-3];
    let mut rs = Vec::new();
    for &t in &ts {
        let g = case.ntd(&case.h.scale(t).apply_to(&case.background))?;
        rs.push((&g.g - &case.g0.g - t * &d).norm());
    }
    // least-squares slope of log R against log t
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = num / den;
    Ok((
        (slope - 2.0).abs() <= 0.2,
        format!("slope {slope:.3}, remainders {:.2e} {:.2e} {:.2e}", rs[0], rs[1], rs[2]),
    ))
}

fn check_self_adjoint(case: &FdCase) -> CliResult<(bool, String)> {
    let g = case.ntd(&case.h.apply_to(&case.background))?;
    let d = frechet_matrix(&case.snapshots, &case.h)?;
    let worst = case.g0.asymmetry.max(g.asymmetry).max(d.asymmetry);
    Ok((
        worst <= 1e-8,
        format!(
            "relative asymmetry G0 {:.1e}, G {:.1e}, D {:.1e}",
            case.g0.asymmetry, g.asymmetry, d.asymmetry
        ),
    ))
}

fn check_linearity() -> CliResult<(bool, String)> {
    let mesh = build_cube_mesh(Aabb::cube(-1.0, 1.0), 4)?;
    let patches = build_patches(&mesh, 2)?;
    let basis = build_load_basis(&mesh, &patches, LoadMode::All);
    let background = MaterialField::homogeneous(&mesh, TABLE1_BACKGROUND)?;
    let fac = factorize(&assemble(&mesh, &background, OMEGA, &BTreeSet::new())?)?;
    let (_, sol0) = ntd_matrix(&fac, &basis, &background)?;
    let snap = SnapshotFields::new(&mesh, &sol0, OMEGA)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ne = mesh.num_elements();
    let mut random = || Perturbation {
        lambda: (0..ne).map(|_| rng.random_range(-1e5..1e5)).collect(),
        mu: (0..ne).map(|_| rng.random_range(-1e3..1e3)).collect(),
        rho: (0..ne).map(|_| rng.random_range(-10.0..10.0)).collect(),
    };
    let (h1, h2) = (random(), random());
    let (a, b) = (1.7, -0.6);
    let lhs = frechet_matrix(&snap, &h1.scale(a).add(&h2.scale(b)))?.d;
    let rhs = a * frechet_matrix(&snap, &h1)?.d + b * frechet_matrix(&snap, &h2)?.d;
    let rel = (&lhs - &rhs).amax() / rhs.amax();
    Ok((rel <= 1e-12, format!("D[a h1 + b h2] vs a D[h1] + b D[h2]: {rel:.1e} relative")))
}

fn check_semidefinite(seed: u64) -> CliResult<(bool, String)> {
    let mesh = build_cube_mesh(Aabb::cube(-1.0, 1.0), 6)?;
    let patches = build_patches(&mesh, 2)?;
    let basis = build_load_basis(&mesh, &patches, LoadMode::All);
    let background = MaterialField::homogeneous(&mesh, TABLE1_BACKGROUND)?;
    let fac = factorize(&assemble(&mesh, &background, OMEGA, &BTreeSet::new())?)?;
    let (_, sol0) = ntd_matrix(&fac, &basis, &background)?;
    let snap = SnapshotFields::new(&mesh, &sol0, OMEGA)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let lo: [usize; 3] = [0, 1, 2].map(|_| rng.random_range(0..5));
        let hi: [usize; 3] = [0, 1, 2].map(|a| rng.random_range(lo[a] + 1..=6));
        let elems: Vec<usize> = (0..mesh.num_elements())
            .filter(|&e| {
                let c = mesh.element_coords(e);
                (0..3).all(|a| c[a] >= lo[a] && c[a] < hi[a])
            })
            .collect();
        let alpha = Alpha::new(
            rng.random_range(0.0..4e4),
            rng.random_range(0.0..800.0),
            rng.random_range(0.0..100.0),
        );
        let d = frechet_block(&snap, &elems, alpha)?;
        let ev = d.symmetric_eigenvalues();
        worst = worst.max(ev.max() / ev.amax());
    }
    Ok((worst <= 1e-10, format!("20 random blocks, max eigenvalue / norm {worst:.1e}")))
}

fn check_static_monotonicity(seed: u64) -> CliResult<(bool, String)> {
    let mesh = build_cube_mesh(Aabb::cube(-1.0, 1.0), 4)?;
    let patches = build_patches(&mesh, 2)?;
    let basis = build_load_basis(&mesh, &patches, LoadMode::All);
    let clamp: BTreeSet<CubeFace> = [CubeFace::NegZ].into_iter().collect();
    let background = MaterialField::homogeneous(&mesh, TABLE1_BACKGROUND)?;
    let mut stiff = background.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for e in 0..mesh.num_elements() {
        stiff.lambda[e] *= rng.random_range(1.0..3.0);
        stiff.mu[e] *= rng.random_range(1.0..3.0);
    }
    let g = |f: &MaterialField| -> CliResult<DMatrix<f64>> {
        let fac = factorize(&assemble(&mesh, f, 0.0, &clamp)?)?;
        Ok(ntd_matrix(&fac, &basis, f)?.0.g)
    };
    let diff = g(&background)? - g(&stiff)?;
    let ev = diff.symmetric_eigenvalues();
    let norm = ev.amax();
    let min = ev.min();
    Ok((
        min >= -1e-8 * norm,
        format!("min eigenvalue of G_bg - G_stiff {min:.2e}, norm {norm:.2e}"),
    ))
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let kind = rng.random_range(0..3);
    match kind {
        0 => {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            (&a + a.transpose()) * 0.5
        }
        1 => {
            // indefinite and rank deficient: B Bᵀ − C Cᵀ
            let r1 = rng.random_range(0..=n / 2);
            let r2 = rng.random_range(0..=n / 2);
            let b = DMatrix::from_fn(n, r1, |_, _| rng.random_range(-1.0..1.0));
            let c = DMatrix::from_fn(n, r2, |_, _| rng.random_range(-1.0..1.0));
            &b * b.transpose() - &c * c.transpose()
        }
        _ => {
            // widely spread magnitudes
            let a = DMatrix::from_fn(n, n, |i, j| {
                let s = 10f64.powi(((i + j) % 7) as i32 - 3);
                s * rng.random_range(-1.0..1.0)
            });
            (&a + a.transpose()) * 0.5
        }
    }
}

fn check_eigencount_oracle(seed: u64) -> CliResult<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=30);
        let a = random_symmetric(&mut rng, n);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).iter().copied().collect()).collect();
        if count_negative_eigenvalues(&a, 1e-10)? != oracle::count_negative(&rows, 1e-10) {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches in 200 random matrices")))
}

fn check_constants() -> CliResult<(bool, String)> {
    let mesh = build_cube_mesh(Aabb::cube(-1.0, 1.0), 4)?;
    let inc = Inclusion {
        region: Aabb::new([0.0; 3], [0.5; 3]),
        lambda: Some(TABLE1_INCLUSION.lambda),
        mu: Some(TABLE1_INCLUSION.mu),
        rho: Some(TABLE1_INCLUSION.rho),
    };
    let field = MaterialField::with_inclusions(&mesh, TABLE1_BACKGROUND, &[inc])?;
    let a = default_alphas(&field, DEFAULT_ALPHA_SCALE, OMEGA);
    let ok = (a.lambda - 18760.0).abs() <= 1e-9 * 18760.0 && (a.mu - 375.2).abs() <= 1e-9 * 375.2 && a.rho == 0.0;
    Ok((ok, format!("alpha = ({}, {}, {})", a.lambda, a.mu, a.rho)))
}

fn check_cavity_fill(seed: u64) -> CliResult<(bool, String)> {
    let mesh = build_cube_mesh(Aabb::cube(-1.0, 1.0), 10)?;
    let grid = TestGrid::new(&mesh, 10)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for trial in 0..100 {
        let density = rng.random_range(0.1..0.7);
        let a: Vec<bool> = (0..grid.len()).map(|_| rng.random_bool(density)).collect();
        let b: Vec<bool> = a.iter().map(|&x| x || rng.random_bool(0.1)).collect();
        let fa = fill_cavities(&a, &grid);
        let fb = fill_cavities(&b, &grid);
        let subset = |x: &[bool], y: &[bool]| x.iter().zip(y).all(|(&p, &q)| !p || q);
        if fill_cavities(&fa, &grid) != fa {
            failures.push(format!("idempotence #{trial}"));
        }
        if !subset(&a, &fa) || !subset(&fa, &fb) {
            failures.push(format!("monotonicity #{trial}"));
        }
        if !complement_reaches_boundary(&fa, &grid) {
            failures.push(format!("complement #{trial}"));
        }
    }
    Ok((failures.is_empty(), format!("100 random masks on 10^3, failures: {failures:?}")))
}

/// Every unmarked block reaches a boundary block through unmarked blocks.
fn complement_reaches_boundary(mask: &[bool], grid: &TestGrid) -> bool {
    let mut seen = vec![false; mask.len()];
    let mut stack: Vec<usize> = (0..mask.len()).filter(|&b| !mask[b] && grid.is_boundary(b)).collect();
    stack.iter().for_each(|&b| seen[b] = true);
    while let Some(b) = stack.pop() {
        for nb in grid.neighbors(b) {
            if !mask[nb] && !seen[nb] {
                seen[nb] = true;
                stack.push(nb);
            }
        }
    }
    (0..mask.len()).all(|b| mask[b] || seen[b])
}

/// Desk-scale solves shared by the reconstruction and timing checks.
pub struct Desk {
    pub scenario: Scenario,
    pub setup: Setup,
    pub solved: Solved,
    pub grid: TestGrid,
    /// Blocks containing part of the `μ` and `λ` perturbations.
    pub truth_mu: Vec<bool>,
    pub truth_lambda: Vec<bool>,
}

impl Desk {
    pub fn new() -> CliResult<Self> {
        let scenario = desk_scenario();
        let setup = Setup::new(&scenario)?;
        let solved = solve_media(&setup, scenario.tolerances.solve_rtol)?;
        let grid = TestGrid::new(&setup.mesh, scenario.test.k)?;
        let sup = setup.field.supports();
        let touch = |set: &[usize]| -> Vec<bool> {
            let set: BTreeSet<usize> = set.iter().copied().collect();
            grid.elements.iter().map(|es| es.iter().any(|e| set.contains(e))).collect()
        };
        let truth_mu = touch(&sup.d2);
        let truth_lambda = touch(&sup.d1);
        Ok(Self {
            scenario,
            setup,
            solved,
            grid,
            truth_mu,
            truth_lambda,
        })
    }

    fn truth_d(&self) -> Vec<bool> {
        self.truth_mu.iter().zip(&self.truth_lambda).map(|(&a, &b)| a || b).collect()
    }

    pub fn run(&self, mode: LoadMode) -> CliResult<elastomono::recon::ReconstructionResult> {
        let mo = restrict_to_mode(&self.setup, &self.solved, mode)?;
        let ops = TestOperators::new(&mo.g, &mo.g0, &mo.snapshots)?;
        let w = self.scenario.weights();
        Ok(reconstruct(&ops, &self.grid, w.d, Threshold::Auto, w.mu, Threshold::Auto)?)
    }
}

fn errors(mask: &[bool], truth: &[bool]) -> usize {
    mask.iter().zip(truth).filter(|(a, b)| a != b).count()
}

fn range_of(counts: &[usize], sel: &[bool], want: bool) -> (usize, usize) {
    let v: Vec<usize> = counts.iter().zip(sel).filter(|(_, &s)| s == want).map(|(&c, _)| c).collect();
    (*v.iter().min().unwrap_or(&0), *v.iter().max().unwrap_or(&0))
}

fn check_desk_all(desk: &Desk) -> CliResult<(bool, String)> {
    let r = desk.run(LoadMode::All)?;
    let truth_d = desk.truth_d();
    let (in_lo, in_hi) = range_of(&r.report_d.counts, &truth_d, true);
    let (out_lo, out_hi) = range_of(&r.report_d.counts, &truth_d, false);
    let gap = in_hi < out_lo;
    let mu_ok = r.mask_d2_filled == desk.truth_mu;
    let green_ok = r.mask_green() == desk.truth_lambda;
    let (mu_in, _) = range_of(&r.report_d2.counts, &desk.truth_mu, true);
    let (mu_out, _) = range_of(&r.report_d2.counts, &desk.truth_mu, false);
    Ok((
        gap && mu_ok && green_ok,
        format!(
            "D-test inclusion {in_lo}..{in_hi} vs exterior {out_lo}..{out_hi}, thresholds {:?}/{:?}; mu-test min {mu_in} vs {mu_out}; mu mask exact: {mu_ok}, D minus mu exact: {green_ok}",
            r.report_d.threshold, r.report_d2.threshold
        ),
    ))
}

fn check_desk_modes(desk: &Desk) -> CliResult<(bool, String)> {
    let normal = desk.run(LoadMode::NormalOnly)?;
    let tangential = desk.run(LoadMode::TangentialOnly)?;
    let truth_d = desk.truth_d();
    let mu_ok = normal.mask_d2_filled == desk.truth_mu;
    let e_n = errors(&normal.mask_d_filled, &truth_d);
    let e_t = errors(&tangential.mask_d_filled, &truth_d);
    Ok((
        mu_ok && e_t <= e_n,
        format!("normal_only mu mask exact: {mu_ok}; D-mask errors tangential {e_t} vs normal {e_n}"),
    ))
}

fn check_speedup(desk: &Desk) -> CliResult<(bool, String)> {
    let blocks = sample_blocks(desk.grid.len(), 2);
    let t = time_blocks(
        &desk.setup,
        &desk.solved,
        &desk.grid,
        desk.scenario.weights().d,
        &blocks,
        desk.scenario.tolerances.eig_rtol,
        desk.scenario.tolerances.solve_rtol,
    )?;
    let lin: f64 = t.iter().map(|b| b.linearized_s).sum::<f64>() / t.len() as f64;
    let full: f64 = t.iter().map(|b| b.full_s).sum::<f64>() / t.len() as f64;
    Ok((
        lin < full,
        format!("per block: linearized {lin:.3}s, full re-solve {full:.3}s, ratio {:.1}", full / lin),
    ))
}

/// Runs the suite; `seed` drives every random input.
pub fn run(level: Level, seed: u64, mut on_result: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let mut push = |c: CheckOutcome| {
        on_result(&c);
        out.push(c);
    };
    let fd = FdCase::new();
    let fd_err = |e: &crate::error::CliError| Err(crate::error::CliError::Format(format!("setup failed: {e}")));
    if level == Level::Full {
        push(timed(1, "frechet_fd_slope", || match &fd {
            Ok(c) => check_fd_slope(c),
            Err(e) => fd_err(e),
        }));
    }
    push(timed(2, "self_adjointness", || match &fd {
        Ok(c) => check_self_adjoint(c),
        Err(e) => fd_err(e),
    }));
    push(timed(0, "frechet_linearity", check_linearity));
    push(timed(3, "linearization_semidefinite", || check_semidefinite(seed)));
    push(timed(4, "static_monotonicity", || check_static_monotonicity(seed)));
    push(timed(5, "eigencount_oracle", || check_eigencount_oracle(seed)));
    if level == Level::Full {
        let t = Instant::now();
        let desk = Desk::new();
        let setup_s = t.elapsed().as_secs_f64();
        let with_desk = |id, name, f: fn(&Desk) -> CliResult<(bool, String)>| {
            let mut c = timed(id, name, || match &desk {
                Ok(d) => f(d),
                Err(e) => fd_err(e),
            });
            if id == 6 {
                c.seconds += setup_s;
            }
            c
        };
        push(with_desk(6, "desk_reconstruction", check_desk_all));
        push(with_desk(7, "desk_load_modes", check_desk_modes));
        push(timed(8, "default_alpha_constants", check_constants));
        push(with_desk(9, "linearized_speedup", check_speedup));
    } else {
        push(timed(8, "default_alpha_constants", check_constants));
    }
    push(timed(10, "cavity_fill_properties", || check_cavity_fill(seed)));
    out.sort_by_key(|c| if c.id == 0 { u8::MAX } else { c.id });
    out
}
