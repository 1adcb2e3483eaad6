//! forward → ntd → reconstruct, in memory and through artifact files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use elastomono::fem::{assemble, factorize, Factorization, ResonanceReport, SolutionSet};
use elastomono::materials::{Alpha, MaterialField};
use elastomono::mesh::{build_cube_mesh, build_patches, CubeFace, Mesh, PatchSet};
use elastomono::ntd::{build_load_basis, ntd_from_solutions, LoadBasis, NtdMatrix, Provenance, SnapshotFields};
use elastomono::recon::{
    finish, run_block_tests, EigencountReport, Label, ReconstructionResult, TestGrid, TestOperators, Threshold,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::matrix_file::{hex, provenance_hash, Hash, MatrixFile};
use crate::result_file::{write_vtk, ResultFile, TestSummary, Tests};
use crate::scenario::{Scenario, TestWeights};

pub const U0_FILE: &str = "u0.emnt";
pub const U_FILE: &str = "u.emnt";
pub const G0_FILE: &str = "g0.emnt";
pub const G_FILE: &str = "g.emnt";
pub const FORWARD_JSON: &str = "forward.json";
pub const NTD_JSON: &str = "ntd.json";
pub const RESULT_JSON: &str = "result.json";
pub const RESULT_VTK: &str = "result.vtk";

/// Mesh, loads and both media for a scenario.
pub struct Setup {
    pub mesh: Mesh,
    pub patches: PatchSet,
    pub basis: LoadBasis,
    pub background: MaterialField,
    pub field: MaterialField,
    pub dirichlet: BTreeSet<CubeFace>,
    pub omega: f64,
}

impl Setup {
    pub fn new(s: &Scenario) -> CliResult<Self> {
        let mesh = build_cube_mesh(s.bounds(), s.mesh.n)?;
        let patches = build_patches(&mesh, s.loads.patches)?;
        let basis = build_load_basis(&mesh, &patches, s.mode());
        let background = MaterialField::homogeneous(&mesh, s.background_lame())?;
        let field = MaterialField::with_inclusions(&mesh, s.background_lame(), &s.inclusions())?;
        Ok(Self {
            mesh,
            patches,
            basis,
            background,
            field,
            dirichlet: s.dirichlet_faces()?,
            omega: s.physics.omega,
        })
    }

    pub fn factorize(&self, field: &MaterialField, rtol: f64) -> CliResult<(Factorization, ResonanceReport)> {
        let system = assemble(&self.mesh, field, self.omega, &self.dirichlet)?;
        let mut fac = factorize(&system)?;
        fac.rtol = rtol;
        let report = fac.report();
        Ok((fac, report))
    }

    pub fn provenance(&self, field: &MaterialField) -> Provenance {
        Provenance {
            field_fingerprint: field.fingerprint(),
            omega: self.omega,
            mode: self.basis.mode,
        }
    }

    pub fn ntd(&self, field: &MaterialField, u: DMatrix<f64>) -> CliResult<(NtdMatrix, SolutionSet)> {
        let sol = SolutionSet {
            residuals: vec![0.0; u.ncols()],
            u,
        };
        Ok((ntd_from_solutions(&self.basis, &sol, self.provenance(field))?, sol))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MediumReport {
    pub inertia: [usize; 3],
    pub pivot_ratio: f64,
    pub max_residual: f64,
}

impl MediumReport {
    fn new(r: &ResonanceReport, sol: &SolutionSet) -> Self {
        Self {
            inertia: [r.inertia.negative, r.inertia.zero, r.inertia.positive],
            pivot_ratio: r.pivot_ratio,
            max_residual: sol.residuals.iter().fold(0.0, |m, &v| m.max(v)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForwardReport {
    pub dofs: usize,
    pub loads: usize,
    pub mode: String,
    pub background: MediumReport,
    pub medium: MediumReport,
    pub provenance: BTreeMap<String, String>,
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NtdReport {
    pub dim: usize,
    /// Relative max-norm asymmetry before symmetrization.
    pub asymmetry_g0: f64,
    pub asymmetry_g: f64,
    pub provenance: BTreeMap<String, String>,
}

/// Solutions and NtD matrices for both media, all in memory.
pub struct Solved {
    pub g0: NtdMatrix,
    pub g: NtdMatrix,
    pub sol0: SolutionSet,
    pub sol: SolutionSet,
    pub report0: ResonanceReport,
    pub report: ResonanceReport,
}

pub fn solve_media(setup: &Setup, rtol: f64) -> CliResult<Solved> {
    let (f0, report0) = setup.factorize(&setup.background, rtol)?;
    let sol0 = f0.solve(&setup.basis.f)?;
    drop(f0);
    let (f1, report) = setup.factorize(&setup.field, rtol)?;
    let sol = f1.solve(&setup.basis.f)?;
    drop(f1);
    let g0 = ntd_from_solutions(&setup.basis, &sol0, setup.provenance(&setup.background))?;
    let g = ntd_from_solutions(&setup.basis, &sol, setup.provenance(&setup.field))?;
    Ok(Solved {
        g0,
        g,
        sol0,
        sol,
        report0,
        report,
    })
}

fn skipped_report(alpha: Alpha, blocks: usize) -> EigencountReport {
    EigencountReport {
        alpha,
        threshold: None,
        advice: None,
        counts: vec![0; blocks],
        min_eigs: vec![0.0; blocks],
        max_eigs: vec![0.0; blocks],
    }
}

/// Both tests with shared block fields. A test whose weights vanish is
/// skipped and marks nothing.
pub fn run_tests(
    ops: &TestOperators<'_>,
    grid: &TestGrid,
    weights: TestWeights,
    thresholds: (Threshold, Threshold),
) -> CliResult<(ReconstructionResult, Tests)> {
    let alpha_mu = Alpha::new(0.0, weights.mu, 0.0);
    let wanted: Vec<Alpha> = [weights.d, alpha_mu].into_iter().filter(|a| !a.is_zero()).collect();
    let mut reports = if wanted.is_empty() {
        Vec::new()
    } else {
        run_block_tests(ops, grid, &wanted)?
    };
    let mut next = |alpha: Alpha, t: Threshold| {
        if alpha.is_zero() {
            (skipped_report(alpha, grid.len()), true)
        } else {
            (reports.remove(0).with_threshold(t), false)
        }
    };
    let (rd, skip_d) = next(weights.d, thresholds.0);
    let (rd2, skip_d2) = next(alpha_mu, thresholds.1);
    let tests = Tests {
        d: TestSummary::new(&rd, matches!(thresholds.0, Threshold::Fixed(_)), skip_d),
        d2: TestSummary::new(&rd2, matches!(thresholds.1, Threshold::Fixed(_)), skip_d2),
    };
    Ok((finish(grid, rd, rd2), tests))
}

/// Reconstruction from in-memory operators.
pub fn reconstruct_in_memory(
    s: &Scenario,
    setup: &Setup,
    g: &DMatrix<f64>,
    g0: &DMatrix<f64>,
    sol0: &SolutionSet,
    mut timings: BTreeMap<String, f64>,
) -> CliResult<ResultFile> {
    let t = Instant::now();
    let snapshots = SnapshotFields::new(&setup.mesh, sol0, setup.omega)?;
    let grid = TestGrid::new(&setup.mesh, s.test.k)?;
    let mut ops = TestOperators::new(g, g0, &snapshots)?;
    ops.eps_rel = s.tolerances.eig_rtol;
    let (result, tests) = run_tests(&ops, &grid, s.weights(), s.thresholds())?;
    timings.insert("block_tests".into(), t.elapsed().as_secs_f64());
    Ok(ResultFile::new(s.to_toml(), &grid, &result, tests, timings))
}

/// Artifact locations and provenance for one scenario.
pub struct Artifacts {
    pub dir: PathBuf,
    key: String,
}

impl Artifacts {
    pub fn new(s: &Scenario, out: Option<&Path>) -> CliResult<Self> {
        let dir = out.map_or_else(|| PathBuf::from(&s.output.dir), Path::to_path_buf);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            key: s.forward_key(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn hash(&self, tag: &str) -> Hash {
        provenance_hash(&self.key, tag)
    }

    fn write(&self, name: &str, symmetric: bool, matrix: DMatrix<f64>) -> CliResult<()> {
        MatrixFile {
            symmetric,
            provenance: self.hash(name),
            matrix,
        }
        .write(&self.path(name))
    }

    fn read(&self, name: &str) -> CliResult<DMatrix<f64>> {
        Ok(MatrixFile::read_checked(&self.path(name), &self.hash(name))?.matrix)
    }

    fn hashes(&self, names: &[&str]) -> BTreeMap<String, String> {
        names.iter().map(|n| (n.to_string(), hex(&self.hash(n)))).collect()
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)?).map_err(|e| CliError::io(&path, e))
    }
}

fn check_shape(m: &DMatrix<f64>, shape: (usize, usize), name: &str) -> CliResult<()> {
    if m.shape() != shape {
        return Err(CliError::Format(format!(
            "{name} is {:?}, scenario expects {shape:?}",
            m.shape()
        )));
    }
    Ok(())
}

pub fn cmd_forward(s: &Scenario, out: Option<&Path>) -> CliResult<ForwardReport> {
    let art = Artifacts::new(s, out)?;
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let setup = Setup::new(s)?;
    timings.insert("setup".to_string(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    let solved = solve_media(&setup, s.tolerances.solve_rtol)?;
    timings.insert("solve".to_string(), t.elapsed().as_secs_f64());
    let report = ForwardReport {
        dofs: setup.mesh.num_dofs(),
        loads: setup.basis.len(),
        mode: s.loads.mode.clone(),
        background: MediumReport::new(&solved.report0, &solved.sol0),
        medium: MediumReport::new(&solved.report, &solved.sol),
        provenance: art.hashes(&[U0_FILE, U_FILE]),
        timings,
    };
    art.write(U0_FILE, false, solved.sol0.u)?;
    art.write(U_FILE, false, solved.sol.u)?;
    art.write_json(FORWARD_JSON, &report)?;
    Ok(report)
}

pub fn cmd_ntd(s: &Scenario, out: Option<&Path>) -> CliResult<NtdReport> {
    let art = Artifacts::new(s, out)?;
    let setup = Setup::new(s)?;
    let shape = setup.basis.f.shape();
    let u0 = art.read(U0_FILE)?;
    let u = art.read(U_FILE)?;
    check_shape(&u0, shape, U0_FILE)?;
    check_shape(&u, shape, U_FILE)?;
    let (g0, _) = setup.ntd(&setup.background, u0)?;
    let (g, _) = setup.ntd(&setup.field, u)?;
    let report = NtdReport {
        dim: g.dim(),
        asymmetry_g0: g0.asymmetry,
        asymmetry_g: g.asymmetry,
        provenance: art.hashes(&[G0_FILE, G_FILE]),
    };
    art.write(G0_FILE, true, g0.g)?;
    art.write(G_FILE, true, g.g)?;
    art.write_json(NTD_JSON, &report)?;
    Ok(report)
}

pub fn cmd_reconstruct(s: &Scenario, out: Option<&Path>) -> CliResult<ResultFile> {
    let art = Artifacts::new(s, out)?;
    let t = Instant::now();
    let setup = Setup::new(s)?;
    let l = setup.basis.len();
    let g0 = art.read(G0_FILE)?;
    let g = art.read(G_FILE)?;
    let u0 = art.read(U0_FILE)?;
    check_shape(&g0, (l, l), G0_FILE)?;
    check_shape(&g, (l, l), G_FILE)?;
    check_shape(&u0, setup.basis.f.shape(), U0_FILE)?;
    let sol0 = SolutionSet {
        residuals: vec![0.0; l],
        u: u0,
    };
    let mut timings = BTreeMap::new();
    timings.insert("load".to_string(), t.elapsed().as_secs_f64());
    let result = reconstruct_in_memory(s, &setup, &g, &g0, &sol0, timings)?;
    result.write(&art.path(RESULT_JSON))?;
    if s.output.vtk {
        let grid = TestGrid::new(&setup.mesh, s.test.k)?;
        write_vtk(&art.path(RESULT_VTK), &result, &grid)?;
    }
    Ok(result)
}

fn test_line(name: &str, t: &TestSummary) -> String {
    let thr = t.threshold.map_or("-".to_string(), |v| v.to_string());
    let gap = t.gap.map_or("-".to_string(), |g| format!("{}..{}", g[0], g[1]));
    let ratio = t.gap_ratio.map_or("-".to_string(), |r| format!("{r:.2}"));
    format!(
        "{name:<6} alpha=({:.4e}, {:.4e}, {:.4e})  threshold={thr} ({})  largest gap={gap} ratio={ratio}  marked={}",
        t.alpha[0], t.alpha[1], t.alpha[2], t.threshold_source, t.marked
    )
}

pub fn summary(r: &ResultFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", test_line("D", &r.tests.d));
    let _ = writeln!(s, "{}", test_line("mu", &r.tests.d2));
    for l in [Label::Exterior, Label::D2, Label::DOnly] {
        let _ = writeln!(s, "{:<9} {}", l.name(), r.label_counts.get(l.name()).copied().unwrap_or(0));
    }
    if !r.inconsistent.is_empty() {
        let _ = writeln!(s, "inconsistent blocks (mu support outside D): {:?}", r.inconsistent);
    }
    s
}

pub fn forward_summary(r: &ForwardReport) -> String {
    let line = |name: &str, m: &MediumReport| {
        format!(
            "{name:<10} inertia (-{}, 0:{}, +{})  pivot ratio {:.3e}  max residual {:.3e}",
            m.inertia[0], m.inertia[1], m.inertia[2], m.pivot_ratio, m.max_residual
        )
    };
    format!(
        "{} dofs, {} loads ({})\n{}\n{}\n",
        r.dofs,
        r.loads,
        r.mode,
        line("background", &r.background),
        line("medium", &r.medium)
    )
}
