//! Load-mode and weight-scale sweeps, plus linearized vs full re-solve timing.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use elastomono::materials::Alpha;
use elastomono::ntd::{ntd_from_solutions, LoadMode, Perturbation, SnapshotFields};
use elastomono::recon::{count_negative_eigenvalues, run_block_tests, test_block, TestGrid, TestOperators};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::pipeline::{solve_media, Artifacts, Setup, Solved};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub modes: Vec<String>,
    pub alpha_scales: Vec<f64>,
    /// Number of blocks timed with both test variants.
    pub timing_blocks: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            modes: LoadMode::ALL.iter().map(|m| m.name().to_string()).collect(),
            alpha_scales: vec![0.5, 1.0, 2.0],
            timing_blocks: 2,
        }
    }
}

impl SweepSpec {
    pub fn parse(text: &str) -> CliResult<Self> {
        let s: Self = toml::from_str(text).map_err(|e| CliError::Scenario(format!("sweep spec: {e}")))?;
        for m in &s.modes {
            if LoadMode::parse(m).is_none() {
                return Err(CliError::Scenario(format!("sweep spec: unknown mode {m:?}")));
            }
        }
        if s.alpha_scales.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(CliError::Scenario("sweep spec: alpha scales must be positive".into()));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }
}

/// All-mode solves restricted to the loads of one mode. Column subsets of
/// the all-mode solutions equal solving the subset directly.
pub struct ModeOperators {
    pub mode: LoadMode,
    pub g0: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub snapshots: SnapshotFields,
}

pub fn restrict_to_mode(setup: &Setup, solved: &Solved, mode: LoadMode) -> CliResult<ModeOperators> {
    let keep: Vec<usize> = setup
        .basis
        .loads
        .iter()
        .enumerate()
        .filter(|(_, (_, d))| mode.directions().contains(d))
        .map(|(i, _)| i)
        .collect();
    let pick = |m: &DMatrix<f64>| DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
    let mut sol0 = solved.sol0.clone();
    sol0.u = solved.sol0.u.select_columns(&keep);
    Ok(ModeOperators {
        mode,
        g0: pick(&solved.g0.g),
        g: pick(&solved.g.g),
        snapshots: SnapshotFields::new(&setup.mesh, &sol0, setup.omega)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockTiming {
    pub block: usize,
    pub linearized_s: f64,
    pub full_s: f64,
    pub count_linearized: usize,
    pub count_full: usize,
}

impl BlockTiming {
    pub fn ratio(&self) -> f64 {
        self.full_s / self.linearized_s.max(f64::MIN_POSITIVE)
    }
}

/// Evenly spaced sample of `count` block indices.
pub fn sample_blocks(total: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, total);
    (0..count).map(|i| (2 * i + 1) * total / (2 * count)).collect()
}

/// Times the linearized test against the full test, which assembles,
/// factorizes and solves the medium `p₀ + α·χ_B` for each block and counts
/// the negative eigenvalues of `G(p₀ + α·χ_B) − G`.
pub fn time_blocks(
    setup: &Setup,
    solved: &Solved,
    grid: &TestGrid,
    alpha: Alpha,
    blocks: &[usize],
    eps_rel: f64,
    solve_rtol: f64,
) -> CliResult<Vec<BlockTiming>> {
    let snapshots = SnapshotFields::new(&setup.mesh, &solved.sol0, setup.omega)?;
    let mut ops = TestOperators::new(&solved.g.g, &solved.g0.g, &snapshots)?;
    ops.eps_rel = eps_rel;
    let ne = setup.mesh.num_elements();
    blocks
        .iter()
        .map(|&b| {
            let elems = &grid.elements[b];
            let t = Instant::now();
            let lin = test_block(&ops, elems, alpha, 0)?;
            let linearized_s = t.elapsed().as_secs_f64();

            let t = Instant::now();
            let h = Perturbation::indicator(ne, elems, [alpha.lambda, alpha.mu, -alpha.rho]);
            let field = h.apply_to(&setup.background);
            let (fac, _) = setup.factorize(&field, solve_rtol)?;
            let sol = fac.solve(&setup.basis.f)?;
            let gb = ntd_from_solutions(&setup.basis, &sol, setup.provenance(&field))?;
            let count_full = count_negative_eigenvalues(&(&gb.g - &solved.g.g), eps_rel)?;
            let full_s = t.elapsed().as_secs_f64();
            Ok(BlockTiming {
                block: b,
                linearized_s,
                full_s,
                count_linearized: lin.count,
                count_full,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub mode: LoadMode,
    pub scale: f64,
    pub test: &'static str,
    pub alpha: Alpha,
    pub counts: Vec<usize>,
    pub threshold: Option<usize>,
    pub gap: Option<(usize, usize)>,
    pub gap_ratio: Option<f64>,
    pub marked: usize,
}

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub timings: Vec<BlockTiming>,
}

pub fn run_sweep(s: &Scenario, spec: &SweepSpec) -> CliResult<SweepOutput> {
    let mut all = s.clone();
    all.loads.mode = LoadMode::All.name().to_string();
    let setup = Setup::new(&all)?;
    let solved = solve_media(&setup, s.tolerances.solve_rtol)?;
    let grid = TestGrid::new(&setup.mesh, s.test.k)?;
    let weights = s.weights();
    let (td, td2) = s.thresholds();
    let mut rows = Vec::new();
    for name in &spec.modes {
        let mode = LoadMode::parse(name).expect("validated");
        let mo = restrict_to_mode(&setup, &solved, mode)?;
        let mut ops = TestOperators::new(&mo.g, &mo.g0, &mo.snapshots)?;
        ops.eps_rel = s.tolerances.eig_rtol;
        for &scale in &spec.alpha_scales {
            let tests = [
                ("D", weights.d.scale(scale), td),
                ("mu", Alpha::new(0.0, weights.mu * scale, 0.0), td2),
            ];
            let active: Vec<_> = tests.iter().filter(|t| !t.1.is_zero()).collect();
            let alphas: Vec<Alpha> = active.iter().map(|t| t.1).collect();
            let reports = if alphas.is_empty() {
                Vec::new()
            } else {
                run_block_tests(&ops, &grid, &alphas)?
            };
            for (t, r) in active.iter().zip(reports) {
                let r = r.with_threshold(t.2);
                rows.push(SweepRow {
                    mode,
                    scale,
                    test: t.0,
                    alpha: t.1,
                    threshold: r.threshold,
                    gap: r.advice.as_ref().map(|a| a.gap),
                    gap_ratio: r.advice.as_ref().map(|a| a.gap_ratio),
                    marked: r.mask().iter().filter(|&&m| m).count(),
                    counts: r.counts,
                });
            }
        }
    }
    let timings = if weights.d.is_zero() || spec.timing_blocks == 0 {
        Vec::new()
    } else {
        let blocks = sample_blocks(grid.len(), spec.timing_blocks);
        time_blocks(
            &setup,
            &solved,
            &grid,
            weights.d,
            &blocks,
            s.tolerances.eig_rtol,
            s.tolerances.solve_rtol,
        )?
    };
    Ok(SweepOutput { rows, timings })
}

fn median(v: &[usize]) -> f64 {
    let mut s = v.to_vec();
    s.sort_unstable();
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2] as f64
    } else {
        (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl SweepOutput {
    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "mode,alpha_scale,test,alpha1,alpha2,alpha3,min,median,max,gap_below,gap_above,gap_ratio,threshold,marked\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.mode,
                r.scale,
                r.test,
                r.alpha.lambda,
                r.alpha.mu,
                r.alpha.rho,
                r.counts.iter().min().unwrap_or(&0),
                median(&r.counts),
                r.counts.iter().max().unwrap_or(&0),
                opt(r.gap.map(|g| g.0)),
                opt(r.gap.map(|g| g.1)),
                opt(r.gap_ratio.map(|x| format!("{x:.3}"))),
                opt(r.threshold),
                r.marked
            );
        }
        s
    }

    pub fn counts_csv(&self) -> String {
        let mut s = String::from("mode,alpha_scale,test,block,count\n");
        for r in &self.rows {
            for (b, c) in r.counts.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{b},{c}", r.mode, r.scale, r.test);
            }
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("block,linearized_s,full_resolve_s,ratio,count_linearized,count_full\n");
        for t in &self.timings {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.2},{},{}",
                t.block,
                t.linearized_s,
                t.full_s,
                t.ratio(),
                t.count_linearized,
                t.count_full
            );
        }
        s
    }

    /// Mean full re-solve time over mean linearized time.
    pub fn speedup(&self) -> Option<f64> {
        if self.timings.is_empty() {
            return None;
        }
        let lin: f64 = self.timings.iter().map(|t| t.linearized_s).sum();
        let full: f64 = self.timings.iter().map(|t| t.full_s).sum();
        Some(full / lin.max(f64::MIN_POSITIVE))
    }
}

pub fn cmd_sweep(s: &Scenario, spec: &SweepSpec, out: Option<&Path>) -> CliResult<SweepOutput> {
    let art = Artifacts::new(s, out)?;
    let output = run_sweep(s, spec)?;
    for (name, text) in [
        ("sweep.csv", output.summary_csv()),
        ("sweep_counts.csv", output.counts_csv()),
        ("sweep_timing.csv", output.timing_csv()),
    ] {
        let path = art.path(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(output)
}
