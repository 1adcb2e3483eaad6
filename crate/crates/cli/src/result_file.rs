//! JSON result files and legacy VTK voxel export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use elastomono::recon::{classify, EigencountReport, Label, ReconstructionResult, TestGrid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "elastomono-result/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub format: String,
    /// The scenario as TOML; rerunning from it reproduces the labels.
    pub scenario: String,
    pub k: usize,
    pub tests: Tests,
    pub blocks: Vec<BlockRecord>,
    pub label_counts: BTreeMap<String, usize>,
    /// Blocks in the `μ` support but outside the full support.
    pub inconsistent: Vec<usize>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tests {
    pub d: TestSummary,
    pub d2: TestSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub alpha: [f64; 3],
    /// `None` when no block is accepted.
    pub threshold: Option<usize>,
    /// `fixed`, `advisor`, `none` or `skipped` (zero weights).
    pub threshold_source: String,
    pub gap: Option<[usize; 2]>,
    pub gap_ratio: Option<f64>,
    pub advisor_suggestion: Option<usize>,
    pub marked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub index: usize,
    pub coords: [usize; 3],
    pub center: [f64; 3],
    pub count_d: usize,
    pub count_mu: usize,
    pub label_raw: String,
    pub label_filled: String,
    pub label: String,
}

impl TestSummary {
    pub fn new(report: &EigencountReport, fixed: bool, skipped: bool) -> Self {
        let source = if skipped {
            "skipped"
        } else if fixed {
            "fixed"
        } else if report.threshold.is_some() {
            "advisor"
        } else {
            "none"
        };
        let advice = report.advice.as_ref();
        Self {
            alpha: report.alpha.as_array(),
            threshold: report.threshold,
            threshold_source: source.to_string(),
            gap: advice.map(|a| [a.gap.0, a.gap.1]),
            gap_ratio: advice.map(|a| a.gap_ratio),
            advisor_suggestion: advice.and_then(|a| a.suggested),
            marked: report.mask().iter().filter(|&&m| m).count(),
        }
    }
}

impl ResultFile {
    pub fn new(
        scenario: String,
        grid: &TestGrid,
        result: &ReconstructionResult,
        tests: Tests,
        timings: BTreeMap<String, f64>,
    ) -> Self {
        let raw = classify(&result.mask_d, &result.mask_d2);
        let filled = &result.classification;
        let blocks = (0..grid.len())
            .map(|b| BlockRecord {
                index: b,
                coords: grid.coords(b),
                center: grid.blocks[b].center(),
                count_d: result.report_d.counts[b],
                count_mu: result.report_d2.counts[b],
                label_raw: raw.labels[b].name().to_string(),
                label_filled: filled.labels[b].name().to_string(),
                label: filled.labels[b].name().to_string(),
            })
            .collect();
        let label_counts = [Label::Exterior, Label::D2, Label::DOnly]
            .into_iter()
            .map(|l| (l.name().to_string(), filled.count(l)))
            .collect();
        Self {
            format: FORMAT.to_string(),
            scenario,
            k: grid.k,
            tests,
            blocks,
            label_counts,
            inconsistent: filled.inconsistent.clone(),
            timings,
        }
    }

    pub fn labels(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.label.as_str()).collect()
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let r: Self = serde_json::from_str(&text)?;
        if r.format != FORMAT {
            return Err(CliError::Format(format!("unknown result format {:?}", r.format)));
        }
        if r.blocks.len() != r.k.pow(3) {
            return Err(CliError::Format(format!("{} blocks for k = {}", r.blocks.len(), r.k)));
        }
        Ok(r)
    }
}

fn label_code(name: &str) -> u8 {
    match name {
        "D_only" => 1,
        "D2" => 2,
        _ => 0,
    }
}

/// Legacy VTK structured points with one cell per test block.
/// `label` is 0 exterior, 1 D_only, 2 D2.
pub fn vtk_string(result: &ResultFile, grid: &TestGrid) -> String {
    let k = grid.k;
    let origin = grid.blocks[0].min;
    let spacing = grid.blocks[0].extent(0);
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "elastomono reconstruction");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", k + 1, k + 1, k + 1);
    let _ = writeln!(s, "ORIGIN {} {} {}", origin[0], origin[1], origin[2]);
    let _ = writeln!(s, "SPACING {spacing} {spacing} {spacing}");
    let _ = writeln!(s, "CELL_DATA {}", k * k * k);
    let mut field = |name: &str, values: Vec<String>| {
        let _ = writeln!(s, "SCALARS {name} int 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for row in values.chunks(k) {
            let _ = writeln!(s, "{}", row.join(" "));
        }
    };
    // block index is x-fastest, matching VTK cell order
    field("label", result.blocks.iter().map(|b| label_code(&b.label).to_string()).collect());
    field("count_d", result.blocks.iter().map(|b| b.count_d.to_string()).collect());
    field("count_mu", result.blocks.iter().map(|b| b.count_mu.to_string()).collect());
    s
}

pub fn write_vtk(path: &Path, result: &ResultFile, grid: &TestGrid) -> CliResult<()> {
    std::fs::write(path, vtk_string(result, grid)).map_err(|e| CliError::io(path, e))
}
