use thiserror::Error;

use crate::fem::Inertia;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh needs at least 2 elements per axis, got {0}")]
    TooFewElements(usize),
    #[error("degenerate bounds: every max coordinate must exceed the min coordinate")]
    DegenerateBounds,
    #[error("patches per side ({m}) must divide elements per axis ({n})")]
    PatchMismatch { n: usize, m: usize },
    #[error("test grid size ({k}) must divide elements per axis ({n})")]
    GridMismatch { n: usize, k: usize },
    #[error("invalid patch id {0}")]
    InvalidPatch(usize),
    #[error("material parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("inclusion box does not intersect the mesh bounds")]
    InclusionOutside,
    #[error("negative linearization weight: {0:?}")]
    NegativeAlpha([f64; 3]),
    #[error("linearization weights must not all vanish")]
    ZeroAlpha,
    #[error("per-element field has length {got}, mesh has {expected} elements")]
    FieldLength { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("system matrix is singular or numerically resonant at omega = {omega} (inertia {inertia})")]
    Resonance { omega: f64, inertia: Inertia },
    #[error("solve residual {residual:.3e} exceeds tolerance {tol:.1e}")]
    Residual { residual: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
