//! End-to-end rectification: elements → forward map → backward map → image.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{tfi_from_boundary, tps_from_boundary, BaselineError};
use crate::constraints::{discretize_elements, ConstraintError, Intervals, WORKING_FRAME};
use crate::elements::{detect_vertical_lines, ElementsError, VerticalDetectParams};
use crate::geom::{BackwardMap, GeomError, GeometricElements, GridField, ImageBuffer, Point2};
use crate::metrics::{grid_diagnostics, GridDiagnostics};
use crate::remap::{fill_holes, invert_forward, lattice_to_backward, resample, upsample_backward, InversionDiagnostics, RemapError};
use crate::solver::{solve_field, SolveDiagnostics, SolveError, SolverParams};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid elements: {0}")]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Elements(#[from] ElementsError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Remap(#[from] RemapError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl PipelineError {
    /// Process exit code: 2 bad input or configuration, 3 under-determined
    /// problem, 4 solver non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Solve(SolveError::UnderDetermined(_)) => 3,
            PipelineError::Solve(SolveError::NotConverged { .. }) => 4,
            _ => 2,
        }
    }
}

/// Which elements feed the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ElementSet {
    Boundary,
    BoundaryText,
    #[default]
    All,
}

impl ElementSet {
    pub fn select(self, e: &GeometricElements) -> GeometricElements {
        let mut out = e.clone();
        if self != ElementSet::All {
            out.vertical_lines.clear();
        }
        if self == ElementSet::Boundary {
            out.text_lines.clear();
        }
        out
    }
}

/// Every tunable of a rectification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DewarpConfig {
    pub solver: SolverParams,
    pub intervals: Intervals,
    pub vertical: VerticalDetectParams,
    /// Derive vertical lines from text-line endpoints when the elements
    /// carry none.
    pub detect_vertical: bool,
    pub elements: ElementSet,
    /// Side of the square backward map produced by inversion; the grid size
    /// when unset.
    pub bm_size: Option<usize>,
    /// `[width, height]` of the rectified image; a square of the input's
    /// longer side when unset.
    pub output_size: Option<[usize; 2]>,
}

impl Default for DewarpConfig {
    fn default() -> Self {
        Self {
            solver: SolverParams::default(),
            intervals: Intervals::default(),
            vertical: VerticalDetectParams::default(),
            detect_vertical: true,
            elements: ElementSet::All,
            bm_size: None,
            output_size: None,
        }
    }
}

impl DewarpConfig {
    pub fn output_size(&self, image_size: (usize, usize)) -> (usize, usize) {
        match self.output_size {
            Some([w, h]) => (w, h),
            None => {
                let s = image_size.0.max(image_size.1);
                (s, s)
            }
        }
    }
}

/// Vertical line detection on text lines rescaled to the working frame,
/// so the window sizes mean the same thing at any resolution.
pub fn detect_vertical_in_working_frame(
    elements: &GeometricElements,
    params: &VerticalDetectParams,
) -> Result<Vec<crate::geom::Polyline>, ElementsError> {
    let (w, h) = elements.image_size;
    let sx = (WORKING_FRAME - 1.0) / (w as f64 - 1.0);
    let sy = (WORKING_FRAME - 1.0) / (h as f64 - 1.0);
    let scaled: Vec<_> = elements.text_lines.iter().map(|l| l.map(|p| Point2::new(p.x * sx, p.y * sy))).collect();
    let lines = detect_vertical_lines(&scaled, params)?;
    Ok(lines.into_iter().map(|l| l.map(|p| Point2::new(p.x / sx, p.y / sy))).collect())
}

/// Elements actually used by a run: the configured subset, plus detected
/// vertical lines when enabled and none were supplied.
pub fn effective_elements(elements: &GeometricElements, config: &DewarpConfig) -> Result<GeometricElements, PipelineError> {
    elements.validate()?;
    let mut e = config.elements.select(elements);
    if config.elements == ElementSet::All
        && config.detect_vertical
        && e.vertical_lines.is_empty()
        && e.text_lines.len() >= 2
    {
        e.vertical_lines = detect_vertical_in_working_frame(&e, &config.vertical)?;
    }
    Ok(e)
}

/// Geometry produced by the optimizer.
#[derive(Debug, Clone)]
pub struct Solution {
    pub elements: GeometricElements,
    pub field: GridField,
    pub solver: [SolveDiagnostics; 2],
    pub inversion: InversionDiagnostics,
    pub grid: GridDiagnostics,
    /// Output pixel → input pixel at the requested output size.
    pub backward: BackwardMap,
    pub seconds: f64,
}

/// Solves for the forward map and converts it into a full-size backward map.
pub fn solve_backward(elements: &GeometricElements, config: &DewarpConfig) -> Result<Solution, PipelineError> {
    let start = Instant::now();
    let elements = effective_elements(elements, config)?;
    let set = discretize_elements(&elements, config.solver.n, &config.intervals)?;
    let (field, solver, _) = solve_field(&set, &config.solver)?;
    let (w, h) = elements.image_size;
    let bm_size = config.bm_size.unwrap_or(config.solver.n);
    if bm_size < 2 {
        return Err(PipelineError::Config(format!("bm_size must be at least 2, got {bm_size}")));
    }
    let (bm, inversion) = invert_forward(&field, w, h, bm_size, bm_size)?;
    let filled = fill_holes(&bm)?;
    let (ow, oh) = config.output_size(elements.image_size);
    let backward = upsample_backward(&filled, ow, oh)?;
    let grid = grid_diagnostics(&field);
    Ok(Solution {
        elements,
        field,
        solver,
        inversion,
        grid,
        backward,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Rectified image plus the geometry behind it.
#[derive(Debug, Clone)]
pub struct Rectified {
    pub image: ImageBuffer,
    pub solution: Solution,
}

pub fn dewarp(image: &ImageBuffer, elements: &GeometricElements, config: &DewarpConfig) -> Result<Rectified, PipelineError> {
    check_size(image, elements)?;
    let solution = solve_backward(elements, config)?;
    Ok(Rectified {
        image: resample(image, &solution.backward),
        solution,
    })
}

fn check_size(image: &ImageBuffer, elements: &GeometricElements) -> Result<(), PipelineError> {
    let size = (image.width(), image.height());
    if size != elements.image_size {
        return Err(PipelineError::Config(format!(
            "elements describe a {}x{} image but the input is {}x{}",
            elements.image_size.0, elements.image_size.1, size.0, size.1
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Tfi,
    Tps,
}

/// Control points per boundary side for the spline baseline.
pub const TPS_POINTS_PER_SIDE: usize = 64;

/// Backward map of an interpolation baseline at the given output size.
pub fn baseline_backward(
    elements: &GeometricElements,
    method: Baseline,
    n: usize,
    out: (usize, usize),
) -> Result<BackwardMap, PipelineError> {
    elements.validate()?;
    let lattice = match method {
        Baseline::Tfi => tfi_from_boundary(&elements.boundary, n)?,
        Baseline::Tps => tps_from_boundary(&elements.boundary, n, TPS_POINTS_PER_SIDE, 0.0)?,
    };
    Ok(lattice_to_backward(&lattice, out.0, out.1)?)
}

pub fn dewarp_baseline(
    image: &ImageBuffer,
    elements: &GeometricElements,
    method: Baseline,
    config: &DewarpConfig,
) -> Result<(ImageBuffer, BackwardMap), PipelineError> {
    check_size(image, elements)?;
    let out = config.output_size(elements.image_size);
    let bm = baseline_backward(elements, method, config.solver.n, out)?;
    Ok((resample(image, &bm), bm))
}
