//! Interpolation baselines driven by the page boundary alone.
//!
//! Both produce target→source lattices: node `(i, j)` holds the source
//! pixel that lands at normalized target `(i/(n-1), j/(n-1))`.

mod tfi;
mod tps;

use thiserror::Error;

use crate::geom::{Boundary, GridField, Point2};

pub use tfi::{corner_mismatch, tfi_grid, ArcLengthPolyline, BoundaryCurves, Curve};
pub use tps::{tps_fit, tps_grid, tps_kernel, TpsModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("boundary corners disagree by {0:.3e} px")]
    CornerMismatch(f64),
    #[error("{0} source points but {1} target points")]
    Mismatch(usize, usize),
    #[error("need at least 3 control points, got {0}")]
    TooFewPoints(usize),
    #[error("regularization must be finite and non-negative, got {0}")]
    Regularization(f64),
    #[error("degenerate control points: {0}")]
    Degenerate(&'static str),
    #[error("spline system is singular")]
    Singular,
}

/// TFI lattice from the four detected boundary polylines.
pub fn tfi_from_boundary(boundary: &Boundary, n: usize) -> Result<GridField, BaselineError> {
    tfi_grid(&BoundaryCurves::from_boundary(boundary), n)
}

/// Boundary control points for the spline baseline.
///
/// Each side is sampled at `per_side` arc-length fractions; the pair is
/// (normalized target position on the unit square edge, source pixel).
/// Corners are taken from the top and bottom curves only.
pub fn boundary_control_points(boundary: &Boundary, per_side: usize) -> (Vec<Point2>, Vec<Point2>) {
    let per_side = per_side.max(2);
    let c = BoundaryCurves::from_boundary(boundary);
    let s = (per_side - 1) as f64;
    let mut targets = Vec::with_capacity(4 * per_side);
    let mut sources = Vec::with_capacity(4 * per_side);
    for k in 0..per_side {
        let t = k as f64 / s;
        targets.push(Point2::new(t, 0.0));
        sources.push(c.top.point(t));
        targets.push(Point2::new(t, 1.0));
        sources.push(c.bottom.point(t));
    }
    for k in 1..per_side - 1 {
        let t = k as f64 / s;
        targets.push(Point2::new(0.0, t));
        sources.push(c.left.point(t));
        targets.push(Point2::new(1.0, t));
        sources.push(c.right.point(t));
    }
    (targets, sources)
}

/// Spline lattice fitted to boundary correspondences.
pub fn tps_from_boundary(
    boundary: &Boundary,
    n: usize,
    per_side: usize,
    reg: f64,
) -> Result<GridField, BaselineError> {
    let mismatch = corner_mismatch(&BoundaryCurves::from_boundary(boundary));
    if mismatch > 1e-3 {
        return Err(BaselineError::CornerMismatch(mismatch));
    }
    let (targets, sources) = boundary_control_points(boundary, per_side);
    let model = tps_fit(&targets, &sources, reg)?;
    tps_grid(&model, n)
}
