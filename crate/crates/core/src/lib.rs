//! Document image dewarping by solving for a uniform forward map over a
//! regular grid, constrained by the page boundary, text lines and vertical
//! margin lines.
//!
//! The usual entry point is [`dewarp`], which takes an image, its
//! [`GeometricElements`] and a [`DewarpConfig`]. The stages are public
//! on their own as well: [`discretize_elements`] and [`solve_field`] produce
//! the forward map, [`invert_forward`] and [`upsample_backward`] turn it into
//! a backward map, and [`resample`] applies it.

pub mod baselines;
pub mod constraints;
pub mod elements;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod overlay;
pub mod pipeline;
pub mod remap;
pub mod solver;
pub mod sparse;
pub mod synth;

pub use baselines::{tfi_from_boundary, tps_fit, tps_from_boundary, BaselineError, TpsModel};
pub use constraints::{discretize_elements, Channel, ConstraintSet, Intervals};
pub use elements::{detect_vertical_lines, extract_text_lines, VerticalDetectParams};
pub use geom::{BackwardMap, Boundary, GeometricElements, GridField, ImageBuffer, Point2, Polyline};
pub use metrics::{grid_diagnostics, local_distortion, ms_ssim, GridDiagnostics};
pub use pipeline::{dewarp, dewarp_baseline, solve_backward, Baseline, DewarpConfig, ElementSet, PipelineError};
pub use remap::{fill_holes, invert_forward, resample, upsample_backward};
pub use solver::{energy_report, solve_field, SolveError, SolverParams};
pub use synth::{synth_bundle, WarpBundle, WarpKind, WarpSpec};
