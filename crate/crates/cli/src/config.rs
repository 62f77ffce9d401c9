use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use dewarp_core::io::read_json;
use dewarp_core::pipeline::{DewarpConfig, ElementSet};
use dewarp_core::solver::Preconditioner;
use serde::de::DeserializeOwned;

/// Parses a snake_case enum value through its serde representation.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown value {s:?}"))
}

/// Parses `WIDTHxHEIGHT`.
pub fn parse_size(s: &str) -> Result<[usize; 2], String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok([parse(w)?, parse(h)?])
}

/// Run configuration: a JSON file, then any flag on top of it.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Grid nodes per side.
    #[arg(long)]
    pub n: Option<usize>,
    /// Weight of the text and vertical line terms.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the grid regularizer.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight of the cross term inside the regularizer.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Relative residual at which the solver stops.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// jacobi or cholesky.
    #[arg(long, value_parser = parse_enum::<Preconditioner>)]
    pub preconditioner: Option<Preconditioner>,
    /// Text line sampling interval in working-frame pixels.
    #[arg(long)]
    pub text_interval: Option<f64>,
    /// Vertical line sampling interval in working-frame pixels.
    #[arg(long)]
    pub vertical_interval: Option<f64>,
    /// Boundary sampling interval in working-frame pixels.
    #[arg(long)]
    pub boundary_interval: Option<f64>,
    /// Half-width of the vertical line search window.
    #[arg(long)]
    pub window_w: Option<f64>,
    /// Height of the vertical line search window.
    #[arg(long)]
    pub window_h: Option<f64>,
    /// Angle bound of the vertical line search, radians.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Elements used by the optimizer: all, boundary_text or boundary.
    #[arg(long, value_parser = parse_enum::<ElementSet>)]
    pub element_set: Option<ElementSet>,
    /// Do not derive vertical lines from text-line endpoints.
    #[arg(long)]
    pub no_detect_vertical: bool,
    /// Side of the backward map produced by inversion.
    #[arg(long)]
    pub bm_size: Option<usize>,
    /// Rectified image size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    pub output_size: Option<[usize; 2]>,
    /// Write the effective configuration as JSON.
    #[arg(long, value_name = "FILE")]
    pub emit_config: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> anyhow::Result<DewarpConfig> {
        let mut c: DewarpConfig = match &self.config {
            Some(path) => read_json(path).with_context(|| "reading configuration")?,
            None => DewarpConfig::default(),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        if let Some(n) = self.n {
            c.solver.n = n;
        }
        set(&mut c.solver.alpha, self.alpha);
        set(&mut c.solver.lambda, self.lambda);
        set(&mut c.solver.beta, self.beta);
        set(&mut c.solver.tol, self.tol);
        if let Some(m) = self.max_iters {
            c.solver.max_iters = m;
        }
        if let Some(p) = self.preconditioner {
            c.solver.preconditioner = p;
        }
        set(&mut c.intervals.text, self.text_interval);
        set(&mut c.intervals.vertical, self.vertical_interval);
        set(&mut c.intervals.boundary, self.boundary_interval);
        set(&mut c.vertical.w, self.window_w);
        set(&mut c.vertical.h, self.window_h);
        set(&mut c.vertical.theta, self.theta);
        if let Some(e) = self.element_set {
            c.elements = e;
        }
        if self.no_detect_vertical {
            c.detect_vertical = false;
        }
        if self.bm_size.is_some() {
            c.bm_size = self.bm_size;
        }
        if self.output_size.is_some() {
            c.output_size = self.output_size;
        }
        if let Some(path) = &self.emit_config {
            dewarp_core::io::write_json(path, &c)?;
        }
        Ok(c)
    }
}
