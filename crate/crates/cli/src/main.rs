//! `dewarp`: rectify document images from their page boundary, text lines
//! and vertical lines, run the interpolation baselines, generate synthetic
//! test cases and score results.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use dewarp_core::elements::{extract_text_lines, VerticalDetectParams};
use dewarp_core::geom::{BackwardMap, Boundary, GeometricElements, ImageBuffer};
use dewarp_core::io::{read_bundle, read_elements, read_flow, read_image, write_bundle, write_elements, write_flow, write_image, Flow, IoError};
use dewarp_core::metrics::{local_distortion, ms_ssim, GridDiagnostics};
use dewarp_core::overlay::{draw_elements, draw_grid};
use dewarp_core::pipeline::{detect_vertical_in_working_frame, dewarp, dewarp_baseline, Baseline, DewarpConfig, PipelineError};
use dewarp_core::remap::InversionDiagnostics;
use dewarp_core::solver::SolveDiagnostics;
use dewarp_core::synth::{synth_bundle, WarpKind, WarpSpec};
use serde::Serialize;

use config::{parse_enum, ConfigArgs};

#[derive(Parser, Debug)]
#[command(name = "dewarp", version, about = "Grid-regularized document image dewarping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rectify an image with the grid optimizer.
    #[command(visible_alias = "dewarp")]
    Rectify(RectifyArgs),
    /// Rectify an image by interpolating its boundary (tfi or tps).
    Baseline(BaselineArgs),
    /// Write a synthetic warped page with ground truth to a directory.
    Synth(SynthArgs),
    /// Score a rectified image: MS-SSIM and optionally local distortion.
    Eval(EvalArgs),
    /// Add vertical lines chained from text-line endpoints to an elements file.
    Detect(DetectArgs),
    /// Print the effective configuration as JSON.
    Config(ConfigArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Input image (PNG, PGM or PPM).
    #[arg(long)]
    image: PathBuf,
    /// Elements JSON with boundary, text lines and optional vertical lines.
    #[arg(long)]
    elements: Option<PathBuf>,
    /// Text-line mask; replaces the text lines of --elements, or stands
    /// alone with the image border as boundary.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Rectified image; the extension picks the format.
    #[arg(long, short)]
    out: PathBuf,
    /// Backward map of the result in the binary flow format.
    #[arg(long, value_name = "FILE")]
    backward_flow: Option<PathBuf>,
    /// Input image with the output grid traced over it.
    #[arg(long, value_name = "FILE")]
    grid: Option<PathBuf>,
    /// Output pixels between traced grid lines.
    #[arg(long, default_value_t = 32)]
    grid_step: usize,
}

#[derive(Args, Debug)]
struct RectifyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Run diagnostics as JSON.
    #[arg(long, value_name = "FILE")]
    diagnostics: Option<PathBuf>,
    /// Input image with the elements used by the run drawn over it.
    #[arg(long, value_name = "FILE")]
    overlay: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    /// tfi or tps.
    #[arg(long, value_parser = parse_enum::<Baseline>)]
    method: Baseline,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// cylinder, fold, gaussian_bumps or polynomial.
    #[arg(long, default_value = "cylinder")]
    kind: WarpKind,
    /// Largest displacement in pixels.
    #[arg(long, default_value_t = 24.0)]
    amplitude: f64,
    /// Bump count for gaussian_bumps; random when zero.
    #[arg(long, default_value_t = 0)]
    count: usize,
    #[arg(long, default_value_t = 28)]
    lines: usize,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    /// Lattice size of the stored ground-truth forward map.
    #[arg(long, default_value_t = 128)]
    n: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Image to score.
    #[arg(long)]
    image: PathBuf,
    /// Reference image of the same size.
    #[arg(long, conflicts_with = "bundle")]
    reference: Option<PathBuf>,
    /// Synthetic bundle directory: supplies the flat page and the
    /// ground-truth backward map.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Estimated backward map to compare against the ground truth.
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Ground-truth backward map; taken from --bundle when omitted.
    #[arg(long)]
    gt_flow: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Elements JSON; existing vertical lines are replaced.
    #[arg(long)]
    elements: Option<PathBuf>,
    /// Text-line mask; with no --elements the mask border is the boundary.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Output elements JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Half-width of the search window in working-frame pixels.
    #[arg(long)]
    window_w: Option<f64>,
    /// Height of the search window in working-frame pixels.
    #[arg(long)]
    window_h: Option<f64>,
    /// Angle bound in radians.
    #[arg(long)]
    theta: Option<f64>,
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { code: e.exit_code() as u8, error: e.into() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure { code: 2, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        // Pipeline errors wrapped in context keep their own code.
        let code = error.downcast_ref::<PipelineError>().map_or(2, |e| e.exit_code() as u8);
        Failure { code, error }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rectify(a) => rectify(a),
        Command::Baseline(a) => baseline(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Detect(a) => detect(a),
        Command::Config(a) => a.resolve().map_err(Failure::from).and_then(|c| print_json(&c)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> CmdResult {
    println!("{}", serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?);
    Ok(())
}

fn read_mask_lines(path: &Path) -> anyhow::Result<(Vec<dewarp_core::geom::Polyline>, (usize, usize))> {
    let mut mask = read_image(path)?;
    if mask.channels() != 1 {
        mask = mask.to_gray();
    }
    let lines = extract_text_lines(&mask).with_context(|| format!("extracting text lines from {}", path.display()))?;
    Ok((lines, (mask.width(), mask.height())))
}

fn load_elements(elements: Option<&Path>, mask: Option<&Path>) -> anyhow::Result<GeometricElements> {
    let mut e = match elements {
        Some(path) => Some(read_elements(path)?),
        None => None,
    };
    if let Some(path) = mask {
        let (lines, (w, h)) = read_mask_lines(path)?;
        let base = e.get_or_insert_with(|| GeometricElements {
            boundary: Boundary::rectangle(0.0, 0.0, (w - 1) as f64, (h - 1) as f64),
            text_lines: vec![],
            vertical_lines: vec![],
            image_size: (w, h),
        });
        if base.image_size != (w, h) {
            return Err(anyhow!("mask is {w}x{h} but the elements describe a {}x{} image", base.image_size.0, base.image_size.1));
        }
        base.text_lines = lines;
    }
    e.ok_or_else(|| anyhow!("either --elements or --mask is required"))
}

fn load_inputs(input: &InputArgs) -> anyhow::Result<(ImageBuffer, GeometricElements)> {
    let image = read_image(&input.image)?;
    let elements = load_elements(input.elements.as_deref(), input.mask.as_deref())?;
    Ok((image, elements))
}

fn write_outputs(out: &OutputArgs, input: &ImageBuffer, rectified: &ImageBuffer, bm: &BackwardMap) -> CmdResult {
    write_image(&out.out, rectified)?;
    if let Some(path) = &out.backward_flow {
        write_flow(path, &Flow::from_backward(bm))?;
    }
    if let Some(path) = &out.grid {
        write_image(path, &draw_grid(input, bm, out.grid_step.max(1)))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunReport<'a> {
    seconds: f64,
    input_size: [usize; 2],
    output_size: [usize; 2],
    text_lines: usize,
    vertical_lines: usize,
    solver: &'a [SolveDiagnostics; 2],
    inversion: &'a InversionDiagnostics,
    grid: &'a GridDiagnostics,
    config: &'a DewarpConfig,
}

fn rectify(args: RectifyArgs) -> CmdResult {
    let config = args.config.resolve()?;
    let (image, elements) = load_inputs(&args.input)?;
    let result = dewarp(&image, &elements, &config)?;
    let s = &result.solution;
    write_outputs(&args.output, &image, &result.image, &s.backward)?;
    if let Some(path) = &args.overlay {
        write_image(path, &draw_elements(&image, &s.elements))?;
    }
    let report = RunReport {
        seconds: s.seconds,
        input_size: [image.width(), image.height()],
        output_size: [result.image.width(), result.image.height()],
        text_lines: s.elements.text_lines.len(),
        vertical_lines: s.elements.vertical_lines.len(),
        solver: &s.solver,
        inversion: &s.inversion,
        grid: &s.grid,
        config: &config,
    };
    if let Some(path) = &args.diagnostics {
        dewarp_core::io::write_json(path, &report)?;
    }
    println!(
        "rectified {} in {:.2} s: {} text lines, {} vertical lines, {} folded cells",
        args.input.image.display(),
        s.seconds,
        report.text_lines,
        report.vertical_lines,
        s.grid.fold_count
    );
    Ok(())
}

fn baseline(args: BaselineArgs) -> CmdResult {
    let config = args.config.resolve()?;
    let (image, elements) = load_inputs(&args.input)?;
    let (rectified, bm) = dewarp_baseline(&image, &elements, args.method, &config)?;
    write_outputs(&args.output, &image, &rectified, &bm)
}

fn synth(args: SynthArgs) -> CmdResult {
    let spec = WarpSpec { kind: args.kind, amplitude: args.amplitude, seed: args.seed, count: args.count };
    let bundle = synth_bundle(args.width, args.height, args.lines, &spec, args.n).map_err(anyhow::Error::from)?;
    write_bundle(&args.out, &bundle)?;
    println!("wrote {:?} bundle with seed {} to {}", args.kind, args.seed, args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    ms_ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    local_distortion: Option<f64>,
}

fn eval(args: EvalArgs) -> CmdResult {
    let image = read_image(&args.image)?;
    let bundle = args.bundle.as_deref().map(read_bundle).transpose()?;
    let reference = match (&args.reference, &bundle) {
        (Some(path), _) => read_image(path)?,
        (None, Some(b)) => b.reference_image(image.width(), image.height()),
        (None, None) => return Err(anyhow!("either --reference or --bundle is required").into()),
    };
    let score = ms_ssim(&image, &reference).map_err(anyhow::Error::from)?;
    let local_distortion = match &args.flow {
        Some(path) => {
            let est = read_flow(path)?.to_backward();
            let gt = match (&args.gt_flow, &bundle) {
                (Some(p), _) => read_flow(p)?.to_backward(),
                (None, Some(b)) => b.gt_backward.clone(),
                (None, None) => return Err(anyhow!("--flow needs --gt-flow or --bundle").into()),
            };
            Some(local_distortion(&est, &gt).map_err(anyhow::Error::from)?)
        }
        None => None,
    };
    let report = EvalReport { ms_ssim: score, local_distortion };
    if let Some(path) = &args.out {
        dewarp_core::io::write_json(path, &report)?;
    }
    print_json(&report)
}

fn detect(args: DetectArgs) -> CmdResult {
    let mut elements = load_elements(args.elements.as_deref(), args.mask.as_deref())?;
    let mut params = VerticalDetectParams::default();
    for (slot, v) in [(&mut params.w, args.window_w), (&mut params.h, args.window_h), (&mut params.theta, args.theta)] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    elements.validate().map_err(PipelineError::from)?;
    elements.vertical_lines = detect_vertical_in_working_frame(&elements, &params).map_err(PipelineError::from)?;
    write_elements(&args.out, &elements)?;
    println!("{} vertical lines from {} text lines", elements.vertical_lines.len(), elements.text_lines.len());
    Ok(())
}
