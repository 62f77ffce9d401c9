//! Synthetic pages, smooth warps and ground-truth flows.
//!
//! A warp is an analytic map `W(p) = p + D(p)` from flat page pixels to
//! warped image pixels. The warped image samples the flat page at `W⁻¹`, the
//! warped elements are the flat elements pushed through `W`, and the ground
//! truth flows are expressed relative to the flat page rectangle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{node_position, BackwardMap, Boundary, GeometricElements, GridField, ImageBuffer, Point2, Polyline};
use crate::remap::resample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("page needs at least one text line")]
    NoLines,
    #[error("page size {0}x{1} is too small")]
    Size(usize, usize),
    #[error("{0} lines do not fit on the page")]
    Crowded(usize),
    #[error("amplitude must be finite and non-negative, got {0}")]
    Amplitude(f64),
    #[error("warp folds or nearly folds (min Jacobian determinant {0:.3}); use a smaller amplitude")]
    Folds(f64),
    #[error("inverse warp did not converge at ({0:.1}, {1:.1})")]
    Inverse(f64, f64),
}

pub const BACKGROUND: u8 = 64;
pub const PAPER: u8 = 255;
pub const INK: u8 = 0;

/// Page geometry in units of a 512-pixel page; scaled with the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PageLayout {
    /// Inset of the page rectangle, as a fraction of each image side.
    pub margin: f64,
    /// Inset of the text block inside the page, as a fraction of each page side.
    pub padding: f64,
    pub line_pitch: f64,
    pub bar_thickness: f64,
    pub indent: f64,
    /// Largest random shortening of a non-final paragraph line, in pixels;
    /// zero gives a justified right margin.
    pub ragged: f64,
}

impl Default for PageLayout {
    fn default() -> Self {
        Self {
            margin: 0.1,
            padding: 0.06,
            line_pitch: 12.0,
            bar_thickness: 6.0,
            indent: 24.0,
            ragged: 0.0,
        }
    }
}

/// Page rectangle `[x0, x1] × [y0, y1]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PageRect {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            x1: width as f64 - 1.0,
            y1: height as f64 - 1.0,
        }
    }

    /// Pixel at normalized page position `(u, v)`.
    pub fn point(&self, u: f64, v: f64) -> Point2 {
        Point2::new(self.x0 + u * (self.x1 - self.x0), self.y0 + v * (self.y1 - self.y0))
    }

    /// Normalized page position of a pixel.
    pub fn normalize(&self, p: Point2) -> [f64; 2] {
        [(p.x - self.x0) / (self.x1 - self.x0), (p.y - self.y0) / (self.y1 - self.y0)]
    }

    pub fn boundary(&self) -> Boundary {
        Boundary::rectangle(self.x0, self.y0, self.x1, self.y1)
    }

    /// Backward map sampling this rectangle onto a `width × height` frame.
    pub fn crop_map(&self, width: usize, height: usize) -> BackwardMap {
        let (sx, sy) = ((width - 1) as f64, (height - 1) as f64);
        BackwardMap::from_fn(width, height, |x, y| {
            let p = self.point(x as f64 / sx, y as f64 / sy);
            Some([p.x, p.y])
        })
    }
}

/// A rendered flat page and its exact elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub image: ImageBuffer,
    pub elements: GeometricElements,
    pub rect: PageRect,
}

/// White page with black text bars on a dark background.
pub fn render_page(width: usize, height: usize, line_count: usize, seed: u64) -> Result<Page, SynthError> {
    render_page_with(&PageLayout::default(), width, height, line_count, seed)
}

pub fn render_page_with(
    layout: &PageLayout,
    width: usize,
    height: usize,
    line_count: usize,
    seed: u64,
) -> Result<Page, SynthError> {
    if line_count == 0 {
        return Err(SynthError::NoLines);
    }
    if width < 64 || height < 64 {
        return Err(SynthError::Size(width, height));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = width.min(height) as f64 / 512.0;
    let mx = (layout.margin * width as f64).round();
    let my = (layout.margin * height as f64).round();
    let rect = PageRect {
        x0: mx,
        y0: my,
        x1: width as f64 - 1.0 - mx,
        y1: height as f64 - 1.0 - my,
    };
    let px = (layout.padding * (rect.x1 - rect.x0)).round();
    let py = (layout.padding * (rect.y1 - rect.y0)).round();
    let (left, right) = (rect.x0 + px, rect.x1 - px);
    let (top, bottom) = (rect.y0 + py, rect.y1 - py);

    let avail = bottom - top;
    // Bars stay at least 2 px thick with 4 px gaps on small images.
    let thickness = (layout.bar_thickness * scale).round().max(2.0);
    let pitch = (layout.line_pitch * scale)
        .max(thickness + 4.0)
        .min(avail / line_count as f64)
        .floor();
    if pitch < thickness + 4.0 {
        return Err(SynthError::Crowded(line_count));
    }
    let thickness = thickness as usize;
    let first_row = top;

    let mut bars = Vec::with_capacity(line_count);
    let mut remaining_in_paragraph = 0usize;
    for k in 0..line_count {
        let paragraph_start = remaining_in_paragraph == 0;
        if paragraph_start {
            remaining_in_paragraph = rng.gen_range(3..8);
        }
        remaining_in_paragraph -= 1;
        let paragraph_end = remaining_in_paragraph == 0 || k + 1 == line_count;
        let indent = if paragraph_start { (layout.indent * scale).round() } else { 0.0 };
        let xa = left + indent;
        let full = right - xa;
        let xb = if paragraph_end {
            xa + (full * rng.gen_range(0.3..0.8)).round()
        } else {
            right - rng.gen_range(0.0..=layout.ragged * scale).round()
        };
        let ya = first_row + (k as f64 * pitch);
        bars.push((xa as usize, xb as usize, ya as usize, ya as usize + thickness - 1));
    }

    let (x0, y0, x1, y1) = (rect.x0 as usize, rect.y0 as usize, rect.x1 as usize, rect.y1 as usize);
    let mut image = ImageBuffer::gray_from_fn(width, height, |x, y| {
        if x >= x0 && x <= x1 && y >= y0 && y <= y1 {
            PAPER
        } else {
            BACKGROUND
        }
    });
    let mut text_lines = Vec::with_capacity(line_count);
    for &(xa, xb, ya, yb) in &bars {
        for y in ya..=yb {
            for x in xa..=xb {
                image.set(x, y, 0, INK);
            }
        }
        let yc = 0.5 * (ya + yb) as f64;
        text_lines.push(dense_segment(Point2::new(xa as f64, yc), Point2::new(xb as f64, yc), 4.0));
    }
    let boundary = Boundary {
        top: dense_segment(rect.point(0.0, 0.0), rect.point(1.0, 0.0), 4.0),
        bottom: dense_segment(rect.point(0.0, 1.0), rect.point(1.0, 1.0), 4.0),
        left: dense_segment(rect.point(0.0, 0.0), rect.point(0.0, 1.0), 4.0),
        right: dense_segment(rect.point(1.0, 0.0), rect.point(1.0, 1.0), 4.0),
    };
    Ok(Page {
        image,
        elements: GeometricElements {
            boundary,
            text_lines,
            vertical_lines: Vec::new(),
            image_size: (width, height),
        },
        rect,
    })
}

/// Straight polyline with points at most `step` apart, so that it stays
/// accurate after being pushed through a smooth warp.
fn dense_segment(a: Point2, b: Point2, step: f64) -> Polyline {
    let k = ((a.distance(b) / step).ceil() as usize).max(1);
    Polyline::new((0..=k).map(|t| a.lerp(b, t as f64 / k as f64)).collect()).expect("two or more points")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpKind {
    Cylinder,
    Fold,
    GaussianBumps,
    Polynomial,
}

impl std::str::FromStr for WarpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cylinder" => Ok(Self::Cylinder),
            "fold" => Ok(Self::Fold),
            "gaussian_bumps" | "bumps" => Ok(Self::GaussianBumps),
            "polynomial" => Ok(Self::Polynomial),
            other => Err(format!("unknown warp kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpSpec {
    pub kind: WarpKind,
    /// Largest displacement in pixels.
    pub amplitude: f64,
    pub seed: u64,
    /// Bump count for [`WarpKind::GaussianBumps`] (2 to 4 when zero).
    #[serde(default)]
    pub count: usize,
}

/// Parameters of one displacement field, in image-normalized coordinates
/// `X = x / (W-1)`, `Y = y / (H-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Shape {
    /// Vertical displacement `Σ a_k sin(f_k X + φ_k)` depending on `X` only.
    Cylinder { terms: Vec<[f64; 3]> },
    /// Smooth crease: vertical displacement `sqrt(d² + s²) - s` of the signed
    /// distance `d` to a near-vertical line, plus a small tilt.
    Fold { point: [f64; 2], normal: [f64; 2], softness: f64, tilt: f64 },
    /// Sum of Gaussian bumps `(cx, cy, sigma, dx, dy)`.
    GaussianBumps { bumps: Vec<[f64; 5]> },
    /// Cubic polynomial per component, coefficients of `X^a Y^b`, `a + b ≤ 3`.
    Polynomial { cx: Vec<f64>, cy: Vec<f64> },
}

const MONOMIALS: [(i32, i32); 10] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)];

impl Shape {
    fn unit(&self, x: f64, y: f64) -> [f64; 2] {
        match self {
            Shape::Cylinder { terms } => [0.0, terms.iter().map(|t| t[0] * (t[1] * x + t[2]).sin()).sum()],
            Shape::Fold { point, normal, softness, tilt } => {
                let d = (x - point[0]) * normal[0] + (y - point[1]) * normal[1];
                let s = *softness;
                let bend = (d * d + s * s).sqrt() - s;
                [tilt * bend, bend]
            }
            Shape::GaussianBumps { bumps } => {
                let mut out = [0.0; 2];
                for b in bumps {
                    let r2 = (x - b[0]).powi(2) + (y - b[1]).powi(2);
                    let g = (-r2 / (2.0 * b[2] * b[2])).exp();
                    out[0] += b[3] * g;
                    out[1] += b[4] * g;
                }
                out
            }
            Shape::Polynomial { cx, cy } => {
                let mut out = [0.0; 2];
                for (k, &(a, b)) in MONOMIALS.iter().enumerate() {
                    let m = x.powi(a) * y.powi(b);
                    out[0] += cx[k] * m;
                    out[1] += cy[k] * m;
                }
                out
            }
        }
    }

    fn random(spec: &WarpSpec, rng: &mut ChaCha8Rng) -> Shape {
        use std::f64::consts::PI;
        match spec.kind {
            WarpKind::Cylinder => {
                let mut terms = vec![[1.0, rng.gen_range(0.8..1.3) * PI, rng.gen_range(-0.3..0.3)]];
                if rng.gen_bool(0.5) {
                    terms.push([rng.gen_range(-0.3..0.3), rng.gen_range(1.5..2.5) * PI, rng.gen_range(0.0..2.0 * PI)]);
                }
                if rng.gen_bool(0.5) {
                    terms[0][0] = -1.0;
                }
                Shape::Cylinder { terms }
            }
            WarpKind::Fold => {
                let angle: f64 = rng.gen_range(-0.25..0.25);
                Shape::Fold {
                    point: [rng.gen_range(0.35..0.65), 0.5],
                    normal: [angle.cos(), angle.sin()],
                    softness: rng.gen_range(0.03..0.1),
                    tilt: rng.gen_range(-0.2..0.2),
                }
            }
            WarpKind::GaussianBumps => {
                let count = if spec.count == 0 { rng.gen_range(2..=4) } else { spec.count };
                let bumps = (0..count)
                    .map(|_| {
                        let dir: f64 = rng.gen_range(0.0..2.0 * PI);
                        let mag: f64 = rng.gen_range(0.5..1.0);
                        [
                            rng.gen_range(0.15..0.85),
                            rng.gen_range(0.15..0.85),
                            rng.gen_range(0.25..0.45),
                            mag * dir.cos(),
                            mag * dir.sin(),
                        ]
                    })
                    .collect();
                Shape::GaussianBumps { bumps }
            }
            WarpKind::Polynomial => {
                let mut coeffs = || {
                    let mut c: Vec<f64> = (0..MONOMIALS.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    // Constant and linear parts only translate/shear the page.
                    c[0] = 0.0;
                    c
                };
                let cx = coeffs();
                let cy = coeffs();
                Shape::Polynomial { cx, cy }
            }
        }
    }
}

/// A smooth, invertible warp of a `width × height` image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warp {
    pub spec: WarpSpec,
    pub width: usize,
    pub height: usize,
    shape: Shape,
    /// Pixels per unit of the shape's raw displacement.
    gain: f64,
}

const SCAN_STEP: usize = 4;

impl Warp {
    /// Displacement `D(p)` in pixels.
    pub fn displacement(&self, p: Point2) -> Point2 {
        if self.gain == 0.0 {
            return Point2::default();
        }
        let (sx, sy) = ((self.width - 1) as f64, (self.height - 1) as f64);
        let d = self.shape.unit(p.x / sx, p.y / sy);
        Point2::new(self.gain * d[0], self.gain * d[1])
    }

    /// Flat page pixel → warped image pixel.
    pub fn forward(&self, p: Point2) -> Point2 {
        p + self.displacement(p)
    }

    /// Jacobian of [`Warp::forward`] by central differences.
    pub fn jacobian(&self, p: Point2) -> [[f64; 2]; 2] {
        let h = 0.25;
        let dx = self.forward(p + Point2::new(h, 0.0)) - self.forward(p - Point2::new(h, 0.0));
        let dy = self.forward(p + Point2::new(0.0, h)) - self.forward(p - Point2::new(0.0, h));
        [[dx.x / (2.0 * h), dy.x / (2.0 * h)], [dx.y / (2.0 * h), dy.y / (2.0 * h)]]
    }

    /// Warped image pixel → flat page pixel, by Newton iteration.
    pub fn inverse(&self, q: Point2) -> Result<Point2, SynthError> {
        let mut p = q - self.displacement(q);
        for _ in 0..50 {
            let r = self.forward(p) - q;
            if r.x.hypot(r.y) < 1e-10 {
                return Ok(p);
            }
            let j = self.jacobian(p);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if !(det.abs() > 1e-12) {
                break;
            }
            p = p - Point2::new((j[1][1] * r.x - j[0][1] * r.y) / det, (j[0][0] * r.y - j[1][0] * r.x) / det);
        }
        let r = self.forward(p) - q;
        if r.x.hypot(r.y) < 1e-6 {
            Ok(p)
        } else {
            Err(SynthError::Inverse(q.x, q.y))
        }
    }

    /// Smallest Jacobian determinant on a dense scan of the image.
    pub fn min_jacobian_det(&self) -> f64 {
        let xs: Vec<usize> = (0..self.width).step_by(SCAN_STEP).chain([self.width - 1]).collect();
        let ys: Vec<usize> = (0..self.height).step_by(SCAN_STEP).chain([self.height - 1]).collect();
        ys.par_iter()
            .map(|&y| {
                xs.iter()
                    .map(|&x| {
                        let j = self.jacobian(Point2::new(x as f64, y as f64));
                        j[0][0] * j[1][1] - j[0][1] * j[1][0]
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| f64::INFINITY, f64::min)
    }
}

/// Smallest Jacobian determinant accepted as fold-free.
pub const MIN_JACOBIAN_DET: f64 = 0.2;

/// Draws a warp of the given family, scaled so that the largest displacement
/// over the image equals `spec.amplitude`.
pub fn make_warp(spec: &WarpSpec, width: usize, height: usize) -> Result<Warp, SynthError> {
    if !(spec.amplitude >= 0.0 && spec.amplitude.is_finite()) {
        return Err(SynthError::Amplitude(spec.amplitude));
    }
    if width < 2 || height < 2 {
        return Err(SynthError::Size(width, height));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shape = Shape::random(spec, &mut rng);
    let samples = 65;
    let mut peak: f64 = 0.0;
    for j in 0..samples {
        for i in 0..samples {
            let s = (samples - 1) as f64;
            let d = shape.unit(i as f64 / s, j as f64 / s);
            peak = peak.max(d[0].hypot(d[1]));
        }
    }
    let gain = if spec.amplitude == 0.0 || peak == 0.0 { 0.0 } else { spec.amplitude / peak };
    let warp = Warp {
        spec: *spec,
        width,
        height,
        shape,
        gain,
    };
    let det = warp.min_jacobian_det();
    if det < MIN_JACOBIAN_DET {
        return Err(SynthError::Folds(det));
    }
    Ok(warp)
}

/// Ground-truth forward field on the `n × n` grid of the warped image:
/// node → normalized flat page position.
pub fn gt_forward(warp: &Warp, rect: &PageRect, n: usize) -> Result<GridField, SynthError> {
    let (w, h) = (warp.width, warp.height);
    let values: Result<Vec<[f64; 2]>, SynthError> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let p = warp.inverse(node_position(n, k % n, k / n, w, h))?;
            Ok(rect.normalize(p))
        })
        .collect();
    Ok(GridField::new(n, values?).expect("n*n values"))
}

/// Ground-truth backward map on an `out_w × out_h` document frame:
/// output pixel → warped image pixel.
pub fn gt_backward(warp: &Warp, rect: &PageRect, out_w: usize, out_h: usize) -> BackwardMap {
    let (sx, sy) = ((out_w - 1) as f64, (out_h - 1) as f64);
    BackwardMap::from_fn(out_w, out_h, |x, y| {
        let q = warp.forward(rect.point(x as f64 / sx, y as f64 / sy));
        Some([q.x, q.y])
    })
}

/// Everything needed to score a dewarping method on one synthetic case.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpBundle {
    pub flat_image: ImageBuffer,
    pub flat_elements: GeometricElements,
    pub warped_image: ImageBuffer,
    pub warped_elements: GeometricElements,
    pub rect: PageRect,
    pub warp: Warp,
    pub gt_forward: GridField,
    /// Document frame of the image's own size → warped pixel.
    pub gt_backward: BackwardMap,
}

impl WarpBundle {
    /// The flat page rectangle resampled to `width × height`.
    pub fn reference_image(&self, width: usize, height: usize) -> ImageBuffer {
        resample(&self.flat_image, &self.rect.crop_map(width, height))
    }
}

/// Warps a flat page. `n` is the ground-truth forward grid size.
pub fn apply_warp(page: &Page, warp: &Warp, n: usize) -> Result<WarpBundle, SynthError> {
    let (w, h) = (page.image.width(), page.image.height());
    if (warp.width, warp.height) != (w, h) {
        return Err(SynthError::Size(warp.width, warp.height));
    }
    let inverse: Result<Vec<[f64; 2]>, SynthError> = (0..w * h)
        .into_par_iter()
        .map(|k| {
            let p = warp.inverse(Point2::new((k % w) as f64, (k / w) as f64))?;
            Ok([p.x, p.y])
        })
        .collect();
    let inverse = inverse?;
    let bm = BackwardMap::from_fn(w, h, |x, y| Some(inverse[y * w + x]));
    let warped_image = resample(&page.image, &bm);
    let warped_elements = page.elements.map(|p| warp.forward(p));
    Ok(WarpBundle {
        flat_image: page.image.clone(),
        flat_elements: page.elements.clone(),
        warped_image,
        warped_elements,
        rect: page.rect,
        warp: warp.clone(),
        gt_forward: gt_forward(warp, &page.rect, n)?,
        gt_backward: gt_backward(warp, &page.rect, w, h),
    })
}

/// Renders a page and warps it in one step.
pub fn synth_bundle(
    width: usize,
    height: usize,
    line_count: usize,
    spec: &WarpSpec,
    n: usize,
) -> Result<WarpBundle, SynthError> {
    let page = render_page(width, height, line_count, spec.seed)?;
    let warp = make_warp(spec, width, height)?;
    apply_warp(&page, &warp, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_page() {
        let p = render_page(256, 256, 1, 3).unwrap();
        assert_eq!(p.elements.text_lines.len(), 1);
        assert!(p.image.data().contains(&INK));
    }

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(render_page(300, 200, 8, 42).unwrap(), render_page(300, 200, 8, 42).unwrap());
    }

    #[test]
    fn twenty_lines_fit_with_gaps() {
        let p = render_page(512, 512, 20, 1).unwrap();
        let ys: Vec<f64> = p.elements.text_lines.iter().map(|l| l.first().y).collect();
        for w in ys.windows(2) {
            // Pitch minus thickness.
            assert!(w[1] - w[0] - 6.0 >= 4.0);
        }
        for l in &p.elements.text_lines {
            assert!(l.first().x >= p.rect.x0 && l.last().x <= p.rect.x1);
            assert!(l.last().y <= p.rect.y1);
        }
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let spec = WarpSpec { kind: WarpKind::GaussianBumps, amplitude: 0.0, seed: 1, count: 0 };
        let w = make_warp(&spec, 128, 128).unwrap();
        let q = Point2::new(17.0, 90.5);
        assert_eq!(w.forward(q), q);
        let page = render_page(128, 128, 5, 1).unwrap();
        let b = apply_warp(&page, &w, 9).unwrap();
        assert_eq!(b.warped_image, b.flat_image);
    }

    #[test]
    fn cylinder_moves_columns_rigidly() {
        let spec = WarpSpec { kind: WarpKind::Cylinder, amplitude: 20.0, seed: 5, count: 0 };
        let w = make_warp(&spec, 256, 256).unwrap();
        for x in [10.0, 100.0, 200.0] {
            let d0 = w.displacement(Point2::new(x, 10.0));
            let d1 = w.displacement(Point2::new(x, 240.0));
            assert_eq!(d0.x, 0.0);
            assert!((d0.y - d1.y).abs() < 1e-12);
        }
    }

    #[test]
    fn amplitude_is_the_peak_displacement() {
        for kind in [WarpKind::Cylinder, WarpKind::Fold, WarpKind::GaussianBumps, WarpKind::Polynomial] {
            let spec = WarpSpec { kind, amplitude: 12.0, seed: 11, count: 0 };
            let w = make_warp(&spec, 129, 129).unwrap();
            let mut peak: f64 = 0.0;
            for y in 0..129 {
                for x in 0..129 {
                    let d = w.displacement(Point2::new(x as f64, y as f64));
                    peak = peak.max(d.x.hypot(d.y));
                }
            }
            assert!((peak - 12.0).abs() < 0.05, "{kind:?}: {peak}");
            assert!(w.min_jacobian_det() > MIN_JACOBIAN_DET);
        }
    }

    #[test]
    fn excessive_amplitude_rejected() {
        let spec = WarpSpec { kind: WarpKind::Fold, amplitude: 400.0, seed: 2, count: 0 };
        assert!(matches!(make_warp(&spec, 128, 128), Err(SynthError::Folds(_))));
    }

    #[test]
    fn inverse_round_trip() {
        let spec = WarpSpec { kind: WarpKind::GaussianBumps, amplitude: 25.0, seed: 9, count: 3 };
        let w = make_warp(&spec, 300, 300).unwrap();
        for p in [Point2::new(0.0, 0.0), Point2::new(150.5, 20.25), Point2::new(299.0, 299.0)] {
            assert!(w.forward(w.inverse(p).unwrap()).distance(p) < 1e-8);
        }
    }

    #[test]
    fn text_lines_are_level_sets_of_ground_truth() {
        let spec = WarpSpec { kind: WarpKind::Cylinder, amplitude: 15.0, seed: 4, count: 0 };
        let b = synth_bundle(256, 256, 10, &spec, 33).unwrap();
        for (flat, warped) in b.flat_elements.text_lines.iter().zip(&b.warped_elements.text_lines) {
            let v = b.rect.normalize(flat.first())[1];
            for q in warped.points() {
                let p = b.warp.inverse(*q).unwrap();
                assert!((b.rect.normalize(p)[1] - v).abs() < 1e-6);
            }
        }
    }
}
