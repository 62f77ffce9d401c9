//! Geometry and field primitives shared by every stage of the pipeline.
//!
//! Conventions used throughout the crate:
//!
//! * Source pixels are `(x, y)` with `x` rightward and `y` downward.
//! * A grid of `n × n` nodes covers the whole source image. Node `(i, j)`
//!   sits at pixel `(i / (n-1) * (W-1), j / (n-1) * (H-1))`, so `i` follows
//!   `x` and `j` follows `y`.
//! * Normalized target coordinates `(u, v)` live in `[0, 1]²` with `u`
//!   growing left to right and `v` growing top to bottom.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("point ({x}, {y}) lies outside the grid [0, {max}]²")]
    OutOfGrid { x: f64, y: f64, max: f64 },
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("polyline needs at least 2 points, got {0}")]
    ShortPolyline(usize),
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("buffer length {got} does not match {width}x{height}x{channels}")]
    BufferSize {
        got: usize,
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("unsupported channel count {0}")]
    Channels(usize),
}

/// A point in source pixel coordinates (or grid units, depending on context).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        Point2::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(p: [f64; 2]) -> Self {
        Point2::new(p[0], p[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// An ordered list of control points.
///
/// Text lines run left to right, vertical lines top to bottom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polyline {
    points: Vec<Point2>,
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeomError> {
        if points.len() < 2 {
            return Err(GeomError::ShortPolyline(points.len()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite("polyline"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        self.points[self.points.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn map(&self, f: impl FnMut(Point2) -> Point2) -> Polyline {
        Polyline {
            points: self.points.iter().copied().map(f).collect(),
        }
    }

    pub fn reversed(&self) -> Polyline {
        let mut points = self.points.clone();
        points.reverse();
        Polyline { points }
    }

    /// Point at arc-length fraction `t ∈ [0, 1]`.
    pub fn point_at_fraction(&self, t: f64) -> Point2 {
        let total = self.arc_length();
        if total == 0.0 {
            return self.first();
        }
        let target = t.clamp(0.0, 1.0) * total;
        let mut walked = 0.0;
        for w in self.points.windows(2) {
            let seg = w[0].distance(w[1]);
            if walked + seg >= target && seg > 0.0 {
                return w[0].lerp(w[1], (target - walked) / seg);
            }
            walked += seg;
        }
        self.last()
    }
}

impl TryFrom<Vec<Point2>> for Polyline {
    type Error = GeomError;
    fn try_from(points: Vec<Point2>) -> Result<Self, GeomError> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Point2> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

/// The four document boundary curves.
///
/// `top` and `bottom` run left to right; `left` and `right` run top to bottom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub top: Polyline,
    pub bottom: Polyline,
    pub left: Polyline,
    pub right: Polyline,
}

impl Boundary {
    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]` with straight two-point sides.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        let line = |a: Point2, b: Point2| Polyline::new(vec![a, b]).expect("two points");
        let tl = Point2::new(x0, y0);
        let tr = Point2::new(x1, y0);
        let bl = Point2::new(x0, y1);
        let br = Point2::new(x1, y1);
        Boundary {
            top: line(tl, tr),
            bottom: line(bl, br),
            left: line(tl, bl),
            right: line(tr, br),
        }
    }

    pub fn sides(&self) -> [(Side, &Polyline); 4] {
        [
            (Side::Top, &self.top),
            (Side::Bottom, &self.bottom),
            (Side::Left, &self.left),
            (Side::Right, &self.right),
        ]
    }

    pub fn map(&self, mut f: impl FnMut(Point2) -> Point2) -> Boundary {
        Boundary {
            top: self.top.map(&mut f),
            bottom: self.bottom.map(&mut f),
            left: self.left.map(&mut f),
            right: self.right.map(&mut f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Top,
    Bottom,
    Left,
    Right,
}

/// Boundary, text lines and vertical lines of one document image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricElements {
    pub boundary: Boundary,
    #[serde(default)]
    pub text_lines: Vec<Polyline>,
    #[serde(default)]
    pub vertical_lines: Vec<Polyline>,
    /// `(width, height)` in pixels.
    pub image_size: (usize, usize),
}

impl GeometricElements {
    pub fn map(&self, mut f: impl FnMut(Point2) -> Point2) -> GeometricElements {
        GeometricElements {
            boundary: self.boundary.map(&mut f),
            text_lines: self.text_lines.iter().map(|l| l.map(&mut f)).collect(),
            vertical_lines: self.vertical_lines.iter().map(|l| l.map(&mut f)).collect(),
            image_size: self.image_size,
        }
    }

    /// Every control point of every element.
    pub fn all_points(&self) -> impl Iterator<Item = Point2> + '_ {
        self.boundary
            .sides()
            .into_iter()
            .flat_map(|(_, l)| l.points().iter().copied())
            .chain(self.text_lines.iter().flat_map(|l| l.points().iter().copied()))
            .chain(
                self.vertical_lines
                    .iter()
                    .flat_map(|l| l.points().iter().copied()),
            )
    }

    /// Checks that every point lies inside `[0, W] × [0, H]`.
    pub fn validate(&self) -> Result<(), GeomError> {
        let (w, h) = self.image_size;
        for p in self.all_points() {
            if !p.is_finite() {
                return Err(GeomError::NonFinite("elements"));
            }
            if p.x < 0.0 || p.y < 0.0 || p.x > w as f64 || p.y > h as f64 {
                return Err(GeomError::OutOfGrid {
                    x: p.x,
                    y: p.y,
                    max: w.max(h) as f64,
                });
            }
        }
        Ok(())
    }
}

/// An `n × n` field of 2-vectors over the source grid.
///
/// For the optimizer this is the forward map `(x, y) ↦ (u, v)`. The
/// interpolation baselines reuse the type for target→source lattices with
/// values in normalized source coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    values: Vec<[f64; 2]>,
}

impl GridField {
    pub fn new(n: usize, values: Vec<[f64; 2]>) -> Result<Self, GeomError> {
        if n < 2 {
            return Err(GeomError::GridTooSmall(n));
        }
        if values.len() != n * n {
            return Err(GeomError::BufferSize {
                got: values.len(),
                width: n,
                height: n,
                channels: 2,
            });
        }
        Ok(Self { n, values })
    }

    /// The uniform field `(i / (n-1), j / (n-1))`.
    pub fn uniform(n: usize) -> Self {
        Self::from_fn(n, |i, j| {
            let s = (n - 1) as f64;
            [i as f64 / s, j as f64 / s]
        })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> [f64; 2]) -> Self {
        assert!(n >= 2, "grid size must be at least 2");
        let mut values = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                values.push(f(i, j));
            }
        }
        Self { n, values }
    }

    pub fn from_channels(n: usize, u: &[f64], v: &[f64]) -> Result<Self, GeomError> {
        if u.len() != n * n || v.len() != n * n {
            return Err(GeomError::BufferSize {
                got: u.len().min(v.len()),
                width: n,
                height: n,
                channels: 2,
            });
        }
        Self::new(n, u.iter().zip(v).map(|(&a, &b)| [a, b]).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        self.values[j * self.n + i]
    }

    pub fn set(&mut self, i: usize, j: usize, value: [f64; 2]) {
        self.values[j * self.n + i] = value;
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    /// One component as a flat row-major vector (index `j * n + i`).
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[c]).collect()
    }

    pub fn max_abs_diff(&self, other: &GridField) -> f64 {
        assert_eq!(self.n, other.n);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v[0].is_finite() && v[1].is_finite())
    }

    /// Source pixel position of node `(i, j)` for an image of `width × height`.
    pub fn node_position(&self, i: usize, j: usize, width: usize, height: usize) -> Point2 {
        node_position(self.n, i, j, width, height)
    }

    /// Bilinear evaluation at a point in grid units.
    pub fn interpolate(&self, p: Point2) -> Result<[f64; 2], GeomError> {
        let st = bilinear_weights(p, self.n)?;
        let mut out = [0.0; 2];
        for (&(i, j), &w) in st.nodes.iter().zip(&st.weights) {
            let v = self.get(i, j);
            out[0] += w * v[0];
            out[1] += w * v[1];
        }
        Ok(out)
    }
}

pub fn node_position(n: usize, i: usize, j: usize, width: usize, height: usize) -> Point2 {
    let s = (n - 1) as f64;
    Point2::new(
        i as f64 / s * (width as f64 - 1.0),
        j as f64 / s * (height as f64 - 1.0),
    )
}

/// Maps a source pixel coordinate to grid units.
pub fn pixel_to_grid(p: Point2, n: usize, width: usize, height: usize) -> Point2 {
    let s = (n - 1) as f64;
    Point2::new(
        p.x / (width as f64 - 1.0) * s,
        p.y / (height as f64 - 1.0) * s,
    )
}

/// Target pixel → source coordinate, with an explicit validity flag per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardMap {
    width: usize,
    height: usize,
    coords: Vec<[f64; 2]>,
    valid: Vec<bool>,
}

impl BackwardMap {
    /// A map with every pixel marked as a hole.
    pub fn holes(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            coords: vec![[0.0; 2]; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<[f64; 2]>,
    ) -> Self {
        let mut bm = Self::holes(width, height);
        for y in 0..height {
            for x in 0..width {
                if let Some(c) = f(x, y) {
                    bm.set(x, y, c);
                }
            }
        }
        bm
    }

    /// The identity map over a `width × height` frame.
    pub fn identity(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |x, y| Some([x as f64, y as f64]))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Option<[f64; 2]> {
        let k = y * self.width + x;
        self.valid[k].then_some(self.coords[k])
    }

    pub fn set(&mut self, x: usize, y: usize, c: [f64; 2]) {
        let k = y * self.width + x;
        self.coords[k] = c;
        self.valid[k] = true;
    }

    pub fn clear(&mut self, x: usize, y: usize) {
        self.valid[y * self.width + x] = false;
    }

    pub fn hole_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// Raw coordinates, row-major. Holes carry unspecified values.
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }
}

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self, GeomError> {
        Self::from_raw(width, height, channels, vec![0; width * height * channels])
    }

    pub fn from_raw(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, GeomError> {
        if channels != 1 && channels != 3 {
            return Err(GeomError::Channels(channels));
        }
        if data.len() != width * height * channels {
            return Err(GeomError::BufferSize {
                got: data.len(),
                width,
                height,
                channels,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self::from_raw(width, height, channels, vec![value; width * height * channels])
            .expect("channel count checked by caller")
    }

    pub fn gray_from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, value: u8) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    /// Bilinear sample of channel `c`, clamping coordinates to the image.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let dx = x - x0 as f64;
        let dy = y - y0 as f64;
        let p00 = self.get(x0, y0, c) as f64;
        let p10 = self.get(x1, y0, c) as f64;
        let p01 = self.get(x0, y1, c) as f64;
        let p11 = self.get(x1, y1, c) as f64;
        (1.0 - dx) * (1.0 - dy) * p00 + dx * (1.0 - dy) * p10 + (1.0 - dx) * dy * p01 + dx * dy * p11
    }

    /// Rec. 601 luma for RGB inputs; gray inputs are returned unchanged.
    pub fn to_gray(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| {
                let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
                y.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&g| [g, g, g]).collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Gray samples as `f64`, row-major.
    pub fn gray_f64(&self) -> Vec<f64> {
        self.to_gray().data.iter().map(|&v| v as f64).collect()
    }
}

/// The four grid nodes enclosing a point and their bilinear weights.
///
/// Nodes are ordered `(i0, j0), (i0+1, j0), (i0, j0+1), (i0+1, j0+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearStencil {
    pub nodes: [(usize, usize); 4],
    pub weights: [f64; 4],
}

impl BilinearStencil {
    /// Flat indices `j * n + i` of the four nodes.
    pub fn flat_indices(&self, n: usize) -> [usize; 4] {
        self.nodes.map(|(i, j)| j * n + i)
    }
}

/// Bilinear coupling of a point given in grid units to its enclosing cell.
pub fn bilinear_weights(p: Point2, n: usize) -> Result<BilinearStencil, GeomError> {
    if n < 2 {
        return Err(GeomError::GridTooSmall(n));
    }
    let max = (n - 1) as f64;
    if !(p.x >= 0.0 && p.x <= max && p.y >= 0.0 && p.y <= max) {
        return Err(GeomError::OutOfGrid { x: p.x, y: p.y, max });
    }
    let i0 = (p.x.floor() as usize).min(n - 2);
    let j0 = (p.y.floor() as usize).min(n - 2);
    let dx = p.x - i0 as f64;
    let dy = p.y - j0 as f64;
    Ok(BilinearStencil {
        nodes: [(i0, j0), (i0 + 1, j0), (i0, j0 + 1), (i0 + 1, j0 + 1)],
        weights: [
            (1.0 - dx) * (1.0 - dy),
            dx * (1.0 - dy),
            (1.0 - dx) * dy,
            dx * dy,
        ],
    })
}

/// Samples a polyline at constant arc-length spacing, always keeping both ends.
///
/// Returns an empty list for a zero-length polyline.
pub fn resample_polyline(line: &Polyline, interval: f64) -> Vec<Point2> {
    assert!(interval > 0.0, "interval must be positive");
    let total = line.arc_length();
    if total <= 0.0 {
        return Vec::new();
    }
    let pts = line.points();
    let mut out = vec![pts[0]];
    // Stop short of the end so the endpoint is never duplicated.
    let eps = 1e-9 * total.max(1.0);
    let mut next = interval;
    let mut walked = 0.0;
    for w in pts.windows(2) {
        let seg = w[0].distance(w[1]);
        while seg > 0.0 && next <= walked + seg && next < total - eps {
            out.push(w[0].lerp(w[1], (next - walked) / seg));
            next += interval;
        }
        walked += seg;
    }
    out.push(line.last());
    out
}
