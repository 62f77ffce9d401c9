//! Geometric element extraction: text-line polylines from a binary mask and
//! vertical lines chained from text-line endpoints.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{ImageBuffer, Point2, Polyline};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementsError {
    #[error("text-line mask must be single-channel, got {0} channels")]
    MaskChannels(usize),
    #[error("vertical line detection needs at least 2 text lines, got {0}")]
    TooFewLines(usize),
    #[error("invalid detection parameters: {0}")]
    Params(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointSide {
    Left,
    Right,
}

/// A text-line endpoint with its estimated vertical direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint {
    pub position: Point2,
    pub side: EndpointSide,
    /// Unit vector perpendicular to the line near this end.
    pub direction: Point2,
}

/// Search window and angle bound for endpoint chaining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerticalDetectParams {
    /// Half-width of the search window, pixels.
    pub w: f64,
    /// Height of the search window, pixels.
    pub h: f64,
    /// Maximum angle between a connection and the endpoint direction, radians.
    pub theta: f64,
}

impl Default for VerticalDetectParams {
    fn default() -> Self {
        Self {
            w: 15.0,
            h: 15.0,
            theta: 0.45f64.atan(),
        }
    }
}

impl VerticalDetectParams {
    pub fn validate(&self) -> Result<(), ElementsError> {
        if !(self.w > 0.0 && self.h > 0.0) {
            return Err(ElementsError::Params("w and h must be positive"));
        }
        if !(self.theta > 0.0 && self.theta < std::f64::consts::FRAC_PI_2) {
            return Err(ElementsError::Params("theta must lie in (0, pi/2)"));
        }
        Ok(())
    }
}

const MIN_COMPONENT_PIXELS: usize = 32;
const CONTROL_POINT_STEP: usize = 8;

/// Traces one polyline per elongated connected component of a binary mask.
///
/// Components are 8-connected. A component is kept when it has at least 32
/// pixels and is at least twice as wide as tall. The polyline follows the
/// per-column centroid with a control point every 8 columns plus the last
/// column. Output is sorted by leftmost x, then y.
pub fn extract_text_lines(mask: &ImageBuffer) -> Result<Vec<Polyline>, ElementsError> {
    if mask.channels() != 1 {
        return Err(ElementsError::MaskChannels(mask.channels()));
    }
    let (w, h) = (mask.width(), mask.height());
    let fg = |x: usize, y: usize| mask.get(x, y, 0) >= 128;
    let mut label = vec![usize::MAX; w * h];
    let mut lines = Vec::new();
    let mut queue = VecDeque::new();
    let mut next_label = 0;

    for sy in 0..h {
        for sx in 0..w {
            if !fg(sx, sy) || label[sy * w + sx] != usize::MAX {
                continue;
            }
            // Flood fill, collecting per-column sums.
            let id = next_label;
            next_label += 1;
            label[sy * w + sx] = id;
            queue.push_back((sx, sy));
            let mut pixels = Vec::new();
            while let Some((x, y)) = queue.pop_front() {
                pixels.push((x, y));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if fg(nx, ny) && label[ny * w + nx] == usize::MAX {
                            label[ny * w + nx] = id;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            if let Some(line) = trace_component(&pixels) {
                lines.push(line);
            }
        }
    }

    lines.sort_by(|a: &Polyline, b: &Polyline| {
        a.first()
            .x
            .total_cmp(&b.first().x)
            .then(a.first().y.total_cmp(&b.first().y))
    });
    Ok(lines)
}

fn trace_component(pixels: &[(usize, usize)]) -> Option<Polyline> {
    if pixels.len() < MIN_COMPONENT_PIXELS {
        return None;
    }
    let x_min = pixels.iter().map(|p| p.0).min()?;
    let x_max = pixels.iter().map(|p| p.0).max()?;
    let y_min = pixels.iter().map(|p| p.1).min()?;
    let y_max = pixels.iter().map(|p| p.1).max()?;
    let width = x_max - x_min + 1;
    let height = y_max - y_min + 1;
    if width < 2 * height {
        return None;
    }
    let mut sum = vec![0.0; width];
    let mut count = vec![0usize; width];
    for &(x, y) in pixels {
        sum[x - x_min] += y as f64;
        count[x - x_min] += 1;
    }
    let centroid = |c: usize| (count[c] > 0).then(|| sum[c] / count[c] as f64);
    let mut columns: Vec<usize> = (0..width).step_by(CONTROL_POINT_STEP).collect();
    if *columns.last()? != width - 1 {
        columns.push(width - 1);
    }
    let points: Vec<Point2> = columns
        .into_iter()
        .filter_map(|c| centroid(c).map(|y| Point2::new((x_min + c) as f64, y)))
        .collect();
    Polyline::new(points).ok()
}

/// Unit normal of a text line at one of its ends.
///
/// The tangent is the mean of up to three segment vectors nearest that end
/// (taken in polyline order); the result is that tangent rotated by +90° in
/// image coordinates, so a left-to-right line yields a downward normal.
pub fn endpoint_direction(line: &Polyline, side: EndpointSide) -> Point2 {
    let pts = line.points();
    let segs = (pts.len() - 1).min(3);
    let range = match side {
        EndpointSide::Left => 0..segs,
        EndpointSide::Right => (pts.len() - 1 - segs)..(pts.len() - 1),
    };
    let mut t = Point2::default();
    for k in range {
        t = t + (pts[k + 1] - pts[k]);
    }
    let t = t * (1.0 / segs as f64);
    let norm = t.x.hypot(t.y);
    if norm == 0.0 {
        return Point2::new(0.0, 1.0);
    }
    Point2::new(-t.y / norm, t.x / norm)
}

/// Both endpoints of every text line, left endpoints first.
pub fn endpoints(text_lines: &[Polyline]) -> Vec<Endpoint> {
    let mut out = Vec::with_capacity(2 * text_lines.len());
    for side in [EndpointSide::Left, EndpointSide::Right] {
        for line in text_lines {
            let position = match side {
                EndpointSide::Left => line.first(),
                EndpointSide::Right => line.last(),
            };
            out.push(Endpoint {
                position,
                side,
                direction: endpoint_direction(line, side),
            });
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Pass {
    Up,
    Down,
}

/// Nearest same-side endpoint in the pass window, if the connection is
/// within `theta` of the endpoint's vertical direction.
fn pass_neighbour(
    eps: &[Endpoint],
    d: usize,
    pass: Pass,
    params: &VerticalDetectParams,
) -> Option<usize> {
    let p = eps[d].position;
    let mut best: Option<(f64, usize)> = None;
    for (k, e) in eps.iter().enumerate() {
        if k == d || e.side != eps[d].side {
            continue;
        }
        let q = e.position;
        let in_x = (q.x - p.x).abs() <= params.w;
        let in_y = match pass {
            Pass::Up => q.y < p.y && q.y >= p.y - params.h,
            Pass::Down => q.y > p.y && q.y <= p.y + params.h,
        };
        if !(in_x && in_y) {
            continue;
        }
        let dist = p.distance(q);
        let better = match best {
            None => true,
            Some((bd, bk)) => {
                let b = eps[bk].position;
                dist < bd
                    || (dist == bd && (q.y < b.y || (q.y == b.y && q.x < b.x)))
            }
        };
        if better {
            best = Some((dist, k));
        }
    }
    let (dist, k) = best?;
    // Angle between the connection and g, ignoring orientation.
    let seg = eps[k].position - p;
    let g = eps[d].direction;
    let cos = ((seg.x * g.x + seg.y * g.y) / dist).abs().min(1.0);
    (cos.acos() < params.theta).then_some(k)
}

/// Edges agreed on by the upward and downward passes, as `(upper, lower)` pairs.
pub fn vertical_edges(eps: &[Endpoint], params: &VerticalDetectParams) -> BTreeSet<(usize, usize)> {
    let mut up = BTreeSet::new();
    let mut down = BTreeSet::new();
    for d in 0..eps.len() {
        if let Some(e) = pass_neighbour(eps, d, Pass::Up, params) {
            up.insert((e, d));
        }
        if let Some(e) = pass_neighbour(eps, d, Pass::Down, params) {
            down.insert((d, e));
        }
    }
    up.intersection(&down).copied().collect()
}

/// Chains aligned text-line endpoints into vertical polylines.
///
/// Each endpoint gets at most one upward and one downward edge, so chains are
/// simple paths. Chains with at least two edges are returned top to bottom,
/// left-side chains first, each group sorted by the top point.
pub fn detect_vertical_lines(
    text_lines: &[Polyline],
    params: &VerticalDetectParams,
) -> Result<Vec<Polyline>, ElementsError> {
    params.validate()?;
    if text_lines.len() < 2 {
        return Err(ElementsError::TooFewLines(text_lines.len()));
    }
    let eps = endpoints(text_lines);
    let edges = vertical_edges(&eps, params);

    let mut below = vec![None; eps.len()];
    let mut has_above = vec![false; eps.len()];
    for &(upper, lower) in &edges {
        below[upper] = Some(lower);
        has_above[lower] = true;
    }

    let mut chains: Vec<(EndpointSide, Polyline)> = Vec::new();
    for start in 0..eps.len() {
        if has_above[start] || below[start].is_none() {
            continue;
        }
        let mut path = vec![eps[start].position];
        let mut cur = start;
        while let Some(nxt) = below[cur] {
            path.push(eps[nxt].position);
            cur = nxt;
        }
        if path.len() >= 3 {
            chains.push((eps[start].side, Polyline::new(path).expect("≥3 points")));
        }
    }
    chains.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.first().y.total_cmp(&b.1.first().y))
            .then(a.1.first().x.total_cmp(&b.1.first().x))
    });
    Ok(chains.into_iter().map(|(_, l)| l).collect())
}
