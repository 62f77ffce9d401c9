//! Transfinite (Coons) interpolation from four boundary curves.

use crate::geom::{Boundary, GridField, Point2, Polyline};

use super::BaselineError;

/// A curve parameterized over `t ∈ [0, 1]`.
pub trait Curve {
    fn point(&self, t: f64) -> Point2;
}

impl<F: Fn(f64) -> Point2> Curve for F {
    fn point(&self, t: f64) -> Point2 {
        self(t)
    }
}

/// Polyline parameterized by normalized arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcLengthPolyline {
    points: Vec<Point2>,
    cumulative: Vec<f64>,
}

impl ArcLengthPolyline {
    pub fn new(line: &Polyline) -> Self {
        let points = line.points().to_vec();
        let mut cumulative = Vec::with_capacity(points.len());
        let mut s = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            s += w[0].distance(w[1]);
            cumulative.push(s);
        }
        Self { points, cumulative }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("at least two points")
    }
}

impl Curve for ArcLengthPolyline {
    fn point(&self, t: f64) -> Point2 {
        let total = self.length();
        if total == 0.0 {
            return self.points[0];
        }
        let s = t.clamp(0.0, 1.0) * total;
        let k = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(k) => return self.points[k],
            Err(k) => k.clamp(1, self.points.len() - 1),
        };
        let (s0, s1) = (self.cumulative[k - 1], self.cumulative[k]);
        let f = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.points[k - 1].lerp(self.points[k], f)
    }
}

/// The four sides of a patch.
///
/// `top` and `bottom` run left to right, `left` and `right` top to bottom.
#[derive(Debug, Clone)]
pub struct BoundaryCurves<C = ArcLengthPolyline> {
    pub top: C,
    pub right: C,
    pub bottom: C,
    pub left: C,
}

impl BoundaryCurves<ArcLengthPolyline> {
    pub fn from_boundary(b: &Boundary) -> Self {
        Self {
            top: ArcLengthPolyline::new(&b.top),
            right: ArcLengthPolyline::new(&b.right),
            bottom: ArcLengthPolyline::new(&b.bottom),
            left: ArcLengthPolyline::new(&b.left),
        }
    }
}

/// Largest mismatch between curves at the four shared corners.
pub fn corner_mismatch<C: Curve>(c: &BoundaryCurves<C>) -> f64 {
    [
        (c.top.point(0.0), c.left.point(0.0)),
        (c.top.point(1.0), c.right.point(0.0)),
        (c.bottom.point(0.0), c.left.point(1.0)),
        (c.bottom.point(1.0), c.right.point(1.0)),
    ]
    .iter()
    .map(|(a, b)| a.distance(*b))
    .fold(0.0, f64::max)
}

/// Coons patch evaluated on the `n × n` parameter lattice.
///
/// Node `(i, j)` holds `c(u, v)` with `u = i/(n-1)`, `v = j/(n-1)`, in the
/// curves' own (source pixel) coordinates: a target→source lattice.
pub fn tfi_grid<C: Curve>(curves: &BoundaryCurves<C>, n: usize) -> Result<GridField, BaselineError> {
    if n < 2 {
        return Err(BaselineError::GridTooSmall(n));
    }
    let mismatch = corner_mismatch(curves);
    if mismatch > 1e-3 {
        return Err(BaselineError::CornerMismatch(mismatch));
    }
    let s = (n - 1) as f64;
    let ts: Vec<f64> = (0..n).map(|k| k as f64 / s).collect();
    let top: Vec<Point2> = ts.iter().map(|&t| curves.top.point(t)).collect();
    let bottom: Vec<Point2> = ts.iter().map(|&t| curves.bottom.point(t)).collect();
    let left: Vec<Point2> = ts.iter().map(|&t| curves.left.point(t)).collect();
    let right: Vec<Point2> = ts.iter().map(|&t| curves.right.point(t)).collect();
    let p00 = top[0];
    let p10 = top[n - 1];
    let p01 = bottom[0];
    let p11 = bottom[n - 1];
    Ok(GridField::from_fn(n, |i, j| {
        let (u, v) = (ts[i], ts[j]);
        let ruled = left[j] * (1.0 - u) + right[j] * u + top[i] * (1.0 - v) + bottom[i] * v;
        let corners = p00 * ((1.0 - u) * (1.0 - v))
            + p10 * (u * (1.0 - v))
            + p01 * ((1.0 - u) * v)
            + p11 * (u * v);
        let c = ruled - corners;
        [c.x, c.y]
    }))
}
