//! Discretization of geometric elements into per-channel residual rows.
//!
//! Every element is resampled in a 512×512 working frame, mapped back to
//! source pixels, and coupled to the four enclosing grid nodes through
//! bilinear weights. Boundary points pin one channel to 0 or 1; consecutive
//! points of a line are tied to equal values in one channel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    bilinear_weights, pixel_to_grid, resample_polyline, GeomError, GeometricElements, Point2,
    Polyline, Side,
};
use crate::sparse::SparseRows;

/// Side of the square frame in which sampling intervals are measured.
pub const WORKING_FRAME: f64 = 512.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("boundary side {0:?} yields fewer than 2 points")]
    Boundary(Side),
    #[error("sampling intervals must be positive")]
    Interval,
    #[error("image must be at least 2x2 pixels, got {0}x{1}")]
    ImageSize(usize, usize),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    U,
    V,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::U => 0,
            Channel::V => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Boundary(Side),
    TextLine,
    VerticalLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRef {
    pub id: usize,
    pub order: usize,
}

/// One discretized point in source pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintPoint {
    pub position: Point2,
    pub kind: ConstraintKind,
    pub channel: Channel,
    /// Absolute target, boundary points only.
    pub target: Option<f64>,
    /// Chain membership, line points only.
    pub chain: Option<ChainRef>,
}

/// Sampling intervals in working-frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Intervals {
    pub text: f64,
    pub vertical: f64,
    pub boundary: f64,
}

impl Default for Intervals {
    fn default() -> Self {
        Self {
            text: 16.0,
            vertical: 10.0,
            boundary: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub points: Vec<ConstraintPoint>,
    pub n: usize,
    pub image_size: (usize, usize),
}

impl ConstraintSet {
    pub fn boundary_points(&self, channel: Channel) -> impl Iterator<Item = &ConstraintPoint> {
        self.points
            .iter()
            .filter(move |p| p.channel == channel && p.target.is_some())
    }

    /// Line chains of one channel as ordered point lists, keyed by chain id.
    pub fn chains(&self, channel: Channel) -> Vec<(usize, Vec<Point2>)> {
        let mut chains: Vec<(usize, Vec<(usize, Point2)>)> = Vec::new();
        for p in self.points.iter().filter(|p| p.channel == channel) {
            let Some(c) = p.chain else { continue };
            match chains.iter_mut().find(|(id, _)| *id == c.id) {
                Some((_, pts)) => pts.push((c.order, p.position)),
                None => chains.push((c.id, vec![(c.order, p.position)])),
            }
        }
        chains
            .into_iter()
            .map(|(id, mut pts)| {
                pts.sort_by_key(|(o, _)| *o);
                (id, pts.into_iter().map(|(_, p)| p).collect())
            })
            .collect()
    }

    /// Whether the channel has boundary targets at both 0 and 1.
    pub fn has_both_targets(&self, channel: Channel) -> bool {
        let mut lo = false;
        let mut hi = false;
        for p in self.boundary_points(channel) {
            match p.target {
                Some(0.0) => lo = true,
                Some(1.0) => hi = true,
                _ => {}
            }
        }
        lo && hi
    }

    /// Drops line constraints of the given kind (used for ablations).
    pub fn without(&self, kind: ConstraintKind) -> ConstraintSet {
        ConstraintSet {
            points: self.points.iter().filter(|p| p.kind != kind).copied().collect(),
            n: self.n,
            image_size: self.image_size,
        }
    }

    fn grid_point(&self, p: Point2) -> Point2 {
        let (w, h) = self.image_size;
        let g = pixel_to_grid(p, self.n, w, h);
        let max = (self.n - 1) as f64;
        // Points on nodes or on the image border can round a hair off; snap
        // them so on-node points couple to a single node.
        let snap = |t: f64| {
            let r = t.round();
            let t = if (t - r).abs() < 1e-9 { r } else { t };
            t.clamp(0.0, max)
        };
        Point2::new(snap(g.x), snap(g.y))
    }
}

/// Sparse rows with right-hand side and a block weight.
///
/// The weighted energy of the block is `weight * ‖A x − b‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub rows: SparseRows,
    pub rhs: Vec<f64>,
    pub weight: f64,
}

impl ResidualBlock {
    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.rows.mul_vec(x);
        for (ri, b) in r.iter_mut().zip(&self.rhs) {
            *ri -= b;
        }
        r
    }

    /// `weight * ‖A x − b‖²`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.weight * self.residuals(x).iter().map(|r| r * r).sum::<f64>()
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }
}

fn sample_in_working_frame(line: &Polyline, interval: f64, size: (usize, usize)) -> Vec<Point2> {
    let sx = (WORKING_FRAME - 1.0) / (size.0 as f64 - 1.0);
    let sy = (WORKING_FRAME - 1.0) / (size.1 as f64 - 1.0);
    let scaled = line.map(|p| Point2::new(p.x * sx, p.y * sy));
    resample_polyline(&scaled, interval)
        .into_iter()
        .map(|p| Point2::new(p.x / sx, p.y / sy))
        .collect()
}

/// Turns boundaries and lines into constraint points.
///
/// Left/right boundaries pin `U` to 0/1, top/bottom pin `V` to 0/1. Text
/// lines become `V` chains and vertical lines `U` chains. Lines that
/// resample to fewer than two points are skipped.
pub fn discretize_elements(
    elems: &GeometricElements,
    n: usize,
    intervals: &Intervals,
) -> Result<ConstraintSet, ConstraintError> {
    if !(intervals.text > 0.0 && intervals.vertical > 0.0 && intervals.boundary > 0.0) {
        return Err(ConstraintError::Interval);
    }
    let (w, h) = elems.image_size;
    if w < 2 || h < 2 {
        return Err(ConstraintError::ImageSize(w, h));
    }
    if n < 2 {
        return Err(GeomError::GridTooSmall(n).into());
    }
    let mut points = Vec::new();
    for (side, line) in elems.boundary.sides() {
        let (channel, target) = match side {
            Side::Left => (Channel::U, 0.0),
            Side::Right => (Channel::U, 1.0),
            Side::Top => (Channel::V, 0.0),
            Side::Bottom => (Channel::V, 1.0),
        };
        let samples = sample_in_working_frame(line, intervals.boundary, elems.image_size);
        if samples.len() < 2 {
            return Err(ConstraintError::Boundary(side));
        }
        points.extend(samples.into_iter().map(|position| ConstraintPoint {
            position,
            kind: ConstraintKind::Boundary(side),
            channel,
            target: Some(target),
            chain: None,
        }));
    }

    let mut chain_id = 0;
    let line_groups = [
        (&elems.text_lines, ConstraintKind::TextLine, Channel::V, intervals.text),
        (
            &elems.vertical_lines,
            ConstraintKind::VerticalLine,
            Channel::U,
            intervals.vertical,
        ),
    ];
    for (lines, kind, channel, interval) in line_groups {
        for line in lines {
            let samples = sample_in_working_frame(line, interval, elems.image_size);
            if samples.len() < 2 {
                continue;
            }
            let id = chain_id;
            chain_id += 1;
            points.extend(samples.into_iter().enumerate().map(|(order, position)| {
                ConstraintPoint {
                    position,
                    kind,
                    channel,
                    target: None,
                    chain: Some(ChainRef { id, order }),
                }
            }));
        }
    }
    Ok(ConstraintSet {
        points,
        n,
        image_size: elems.image_size,
    })
}

/// One row per boundary point of the channel: `Σ wᵢ φ[nodeᵢ] − target`.
pub fn assemble_boundary_block(
    set: &ConstraintSet,
    channel: Channel,
) -> Result<ResidualBlock, ConstraintError> {
    let mut rows = SparseRows::new(set.n * set.n);
    let mut rhs = Vec::new();
    for p in set.boundary_points(channel) {
        let st = bilinear_weights(set.grid_point(p.position), set.n)?;
        rows.push_row(st.flat_indices(set.n).into_iter().zip(st.weights));
        rhs.push(p.target.expect("boundary point has a target"));
    }
    Ok(ResidualBlock {
        rows,
        rhs,
        weight: 1.0,
    })
}

/// One row per consecutive pair in each chain: `φ(p_k) − φ(p_{k+1})`.
pub fn assemble_line_block(
    set: &ConstraintSet,
    channel: Channel,
    alpha: f64,
) -> Result<ResidualBlock, ConstraintError> {
    let mut rows = SparseRows::new(set.n * set.n);
    let mut rhs = Vec::new();
    for (_, chain) in set.chains(channel) {
        let stencils = chain
            .iter()
            .map(|&p| bilinear_weights(set.grid_point(p), set.n))
            .collect::<Result<Vec<_>, _>>()?;
        for pair in stencils.windows(2) {
            let a = pair[0].flat_indices(set.n).into_iter().zip(pair[0].weights);
            let b = pair[1]
                .flat_indices(set.n)
                .into_iter()
                .zip(pair[1].weights.map(|w| -w));
            rows.push_row(a.chain(b));
            rhs.push(0.0);
        }
    }
    Ok(ResidualBlock {
        rows,
        rhs,
        weight: alpha,
    })
}
