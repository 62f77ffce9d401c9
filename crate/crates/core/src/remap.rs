//! Forward map inversion, backward-map upsampling and image resampling.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geom::{node_position, BackwardMap, GridField, ImageBuffer, Point2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemapError {
    #[error("forward field contains non-finite values")]
    NonFinite,
    #[error("output size {0}x{1} is too small (need at least 2x2)")]
    OutputSize(usize, usize),
    #[error("backward map has {0} holes; fill them first")]
    Holes(usize),
    #[error("backward map has no valid pixel")]
    AllHoles,
}

/// Counts collected while rasterizing the forward field.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InversionDiagnostics {
    pub triangles: usize,
    /// Zero-area triangles, skipped.
    pub degenerate_triangles: usize,
    /// Triangles whose orientation flipped under the map.
    pub flipped_triangles: usize,
    /// Grid cells containing at least one flipped triangle.
    pub folded_cells: usize,
    /// Pixels covered by a flipped triangle.
    pub folded_pixels: usize,
    /// Pixels covered by more than one triangle. Vertices on the grid
    /// outline may be counted here without any fold.
    pub overlap_pixels: usize,
    pub hole_pixels: usize,
}

/// Edge function `cross(b - a, p - a)`, evaluated so that swapping `a` and
/// `b` negates it exactly. Neighbouring triangles then agree bit-for-bit on
/// which side of their shared edge a pixel lies.
fn edge(a: Point2, b: Point2, p: Point2) -> f64 {
    if (a.x, a.y) <= (b.x, b.y) {
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
    } else {
        -((a.x - b.x) * (p.y - b.y) - (a.y - b.y) * (p.x - b.x))
    }
}

/// Whether a pixel exactly on edge `a → b` belongs to this triangle. Opposite
/// directions give opposite answers, so shared edges are counted once.
fn owns_edge(a: Point2, b: Point2) -> bool {
    let d = b - a;
    d.y > 0.0 || (d.y == 0.0 && d.x < 0.0)
}

struct Triangle {
    /// Vertices in output pixel units, ordered so that the area is positive.
    v: [Point2; 3],
    /// Source pixel coordinates carried by each vertex.
    src: [Point2; 3],
    area: f64,
    flipped: bool,
    /// Edge `k` (opposite vertex `k`) lies on the outline of the grid.
    outer: [bool; 3],
    bbox: (i64, i64, i64, i64),
}

/// Inverts a forward field by rasterizing two triangles per grid cell.
///
/// Output pixel `(x, y)` corresponds to target `(x / (out_w-1), y / (out_h-1))`.
/// Covered pixels receive the barycentric blend of the source positions of
/// the triangle's nodes; multiply covered pixels get the average of all
/// contributions. The field's nodes live on a `src_w × src_h` image.
pub fn invert_forward(
    field: &GridField,
    src_w: usize,
    src_h: usize,
    out_w: usize,
    out_h: usize,
) -> Result<(BackwardMap, InversionDiagnostics), RemapError> {
    if !field.is_finite() {
        return Err(RemapError::NonFinite);
    }
    if out_w < 2 || out_h < 2 {
        return Err(RemapError::OutputSize(out_w, out_h));
    }
    let n = field.n();
    let sx = (out_w - 1) as f64;
    let sy = (out_h - 1) as f64;
    let uv = |i: usize, j: usize| {
        let [u, v] = field.get(i, j);
        Point2::new(u * sx, v * sy)
    };
    let src = |i: usize, j: usize| node_position(n, i, j, src_w, src_h);

    let mut diag = InversionDiagnostics::default();
    let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let mut cell_flipped = false;
            // Split along the (i, j)–(i+1, j+1) diagonal; both halves are
            // positively oriented for the identity field.
            for nodes in [[(i, j), (i + 1, j), (i + 1, j + 1)], [(i, j), (i + 1, j + 1), (i, j + 1)]] {
                diag.triangles += 1;
                let mut nodes = nodes;
                let mut v = nodes.map(|(a, b)| uv(a, b));
                let mut s = nodes.map(|(a, b)| src(a, b));
                let signed = (v[1].x - v[0].x) * (v[2].y - v[0].y) - (v[1].y - v[0].y) * (v[2].x - v[0].x);
                if !(signed.abs() > 1e-12) {
                    diag.degenerate_triangles += 1;
                    continue;
                }
                let flipped = signed < 0.0;
                if flipped {
                    v.swap(1, 2);
                    s.swap(1, 2);
                    nodes.swap(1, 2);
                    cell_flipped = true;
                    diag.flipped_triangles += 1;
                }
                let xs = [v[0].x, v[1].x, v[2].x];
                let ys = [v[0].y, v[1].y, v[2].y];
                let lo = |a: [f64; 3]| a.iter().copied().fold(f64::INFINITY, f64::min).ceil() as i64;
                let hi = |a: [f64; 3]| a.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor() as i64;
                let on_outline = |a: (usize, usize), b: (usize, usize)| {
                    (a.0 == b.0 && (a.0 == 0 || a.0 == n - 1)) || (a.1 == b.1 && (a.1 == 0 || a.1 == n - 1))
                };
                let outer = [0, 1, 2].map(|k| on_outline(nodes[(k + 1) % 3], nodes[(k + 2) % 3]));
                triangles.push(Triangle {
                    v,
                    src: s,
                    area: signed.abs(),
                    flipped,
                    outer,
                    bbox: (lo(xs), hi(xs), lo(ys), hi(ys)),
                });
            }
            if cell_flipped {
                diag.folded_cells += 1;
            }
        }
    }

    // Rows are rasterized independently, visiting triangles in a fixed
    // order, so the result does not depend on scheduling.
    let rows: Vec<(Vec<[f64; 2]>, Vec<u32>, Vec<bool>)> = (0..out_h)
        .into_par_iter()
        .map(|y| {
            let mut sum = vec![[0.0; 2]; out_w];
            let mut count = vec![0u32; out_w];
            let mut folded = vec![false; out_w];
            let yi = y as i64;
            let py = y as f64;
            for t in &triangles {
                let (x0, x1, y0, y1) = t.bbox;
                if yi < y0 || yi > y1 || x1 < 0 || x0 >= out_w as i64 {
                    continue;
                }
                for x in x0.max(0)..=x1.min(out_w as i64 - 1) {
                    let p = Point2::new(x as f64, py);
                    let mut w = [0.0; 3];
                    let mut inside = true;
                    for k in 0..3 {
                        let (a, b) = (t.v[(k + 1) % 3], t.v[(k + 2) % 3]);
                        let e = edge(a, b, p);
                        // Edges on the grid outline have no neighbour to
                        // claim them, so they are always closed.
                        if e < 0.0 || (e == 0.0 && !t.outer[k] && !owns_edge(a, b)) {
                            inside = false;
                            break;
                        }
                        w[k] = e / t.area;
                    }
                    if !inside {
                        continue;
                    }
                    let xu = x as usize;
                    let q = t.src[0] * w[0] + t.src[1] * w[1] + t.src[2] * w[2];
                    sum[xu][0] += q.x;
                    sum[xu][1] += q.y;
                    count[xu] += 1;
                    folded[xu] |= t.flipped;
                }
            }
            (sum, count, folded)
        })
        .collect();

    let mut bm = BackwardMap::holes(out_w, out_h);
    for (y, (sum, count, folded)) in rows.into_iter().enumerate() {
        for x in 0..out_w {
            let c = count[x];
            if c == 0 {
                diag.hole_pixels += 1;
                continue;
            }
            if c > 1 {
                diag.overlap_pixels += 1;
            }
            if folded[x] {
                diag.folded_pixels += 1;
            }
            bm.set(x, y, [sum[x][0] / c as f64, sum[x][1] / c as f64]);
        }
    }
    Ok((bm, diag))
}

/// Replaces every hole by its nearest valid pixel (Euclidean distance, ties
/// broken by scan order). Only originally valid pixels are used as sources.
pub fn fill_holes(bm: &BackwardMap) -> Result<BackwardMap, RemapError> {
    let (w, h) = (bm.width(), bm.height());
    if bm.hole_count() == 0 {
        return Ok(bm.clone());
    }
    if bm.hole_count() == w * h {
        return Err(RemapError::AllHoles);
    }
    let filled: Vec<Vec<(usize, [f64; 2])>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .filter(|&x| !bm.is_valid(x, y))
                .map(|x| (x, nearest_valid(bm, x, y)))
                .collect()
        })
        .collect();
    let mut out = bm.clone();
    for (y, row) in filled.into_iter().enumerate() {
        for (x, c) in row {
            out.set(x, y, c);
        }
    }
    Ok(out)
}

/// Ring search outward in Chebyshev radius. Every pixel on ring `r` is at
/// squared distance ≥ r², so the search stops once r² exceeds the best hit.
fn nearest_valid(bm: &BackwardMap, x: usize, y: usize) -> [f64; 2] {
    let (w, h) = (bm.width() as i64, bm.height() as i64);
    let (x, y) = (x as i64, y as i64);
    let mut best: Option<(i64, i64, i64, i64)> = None; // (d2, scan index, px, py)
    let max_r = w.max(h);
    for r in 1..=max_r {
        if let Some((d2, ..)) = best {
            if r * r > d2 {
                break;
            }
        }
        let mut consider = |px: i64, py: i64| {
            if px < 0 || py < 0 || px >= w || py >= h || !bm.is_valid(px as usize, py as usize) {
                return;
            }
            let d2 = (px - x) * (px - x) + (py - y) * (py - y);
            let key = (d2, py * w + px, px, py);
            if best.map_or(true, |b| (key.0, key.1) < (b.0, b.1)) {
                best = Some(key);
            }
        };
        for px in x - r..=x + r {
            consider(px, y - r);
            consider(px, y + r);
        }
        for py in y - r + 1..y + r {
            consider(x - r, py);
            consider(x + r, py);
        }
    }
    let (_, _, px, py) = best.expect("at least one valid pixel");
    bm.get(px as usize, py as usize).expect("valid")
}

/// Bilinear upsampling (or downsampling) of a hole-free backward map.
pub fn upsample_backward(bm: &BackwardMap, width: usize, height: usize) -> Result<BackwardMap, RemapError> {
    let holes = bm.hole_count();
    if holes > 0 {
        return Err(RemapError::Holes(holes));
    }
    if width < 2 || height < 2 || bm.width() < 2 || bm.height() < 2 {
        return Err(RemapError::OutputSize(width, height));
    }
    let fx = (bm.width() - 1) as f64 / (width - 1) as f64;
    let fy = (bm.height() - 1) as f64 / (height - 1) as f64;
    let rows: Vec<Vec<[f64; 2]>> = (0..height)
        .into_par_iter()
        .map(|y| (0..width).map(|x| sample_map(bm, x as f64 * fx, y as f64 * fy)).collect())
        .collect();
    let mut out = BackwardMap::holes(width, height);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, c) in row.into_iter().enumerate() {
            out.set(x, y, c);
        }
    }
    Ok(out)
}

fn sample_map(bm: &BackwardMap, x: f64, y: f64) -> [f64; 2] {
    let x0 = (x.floor() as usize).min(bm.width() - 2);
    let y0 = (y.floor() as usize).min(bm.height() - 2);
    let (dx, dy) = (x - x0 as f64, y - y0 as f64);
    let c = bm.coords();
    let w = bm.width();
    let at = |xx: usize, yy: usize| c[yy * w + xx];
    let (p00, p10, p01, p11) = (at(x0, y0), at(x0 + 1, y0), at(x0, y0 + 1), at(x0 + 1, y0 + 1));
    let mut out = [0.0; 2];
    for k in 0..2 {
        out[k] = (1.0 - dx) * (1.0 - dy) * p00[k] + dx * (1.0 - dy) * p10[k] + (1.0 - dx) * dy * p01[k] + dx * dy * p11[k];
    }
    out
}

/// Backward map from a target→source lattice (as produced by the
/// interpolation baselines), by bilinear interpolation over the lattice.
pub fn lattice_to_backward(lattice: &GridField, width: usize, height: usize) -> Result<BackwardMap, RemapError> {
    if !lattice.is_finite() {
        return Err(RemapError::NonFinite);
    }
    if width < 2 || height < 2 {
        return Err(RemapError::OutputSize(width, height));
    }
    let s = (lattice.n() - 1) as f64;
    let fx = s / (width - 1) as f64;
    let fy = s / (height - 1) as f64;
    let rows: Vec<Vec<[f64; 2]>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| {
                    let g = Point2::new((x as f64 * fx).min(s), (y as f64 * fy).min(s));
                    lattice.interpolate(g).expect("inside lattice")
                })
                .collect()
        })
        .collect();
    let mut out = BackwardMap::holes(width, height);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, c) in row.into_iter().enumerate() {
            out.set(x, y, c);
        }
    }
    Ok(out)
}

/// Samples `src` bilinearly at each backward-map coordinate (clamped to the
/// image). Holes become black.
pub fn resample(src: &ImageBuffer, bm: &BackwardMap) -> ImageBuffer {
    let ch = src.channels();
    let (w, h) = (bm.width(), bm.height());
    let data: Vec<u8> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..w).flat_map(move |x| {
                let c = bm.get(x, y);
                (0..ch).map(move |k| match c {
                    Some([sx, sy]) => src.sample_bilinear(sx, sy, k).round().clamp(0.0, 255.0) as u8,
                    None => 0,
                })
            })
        })
        .collect();
    ImageBuffer::from_raw(w, h, ch, data).expect("sized to match")
}
