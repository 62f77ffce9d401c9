//! Independent oracles and random inputs shared by the integration tests
//! and the acceptance suite. Nothing here calls the code under test for
//! the quantity being checked.
#![allow(dead_code)]

use dewarp_core::constraints::{Channel, ConstraintSet};
use dewarp_core::geom::{Boundary, GeometricElements, GridField, ImageBuffer, Point2, Polyline};
use dewarp_core::solver::SolverParams;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A weighted dense residual row `weight * (coeffs · x - rhs)²`.
pub struct DenseRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub weight: f64,
}

fn bilinear(p: Point2, n: usize, size: (usize, usize)) -> Vec<(usize, f64)> {
    let gx = (p.x / (size.0 as f64 - 1.0) * (n as f64 - 1.0)).clamp(0.0, n as f64 - 1.0);
    let gy = (p.y / (size.1 as f64 - 1.0) * (n as f64 - 1.0)).clamp(0.0, n as f64 - 1.0);
    let i0 = (gx.floor() as usize).min(n - 2);
    let j0 = (gy.floor() as usize).min(n - 2);
    let (fx, fy) = (gx - i0 as f64, gy - j0 as f64);
    vec![
        (j0 * n + i0, (1.0 - fx) * (1.0 - fy)),
        (j0 * n + i0 + 1, fx * (1.0 - fy)),
        ((j0 + 1) * n + i0, (1.0 - fx) * fy),
        ((j0 + 1) * n + i0 + 1, fx * fy),
    ]
}

/// Every residual row of one channel's energy, written out from the
/// definitions: boundary targets, consecutive line differences, 5-point
/// Laplacian at interior nodes and the per-cell mixed difference.
pub fn dense_rows(set: &ConstraintSet, params: &SolverParams, channel: Channel) -> Vec<DenseRow> {
    let n = set.n;
    let mut rows = Vec::new();
    for p in set.points.iter().filter(|p| p.channel == channel) {
        if let Some(t) = p.target {
            rows.push(DenseRow {
                coeffs: bilinear(p.position, n, set.image_size),
                rhs: t,
                weight: 1.0,
            });
        }
    }
    let mut chains: std::collections::BTreeMap<usize, Vec<(usize, Point2)>> = Default::default();
    for p in set.points.iter().filter(|p| p.channel == channel) {
        if let Some(c) = p.chain {
            chains.entry(c.id).or_default().push((c.order, p.position));
        }
    }
    for pts in chains.values_mut() {
        pts.sort_by_key(|(o, _)| *o);
        for pair in pts.windows(2) {
            let mut coeffs = bilinear(pair[0].1, n, set.image_size);
            coeffs.extend(bilinear(pair[1].1, n, set.image_size).into_iter().map(|(k, w)| (k, -w)));
            rows.push(DenseRow {
                coeffs,
                rhs: 0.0,
                weight: params.alpha,
            });
        }
    }
    let at = |i: usize, j: usize| j * n + i;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            rows.push(DenseRow {
                coeffs: vec![
                    (at(i + 1, j), 1.0),
                    (at(i - 1, j), 1.0),
                    (at(i, j + 1), 1.0),
                    (at(i, j - 1), 1.0),
                    (at(i, j), -4.0),
                ],
                rhs: 0.0,
                weight: params.lambda,
            });
        }
    }
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            rows.push(DenseRow {
                coeffs: vec![(at(i + 1, j + 1), 1.0), (at(i + 1, j), -1.0), (at(i, j + 1), -1.0), (at(i, j), 1.0)],
                rhs: 0.0,
                weight: params.lambda * params.beta,
            });
        }
    }
    rows
}

pub fn dense_objective(rows: &[DenseRow], x: &[f64]) -> f64 {
    rows.iter()
        .map(|r| {
            let v: f64 = r.coeffs.iter().map(|&(k, w)| w * x[k]).sum::<f64>() - r.rhs;
            r.weight * v * v
        })
        .sum()
}

/// Minimizer of the channel energy by a dense Cholesky solve of the normal
/// equations.
pub fn dense_minimizer(set: &ConstraintSet, params: &SolverParams, channel: Channel) -> Vec<f64> {
    let dim = set.n * set.n;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut c = DVector::<f64>::zeros(dim);
    for r in dense_rows(set, params, channel) {
        for &(k, wk) in &r.coeffs {
            c[k] += r.weight * wk * r.rhs;
            for &(l, wl) in &r.coeffs {
                a[(k, l)] += r.weight * wk * wl;
            }
        }
    }
    let chol = a.cholesky().expect("normal matrix is positive definite");
    chol.solve(&c).iter().copied().collect()
}

/// Smooth curve between two points with a sinusoidal bow perpendicular to
/// the chord.
fn bowed(a: Point2, b: Point2, bow: f64, samples: usize) -> Polyline {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = dx.hypot(dy);
    let (nx, ny) = (-dy / len, dx / len);
    let pts = (0..=samples)
        .map(|k| {
            let t = k as f64 / samples as f64;
            let s = bow * (std::f64::consts::PI * t).sin();
            Point2::new(a.x + t * dx + s * nx, a.y + t * dy + s * ny)
        })
        .collect();
    Polyline::new(pts).unwrap()
}

/// A random page: jittered corners, bowed sides, a few bowed text lines and
/// optionally vertical lines. Every point stays inside the image.
pub fn random_elements(rng: &mut ChaCha8Rng, size: (usize, usize), text: usize, vertical: usize) -> GeometricElements {
    let (w, h) = (size.0 as f64 - 1.0, size.1 as f64 - 1.0);
    let mut corner = |fx: f64, fy: f64| {
        Point2::new(
            (fx + rng.gen_range(-0.05..0.05)) * w,
            (fy + rng.gen_range(-0.05..0.05)) * h,
        )
    };
    let (tl, tr, bl, br) = (corner(0.12, 0.12), corner(0.88, 0.12), corner(0.12, 0.88), corner(0.88, 0.88));
    let mut bow = |scale: f64| rng.gen_range(-0.04..0.04) * scale;
    let boundary = Boundary {
        top: bowed(tl, tr, bow(h), 24),
        bottom: bowed(bl, br, bow(h), 24),
        left: bowed(tl, bl, bow(w), 24),
        right: bowed(tr, br, bow(w), 24),
    };
    let text_lines = (0..text)
        .map(|k| {
            let y = (0.25 + 0.5 * (k as f64 + 0.5) / text as f64) * h;
            let x0 = rng.gen_range(0.2..0.35) * w;
            let x1 = rng.gen_range(0.65..0.8) * w;
            let dy = rng.gen_range(-0.02..0.02) * h;
            bowed(Point2::new(x0, y), Point2::new(x1, y + dy), rng.gen_range(-0.03..0.03) * h, 12)
        })
        .collect();
    let vertical_lines = (0..vertical)
        .map(|k| {
            let x = (0.25 + 0.5 * (k as f64 + 0.5) / vertical as f64) * w;
            let y0 = rng.gen_range(0.2..0.35) * h;
            let y1 = rng.gen_range(0.65..0.8) * h;
            let dx = rng.gen_range(-0.02..0.02) * w;
            bowed(Point2::new(x, y0), Point2::new(x + dx, y1), rng.gen_range(-0.03..0.03) * w, 12)
        })
        .collect();
    GeometricElements {
        boundary,
        text_lines,
        vertical_lines,
        image_size: size,
    }
}

/// Uniform grid plus a few smooth sinusoidal modes that vanish on the
/// outline, so the field still maps the grid border onto the unit square.
/// `amp` is in normalized units.
pub fn smooth_field(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> GridField {
    use std::f64::consts::PI;
    let modes: Vec<[f64; 5]> = (0..3)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..1.5),
                rng.gen_range(0.5..1.5),
                rng.gen_range(0.0..2.0 * PI),
            ]
        })
        .collect();
    let m = (n - 1) as f64;
    GridField::from_fn(n, |i, j| {
        let (s, t) = (i as f64 / m, j as f64 / m);
        let mut out = [s, t];
        let envelope = (PI * s).sin() * (PI * t).sin();
        for md in &modes {
            let phase = PI * (md[2] * s + md[3] * t) + md[4];
            out[0] += amp * envelope * md[0] * phase.sin() / 3.0;
            out[1] += amp * envelope * md[1] * phase.cos() / 3.0;
        }
        out
    })
}

/// Cells with a negative bilinear Jacobian determinant anywhere on a 9×9
/// sample lattice covering the cell, corners included.
pub fn brute_fold_count(field: &GridField) -> usize {
    let n = field.n();
    let mut count = 0;
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let (p00, p10, p01, p11) = (field.get(i, j), field.get(i + 1, j), field.get(i, j + 1), field.get(i + 1, j + 1));
            let mut folded = false;
            for a in 0..=8 {
                for b in 0..=8 {
                    let (s, t) = (a as f64 / 8.0, b as f64 / 8.0);
                    let ds = [0, 1].map(|c| (1.0 - t) * (p10[c] - p00[c]) + t * (p11[c] - p01[c]));
                    let dt = [0, 1].map(|c| (1.0 - s) * (p01[c] - p00[c]) + s * (p11[c] - p10[c]));
                    if ds[0] * dt[1] - ds[1] * dt[0] < 0.0 {
                        folded = true;
                    }
                }
            }
            count += folded as usize;
        }
    }
    count
}

/// Straightforward MS-SSIM: explicit 2-D Gaussian window, direct sums over
/// every valid window position, 2×2 mean pooling between scales.
pub fn reference_ms_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    const WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let luma = |img: &ImageBuffer| -> Vec<Vec<f64>> {
        (0..img.height())
            .map(|y| {
                (0..img.width())
                    .map(|x| {
                        if img.channels() == 1 {
                            img.get(x, y, 0) as f64
                        } else {
                            let v = 0.299 * img.get(x, y, 0) as f64
                                + 0.587 * img.get(x, y, 1) as f64
                                + 0.114 * img.get(x, y, 2) as f64;
                            v.round().clamp(0.0, 255.0)
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let mut x = luma(a);
    let mut y = luma(b);
    let mut window = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (r, row) in window.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let (dr, dc) = (r as f64 - 5.0, c as f64 - 5.0);
            *v = (-(dr * dr + dc * dc) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut score = 1.0;
    for (s, &wt) in WEIGHTS.iter().enumerate() {
        let (h, w) = (x.len(), x[0].len());
        let (mut sum_ssim, mut sum_cs, mut count) = (0.0, 0.0, 0.0);
        for oy in 0..=h - 11 {
            for ox in 0..=w - 11 {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for r in 0..11 {
                    for c in 0..11 {
                        let g = window[r][c] / total;
                        let (p, q) = (x[oy + r][ox + c], y[oy + r][ox + c]);
                        mx += g * p;
                        my += g * q;
                        xx += g * p * p;
                        yy += g * q * q;
                        xy += g * p * q;
                    }
                }
                let cs = (2.0 * (xy - mx * my) + c2) / ((xx - mx * mx) + (yy - my * my) + c2);
                let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
                sum_cs += cs;
                sum_ssim += l * cs;
                count += 1.0;
            }
        }
        let term = if s == WEIGHTS.len() - 1 { sum_ssim / count } else { sum_cs / count };
        score *= term.max(0.0).powf(wt);
        let pool = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..m.len() / 2)
                .map(|r| {
                    (0..m[0].len() / 2)
                        .map(|c| 0.25 * (m[2 * r][2 * c] + m[2 * r][2 * c + 1] + m[2 * r + 1][2 * c] + m[2 * r + 1][2 * c + 1]))
                        .collect()
                })
                .collect()
        };
        x = pool(&x);
        y = pool(&y);
    }
    score
}

/// Smooth random gray texture: a sum of low-frequency cosines plus noise.
pub fn texture(rng: &mut ChaCha8Rng, w: usize, h: usize, noise: f64) -> ImageBuffer {
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| [rng.gen_range(20.0..50.0), rng.gen_range(0.01..0.08), rng.gen_range(0.01..0.08), rng.gen_range(0.0..std::f64::consts::TAU)])
        .collect();
    let jitter: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-noise..=noise)).collect();
    ImageBuffer::gray_from_fn(w, h, |x, y| {
        let v = 128.0
            + waves.iter().map(|q| q[0] * (q[1] * x as f64 + q[2] * y as f64 + q[3]).cos()).sum::<f64>()
            + jitter[y * w + x];
        v.round().clamp(0.0, 255.0) as u8
    })
}

/// Random elements discretized on an n-lattice.
pub fn random_set(seed: u64, n: usize) -> ConstraintSet {
    let mut r = rng(seed);
    let size = (r.gen_range(40..200), r.gen_range(40..200));
    let (text, vertical) = (r.gen_range(0..4), r.gen_range(0..3));
    let e = random_elements(&mut r, size, text, vertical);
    dewarp_core::constraints::discretize_elements(&e, n, &dewarp_core::constraints::Intervals::default()).unwrap()
}

pub fn inf_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn line(a: (f64, f64), b: (f64, f64)) -> Polyline {
    Polyline::new(vec![Point2::new(a.0, a.1), Point2::new(b.0, b.1)]).unwrap()
}

/// Nearly aligned paragraph lines with jittered ends, tilt and bow.
pub fn random_layout(seed: u64) -> Vec<Polyline> {
    let mut r = rng(seed);
    let count = r.gen_range(3..12);
    let mut y = 20.0;
    (0..count)
        .map(|_| {
            y += r.gen_range(8.0..20.0);
            let x0 = 40.0 + r.gen_range(-9.0..9.0);
            let x1 = 300.0 + r.gen_range(-9.0..9.0);
            let tilt = r.gen_range(-3.0..3.0);
            let mid = r.gen_range(-2.0..2.0);
            Polyline::new(vec![
                Point2::new(x0, y),
                Point2::new(0.5 * (x0 + x1), y + 0.5 * tilt + mid),
                Point2::new(x1, y + tilt),
            ])
            .unwrap()
        })
        .collect()
}

/// Chains as point lists sorted top to bottom, chains ordered by first point.
pub fn chain_keys(chains: &[Polyline]) -> Vec<Vec<(f64, f64)>> {
    let mut out: Vec<Vec<(f64, f64)>> = chains
        .iter()
        .map(|c| {
            let mut pts: Vec<_> = c.points().iter().map(|p| (p.x, p.y)).collect();
            pts.sort_by(|a, b| a.1.total_cmp(&b.1));
            pts
        })
        .collect();
    out.sort_by(|a, b| a[0].0.total_cmp(&b[0].0).then(a[0].1.total_cmp(&b[0].1)));
    out
}

pub fn same_chains(a: &[Polyline], b: &[Polyline]) -> bool {
    let (ka, kb) = (chain_keys(a), chain_keys(b));
    ka.len() == kb.len()
        && ka.iter().zip(&kb).all(|(ca, cb)| {
            ca.len() == cb.len() && ca.iter().zip(cb).all(|(p, q)| (p.0 - q.0).abs() < 1e-9 && (p.1 - q.1).abs() < 1e-9)
        })
}

/// Bordered spline system written out densely: kernel weights per point and
/// the affine part `[c, a_x, a_y]` per output coordinate.
pub fn dense_tps(src: &[Point2], dst: &[Point2]) -> (Vec<[f64; 2]>, [[f64; 3]; 2]) {
    let m = src.len();
    let mut a = DMatrix::<f64>::zeros(m + 3, m + 3);
    for i in 0..m {
        for j in 0..m {
            let r = src[i].distance(src[j]);
            a[(i, j)] = if r > 0.0 { r * r * r.ln() } else { 0.0 };
        }
        for (c, v) in [1.0, src[i].x, src[i].y].into_iter().enumerate() {
            a[(i, m + c)] = v;
            a[(m + c, i)] = v;
        }
    }
    let lu = a.lu();
    let mut w = vec![[0.0; 2]; m];
    let mut aff = [[0.0; 3]; 2];
    for k in 0..2 {
        let mut b = DVector::<f64>::zeros(m + 3);
        for i in 0..m {
            b[i] = if k == 0 { dst[i].x } else { dst[i].y };
        }
        let x = lu.solve(&b).unwrap();
        for i in 0..m {
            w[i][k] = x[i];
        }
        aff[k] = [x[m], x[m + 1], x[m + 2]];
    }
    (w, aff)
}

pub fn shift(img: &ImageBuffer, dx: usize) -> ImageBuffer {
    ImageBuffer::gray_from_fn(img.width(), img.height(), |x, y| img.get((x + dx).min(img.width() - 1), y, 0))
}

/// Ten image pairs: shifts, a contrast change, unrelated textures and noise.
pub fn ms_ssim_pairs() -> Vec<(ImageBuffer, ImageBuffer)> {
    let mut r = rng(41);
    let mut out = Vec::new();
    for k in 0..10 {
        let (w, h) = (176 + 8 * k, 200 - 2 * k);
        let a = texture(&mut r, w, h, 10.0);
        let b = match k % 5 {
            0 => shift(&a, 1),
            1 => shift(&a, 3),
            2 => ImageBuffer::gray_from_fn(w, h, |x, y| (a.get(x, y, 0) as f64 * 0.8 + 20.0) as u8),
            3 => texture(&mut r, w, h, 10.0),
            _ => {
                let noise = texture(&mut r, w, h, 40.0);
                ImageBuffer::gray_from_fn(w, h, |x, y| ((a.get(x, y, 0) as u16 + noise.get(x, y, 0) as u16) / 2) as u8)
            }
        };
        out.push((a, b));
    }
    out
}
