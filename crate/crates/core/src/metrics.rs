//! Image and grid quality measures.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geom::{BackwardMap, GridField, ImageBuffer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("image sizes differ: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),
    #[error("{scales}-scale MS-SSIM needs images of at least {min}x{min}, got {w}x{h}; use fewer scales")]
    TooSmall { scales: usize, min: usize, w: usize, h: usize },
    #[error("at least one scale weight is required")]
    NoScales,
    #[error("the flows share no valid pixel")]
    NoValidPixels,
}

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Five-scale MS-SSIM on the luma of both images.
pub fn ms_ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricsError> {
    ms_ssim_weighted(a, b, &MS_SSIM_WEIGHTS)
}

/// MS-SSIM with one scale per weight. Contrast-structure terms are clamped
/// at zero before exponentiation so the product stays real.
pub fn ms_ssim_weighted(a: &ImageBuffer, b: &ImageBuffer, weights: &[f64]) -> Result<f64, MetricsError> {
    let (w, h) = (a.width(), a.height());
    if (w, h) != (b.width(), b.height()) {
        return Err(MetricsError::SizeMismatch((w, h), (b.width(), b.height())));
    }
    if weights.is_empty() {
        return Err(MetricsError::NoScales);
    }
    let min = WINDOW << (weights.len() - 1);
    if w.min(h) < min {
        return Err(MetricsError::TooSmall { scales: weights.len(), min, w, h });
    }
    let mut x = Plane::new(w, h, a.gray_f64());
    let mut y = Plane::new(w, h, b.gray_f64());
    let kernel = gaussian_kernel();
    let mut score = 1.0;
    for (s, &weight) in weights.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&x, &y, &kernel);
        let term = if s + 1 == weights.len() { ssim } else { cs };
        score *= term.max(0.0).powf(weight);
        if s + 1 < weights.len() {
            x = x.downsample();
            y = y.downsample();
        }
    }
    Ok(score)
}

/// Single-scale SSIM (mean of the SSIM map).
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricsError> {
    let (w, h) = (a.width(), a.height());
    if (w, h) != (b.width(), b.height()) {
        return Err(MetricsError::SizeMismatch((w, h), (b.width(), b.height())));
    }
    if w.min(h) < WINDOW {
        return Err(MetricsError::TooSmall { scales: 1, min: WINDOW, w, h });
    }
    let x = Plane::new(w, h, a.gray_f64());
    let y = Plane::new(w, h, b.gray_f64());
    Ok(ssim_terms(&x, &y, &gaussian_kernel()).0)
}

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

#[derive(Debug, Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn new(w: usize, h: usize, data: Vec<f64>) -> Self {
        Self { w, h, data }
    }

    /// 2×2 box average; an odd trailing row or column is dropped.
    fn downsample(&self) -> Plane {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let at = |dx: usize, dy: usize| self.data[(2 * y + dy) * self.w + 2 * x + dx];
                data.push(0.25 * (at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1)));
            }
        }
        Plane { w, h, data }
    }

    fn map2(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Plane::new(self.w, self.h, data)
    }

    /// Separable "valid" filtering: the output shrinks by `WINDOW - 1`.
    fn filter(&self, k: &[f64; WINDOW]) -> Plane {
        let ow = self.w + 1 - WINDOW;
        let oh = self.h + 1 - WINDOW;
        let horiz: Vec<f64> = (0..self.h)
            .into_par_iter()
            .flat_map_iter(|y| {
                let row = &self.data[y * self.w..(y + 1) * self.w];
                (0..ow).map(move |x| row[x..x + WINDOW].iter().zip(k).map(|(a, b)| a * b).sum::<f64>())
            })
            .collect();
        let data: Vec<f64> = (0..oh)
            .into_par_iter()
            .flat_map_iter(|y| {
                let horiz = &horiz;
                (0..ow).map(move |x| (0..WINDOW).map(|t| horiz[(y + t) * ow + x] * k[t]).sum::<f64>())
            })
            .collect();
        Plane::new(ow, oh, data)
    }
}

/// Mean SSIM and mean contrast-structure over the valid window positions.
fn ssim_terms(x: &Plane, y: &Plane, k: &[f64; WINDOW]) -> (f64, f64) {
    let mx = x.filter(k);
    let my = y.filter(k);
    let sxx = x.map2(x, |a, b| a * b).filter(k);
    let syy = y.map2(y, |a, b| a * b).filter(k);
    let sxy = x.map2(y, |a, b| a * b).filter(k);
    let m = mx.data.len() as f64;
    let mut ssim = 0.0;
    let mut cs = 0.0;
    for i in 0..mx.data.len() {
        let (ux, uy) = (mx.data[i], my.data[i]);
        let vx = sxx.data[i] - ux * ux;
        let vy = syy.data[i] - uy * uy;
        let cxy = sxy.data[i] - ux * uy;
        let c = (2.0 * cxy + C2) / (vx + vy + C2);
        let l = (2.0 * ux * uy + C1) / (ux * ux + uy * uy + C1);
        cs += c;
        ssim += l * c;
    }
    (ssim / m, cs / m)
}

/// Mean Euclidean distance between two dense flows over pixels valid in both.
pub fn local_distortion(est: &BackwardMap, reference: &BackwardMap) -> Result<f64, MetricsError> {
    let size = (est.width(), est.height());
    let rsize = (reference.width(), reference.height());
    if size != rsize {
        return Err(MetricsError::SizeMismatch(size, rsize));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (((a, va), b), vb) in est
        .coords()
        .iter()
        .zip(est.validity())
        .zip(reference.coords())
        .zip(reference.validity())
    {
        if *va && *vb {
            sum += (a[0] - b[0]).hypot(a[1] - b[1]);
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::NoValidPixels);
    }
    Ok(sum / count as f64)
}

/// Shape statistics of a forward field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDiagnostics {
    /// Cells whose bilinear Jacobian determinant is negative somewhere.
    pub fold_count: usize,
    /// Smallest signed cell area in normalized target units.
    pub min_cell_area: f64,
    /// Mean over grid rows of the standard deviation of `v` along the row.
    pub row_v_std: f64,
    /// Mean over grid columns of the standard deviation of `u` down the column.
    pub col_u_std: f64,
}

/// The Jacobian determinant of a bilinear cell is affine in the local
/// coordinates, so its sign over the cell is decided at the four corners.
pub fn grid_diagnostics(field: &GridField) -> GridDiagnostics {
    let n = field.n();
    let cross = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
    let sub = |a: [f64; 2], b: [f64; 2]| [a[0] - b[0], a[1] - b[1]];
    let mut fold_count = 0;
    let mut min_cell_area = f64::INFINITY;
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let p00 = field.get(i, j);
            let p10 = field.get(i + 1, j);
            let p01 = field.get(i, j + 1);
            let p11 = field.get(i + 1, j + 1);
            let dets = [
                cross(sub(p10, p00), sub(p01, p00)),
                cross(sub(p10, p00), sub(p11, p10)),
                cross(sub(p11, p01), sub(p01, p00)),
                cross(sub(p11, p01), sub(p11, p10)),
            ];
            if dets.iter().any(|&d| d < 0.0) {
                fold_count += 1;
            }
            // Shoelace over p00 → p10 → p11 → p01.
            let area = 0.5
                * (cross(p00, p10) + cross(p10, p11) + cross(p11, p01) + cross(p01, p00));
            min_cell_area = min_cell_area.min(area);
        }
    }
    let std = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let row_v_std = (0..n).map(|j| std(&mut (0..n).map(|i| field.get(i, j)[1]))).sum::<f64>() / n as f64;
    let col_u_std = (0..n).map(|i| std(&mut (0..n).map(|j| field.get(i, j)[0]))).sum::<f64>() / n as f64;
    GridDiagnostics {
        fold_count,
        min_cell_area,
        row_v_std,
        col_u_std,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize, shift: usize) -> ImageBuffer {
        ImageBuffer::gray_from_fn(w, h, |x, y| {
            let (x, y) = ((x + shift) as f64, y as f64);
            (128.0 + 60.0 * (x / 7.0).sin() * (y / 5.0).cos() + 40.0 * ((x / 23.0).floor() % 2.0)).round() as u8
        })
    }

    #[test]
    fn identical_images_score_one() {
        let a = textured(192, 180, 0);
        assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_scores_low() {
        let a = textured(180, 180, 0);
        let neg = ImageBuffer::gray_from_fn(180, 180, |x, y| 255 - a.get(x, y, 0));
        assert!(ms_ssim(&a, &neg).unwrap() < 0.2);
    }

    #[test]
    fn shifted_copy_is_between() {
        let a = textured(200, 190, 0);
        let b = textured(200, 190, 1);
        let s = ms_ssim(&a, &b).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert!((s - ms_ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn small_images_rejected() {
        let a = textured(175, 300, 0);
        assert!(matches!(ms_ssim(&a, &a), Err(MetricsError::TooSmall { min: 176, .. })));
        assert!(ms_ssim_weighted(&a, &a, &[0.5, 0.5]).is_ok());
    }

    #[test]
    fn distortion_of_constant_offset() {
        let a = BackwardMap::identity(10, 8);
        let b = BackwardMap::from_fn(10, 8, |x, y| Some([x as f64 + 3.0, y as f64 + 4.0]));
        assert_eq!(local_distortion(&a, &a).unwrap(), 0.0);
        assert!((local_distortion(&a, &b).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(
            local_distortion(&BackwardMap::holes(2, 2), &BackwardMap::identity(2, 2)),
            Err(MetricsError::NoValidPixels)
        );
    }

    #[test]
    fn uniform_grid_diagnostics() {
        let d = grid_diagnostics(&GridField::uniform(9));
        assert_eq!(d.fold_count, 0);
        assert_eq!(d.row_v_std, 0.0);
        assert_eq!(d.col_u_std, 0.0);
        assert!((d.min_cell_area - 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn swapped_nodes_fold() {
        let mut f = GridField::uniform(6);
        let (a, b) = (f.get(2, 3), f.get(3, 3));
        f.set(2, 3, b);
        f.set(3, 3, a);
        assert!(grid_diagnostics(&f).fold_count >= 1);
    }
}
