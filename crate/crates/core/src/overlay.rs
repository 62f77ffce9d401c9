//! Debug renderings: detected elements and the rectification grid drawn
//! over the input image.

use crate::geom::{BackwardMap, GeometricElements, ImageBuffer, Point2, Polyline};

pub type Rgb = [u8; 3];

pub const TEXT_LINE_COLOR: Rgb = [0, 200, 0];
pub const VERTICAL_LINE_COLOR: Rgb = [255, 220, 0];
pub const BOUNDARY_COLOR: Rgb = [230, 40, 40];
pub const GRID_COLOR: Rgb = [0, 120, 255];

/// Input converted to RGB with the boundary in red, text lines in green and
/// vertical lines in yellow.
pub fn draw_elements(image: &ImageBuffer, elements: &GeometricElements) -> ImageBuffer {
    let mut out = image.to_rgb();
    for (_, side) in elements.boundary.sides() {
        draw_polyline(&mut out, side, BOUNDARY_COLOR);
    }
    for line in &elements.text_lines {
        draw_polyline(&mut out, line, TEXT_LINE_COLOR);
    }
    for line in &elements.vertical_lines {
        draw_polyline(&mut out, line, VERTICAL_LINE_COLOR);
    }
    out
}

/// Traces every `step`-th row and column of the output frame back into the
/// input, showing where a regular grid on the rectified page comes from.
pub fn draw_grid(image: &ImageBuffer, bm: &BackwardMap, step: usize) -> ImageBuffer {
    let mut out = image.to_rgb();
    let step = step.max(1);
    let (w, h) = (bm.width(), bm.height());
    let mut trace = |pts: &mut dyn Iterator<Item = Option<[f64; 2]>>| {
        let mut prev: Option<Point2> = None;
        for p in pts {
            let p = p.map(|c| Point2::new(c[0], c[1]));
            if let (Some(a), Some(b)) = (prev, p) {
                draw_segment(&mut out, a, b, GRID_COLOR);
            }
            prev = p;
        }
    };
    for y in (0..h).step_by(step).chain(std::iter::once(h - 1)) {
        trace(&mut (0..w).map(|x| bm.get(x, y)));
    }
    for x in (0..w).step_by(step).chain(std::iter::once(w - 1)) {
        trace(&mut (0..h).map(|y| bm.get(x, y)));
    }
    out
}

pub fn draw_polyline(img: &mut ImageBuffer, line: &Polyline, color: Rgb) {
    for pair in line.points().windows(2) {
        draw_segment(img, pair[0], pair[1], color);
    }
}

/// One-pixel line with a step per pixel along the major axis; parts
/// outside the image are skipped.
pub fn draw_segment(img: &mut ImageBuffer, a: Point2, b: Point2, color: Rgb) {
    let steps = (b.x - a.x).abs().max((b.y - a.y).abs()).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let p = a.lerp(b, k as f64 / steps as f64);
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 || x >= img.width() as f64 || y >= img.height() as f64 {
            continue;
        }
        put(img, x as usize, y as usize, color);
    }
}

fn put(img: &mut ImageBuffer, x: usize, y: usize, color: Rgb) {
    if img.channels() == 1 {
        let luma = 0.299 * color[0] as f64 + 0.587 * color[1] as f64 + 0.114 * color[2] as f64;
        img.set(x, y, 0, luma.round() as u8);
    } else {
        for (c, &v) in color.iter().enumerate() {
            img.set(x, y, c, v);
        }
    }
}
