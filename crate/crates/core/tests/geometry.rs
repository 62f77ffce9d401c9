mod support;

use dewarp_core::baselines::{tfi_grid, tps_fit, tps_kernel, BoundaryCurves};
use dewarp_core::elements::{detect_vertical_lines, endpoints, vertical_edges, VerticalDetectParams};
use dewarp_core::geom::{BackwardMap, GridField, Point2, Polyline};
use dewarp_core::metrics::{grid_diagnostics, local_distortion, ms_ssim};
use dewarp_core::remap::{fill_holes, invert_forward, resample, upsample_backward};
use dewarp_core::solver::eval_forward;
use proptest::prelude::*;
use rand::Rng;
use support::*;

fn left_edges(lines: &[Polyline]) -> Vec<(usize, usize)> {
    let eps = endpoints(lines);
    let n = lines.len();
    vertical_edges(&eps, &VerticalDetectParams::default())
        .into_iter()
        .filter(|&(a, b)| a < n && b < n)
        .collect()
}

#[test]
fn aligned_column_forms_one_chain_per_side() {
    let lines: Vec<_> = [10.0, 22.0, 34.0].iter().map(|&y| line((10.0, y), (100.0, y))).collect();
    let chains = detect_vertical_lines(&lines, &VerticalDetectParams::default()).unwrap();
    assert_eq!(chains.len(), 2);
    let pts: Vec<_> = chains[0].points().iter().map(|p| (p.x, p.y)).collect();
    assert_eq!(pts, vec![(10.0, 10.0), (10.0, 22.0), (10.0, 34.0)]);
    assert!(chains[1].points().iter().all(|p| p.x == 100.0));
}

#[test]
fn offset_beyond_window_has_no_edge() {
    let lines = [line((10.0, 10.0), (100.0, 10.0)), line((40.0, 22.0), (300.0, 22.0))];
    assert!(left_edges(&lines).is_empty());
}

#[test]
fn angle_bound_decides_the_edge() {
    // atan(6/12) = atan(0.5) exceeds atan(0.45); atan(5/12) does not.
    let steep = [line((10.0, 10.0), (100.0, 10.0)), line((16.0, 22.0), (300.0, 22.0))];
    assert!(left_edges(&steep).is_empty());
    let shallow = [line((10.0, 10.0), (100.0, 10.0)), line((15.0, 22.0), (300.0, 22.0))];
    assert_eq!(left_edges(&shallow), vec![(0, 1)]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn detection_commutes_with_vertical_flip(seed in 0u64..1_000_000) {
        let height = 400.0;
        let lines = random_layout(seed);
        let flip = |p: Point2| Point2::new(p.x, height - p.y);
        let flipped: Vec<_> = lines.iter().map(|l| l.map(flip)).collect();
        let params = VerticalDetectParams::default();
        let a = detect_vertical_lines(&lines, &params).unwrap();
        let b = detect_vertical_lines(&flipped, &params).unwrap();
        let a_flipped: Vec<_> = a.iter().map(|c| c.map(flip)).collect();
        prop_assert!(same_chains(&a_flipped, &b));
    }
}

#[test]
fn tfi_reproduces_analytic_boundaries() {
    use std::f64::consts::PI;
    let curves: BoundaryCurves<Box<dyn Fn(f64) -> Point2>> = BoundaryCurves {
        top: Box::new(|t| Point2::new(10.0 + 80.0 * t, 5.0 + 6.0 * (PI * t).sin())),
        bottom: Box::new(|t| Point2::new(12.0 + 76.0 * t, 95.0 + 3.0 * (2.0 * PI * t).sin())),
        left: Box::new(|t| Point2::new(10.0 + 2.0 * t - 4.0 * (PI * t).sin(), 5.0 + 90.0 * t)),
        right: Box::new(|t| Point2::new(90.0 - 2.0 * t + 5.0 * (PI * t).sin(), 5.0 + 90.0 * t)),
    };
    let n = 33;
    let g = tfi_grid(&curves, n).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let t = k as f64 / (n - 1) as f64;
        for (node, curve) in [((k, 0), &curves.top), ((k, n - 1), &curves.bottom), ((0, k), &curves.left), ((n - 1, k), &curves.right)] {
            let v = g.get(node.0, node.1);
            let p = curve(t);
            worst = worst.max((v[0] - p.x).abs()).max((v[1] - p.y).abs());
        }
    }
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn tps_matches_dense_system_and_interpolates() {
    let mut r = rng(17);
    for _ in 0..5 {
        let src: Vec<Point2> = (0..12).map(|_| Point2::new(r.gen_range(0.0..100.0), r.gen_range(0.0..100.0))).collect();
        let dst: Vec<Point2> = src.iter().map(|p| Point2::new(p.x + r.gen_range(-5.0..5.0), p.y + r.gen_range(-5.0..5.0))).collect();
        let model = tps_fit(&src, &dst, 0.0).unwrap();
        let (w, aff) = dense_tps(&src, &dst);
        let scale = w.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in model.weights().iter().zip(&w) {
            assert!((a[0] - b[0]).abs() < 1e-8 * scale && (a[1] - b[1]).abs() < 1e-8 * scale);
        }
        for k in 0..2 {
            for c in 0..3 {
                assert!((model.affine()[k][c] - aff[k][c]).abs() < 1e-6);
            }
        }
        for (p, q) in src.iter().zip(&dst) {
            assert!(model.eval(*p).distance(*q) < 1e-8);
        }
        assert!(model.bending_energy() > 0.0);
    }
    assert_eq!(tps_kernel(1.0), 0.0);
}

#[test]
fn inversion_round_trip_on_smooth_fields() {
    let mut r = rng(23);
    for _ in 0..20 {
        let n = r.gen_range(12..40);
        let (sw, sh) = (r.gen_range(120..260), r.gen_range(120..260));
        let field = smooth_field(&mut r, n, 0.08);
        assert_eq!(brute_fold_count(&field), 0);
        let (bm, diag) = invert_forward(&field, sw, sh, sw, sh).unwrap();
        assert_eq!(diag.folded_cells, 0);
        assert!((bm.hole_count() as f64) < 0.01 * (sw * sh) as f64);
        for y in 0..sh {
            for x in 0..sw {
                let Some(p) = bm.get(x, y) else { continue };
                // Outline pixels can land a rounding error outside the image.
                let p = Point2::new(p[0].clamp(0.0, (sw - 1) as f64), p[1].clamp(0.0, (sh - 1) as f64));
                let uv = eval_forward(&field, p, (sw, sh)).unwrap();
                let q = Point2::new(uv[0] * (sw - 1) as f64, uv[1] * (sh - 1) as f64);
                assert!(q.distance(Point2::new(x as f64, y as f64)) < 0.5);
            }
        }
    }
}

#[test]
fn coverage_at_full_size() {
    let field = smooth_field(&mut rng(2), 128, 0.06);
    let (bm, _) = invert_forward(&field, 512, 512, 512, 512).unwrap();
    assert!((bm.hole_count() as f64) < 0.01 * 512.0 * 512.0);
    let filled = fill_holes(&bm).unwrap();
    let up = upsample_backward(&filled, 700, 600).unwrap();
    assert_eq!(up.hole_count(), 0);
}

#[test]
fn folded_cell_is_diagnosed() {
    let mut field = GridField::uniform(8);
    let (a, b) = (field.get(3, 3), field.get(4, 3));
    field.set(3, 3, b);
    field.set(4, 3, a);
    assert!(grid_diagnostics(&field).fold_count >= 1);
    let (_, diag) = invert_forward(&field, 64, 64, 64, 64).unwrap();
    assert!(diag.folded_cells >= 1);
    assert!(diag.folded_pixels > 0);
}

#[test]
fn fold_count_matches_brute_scan() {
    let mut r = rng(31);
    let mut seen_folds = false;
    for k in 0..12 {
        let field = smooth_field(&mut r, 16, 0.4 + 0.3 * k as f64);
        let expected = brute_fold_count(&field);
        seen_folds |= expected > 0;
        assert_eq!(grid_diagnostics(&field).fold_count, expected);
        let shifted = GridField::from_fn(16, |i, j| {
            let v = field.get(i, j);
            [v[0] + 3.5, v[1] - 1.25]
        });
        assert_eq!(grid_diagnostics(&shifted).fold_count, expected);
    }
    assert!(seen_folds);
}

#[test]
fn ms_ssim_matches_reference() {
    for (a, b) in ms_ssim_pairs() {
        let got = ms_ssim(&a, &b).unwrap();
        let want = reference_ms_ssim(&a, &b);
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        assert!((got - ms_ssim(&b, &a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn ms_ssim_on_rgb_uses_luma() {
    let mut r = rng(3);
    let a = texture(&mut r, 180, 180, 5.0).to_rgb();
    let b = shift(&a.to_gray(), 2).to_rgb();
    assert!((ms_ssim(&a, &b).unwrap() - reference_ms_ssim(&a, &b)).abs() < 1e-3);
}

#[test]
fn local_distortion_matches_loop() {
    let mut r = rng(51);
    let (w, h) = (37, 23);
    let mut make = |holes: f64| {
        BackwardMap::from_fn(w, h, |_, _| (r.gen::<f64>() >= holes).then(|| [r.gen_range(-50.0..50.0), r.gen_range(-50.0..50.0)]))
    };
    let a = make(0.1);
    let b = make(0.2);
    let mut sum = 0.0;
    let mut count = 0.0;
    for y in 0..h {
        for x in 0..w {
            if let (Some(p), Some(q)) = (a.get(x, y), b.get(x, y)) {
                sum += ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                count += 1.0;
            }
        }
    }
    assert!((local_distortion(&a, &b).unwrap() - sum / count).abs() < 1e-12);
    assert_eq!(local_distortion(&a, &a).unwrap(), 0.0);
}

#[test]
fn resample_stays_in_range() {
    let mut r = rng(61);
    let img = texture(&mut r, 64, 48, 60.0);
    let bm = BackwardMap::from_fn(80, 80, |x, y| Some([x as f64 * 0.9 - 5.0, y as f64 * 0.7 + 3.3]));
    let out = resample(&img, &bm);
    let (lo, hi) = img.data().iter().fold((255u8, 0u8), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
}
