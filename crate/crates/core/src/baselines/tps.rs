//! Thin-plate spline fitted to point correspondences.
//!
//! The model is `f(x) = a₀ + a₁ x + a₂ y + Σ wᵢ U(|x − pᵢ|)` per output
//! component with `U(r) = r² log r`. With smoothing `reg ≥ 0` it minimizes
//! `Σ ‖f(pᵢ) − qᵢ‖² + reg · J(f)`, where `J` is the bending energy
//! `∫ f_xx² + 2 f_xy² + f_yy²`. Since `J(f) = 8π wᵀ K w`, the stationarity
//! conditions give the bordered system
//!
//! ```text
//! [K + 8π·reg·I  P] [w]   [q]
//! [Pᵀ            0] [a] = [0]
//! ```

use nalgebra::{DMatrix, Matrix3};

use crate::geom::{GridField, Point2};

use super::BaselineError;

/// `r² log r`, extended continuously by 0 at the origin.
pub fn tps_kernel(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpsModel {
    centers: Vec<Point2>,
    /// Kernel coefficients per center, `[x, y]` output components.
    weights: Vec<[f64; 2]>,
    /// Affine part: row `k` is `(a₀, a₁, a₂)` for output component `k`.
    affine: [[f64; 3]; 2],
    reg: f64,
}

impl TpsModel {
    pub fn centers(&self) -> &[Point2] {
        &self.centers
    }

    pub fn weights(&self) -> &[[f64; 2]] {
        &self.weights
    }

    pub fn affine(&self) -> [[f64; 3]; 2] {
        self.affine
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn eval(&self, p: Point2) -> Point2 {
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            let a = self.affine[k];
            *o = a[0] + a[1] * p.x + a[2] * p.y;
        }
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let u = tps_kernel(p.distance(*c));
            out[0] += w[0] * u;
            out[1] += w[1] * u;
        }
        Point2::new(out[0], out[1])
    }

    /// Bending energy `J(f)`, summed over both output components.
    pub fn bending_energy(&self) -> f64 {
        let mut e = 0.0;
        for (i, ci) in self.centers.iter().enumerate() {
            for (j, cj) in self.centers.iter().enumerate() {
                let u = tps_kernel(ci.distance(*cj));
                e += u * (self.weights[i][0] * self.weights[j][0] + self.weights[i][1] * self.weights[j][1]);
            }
        }
        8.0 * std::f64::consts::PI * e
    }

    /// The fitted objective `Σ ‖f(pᵢ) − qᵢ‖² + reg · J(f)`.
    pub fn objective(&self, targets: &[Point2]) -> f64 {
        let data: f64 = self
            .centers
            .iter()
            .zip(targets)
            .map(|(p, q)| {
                let d = self.eval(*p) - *q;
                d.x * d.x + d.y * d.y
            })
            .sum();
        data + self.reg * self.bending_energy()
    }

    /// Copy with altered coefficients, for optimality checks.
    pub fn with_coefficients(&self, weights: Vec<[f64; 2]>, affine: [[f64; 3]; 2]) -> TpsModel {
        assert_eq!(weights.len(), self.centers.len());
        TpsModel {
            centers: self.centers.clone(),
            weights,
            affine,
            reg: self.reg,
        }
    }
}

/// Fits a spline mapping `sources[i]` to `targets[i]`.
pub fn tps_fit(sources: &[Point2], targets: &[Point2], reg: f64) -> Result<TpsModel, BaselineError> {
    let m = sources.len();
    if m != targets.len() {
        return Err(BaselineError::Mismatch(m, targets.len()));
    }
    if m < 3 {
        return Err(BaselineError::TooFewPoints(m));
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(BaselineError::Regularization(reg));
    }
    check_configuration(sources)?;

    let dim = m + 3;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DMatrix::<f64>::zeros(dim, 2);
    let diag = 8.0 * std::f64::consts::PI * reg;
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = tps_kernel(sources[i].distance(sources[j]));
        }
        a[(i, i)] += diag;
        let p = sources[i];
        for (k, v) in [1.0, p.x, p.y].into_iter().enumerate() {
            a[(i, m + k)] = v;
            a[(m + k, i)] = v;
        }
        b[(i, 0)] = targets[i].x;
        b[(i, 1)] = targets[i].y;
    }
    let sol = a.lu().solve(&b).ok_or(BaselineError::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(BaselineError::Singular);
    }
    let weights = (0..m).map(|i| [sol[(i, 0)], sol[(i, 1)]]).collect();
    let affine = [
        [sol[(m, 0)], sol[(m + 1, 0)], sol[(m + 2, 0)]],
        [sol[(m, 1)], sol[(m + 1, 1)], sol[(m + 2, 1)]],
    ];
    Ok(TpsModel {
        centers: sources.to_vec(),
        weights,
        affine,
        reg,
    })
}

/// Rejects duplicated or collinear control points.
fn check_configuration(points: &[Point2]) -> Result<(), BaselineError> {
    let m = points.len() as f64;
    let c = points.iter().fold(Point2::default(), |acc, p| acc + *p) * (1.0 / m);
    let scale = points.iter().map(|p| p.distance(c)).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(BaselineError::Degenerate("all control points coincide"));
    }
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            if p.distance(*q) <= 1e-12 * scale {
                return Err(BaselineError::Degenerate("duplicate control points"));
            }
        }
    }
    // Second moments of the normalized cloud; rank < 2 means collinear.
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = (*p - c) * (1.0 / scale);
        let v = nalgebra::Vector3::new(1.0, d.x, d.y);
        cov += v * v.transpose();
    }
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if lo <= 1e-12 * hi {
        return Err(BaselineError::Degenerate("control points are collinear"));
    }
    Ok(())
}

/// Evaluates the model at the lattice `(i/(n-1), j/(n-1))`.
pub fn tps_grid(model: &TpsModel, n: usize) -> Result<GridField, BaselineError> {
    if n < 2 {
        return Err(BaselineError::GridTooSmall(n));
    }
    let s = (n - 1) as f64;
    Ok(GridField::from_fn(n, |i, j| {
        let p = model.eval(Point2::new(i as f64 / s, j as f64 / s));
        [p.x, p.y]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(v: &[(f64, f64)]) -> Vec<Point2> {
        v.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    #[test]
    fn translation_is_affine_only() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let q: Vec<Point2> = p.iter().map(|&x| x + Point2::new(2.5, -1.0)).collect();
        let m = tps_fit(&p, &q, 0.0).unwrap();
        assert!(m.weights().iter().all(|w| w[0].abs() < 1e-12 && w[1].abs() < 1e-12));
        let a = m.affine();
        assert!((a[0][0] - 2.5).abs() < 1e-12 && (a[1][0] + 1.0).abs() < 1e-12);
        assert!((a[0][1] - 1.0).abs() < 1e-12 && a[0][2].abs() < 1e-12);
        assert!(m.bending_energy().abs() < 1e-20);
    }

    #[test]
    fn three_points_reproduce_affine_map() {
        let p = pts(&[(0.0, 0.0), (4.0, 1.0), (1.0, 3.0)]);
        let f = |x: Point2| Point2::new(1.0 + 2.0 * x.x - 0.5 * x.y, -3.0 + 0.25 * x.x + 1.5 * x.y);
        let q: Vec<Point2> = p.iter().map(|&x| f(x)).collect();
        let m = tps_fit(&p, &q, 0.0).unwrap();
        for probe in pts(&[(2.0, 2.0), (-1.0, 5.0), (10.0, -3.0)]) {
            assert!(m.eval(probe).distance(f(probe)) < 1e-10);
        }
    }

    #[test]
    fn displaced_interior_point_is_interpolated() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.5)]);
        let mut q = p.clone();
        q[4] = Point2::new(0.6, 0.45);
        let m = tps_fit(&p, &q, 0.0).unwrap();
        for (pi, qi) in p.iter().zip(&q) {
            assert!(m.eval(*pi).distance(*qi) < 1e-8);
        }
        assert!(m.bending_energy() > 0.0);
        // Side conditions.
        let (s0, sx, sy) = m.weights().iter().zip(&p).fold((0.0, 0.0, 0.0), |acc, (w, c)| {
            (acc.0 + w[0], acc.1 + w[0] * c.x, acc.2 + w[0] * c.y)
        });
        assert!(s0.abs() < 1e-10 && sx.abs() < 1e-10 && sy.abs() < 1e-10);
    }

    #[test]
    fn smoothing_fit_is_a_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<Point2> = (0..12).map(|_| Point2::new(rng.gen(), rng.gen())).collect();
        let q: Vec<Point2> = p
            .iter()
            .map(|x| *x + Point2::new(0.1 * rng.gen::<f64>(), 0.1 * rng.gen::<f64>()))
            .collect();
        let m = tps_fit(&p, &q, 0.01).unwrap();
        let best = m.objective(&q);
        for _ in 0..20 {
            // Perturb inside the side-condition space: any affine change plus
            // a kernel perturbation orthogonal to [1, x, y].
            let mut dw: Vec<[f64; 2]> = (0..12).map(|_| [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5]).collect();
            project_side_conditions(&p, &mut dw);
            let eps = 1e-3;
            let w: Vec<[f64; 2]> = m.weights().iter().zip(&dw).map(|(a, d)| [a[0] + eps * d[0], a[1] + eps * d[1]]).collect();
            let mut a = m.affine();
            a[0][1] += eps * (rng.gen::<f64>() - 0.5);
            a[1][0] += eps * (rng.gen::<f64>() - 0.5);
            let other = m.with_coefficients(w, a);
            assert!(other.objective(&q) >= best - 1e-12);
        }
    }

    fn project_side_conditions(p: &[Point2], dw: &mut [[f64; 2]]) {
        // Gram-Schmidt against the columns 1, x, y.
        let cols: Vec<Vec<f64>> = vec![vec![1.0; p.len()], p.iter().map(|c| c.x).collect(), p.iter().map(|c| c.y).collect()];
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for c in cols {
            let mut v = c;
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= nrm);
            basis.push(v);
        }
        for k in 0..2 {
            for b in &basis {
                let d: f64 = dw.iter().zip(b).map(|(w, y)| w[k] * y).sum();
                dw.iter_mut().zip(b).for_each(|(w, y)| w[k] -= d * y);
            }
        }
    }

    #[test]
    fn adding_affine_function_keeps_kernel_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: Vec<Point2> = (0..15).map(|_| Point2::new(rng.gen(), rng.gen())).collect();
        let q: Vec<Point2> = p.iter().map(|x| Point2::new(x.x + 0.05 * (6.0 * x.y).sin(), x.y)).collect();
        let aff = |x: Point2| Point2::new(0.3 + 0.2 * x.x - 0.7 * x.y, -1.0 + 0.4 * x.x + 0.1 * x.y);
        let q2: Vec<Point2> = p.iter().zip(&q).map(|(x, y)| *y + aff(*x)).collect();
        let m1 = tps_fit(&p, &q, 0.0).unwrap();
        let m2 = tps_fit(&p, &q2, 0.0).unwrap();
        for (a, b) in m1.weights().iter().zip(m2.weights()) {
            assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
        }
        let (a1, a2) = (m1.affine(), m2.affine());
        let expected = [[0.3, 0.2, -0.7], [-1.0, 0.4, 0.1]];
        for k in 0..2 {
            for c in 0..3 {
                assert!((a2[k][c] - a1[k][c] - expected[k][c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn degenerate_configurations() {
        let line = pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        assert!(matches!(tps_fit(&line, &line, 0.0), Err(BaselineError::Degenerate(_))));
        let dup = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 0.0)]);
        assert!(matches!(tps_fit(&dup, &dup, 0.0), Err(BaselineError::Degenerate(_))));
        assert!(matches!(tps_fit(&dup[..2], &dup[..2], 0.0), Err(BaselineError::TooFewPoints(2))));
    }

    #[test]
    fn identity_and_translation_grids() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.3, 0.6)]);
        let id = tps_fit(&p, &p, 0.0).unwrap();
        assert!(tps_grid(&id, 6).unwrap().max_abs_diff(&GridField::uniform(6)) < 1e-12);
        let q: Vec<Point2> = p.iter().map(|&x| x + Point2::new(0.1, 0.2)).collect();
        let tr = tps_grid(&tps_fit(&p, &q, 0.0).unwrap(), 6).unwrap();
        let shifted = GridField::from_fn(6, |i, j| [i as f64 / 5.0 + 0.1, j as f64 / 5.0 + 0.2]);
        assert!(tr.max_abs_diff(&shifted) < 1e-12);
    }
}
