//! Assembly and solution of the grid-regularized least-squares energy.
//!
//! For one channel `φ` (either `u` or `v`, the two are independent):
//!
//! ```text
//! E(φ) = ‖B φ − t‖² + α ‖L φ‖² + λ (‖Δ φ‖² + β ‖D_xy φ‖²)
//! ```
//!
//! where `B` couples boundary points to the grid with bilinear weights, `L`
//! holds differences of consecutive line points, `Δ` is the 5-point index-space
//! Laplacian on interior nodes and `D_xy` the per-cell mixed difference.
//! The minimizer solves the normal equations `N φ = c`, which are handled by
//! preconditioned conjugate gradients.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    assemble_boundary_block, assemble_line_block, Channel, ConstraintError, ConstraintKind,
    ConstraintSet, ResidualBlock,
};
use crate::geom::{bilinear_weights, pixel_to_grid, GridField, Side};
use crate::sparse::{EnvelopeCholesky, SparseRows, SymmetricCsr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("grid size must be at least 3, got {0}")]
    GridTooSmall(usize),
    #[error("invalid solver parameter: {0}")]
    Params(&'static str),
    #[error("channel {0:?} lacks boundary targets at both 0 and 1; the solution is not unique")]
    UnderDetermined(Channel),
    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("normal matrix is not positive definite (row {row}, pivot {pivot:e})")]
    Indefinite { row: usize, pivot: f64 },
    #[error("field dimension mismatch: expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    /// Diagonal scaling.
    Jacobi,
    /// Complete envelope Cholesky of the normal matrix.
    #[default]
    Cholesky,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub n: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub beta: f64,
    /// Relative residual of the normal equations at which to stop.
    pub tol: f64,
    pub max_iters: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            n: 128,
            alpha: 10.0,
            lambda: 2.0,
            beta: 20.0,
            tol: 1e-8,
            max_iters: 20_000,
            preconditioner: Preconditioner::Cholesky,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolveError> {
        if self.n < 3 {
            return Err(SolveError::GridTooSmall(self.n));
        }
        if !(self.alpha > 0.0 && self.lambda > 0.0 && self.beta > 0.0) {
            return Err(SolveError::Params("alpha, lambda and beta must be positive"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(SolveError::Params("tol must lie in (0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(SolveError::Params("max_iters must be positive"));
        }
        Ok(())
    }
}

/// Laplacian rows (interior nodes, weight 1) and mixed-difference rows
/// (every cell, weight `beta`), both in index space.
pub fn regularizer_blocks(n: usize, beta: f64) -> Result<(ResidualBlock, ResidualBlock), SolveError> {
    if n < 3 {
        return Err(SolveError::GridTooSmall(n));
    }
    let idx = |i: usize, j: usize| j * n + i;
    let mut lap = SparseRows::new(n * n);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            lap.push_row([
                (idx(i, j - 1), 1.0),
                (idx(i - 1, j), 1.0),
                (idx(i, j), -4.0),
                (idx(i + 1, j), 1.0),
                (idx(i, j + 1), 1.0),
            ]);
        }
    }
    let mut cross = SparseRows::new(n * n);
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            cross.push_row([
                (idx(i, j), 1.0),
                (idx(i + 1, j), -1.0),
                (idx(i, j + 1), -1.0),
                (idx(i + 1, j + 1), 1.0),
            ]);
        }
    }
    let lap_rows = lap.nrows();
    let cross_rows = cross.nrows();
    Ok((
        ResidualBlock {
            rows: lap,
            rhs: vec![0.0; lap_rows],
            weight: 1.0,
        },
        ResidualBlock {
            rows: cross,
            rhs: vec![0.0; cross_rows],
            weight: beta,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Boundary,
    Line,
    Laplacian,
    Cross,
}

/// The stacked least-squares system of one channel.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub channel: Channel,
    pub n: usize,
    pub boundary: ResidualBlock,
    pub line: ResidualBlock,
    pub laplacian: ResidualBlock,
    pub cross: ResidualBlock,
    /// Side of each boundary row.
    pub boundary_sides: Vec<Side>,
    /// Chain id of each line row.
    pub line_chains: Vec<usize>,
    /// Whether boundary targets pin both 0 and 1.
    pub anchored: bool,
}

impl QuadraticProblem {
    pub fn n_unknowns(&self) -> usize {
        self.n * self.n
    }

    pub fn blocks(&self) -> [(BlockKind, &ResidualBlock); 4] {
        [
            (BlockKind::Boundary, &self.boundary),
            (BlockKind::Line, &self.line),
            (BlockKind::Laplacian, &self.laplacian),
            (BlockKind::Cross, &self.cross),
        ]
    }

    /// Weighted energy of each block.
    pub fn block_energies(&self, x: &[f64]) -> BlockEnergies {
        BlockEnergies {
            boundary: self.boundary.energy(x),
            line: self.line.energy(x),
            laplacian: self.laplacian.energy(x),
            cross: self.cross.energy(x),
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.block_energies(x).total()
    }

    /// `∇E = 2 Σ_b w_b A_bᵀ (A_b x − b_b)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_unknowns()];
        for (_, block) in self.blocks() {
            let r = block.residuals(x);
            block.rows.add_transpose_mul(&r, 2.0 * block.weight, &mut g);
        }
        g
    }

    /// Normal matrix `N = Σ w AᵀA` and right-hand side `c = Σ w Aᵀb`.
    pub fn normal_equations(&self) -> (SymmetricCsr, Vec<f64>) {
        let nmat = SymmetricCsr::normal_matrix(
            self.n_unknowns(),
            self.blocks().map(|(_, b)| (&b.rows, b.weight)),
        );
        let mut c = vec![0.0; self.n_unknowns()];
        for (_, b) in self.blocks() {
            b.rows.add_transpose_mul(&b.rhs, b.weight, &mut c);
        }
        (nmat, c)
    }

    /// `Σ w ‖b‖²`, the objective at `x = 0`.
    fn rhs_energy(&self) -> f64 {
        self.blocks()
            .iter()
            .map(|(_, b)| b.weight * b.rhs.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockEnergies {
    pub boundary: f64,
    pub line: f64,
    pub laplacian: f64,
    pub cross: f64,
}

impl BlockEnergies {
    pub fn total(&self) -> f64 {
        self.boundary + self.line + self.laplacian + self.cross
    }

    pub fn regularizer(&self) -> f64 {
        self.laplacian + self.cross
    }
}

/// Builds the channel's problem: boundary (weight 1), lines (`alpha`),
/// Laplacian (`lambda`) and mixed differences (`lambda * beta`).
pub fn build_problem(
    set: &ConstraintSet,
    params: &SolverParams,
    channel: Channel,
) -> Result<QuadraticProblem, SolveError> {
    params.validate()?;
    if set.n != params.n {
        return Err(SolveError::Dimension {
            expected: params.n,
            got: set.n,
        });
    }
    let boundary = assemble_boundary_block(set, channel)?;
    let line = assemble_line_block(set, channel, params.alpha)?;
    let (mut laplacian, mut cross) = regularizer_blocks(params.n, params.beta)?;
    laplacian.weight *= params.lambda;
    cross.weight *= params.lambda;

    let boundary_sides = set
        .boundary_points(channel)
        .map(|p| match p.kind {
            ConstraintKind::Boundary(s) => s,
            _ => unreachable!("boundary points carry a boundary kind"),
        })
        .collect();
    let line_chains = set
        .chains(channel)
        .into_iter()
        .flat_map(|(id, pts)| std::iter::repeat(id).take(pts.len().saturating_sub(1)))
        .collect();

    Ok(QuadraticProblem {
        channel,
        n: params.n,
        boundary,
        line,
        laplacian,
        cross,
        boundary_sides,
        line_chains,
        anchored: set.has_both_targets(channel),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub channel: Channel,
    pub iterations: usize,
    /// `‖c − N x‖ / ‖c‖` at the returned iterate.
    pub relative_residual: f64,
    pub objective: f64,
    pub energies: BlockEnergies,
    pub preconditioner: Preconditioner,
    /// Objective value after each iteration, starting with the initial guess.
    #[serde(skip)]
    pub objective_history: Vec<f64>,
}

/// The solved values of one channel, row-major (`j * n + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSolution {
    pub channel: Channel,
    pub n: usize,
    pub values: Vec<f64>,
}

fn uniform_channel(n: usize, channel: Channel) -> Vec<f64> {
    GridField::uniform(n).channel(channel.index())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum Precond {
    Jacobi(Vec<f64>),
    Cholesky(EnvelopeCholesky),
}

impl Precond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            Precond::Cholesky(f) => {
                z.copy_from_slice(r);
                f.solve_in_place(z);
            }
        }
    }
}

/// Minimizes the channel energy with preconditioned conjugate gradients on
/// the normal equations, starting from the uniform grid.
///
/// Each iterate minimizes the energy over a growing Krylov subspace, so the
/// objective is non-increasing across iterations. The iteration order is
/// fixed, making results bit-reproducible.
pub fn solve(
    problem: &QuadraticProblem,
    params: &SolverParams,
) -> Result<(ChannelSolution, SolveDiagnostics), SolveError> {
    params.validate()?;
    if !problem.anchored {
        return Err(SolveError::UnderDetermined(problem.channel));
    }
    let (nmat, c) = problem.normal_equations();
    let precond = match params.preconditioner {
        Preconditioner::Jacobi => Precond::Jacobi(
            nmat.diagonal()
                .into_iter()
                .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        ),
        Preconditioner::Cholesky => Precond::Cholesky(
            EnvelopeCholesky::factor(&nmat).map_err(|e| SolveError::Indefinite {
                row: e.row,
                pivot: e.pivot,
            })?,
        ),
    };

    let dim = problem.n_unknowns();
    let c_norm = dot(&c, &c).sqrt().max(f64::MIN_POSITIVE);
    let k0 = problem.rhs_energy();
    let objective_of = |x: &[f64], r: &[f64]| k0 - dot(&c, x) - dot(x, r);

    let mut x = uniform_channel(problem.n, problem.channel);
    let mut r = vec![0.0; dim];
    nmat.mul_vec_into(&x, &mut r);
    for (ri, ci) in r.iter_mut().zip(&c) {
        *ri = ci - *ri;
    }
    let mut z = vec![0.0; dim];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; dim];
    let mut history = vec![objective_of(&x, &r)];
    let mut iterations = 0;
    let mut rel = dot(&r, &r).sqrt() / c_norm;

    while rel > params.tol {
        if iterations >= params.max_iters {
            return Err(SolveError::NotConverged {
                iterations,
                residual: rel,
                best: x,
            });
        }
        nmat.mul_vec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let step = rz / pq;
        for ((xi, ri), (pi, qi)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&q)) {
            *xi += step * pi;
            *ri -= step * qi;
        }
        iterations += 1;
        // Refresh the recursive residual now and then to limit drift.
        if iterations % 50 == 0 {
            nmat.mul_vec_into(&x, &mut r);
            for (ri, ci) in r.iter_mut().zip(&c) {
                *ri = ci - *ri;
            }
        }
        history.push(objective_of(&x, &r));
        rel = dot(&r, &r).sqrt() / c_norm;
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }

    // Report the true residual of the returned iterate.
    nmat.mul_vec_into(&x, &mut r);
    for (ri, ci) in r.iter_mut().zip(&c) {
        *ri = ci - *ri;
    }
    let relative_residual = dot(&r, &r).sqrt() / c_norm;
    if relative_residual > params.tol * 10.0 {
        return Err(SolveError::NotConverged {
            iterations,
            residual: relative_residual,
            best: x,
        });
    }
    let energies = problem.block_energies(&x);
    let diagnostics = SolveDiagnostics {
        channel: problem.channel,
        iterations,
        relative_residual,
        objective: energies.total(),
        energies,
        preconditioner: params.preconditioner,
        objective_history: history,
    };
    Ok((
        ChannelSolution {
            channel: problem.channel,
            n: problem.n,
            values: x,
        },
        diagnostics,
    ))
}

/// Solves both channels (concurrently) and packs them into a forward field.
pub fn solve_field(
    set: &ConstraintSet,
    params: &SolverParams,
) -> Result<(GridField, [SolveDiagnostics; 2], [QuadraticProblem; 2]), SolveError> {
    let run = |ch: Channel| -> Result<_, SolveError> {
        let prob = build_problem(set, params, ch)?;
        let (sol, diag) = solve(&prob, params)?;
        Ok((prob, sol, diag))
    };
    let (u, v) = rayon::join(|| run(Channel::U), || run(Channel::V));
    let (pu, su, du) = u?;
    let (pv, sv, dv) = v?;
    let field = GridField::from_channels(params.n, &su.values, &sv.values)
        .expect("solution sizes match the grid");
    Ok((field, [du, dv], [pu, pv]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEnergy {
    pub channel: Channel,
    pub chain: usize,
    pub energy: f64,
}

/// Per-term breakdown of the total energy of a forward field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub boundary: BTreeMap<String, f64>,
    pub lines: Vec<ChainEnergy>,
    /// Laplacian energy per channel `[u, v]`, weighted by lambda.
    pub laplacian: [f64; 2],
    /// Mixed-difference energy per channel, weighted by lambda * beta.
    pub cross: [f64; 2],
    pub total: f64,
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Top => "top",
        Side::Bottom => "bottom",
        Side::Left => "left",
        Side::Right => "right",
    }
}

/// Splits the energy of `field` under the U and V problems into boundary
/// sides, individual chains and regularizer terms.
pub fn energy_report(
    field: &GridField,
    problems: [&QuadraticProblem; 2],
) -> Result<EnergyReport, SolveError> {
    let mut boundary: BTreeMap<String, f64> = BTreeMap::new();
    let mut lines: Vec<ChainEnergy> = Vec::new();
    let mut laplacian = [0.0; 2];
    let mut cross = [0.0; 2];
    for prob in problems {
        if prob.n != field.n() {
            return Err(SolveError::Dimension {
                expected: prob.n * prob.n,
                got: field.n() * field.n(),
            });
        }
        let k = prob.channel.index();
        let x = field.channel(k);
        for (r, side) in prob.boundary.residuals(&x).iter().zip(&prob.boundary_sides) {
            *boundary.entry(side_name(*side).to_string()).or_default() +=
                prob.boundary.weight * r * r;
        }
        for (r, &chain) in prob.line.residuals(&x).iter().zip(&prob.line_chains) {
            let e = prob.line.weight * r * r;
            match lines
                .iter_mut()
                .find(|c| c.chain == chain && c.channel == prob.channel)
            {
                Some(c) => c.energy += e,
                None => lines.push(ChainEnergy {
                    channel: prob.channel,
                    chain,
                    energy: e,
                }),
            }
        }
        laplacian[k] += prob.laplacian.energy(&x);
        cross[k] += prob.cross.energy(&x);
    }
    let total = boundary.values().sum::<f64>()
        + lines.iter().map(|c| c.energy).sum::<f64>()
        + laplacian.iter().sum::<f64>()
        + cross.iter().sum::<f64>();
    Ok(EnergyReport {
        boundary,
        lines,
        laplacian,
        cross,
        total,
    })
}

/// Evaluates the field at a source pixel by bilinear interpolation.
pub fn eval_forward(field: &GridField, p: crate::geom::Point2, size: (usize, usize)) -> Option<[f64; 2]> {
    let g = pixel_to_grid(p, field.n(), size.0, size.1);
    let st = bilinear_weights(g, field.n()).ok()?;
    let mut out = [0.0; 2];
    for (&(i, j), w) in st.nodes.iter().zip(st.weights) {
        let v = field.get(i, j);
        out[0] += w * v[0];
        out[1] += w * v[1];
    }
    Some(out)
}
