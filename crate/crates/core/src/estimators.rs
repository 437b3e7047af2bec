//! Splitting bound and localized dual weighted residual estimators.
//!
//! For iterate `k` and cell `(t_{i,j-1}, t_{i,j}]` of component `i` the
//! signed indicator is
//!
//! ```text
//!   eta_{k,i,j} = int_cell rho_{k,i} w_{k,i}
//!                 - [u_{k,i}]_{t_{i,j}} w_{k,i}(t_{i,j}^-)
//!                 + z_{k,i,j} q_{i,j}
//! ```
//!
//! with `rho_{k,i} = y_i - u'_{k,i} - (B_hat u_k)_i - (B_check u_{k-1})_i`,
//! the jump term present only for piecewise-constant trial functions,
//! `w = Z - Z_h` the dual error (or a computable proxy for it) and
//! `q_{i,j}` the error of the forcing quadrature in `G`. With the exact
//! stacked adjoint the signed sum over `k, i, j` equals the goal error.

use std::io::Write;

use crate::assembly::{
    basis::hat_eval, forcing_quadrature, BasisFamily, DiscreteFunction, GaussRule, Scheme,
};
use crate::error::{Error, Result};
use crate::mesh::{CellId, MultiMesh};
use crate::model::{Problem, Qoi, Splitting, Waveform};
use crate::solver::IterationState;

/// `ratio^K sup_e0 sum_r |J_r| P(Poisson(-L1 t_r) >= K)` with
/// `ratio = -L2 / L1`; `+inf` when `L1 >= 0`.
pub fn splitting_bound(l1: f64, l2: f64, sup_e0: f64, k: usize, qoi: &Qoi, t0: f64) -> f64 {
    if l2 == 0.0 || sup_e0 == 0.0 {
        return 0.0;
    }
    if l1 >= 0.0 || l1.is_nan() {
        return f64::INFINITY;
    }
    let ratio = -l2 / l1;
    let scale = ratio.powi(k as i32) * sup_e0;
    let sum: f64 = qoi
        .terms()
        .iter()
        .map(|term| term.weights.norm() * poisson_tail(-l1 * (term.time - t0), k))
        .sum();
    scale * sum
}

/// `1 - e^{-x} sum_{n<k} x^n / n!`, clamped to `[0, 1]`.
pub fn poisson_tail(x: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if x <= 0.0 {
        return 0.0;
    }
    let log_x = x.ln();
    let value = if (k as f64) <= x {
        // head sum, terms increase up to the mode
        let mut log_term = -x;
        let mut head = log_term.exp();
        for n in 1..k {
            log_term += log_x - (n as f64).ln();
            head += log_term.exp();
        }
        1.0 - head
    } else {
        // tail sum, terms decrease past the mode
        let mut log_term = -x;
        for n in 1..=k {
            log_term += log_x - (n as f64).ln();
        }
        let mut tail = 0.0;
        let mut n = k;
        loop {
            let term = log_term.exp();
            tail += term;
            if term <= tail * 1e-17 || term == 0.0 {
                break;
            }
            n += 1;
            log_term += log_x - (n as f64).ln();
        }
        tail
    };
    value.clamp(0.0, 1.0)
}

/// Weight `w = Z - Z_h` of dual `k` (1-based, `k = K` terminal).
pub trait DualErrorWeight {
    /// Value inside cell `j` of component `i`; at the cell end it is the
    /// limit from inside the cell.
    fn eval(&self, k: usize, i: usize, j: usize, t: f64) -> f64;

    /// Points inside cell `(i, j)` where the weight is not smooth.
    fn knots(&self, _i: usize, _j: usize) -> Vec<f64> {
        Vec::new()
    }
}

/// Piecewise quadratic per cell, stored as values at the cell end points,
/// quarter points and midpoint.
type CellShape = [f64; 5];

#[inline]
fn eval_shape(shape: &CellShape, a: f64, b: f64, t: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let (f0, f1, f2, lo, hi) = if t <= mid {
        (shape[0], shape[1], shape[2], a, mid)
    } else {
        (shape[2], shape[3], shape[4], mid, b)
    };
    let s = (t - lo) / (hi - lo);
    // quadratic through s = 0, 1/2, 1
    f0 * (2.0 * s - 1.0) * (s - 1.0) + f1 * 4.0 * s * (1.0 - s) + f2 * s * (2.0 * s - 1.0)
}

fn shape_from(f: impl Fn(f64) -> f64, a: f64, b: f64) -> CellShape {
    let h = b - a;
    [f(a), f(a + 0.25 * h), f(a + 0.5 * h), f(a + 0.75 * h), f(b)]
}

/// Reconstruction-minus-discrete dual for every dual, component and cell.
#[derive(Debug, Clone, Default)]
pub struct AdjointErrorProxy {
    mesh_cells: Vec<Vec<(f64, f64)>>,
    /// `duals[k - 1][i][j - 1]`
    duals: Vec<Vec<Vec<CellShape>>>,
}

impl AdjointErrorProxy {
    pub fn new(mesh: &MultiMesh) -> Self {
        Self {
            mesh_cells: (0..mesh.dim())
                .map(|i| (1..=mesh.n_cells(i)).map(|j| mesh.cell(i, j)).collect())
                .collect(),
            duals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.duals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.duals.is_empty()
    }

    /// Adds the proxy of a newly solved dual in front, mirroring the shift
    /// of the dual stack. `jumps` carries the terminal weights `H` when the
    /// dual is the terminal solve.
    pub fn push_front(
        &mut self,
        dual: &DiscreteFunction,
        scheme: Scheme,
        qoi_times: &[f64],
        jumps: Option<&[f64]>,
    ) {
        let shapes = reconstruct_one(dual, scheme, qoi_times, jumps);
        self.duals.insert(0, shapes);
    }
}

impl DualErrorWeight for AdjointErrorProxy {
    fn eval(&self, k: usize, i: usize, j: usize, t: f64) -> f64 {
        let (a, b) = self.mesh_cells[i][j - 1];
        eval_shape(&self.duals[k - 1][i][j - 1], a, b, t)
    }

    fn knots(&self, i: usize, j: usize) -> Vec<f64> {
        let (a, b) = self.mesh_cells[i][j - 1];
        vec![0.5 * (a + b)]
    }
}

/// Builds the proxy for a whole dual stack (`duals[0] = Z_1`, the last
/// one terminal).
pub fn reconstruct_adjoint_error(
    duals: &[DiscreteFunction],
    mesh: &MultiMesh,
    scheme: Scheme,
    qoi: &Qoi,
    h: &[f64],
) -> AdjointErrorProxy {
    let times: Vec<f64> = qoi.times().collect();
    let mut proxy = AdjointErrorProxy::new(mesh);
    for (k, dual) in duals.iter().enumerate().rev() {
        let jumps = (k + 1 == duals.len()).then_some(h);
        proxy.push_front(dual, scheme, &times, jumps);
    }
    proxy
}

fn reconstruct_one(
    dual: &DiscreteFunction,
    scheme: Scheme,
    qoi_times: &[f64],
    jumps: Option<&[f64]>,
) -> Vec<Vec<CellShape>> {
    let mesh = dual.mesh();
    let offsets = dual.offsets();
    (0..mesh.dim())
        .map(|i| {
            let grid = mesh.nodes(i);
            let z = dual.component(i);
            let n = grid.len() - 1;
            match (dual.family(), scheme) {
                (BasisFamily::C, _) => quadratic_minus_linear(grid, z),
                (_, Scheme::ExplicitEuler) => {
                    // z_j approximates Z(t_j^-); right limits differ by the
                    // terminal jump weights
                    (1..=n)
                        .map(|j| {
                            let jump = jumps.map_or(0.0, |h| h[offsets[i] + j - 1]);
                            let left = z[j - 1] - jump - z[j];
                            let (a, b) = (grid[j - 1], grid[j]);
                            shape_from(|t| left * (b - t) / (b - a), a, b)
                        })
                        .collect()
                }
                (_, Scheme::CrankNicolson) => midpoint_reconstruction(grid, z, qoi_times),
            }
        })
        .collect()
}

/// Piecewise-constant dual values `z_j` taken as midpoint samples,
/// interpolated linearly through neighbouring midpoints within each segment
/// between QoI times and extrapolated at segment ends.
fn midpoint_reconstruction(grid: &[f64], z: &[f64], qoi_times: &[f64]) -> Vec<CellShape> {
    let n = grid.len() - 1;
    let mut shapes = vec![[0.0; 5]; n];
    let mut seg_start = 0;
    while seg_start < n {
        let mut seg_end = seg_start + 1;
        while seg_end < n && !qoi_times.contains(&grid[seg_end]) {
            seg_end += 1;
        }
        // cells seg_start + 1 ..= seg_end
        let cells: Vec<usize> = (seg_start + 1..=seg_end).collect();
        if cells.len() >= 2 {
            let mid = |j: usize| 0.5 * (grid[j - 1] + grid[j]);
            for (pos, &j) in cells.iter().enumerate() {
                let left_nb = if pos > 0 {
                    cells[pos - 1]
                } else {
                    cells[pos + 1]
                };
                let right_nb = if pos + 1 < cells.len() {
                    cells[pos + 1]
                } else {
                    cells[pos - 1]
                };
                let line = |nb: usize, t: f64| {
                    let (m0, m1) = (mid(j), mid(nb));
                    z[j] + (z[nb] - z[j]) * (t - m0) / (m1 - m0) - z[j]
                };
                let (a, b) = (grid[j - 1], grid[j]);
                let m = mid(j);
                shapes[j - 1] = shape_from(
                    |t| {
                        if t <= m {
                            line(left_nb, t)
                        } else {
                            line(right_nb, t)
                        }
                    },
                    a,
                    b,
                );
            }
        }
        seg_start = seg_end;
    }
    shapes
}

/// Quadratic through three consecutive nodal values minus the linear
/// interpolant, per cell; centered patches where possible.
fn quadratic_minus_linear(grid: &[f64], z: &[f64]) -> Vec<CellShape> {
    let n = grid.len() - 1;
    if n < 2 {
        return vec![[0.0; 5]; n];
    }
    (1..=n)
        .map(|j| {
            let c = if j < n { j } else { j - 1 };
            let (x0, x1, x2) = (grid[c - 1], grid[c], grid[c + 1]);
            let (y0, y1, y2) = (z[c - 1], z[c], z[c + 1]);
            let quad = |t: f64| {
                y0 * (t - x1) * (t - x2) / ((x0 - x1) * (x0 - x2))
                    + y1 * (t - x0) * (t - x2) / ((x1 - x0) * (x1 - x2))
                    + y2 * (t - x0) * (t - x1) / ((x2 - x0) * (x2 - x1))
            };
            let (a, b) = (grid[j - 1], grid[j]);
            shape_from(
                |t| quad(t) - hat_eval(&grid[j - 1..=j], &z[j - 1..=j], t),
                a,
                b,
            )
        })
        .collect()
}

/// Quadrature nodes of every cell, split at the breakpoints of the
/// components coupled to it and at the given knots.
#[derive(Debug, Clone)]
pub struct CellLayout {
    pub cells: Vec<CellId>,
    pub bounds: Vec<(f64, f64)>,
    ranges: Vec<std::ops::Range<usize>>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const GAUSS_POINTS: usize = 4;

impl CellLayout {
    pub fn new(
        mesh: &MultiMesh,
        coupling: &nalgebra::DMatrix<f64>,
        knots: impl Fn(usize, usize) -> Vec<f64>,
    ) -> Self {
        let rule = GaussRule::new(GAUSS_POINTS);
        let m = mesh.dim();
        let mut cells = Vec::with_capacity(mesh.total_cells());
        let mut bounds = Vec::with_capacity(mesh.total_cells());
        let mut ranges = Vec::with_capacity(mesh.total_cells());
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for i in 0..m {
            let coupled: Vec<usize> = (0..m)
                .filter(|&c| c == i || coupling[(i, c)] != 0.0)
                .collect();
            for j in 1..=mesh.n_cells(i) {
                let (a, b) = mesh.cell(i, j);
                let mut cuts = vec![a, b];
                for &c in &coupled {
                    let grid = mesh.nodes(c);
                    let start = grid.partition_point(|&t| t <= a);
                    cuts.extend(grid[start..].iter().take_while(|&&t| t < b).copied());
                }
                cuts.extend(knots(i, j).into_iter().filter(|&t| t > a && t < b));
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let start = nodes.len();
                for w in cuts.windows(2) {
                    for (t, wt) in rule.mapped(w[0], w[1]) {
                        nodes.push(t);
                        weights.push(wt);
                    }
                }
                cells.push(CellId::new(i, j));
                bounds.push((a, b));
                ranges.push(start..nodes.len());
            }
        }
        Self {
            cells,
            bounds,
            ranges,
            nodes,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn nodes(&self, cell: usize) -> &[f64] {
        &self.nodes[self.ranges[cell].clone()]
    }
}

/// Residual of one iterate pair sampled on a [`CellLayout`].
#[derive(Debug, Clone)]
pub struct ResidualSamples {
    /// `rho(t) * weight` at every node.
    weighted: Vec<f64>,
    /// Jump of `u_k` at each cell's right end.
    jumps: Vec<f64>,
}

pub fn sample_residual(
    layout: &CellLayout,
    problem: &Problem,
    splitting: &Splitting,
    uk: &DiscreteFunction,
    uprev: &DiscreteFunction,
) -> Result<ResidualSamples> {
    uk.check_compatible(uprev)?;
    let m = problem.dim();
    let y = problem.forcing();
    let side = uk.family().own_side();
    let mut weighted = vec![0.0; layout.nodes.len()];
    let mut jumps = vec![0.0; layout.len()];
    for (c, id) in layout.cells.iter().enumerate() {
        let (i, j) = (id.component, id.cell);
        let slope = uk.cell_slope(i, j);
        for idx in layout.ranges[c].clone() {
            let t = layout.nodes[idx];
            let mut rho = y.eval_component(i, t) - slope;
            for col in 0..m {
                let bh = splitting.b_hat[(i, col)];
                if bh != 0.0 {
                    rho -= bh * uk.eval_component(col, t, side);
                }
                let bc = splitting.b_check[(i, col)];
                if bc != 0.0 {
                    rho -= bc * uprev.eval_component(col, t, side);
                }
            }
            weighted[idx] = rho * layout.weights[idx];
        }
        if uk.family().is_piecewise_constant() {
            let u = uk.component(i);
            jumps[c] = u[j] - u[j - 1];
        }
    }
    Ok(ResidualSamples { weighted, jumps })
}

/// One dual's weight sampled on a [`CellLayout`].
#[derive(Debug, Clone)]
pub struct WeightSamples {
    values: Vec<f64>,
    right_limits: Vec<f64>,
    /// Dual coefficient of each cell's test function.
    dual_values: Vec<f64>,
}

pub fn sample_weight<W: DualErrorWeight + ?Sized>(
    layout: &CellLayout,
    weight: &W,
    k: usize,
    dual: &DiscreteFunction,
) -> WeightSamples {
    let mut values = vec![0.0; layout.nodes.len()];
    let mut right_limits = vec![0.0; layout.len()];
    let mut dual_values = vec![0.0; layout.len()];
    for (c, id) in layout.cells.iter().enumerate() {
        let (i, j) = (id.component, id.cell);
        for idx in layout.ranges[c].clone() {
            values[idx] = weight.eval(k, i, j, layout.nodes[idx]);
        }
        right_limits[c] = weight.eval(k, i, j, layout.bounds[c].1);
        dual_values[c] = dual.component(i)[j];
    }
    WeightSamples {
        values,
        right_limits,
        dual_values,
    }
}

/// `int_cell y_i - G_{i,j}` for every cell of the layout.
pub fn quadrature_defects(layout: &CellLayout, problem: &Problem, scheme: Scheme) -> Vec<f64> {
    let rule = GaussRule::new(8);
    let y = problem.forcing();
    layout
        .cells
        .iter()
        .zip(&layout.bounds)
        .map(|(id, &(a, b))| {
            let i = id.component;
            let exact: f64 = {
                // split once so oscillatory forcing stays well resolved
                let mid = 0.5 * (a + b);
                rule.integrate(a, mid, |t| y.eval_component(i, t))
                    + rule.integrate(mid, b, |t| y.eval_component(i, t))
            };
            exact - forcing_quadrature(problem, scheme, i, a, b)
        })
        .collect()
}

/// Signed indicators of one residual against one dual weight.
pub fn signed_indicators(
    layout: &CellLayout,
    residual: &ResidualSamples,
    weight: &WeightSamples,
    defects: &[f64],
) -> Vec<f64> {
    (0..layout.len())
        .map(|c| {
            let range = layout.ranges[c].clone();
            let integral: f64 = residual.weighted[range.clone()]
                .iter()
                .zip(&weight.values[range])
                .map(|(r, w)| r * w)
                .sum();
            integral - residual.jumps[c] * weight.right_limits[c]
                + weight.dual_values[c] * defects[c]
        })
        .collect()
}

/// Splitting bound and discretization estimators after `K` iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub level: usize,
    pub k: usize,
    pub nu: f64,
    pub mu_total: f64,
    /// `sum_k |eta_{k,i,j}|` per cell in `(component, cell)` order.
    pub mu_local: Vec<(CellId, f64)>,
    /// Signed `eta_{k,i,j}`, outer index `k - 1`, cells as in `mu_local`.
    pub signed: Vec<Vec<f64>>,
}

impl EstimatorReport {
    pub fn from_signed(
        level: usize,
        nu: f64,
        cells: &[CellId],
        signed: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut local = vec![0.0; cells.len()];
        for (k, row) in signed.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteEstimator {
                        level,
                        iteration: k + 1,
                        detail: format!("cell {:?} has indicator {v}", cells[c]),
                    });
                }
                local[c] += v.abs();
            }
        }
        let mu_total = local.iter().sum();
        Ok(Self {
            level,
            k: signed.len(),
            nu,
            mu_total,
            mu_local: cells.iter().copied().zip(local).collect(),
            signed,
        })
    }

    /// Signed sum over all iterations and cells.
    pub fn signed_total(&self) -> f64 {
        self.signed.iter().flatten().sum()
    }

    /// Header `level,K,nu,mu_total`, its values, then
    /// `i,j,cell_left,cell_right,mu_local` rows with 1-based components.
    pub fn write_csv<W: Write>(&self, mesh: &MultiMesh, mut out: W) -> std::io::Result<()> {
        writeln!(out, "level,K,nu,mu_total")?;
        writeln!(
            out,
            "{},{},{:.16e},{:.16e}",
            self.level, self.k, self.nu, self.mu_total
        )?;
        writeln!(out, "i,j,cell_left,cell_right,mu_local")?;
        for (id, mu) in &self.mu_local {
            let (a, b) = mesh.cell(id.component, id.cell);
            writeln!(
                out,
                "{},{},{a:.16e},{b:.16e},{mu:.16e}",
                id.component + 1,
                id.cell
            )?;
        }
        Ok(())
    }
}

/// Incrementally maintained estimator state for one level: residual
/// samples per iterate and weight samples per dual, combined on demand.
#[derive(Debug, Clone)]
pub struct EstimatorWorkspace {
    pub layout: CellLayout,
    defects: Vec<f64>,
    residuals: Vec<ResidualSamples>,
    /// Aligned with the dual stack: `weights[0]` belongs to `Z_1`.
    weights: Vec<WeightSamples>,
}

impl EstimatorWorkspace {
    pub fn new(layout: CellLayout, problem: &Problem, scheme: Scheme) -> Self {
        let defects = quadrature_defects(&layout, problem, scheme);
        Self {
            layout,
            defects,
            residuals: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn push_residual(&mut self, samples: ResidualSamples) {
        self.residuals.push(samples);
    }

    pub fn push_front_weight(&mut self, samples: WeightSamples) {
        self.weights.insert(0, samples);
    }

    /// Signed indicators pairing residual `k` with dual `k`.
    pub fn signed(&self) -> Vec<Vec<f64>> {
        self.residuals
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| signed_indicators(&self.layout, r, w, &self.defects))
            .collect()
    }
}

/// Indicators of the iterates in `state` against any dual error weight,
/// computed from scratch.
pub fn local_dwr_estimates<W: DualErrorWeight + ?Sized>(
    problem: &Problem,
    splitting: &Splitting,
    scheme: Scheme,
    state: &IterationState,
    weight: &W,
    level: usize,
) -> Result<EstimatorReport> {
    let k = state.k();
    if state.duals.len() != k {
        return Err(Error::DimensionMismatch {
            what: "dual iterates",
            expected: k,
            found: state.duals.len(),
        });
    }
    let mesh = state.latest().mesh();
    let coupling = splitting.b_hat.abs() + splitting.b_check.abs();
    let layout = CellLayout::new(mesh, &coupling, |i, j| weight.knots(i, j));
    let mut ws = EstimatorWorkspace::new(layout, problem, scheme);
    for kk in 1..=k {
        let r = sample_residual(
            &ws.layout,
            problem,
            splitting,
            &state.primal[kk],
            &state.primal[kk - 1],
        )?;
        ws.push_residual(r);
    }
    for kk in (1..=k).rev() {
        let w = sample_weight(&ws.layout, weight, kk, &state.duals[kk - 1]);
        ws.push_front_weight(w);
    }
    EstimatorReport::from_signed(level, f64::NAN, &ws.layout.cells, ws.signed())
}
