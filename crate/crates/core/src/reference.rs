//! Verification oracles: a high-accuracy solution, the continuous stacked
//! adjoint, and a monolithic solve of the stacked iteration system.
//!
//! None of this is used by the method itself.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::assembly::{assemble, DiscreteFunction, Scheme};
use crate::error::{Error, Result};
use crate::estimators::DualErrorWeight;
use crate::mesh::MultiMesh;
use crate::model::{evaluate_qoi, Problem, Qoi, Side, Splitting, Waveform};

/// Classical RK4 samples on a uniform grid with cubic Hermite interpolation.
#[derive(Debug, Clone)]
struct Path {
    a: f64,
    b: f64,
    steps: usize,
    dim: usize,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl Path {
    /// Integrates `x' = f(s, x)` from `s = a` to `b` (`b < a` runs backwards).
    fn integrate(
        a: f64,
        b: f64,
        steps: usize,
        x0: &[f64],
        f: impl Fn(f64, &[f64], &mut [f64]),
    ) -> Self {
        let dim = x0.len();
        let h = (b - a) / steps as f64;
        let mut values = Vec::with_capacity((steps + 1) * dim);
        let mut derivs = Vec::with_capacity((steps + 1) * dim);
        let mut x = x0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4) = (
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
        );
        let mut tmp = vec![0.0; dim];
        for n in 0..steps {
            let s = a + n as f64 * h;
            f(s, &x, &mut k1);
            values.extend_from_slice(&x);
            derivs.extend_from_slice(&k1);
            for d in 0..dim {
                tmp[d] = x[d] + 0.5 * h * k1[d];
            }
            f(s + 0.5 * h, &tmp, &mut k2);
            for d in 0..dim {
                tmp[d] = x[d] + 0.5 * h * k2[d];
            }
            f(s + 0.5 * h, &tmp, &mut k3);
            for d in 0..dim {
                tmp[d] = x[d] + h * k3[d];
            }
            f(s + h, &tmp, &mut k4);
            for d in 0..dim {
                x[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
            }
        }
        f(b, &x, &mut k1);
        values.extend_from_slice(&x);
        derivs.extend_from_slice(&k1);
        Self {
            a,
            b,
            steps,
            dim,
            values,
            derivs,
        }
    }

    /// Same path with the grid reversed so that `a < b`.
    fn ascending(self) -> Self {
        if self.a <= self.b {
            return self;
        }
        let dim = self.dim;
        let rev = |v: &[f64]| -> Vec<f64> { v.chunks(dim).rev().flatten().copied().collect() };
        Self {
            a: self.b,
            b: self.a,
            steps: self.steps,
            dim,
            values: rev(&self.values),
            derivs: rev(&self.derivs),
        }
    }

    fn node(&self, n: usize, d: usize) -> f64 {
        self.values[n * self.dim + d]
    }

    fn end(&self) -> &[f64] {
        &self.values[self.steps * self.dim..]
    }

    fn eval(&self, d: usize, t: f64) -> f64 {
        let h = (self.b - self.a) / self.steps as f64;
        let x = ((t - self.a) / h).clamp(0.0, self.steps as f64);
        let n = (x.floor() as usize).min(self.steps - 1);
        let s = x - n as f64;
        let (y0, y1) = (
            self.values[n * self.dim + d],
            self.values[(n + 1) * self.dim + d],
        );
        let (m0, m1) = (
            self.derivs[n * self.dim + d] * h,
            self.derivs[(n + 1) * self.dim + d] * h,
        );
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1
    }
}

/// Dense RK4 solution of the full (unsplit) problem.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    path: Path,
    /// Largest nodal change observed when the step was halved.
    pub self_check_change: f64,
}

/// Tolerance of the step-halving self-check.
pub const REFERENCE_TOLERANCE: f64 = 1e-9;
const MIN_STEPS: usize = 1 << 16;
const MAX_STEPS: usize = 1 << 22;

fn forward(problem: &Problem, steps: usize) -> Path {
    let m = problem.dim();
    let b = problem.matrix().clone();
    let y = problem.forcing().clone();
    Path::integrate(
        problem.t0(),
        problem.tn(),
        steps,
        problem.initial().as_slice(),
        |t, x, out| {
            for r in 0..m {
                let mut v = y.eval_component(r, t);
                for c in 0..m {
                    v -= b[(r, c)] * x[c];
                }
                out[r] = v;
            }
        },
    )
}

/// RK4 with at least `2^16` steps, doubled until halving the step changes
/// the nodal values of the coarser run by less than `1e-9`.
pub fn reference_solve(problem: &Problem) -> Result<ReferenceSolution> {
    let mut steps = MIN_STEPS;
    let mut coarse = forward(problem, steps);
    loop {
        let fine = forward(problem, 2 * steps);
        let mut change: f64 = 0.0;
        for n in 0..=steps {
            for d in 0..problem.dim() {
                change = change.max((fine.node(2 * n, d) - coarse.node(n, d)).abs());
            }
        }
        if change < REFERENCE_TOLERANCE {
            return Ok(ReferenceSolution {
                path: fine,
                self_check_change: change,
            });
        }
        if 2 * steps >= MAX_STEPS {
            return Err(Error::ReferenceNotConverged {
                change,
                tolerance: REFERENCE_TOLERANCE,
            });
        }
        steps *= 2;
        coarse = fine;
    }
}

impl ReferenceSolution {
    pub fn steps(&self) -> usize {
        self.path.steps
    }
}

impl Waveform for ReferenceSolution {
    fn dim(&self) -> usize {
        self.path.dim
    }

    fn eval_component(&self, i: usize, t: f64, _side: Side) -> f64 {
        self.path.eval(i, t)
    }
}

/// `|J(U_ref) - J(U_h)|`, with `U_h` evaluated by its own convention.
pub fn true_goal_error(reference: &ReferenceSolution, qoi: &Qoi, u: &DiscreteFunction) -> f64 {
    (evaluate_qoi(qoi, reference, Side::Left) - evaluate_qoi(qoi, u, u.family().own_side())).abs()
}

/// Continuous adjoint of `K` stacked iterations,
/// `-Z_k' + B_hat^T Z_k + B_check^T Z_{k+1} = 0`, with the QoI weights
/// entering `Z_K` as jumps at the QoI times.
#[derive(Debug, Clone)]
pub struct StackedAdjoint {
    k: usize,
    m: usize,
    /// Ascending segments between consecutive QoI times (and `t0`).
    segments: Vec<Path>,
}

impl StackedAdjoint {
    pub fn new(splitting: &Splitting, qoi: &Qoi, t0: f64, k: usize, steps_per_unit: usize) -> Self {
        let m = splitting.dim();
        let d = k * m;
        let bh = splitting.b_hat.transpose();
        let bc = splitting.b_check.transpose();
        let rhs = |_: f64, z: &[f64], out: &mut [f64]| {
            // integrating in t backwards: Z_k' = B_hat^T Z_k + B_check^T Z_{k+1}
            for blk in 0..k {
                for r in 0..m {
                    let mut v = 0.0;
                    for c in 0..m {
                        v += bh[(r, c)] * z[blk * m + c];
                        if blk + 1 < k {
                            v += bc[(r, c)] * z[(blk + 1) * m + c];
                        }
                    }
                    out[blk * m + r] = v;
                }
            }
        };
        let mut state = vec![0.0; d];
        let mut breaks: Vec<f64> = qoi.times().collect();
        breaks.insert(0, t0);
        let terms = qoi.terms();
        let mut segments = Vec::new();
        for r in (1..breaks.len()).rev() {
            let weights = &terms[r - 1].weights;
            for c in 0..m {
                state[(k - 1) * m + c] += weights[c];
            }
            let (a, b) = (breaks[r - 1], breaks[r]);
            if b <= a {
                // QoI term at t0: its jump only matters through the left limit.
                continue;
            }
            let steps = ((b - a) * steps_per_unit as f64).ceil().max(1.0) as usize;
            let path = Path::integrate(b, a, steps, &state, rhs);
            state = path.end().to_vec();
            segments.push(path.ascending());
        }
        segments.reverse();
        Self { k, m, segments }
    }

    pub fn iterations(&self) -> usize {
        self.k
    }

    /// `Z_k` component `i` at `t`, `k` in `1..=K`.
    pub fn eval(&self, k: usize, i: usize, t: f64, side: Side) -> f64 {
        let idx = self
            .segments
            .iter()
            .position(|s| match side {
                Side::Left => t <= s.b,
                Side::Right => t < s.b,
            })
            .unwrap_or(self.segments.len() - 1);
        self.segments[idx].eval((k - 1) * self.m + i, t)
    }
}

/// Weight `Z_k - Z_{k,h}` from the continuous stacked adjoint.
pub struct OracleAdjointWeight<'a> {
    pub adjoint: &'a StackedAdjoint,
    /// `duals[k - 1] = Z_{k,h}`.
    pub duals: &'a [DiscreteFunction],
    pub mesh: &'a MultiMesh,
}

impl DualErrorWeight for OracleAdjointWeight<'_> {
    fn eval(&self, k: usize, i: usize, j: usize, t: f64) -> f64 {
        let (a, _) = self.mesh.cell(i, j);
        let side = if t <= a { Side::Right } else { Side::Left };
        self.adjoint.eval(k, i, t, side) - self.duals[k - 1].component(i)[j]
    }
}

/// Solves all `K` iterations at once from the block lower bidiagonal
/// system with `F_hat` on the diagonal and `F_check` below it.
pub fn stacked_solve(
    problem: &Problem,
    splitting: &Splitting,
    qoi: &Qoi,
    mesh: &Arc<MultiMesh>,
    scheme: Scheme,
    k: usize,
    u0: &DiscreteFunction,
) -> Result<Vec<DiscreteFunction>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let sys = assemble(problem, splitting, qoi, mesh, scheme)?;
    let n = sys.dim();
    let fh = sys.f_hat.to_dense();
    let fc = sys.f_check.to_dense();
    let mut a = DMatrix::zeros(k * n, k * n);
    let mut rhs = DVector::zeros(k * n);
    let lagged = sys.f_check.mul_vec(u0.coefficients());
    for blk in 0..k {
        a.view_mut((blk * n, blk * n), (n, n)).copy_from(&fh);
        if blk > 0 {
            a.view_mut((blk * n, (blk - 1) * n), (n, n)).copy_from(&fc);
        }
        for r in 0..n {
            rhs[blk * n + r] = sys.g[r] - if blk == 0 { lagged[r] } else { 0.0 };
        }
    }
    let x = a.lu().solve(&rhs).ok_or(Error::Singular {
        component: 0,
        index: 0,
    })?;
    (0..k)
        .map(|blk| {
            DiscreteFunction::new(
                Arc::clone(mesh),
                scheme.trial(),
                x.as_slice()[blk * n..(blk + 1) * n].to_vec(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_splitting, Signal, SplittingScheme};

    #[test]
    fn path_hermite_is_accurate() {
        let p = Path::integrate(0.0, 1.0, 512, &[1.0], |_, x, out| out[0] = -x[0]);
        for t in [0.0, 0.013, 0.5, 0.77, 1.0] {
            assert!((p.eval(0, t) - (-t).exp()).abs() < 1e-10);
        }
        let back = Path::integrate(1.0, 0.0, 512, &[1.0], |_, x, out| out[0] = x[0]).ascending();
        for t in [0.0, 0.3, 1.0] {
            assert!((back.eval(0, t) - (t - 1.0).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn scalar_decay() {
        let p = Problem::new(
            DMatrix::from_element(1, 1, 1.0),
            Signal::zero(1),
            DVector::from_element(1, 1.0),
            (0.0, 1.0),
        )
        .unwrap();
        let r = reference_solve(&p).unwrap();
        assert!((r.eval_component(0, 1.0, Side::Left) - (-1.0f64).exp()).abs() < 1e-10);
        assert!(r.self_check_change < REFERENCE_TOLERANCE);
    }

    #[test]
    fn trivial_problem_is_constant() {
        let p = Problem::new(
            DMatrix::zeros(2, 2),
            Signal::zero(2),
            DVector::from_vec(vec![0.3, -2.0]),
            (0.0, 2.0),
        )
        .unwrap();
        let r = reference_solve(&p).unwrap();
        for t in [0.0, 0.7, 2.0] {
            assert_eq!(r.eval_component(0, t, Side::Left), 0.3);
            assert_eq!(r.eval_component(1, t, Side::Left), -2.0);
        }
    }

    #[test]
    fn adjoint_jumps_and_decay() {
        let p = Problem::new(
            DMatrix::from_element(1, 1, 2.0),
            Signal::zero(1),
            DVector::zeros(1),
            (0.0, 2.0),
        )
        .unwrap();
        let s = build_splitting(p.matrix(), &SplittingScheme::Full).unwrap();
        let q = Qoi::from_pairs(&[(1.0, &[1.0]), (2.0, &[3.0])], &p).unwrap();
        let adj = StackedAdjoint::new(&s, &q, 0.0, 1, 4096);
        assert!((adj.eval(1, 0, 2.0, Side::Left) - 3.0).abs() < 1e-14);
        let before = 3.0 * (-2.0f64).exp();
        assert!((adj.eval(1, 0, 1.0, Side::Right) - before).abs() < 1e-12);
        assert!((adj.eval(1, 0, 1.0, Side::Left) - (before + 1.0)).abs() < 1e-12);
        assert!((adj.eval(1, 0, 0.0, Side::Left) - (before + 1.0) * (-2.0f64).exp()).abs() < 1e-12);
    }
}
