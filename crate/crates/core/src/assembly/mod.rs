//! Discrete operators of one dynamic-iteration step.
//!
//! With trial coefficients `u_k` and test functions from family `B`, every
//! iteration solves
//!
//! ```text
//!     F_hat u_k = G - F_check u_{k-1},        J(U_h) = H . u
//! ```
//!
//! Rows and columns are indexed component-major: `offset[i] + j`,
//! `j = 0..=n_i`. Row `(i, 0)` imposes the initial value; row `(i, j)`,
//! `j >= 1`, tests with the indicator of `(t_{i,j-1}, t_{i,j}]`.

pub mod basis;
pub mod quadrature;

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;

pub use basis::{evaluate_basis, BasisFamily, DiscreteFunction};
pub use quadrature::{merged_quadrature, merged_subcells, GaussRule};

use crate::error::{Error, Result};
use crate::mesh::MultiMesh;
use crate::model::{Problem, Qoi, Splitting};
use crate::solver::sparse::CsrMatrix;

/// Time discretization: the pair (trial family, test family).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Trial `A`, test `B`, left-rectangle forcing.
    ExplicitEuler,
    /// Trial `C`, test `B`, trapezoidal forcing.
    CrankNicolson,
}

impl Scheme {
    pub fn trial(self) -> BasisFamily {
        match self {
            Scheme::ExplicitEuler => BasisFamily::A,
            Scheme::CrankNicolson => BasisFamily::C,
        }
    }

    pub fn test(self) -> BasisFamily {
        BasisFamily::B
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ExplicitEuler => "euler",
            Scheme::CrankNicolson => "cn",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub scheme: Scheme,
    pub mesh: Arc<MultiMesh>,
    pub f_hat: CsrMatrix,
    pub f_check: CsrMatrix,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl AssembledSystem {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// Writes `row col value` lines for `F_hat`, `F_check`, `G` and `H`.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# F_hat {n} {n}", n = self.dim())?;
        for (r, c, v) in self.f_hat.triplets() {
            writeln!(out, "{r} {c} {v:.16e}")?;
        }
        writeln!(out, "# F_check {n} {n}", n = self.dim())?;
        for (r, c, v) in self.f_check.triplets() {
            writeln!(out, "{r} {c} {v:.16e}")?;
        }
        writeln!(out, "# G {}", self.dim())?;
        for (r, v) in self.g.iter().enumerate() {
            writeln!(out, "{r} 0 {v:.16e}")?;
        }
        writeln!(out, "# H {}", self.dim())?;
        for (r, v) in self.h.iter().enumerate() {
            writeln!(out, "{r} 0 {v:.16e}")?;
        }
        Ok(())
    }
}

/// The forcing entry of test row `(i, j)`, `j >= 1`.
#[inline]
pub fn forcing_quadrature(problem: &Problem, scheme: Scheme, i: usize, a: f64, b: f64) -> f64 {
    let y = problem.forcing();
    match scheme {
        Scheme::ExplicitEuler => (b - a) * y.eval_component(i, a),
        Scheme::CrankNicolson => 0.5 * (b - a) * (y.eval_component(i, a) + y.eval_component(i, b)),
    }
}

/// `int_a^b phi_k` for every trial function `k` of a component with grid
/// `grid`, passed to `sink(k, value)`.
pub(crate) fn trial_integrals(
    family: BasisFamily,
    grid: &[f64],
    a: f64,
    b: f64,
    mut sink: impl FnMut(usize, f64),
) {
    let n = grid.len() - 1;
    match family {
        BasisFamily::A => {
            let mut k = grid[1..].partition_point(|&x| x <= a);
            while k < n && grid[k] < b {
                let overlap = grid[k + 1].min(b) - grid[k].max(a);
                if overlap > 0.0 {
                    sink(k, overlap);
                }
                k += 1;
            }
        }
        BasisFamily::C => {
            let mut k = grid[1..].partition_point(|&x| x <= a) + 1;
            while k <= n && grid[k - 1] < b {
                let lo = grid[k - 1].max(a);
                let hi = grid[k].min(b);
                if hi > lo {
                    let h = grid[k] - grid[k - 1];
                    let right_lo = (lo - grid[k - 1]) / h;
                    let right_hi = (hi - grid[k - 1]) / h;
                    let half = 0.5 * (hi - lo);
                    sink(k - 1, half * ((1.0 - right_lo) + (1.0 - right_hi)));
                    sink(k, half * (right_lo + right_hi));
                }
                k += 1;
            }
        }
        BasisFamily::B => unreachable!("family B is only used for test functions"),
    }
}

/// Coefficient weights `(k, phi_k(t))` of the trial functions active at `t`,
/// own one-sided convention.
pub(crate) fn trial_point_weights(family: BasisFamily, grid: &[f64], t: f64) -> Vec<(usize, f64)> {
    match family {
        BasisFamily::A | BasisFamily::B => {
            vec![(
                basis::constant_index(family, grid, t, family.own_side()),
                1.0,
            )]
        }
        BasisFamily::C => {
            let n = grid.len() - 1;
            if t < grid[0] || t > grid[n] {
                return Vec::new();
            }
            let k = grid.partition_point(|&x| x <= t);
            if k > n {
                return vec![(n, 1.0)];
            }
            if k == 0 {
                return vec![(0, 1.0)];
            }
            let s = (t - grid[k - 1]) / (grid[k] - grid[k - 1]);
            let mut out = Vec::with_capacity(2);
            if s < 1.0 {
                out.push((k - 1, 1.0 - s));
            }
            if s > 0.0 {
                out.push((k, s));
            }
            out
        }
    }
}

fn push_mass(
    triplets: &mut Vec<(usize, usize, f64)>,
    coupling: &DMatrix<f64>,
    mesh: &MultiMesh,
    offsets: &[usize],
    family: BasisFamily,
) {
    let m = mesh.dim();
    for i in 0..m {
        for jh in 0..m {
            let beta = coupling[(i, jh)];
            if beta == 0.0 {
                continue;
            }
            let grid_i = mesh.nodes(i);
            let grid_jh = mesh.nodes(jh);
            for j in 1..grid_i.len() {
                let row = offsets[i] + j;
                trial_integrals(family, grid_jh, grid_i[j - 1], grid_i[j], |k, w| {
                    triplets.push((row, offsets[jh] + k, beta * w));
                });
            }
        }
    }
}

/// Builds `F_hat`, `F_check`, `G` and `H` for one mesh.
pub fn assemble(
    problem: &Problem,
    splitting: &Splitting,
    qoi: &Qoi,
    mesh: &Arc<MultiMesh>,
    scheme: Scheme,
) -> Result<AssembledSystem> {
    let m = problem.dim();
    if mesh.dim() != m {
        return Err(Error::DimensionMismatch {
            what: "mesh components",
            expected: m,
            found: mesh.dim(),
        });
    }
    if splitting.dim() != m {
        return Err(Error::DimensionMismatch {
            what: "splitting",
            expected: m,
            found: splitting.dim(),
        });
    }
    if qoi.dim() != m {
        return Err(Error::DimensionMismatch {
            what: "qoi weights",
            expected: m,
            found: qoi.dim(),
        });
    }
    if mesh.t0() != problem.t0() || mesh.tn() != problem.tn() {
        return Err(Error::InvalidMesh(
            "mesh endpoints differ from the problem interval".into(),
        ));
    }
    let offsets = mesh.offsets();
    let n = mesh.total_dofs();
    let family = scheme.trial();

    let mut hat = Vec::with_capacity(n * 4);
    for i in 0..m {
        let o = offsets[i];
        hat.push((o, o, 1.0));
        for j in 1..mesh.nodes(i).len() {
            hat.push((o + j, o + j, 1.0));
            hat.push((o + j, o + j - 1, -1.0));
        }
    }
    push_mass(&mut hat, &splitting.b_hat, mesh, &offsets, family);
    let mut check = Vec::new();
    push_mass(&mut check, &splitting.b_check, mesh, &offsets, family);

    let mut g = vec![0.0; n];
    for i in 0..m {
        let grid = mesh.nodes(i);
        g[offsets[i]] = problem.initial()[i];
        for j in 1..grid.len() {
            g[offsets[i] + j] = forcing_quadrature(problem, scheme, i, grid[j - 1], grid[j]);
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forcing quadrature"));
    }

    let mut h = vec![0.0; n];
    for term in qoi.terms() {
        for (i, &w) in term.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (k, phi) in trial_point_weights(family, mesh.nodes(i), term.time) {
                h[offsets[i] + k] += w * phi;
            }
        }
    }

    Ok(AssembledSystem {
        scheme,
        mesh: Arc::clone(mesh),
        f_hat: CsrMatrix::from_triplets(n, n, hat),
        f_check: CsrMatrix::from_triplets(n, n, check),
        g,
        h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_splitting, Signal, SplittingScheme};
    use nalgebra::DVector;

    fn scalar(b: f64, y: f64, u0: f64, tn: f64) -> Problem {
        Problem::new(
            DMatrix::from_element(1, 1, b),
            Signal::constant(&[y]),
            DVector::from_element(1, u0),
            (0.0, tn),
        )
        .unwrap()
    }

    fn solve_dense(sys: &AssembledSystem, prev: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = sys
            .g
            .iter()
            .zip(sys.f_check.mul_vec(prev))
            .map(|(g, c)| g - c)
            .collect();
        sys.f_hat
            .to_dense()
            .lu()
            .solve(&DVector::from_vec(rhs))
            .unwrap()
            .as_slice()
            .to_vec()
    }

    #[test]
    fn one_euler_step() {
        let p = scalar(0.0, 1.0, 0.0, 1.0);
        let s = build_splitting(p.matrix(), &SplittingScheme::Full).unwrap();
        let q = Qoi::from_pairs(&[(1.0, &[1.0])], &p).unwrap();
        let mesh = Arc::new(MultiMesh::uniform(1, (0.0, 1.0), 1).unwrap());
        let sys = assemble(&p, &s, &q, &mesh, Scheme::ExplicitEuler).unwrap();
        let u = solve_dense(&sys, &[0.0, 0.0]);
        assert!((u[1] - 1.0).abs() < 1e-15);
        assert_eq!(sys.h, vec![0.0, 1.0]);
    }

    #[test]
    fn one_crank_nicolson_step() {
        let p = scalar(1.0, 0.0, 1.0, 0.1);
        let s = build_splitting(p.matrix(), &SplittingScheme::Full).unwrap();
        let q = Qoi::from_pairs(&[(0.1, &[1.0])], &p).unwrap();
        let mesh = Arc::new(MultiMesh::uniform(1, (0.0, 0.1), 1).unwrap());
        let sys = assemble(&p, &s, &q, &mesh, Scheme::CrankNicolson).unwrap();
        let u = solve_dense(&sys, &[0.0, 0.0]);
        assert!((u[1] - 0.95 / 1.05).abs() < 1e-15);
    }

    #[test]
    fn no_lagged_coupling_gives_empty_check() {
        let p = Problem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            Signal::zero(2),
            DVector::zeros(2),
            (0.0, 1.0),
        )
        .unwrap();
        let s = build_splitting(p.matrix(), &SplittingScheme::Jacobi).unwrap();
        let q = Qoi::from_pairs(&[(1.0, &[1.0, 1.0])], &p).unwrap();
        let mesh = Arc::new(MultiMesh::uniform(2, (0.0, 1.0), 4).unwrap());
        for scheme in [Scheme::ExplicitEuler, Scheme::CrankNicolson] {
            let sys = assemble(&p, &s, &q, &mesh, scheme).unwrap();
            assert_eq!(sys.f_check.nnz(), 0);
        }
    }

    #[test]
    fn trial_integrals_cover_the_window() {
        let grid = [0.0, 0.3, 1.0, 1.7, 2.0];
        for family in [BasisFamily::A, BasisFamily::C] {
            for (a, b) in [(0.0, 2.0), (0.1, 0.2), (0.2, 1.8), (1.0, 1.7)] {
                let mut total = 0.0;
                trial_integrals(family, &grid, a, b, |_, w| total += w);
                assert!((total - (b - a)).abs() < 1e-14, "{family:?} [{a}, {b}]");
            }
        }
        let mut hits = Vec::new();
        trial_integrals(BasisFamily::C, &grid, 0.3, 1.0, |k, w| hits.push((k, w)));
        assert_eq!(hits, vec![(1, 0.35), (2, 0.35)]);
    }

    #[test]
    fn point_weights_at_nodes() {
        let grid = [0.0, 1.0, 2.0];
        assert_eq!(
            trial_point_weights(BasisFamily::A, &grid, 1.0),
            vec![(1, 1.0)]
        );
        assert_eq!(
            trial_point_weights(BasisFamily::A, &grid, 2.0),
            vec![(2, 1.0)]
        );
        assert_eq!(
            trial_point_weights(BasisFamily::C, &grid, 1.0),
            vec![(1, 1.0)]
        );
        assert_eq!(
            trial_point_weights(BasisFamily::C, &grid, 2.0),
            vec![(2, 1.0)]
        );
        assert_eq!(
            trial_point_weights(BasisFamily::C, &grid, 0.25),
            vec![(0, 0.75), (1, 0.25)]
        );
    }
}
