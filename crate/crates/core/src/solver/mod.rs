//! Primal sweeps and dual solves against one factorization per level.

pub mod sparse;

use std::sync::Arc;

use crate::assembly::{AssembledSystem, BasisFamily, DiscreteFunction};
use crate::error::{Error, Result};
use crate::model::Waveform;

use sparse::BandLu;

/// `F_hat` factorized once, with time-major unknown ordering.
#[derive(Debug, Clone)]
pub struct LevelFactorization {
    system: Arc<AssembledSystem>,
    lu: BandLu,
}

impl LevelFactorization {
    pub fn new(system: Arc<AssembledSystem>) -> Result<Self> {
        let mesh = &system.mesh;
        let offsets = mesh.offsets();
        let mut keys: Vec<(f64, usize, usize)> = Vec::with_capacity(system.dim());
        for i in 0..mesh.dim() {
            for (j, &t) in mesh.nodes(i).iter().enumerate() {
                keys.push((t, i, offsets[i] + j));
            }
        }
        keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let order: Vec<usize> = keys.iter().map(|k| k.2).collect();
        let lu = BandLu::factor(&system.f_hat, &order).map_err(|global| {
            let component = offsets.partition_point(|&o| o <= global) - 1;
            Error::Singular {
                component,
                index: global - offsets[component],
            }
        })?;
        Ok(Self { system, lu })
    }

    pub fn system(&self) -> &Arc<AssembledSystem> {
        &self.system
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.lu.solve(rhs)
    }

    pub fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        self.lu.solve_transpose(rhs)
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        self.lu.bandwidths()
    }
}

/// Iterates `U_0 .. U_K` and duals `Z_1 .. Z_K` of one level.
///
/// `duals[0]` is `Z_1`, paired with the step producing `U_1`; the last
/// entry is the solve carrying the terminal condition.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub primal: Vec<DiscreteFunction>,
    pub duals: Vec<DiscreteFunction>,
    pub sup_e0: f64,
}

impl IterationState {
    pub fn new(initial: DiscreteFunction) -> Self {
        Self {
            primal: vec![initial],
            duals: Vec::new(),
            sup_e0: 0.0,
        }
    }

    /// Number of completed iterations `K`.
    pub fn k(&self) -> usize {
        self.primal.len() - 1
    }

    pub fn latest(&self) -> &DiscreteFunction {
        self.primal.last().unwrap()
    }
}

/// `U_k` from `F_hat u_k = G - F_check u_{k-1}`.
pub fn primal_step(fac: &LevelFactorization, prev: &DiscreteFunction) -> Result<DiscreteFunction> {
    let sys = fac.system();
    if prev.family() != sys.scheme.trial() {
        return Err(Error::FamilyMismatch {
            expected: sys.scheme.trial(),
            found: prev.family(),
        });
    }
    if !Arc::ptr_eq(prev.mesh_arc(), &sys.mesh) && *prev.mesh() != *sys.mesh {
        return Err(Error::MeshMismatch);
    }
    let lagged = sys.f_check.mul_vec(prev.coefficients());
    let rhs: Vec<f64> = sys.g.iter().zip(&lagged).map(|(g, c)| g - c).collect();
    let u = fac.solve(&rhs);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("primal iterate"));
    }
    DiscreteFunction::new(Arc::clone(&sys.mesh), prev.family(), u)
}

/// Extends the dual stack by one: the terminal solve `F_hat^T z = H` when
/// the stack is empty, otherwise `F_hat^T z = -F_check^T Z_1` inserted in
/// front so that the previous duals move down one index.
pub fn dual_solve(fac: &LevelFactorization, state: &mut IterationState) -> Result<()> {
    let sys = fac.system();
    let rhs = match state.duals.first() {
        None => sys.h.clone(),
        Some(z1) => sys
            .f_check
            .tr_mul_vec(z1.coefficients())
            .into_iter()
            .map(|v| -v)
            .collect(),
    };
    let z = fac.solve_transpose(&rhs);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dual iterate"));
    }
    let z = DiscreteFunction::new(Arc::clone(&sys.mesh), sys.scheme.test(), z)?;
    state.duals.insert(0, z);
    Ok(())
}

/// `max_t |U_1(t) - U_0(t)|_2` over all breakpoints (and merged cell
/// midpoints for hat functions).
pub fn sup_initial_error(u1: &DiscreteFunction, u0: &DiscreteFunction) -> Result<f64> {
    let diff = u1.difference(u0)?;
    let mesh = diff.mesh();
    let mut points = mesh.global_breakpoints();
    if diff.family() == BasisFamily::C {
        let mids: Vec<f64> = points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        points.extend(mids);
    }
    let side = diff.family().own_side();
    Ok(points
        .iter()
        .map(|&t| {
            (0..mesh.dim())
                .map(|i| diff.eval_component(i, t, side).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, Scheme};
    use crate::mesh::MultiMesh;
    use crate::model::{build_splitting, Problem, Qoi, Signal, SignalTerm, SplittingScheme};
    use nalgebra::{DMatrix, DVector};

    fn exp1() -> (Problem, Qoi) {
        let b = DMatrix::from_row_slice(2, 2, &[10.0, -1.0, 1.0, 10.0]);
        let y = Signal::new(vec![
            vec![SignalTerm::Sin {
                amplitude: 10.0,
                frequency: 1.0,
            }],
            vec![SignalTerm::Sin {
                amplitude: 1.0,
                frequency: 10.0,
            }],
        ]);
        let p = Problem::new(b, y, DVector::from_vec(vec![-0.1, 0.1]), (0.0, 3.0)).unwrap();
        let q = Qoi::from_pairs(&[(2.0, &[1.0, 0.0]), (3.0, &[1.0, 2.0])], &p).unwrap();
        (p, q)
    }

    fn setup(
        scheme: Scheme,
        splitting: SplittingScheme,
        n: usize,
    ) -> (Problem, LevelFactorization) {
        let (p, q) = exp1();
        let s = build_splitting(p.matrix(), &splitting).unwrap();
        let mesh = Arc::new(MultiMesh::uniform(2, (0.0, 3.0), n).unwrap());
        let sys = Arc::new(assemble(&p, &s, &q, &mesh, scheme).unwrap());
        (p, LevelFactorization::new(sys).unwrap())
    }

    #[test]
    fn jacobi_first_sweep_is_scalar_euler_with_frozen_neighbour() {
        let (p, fac) = setup(Scheme::ExplicitEuler, SplittingScheme::Jacobi, 31);
        let mesh = Arc::clone(&fac.system().mesh);
        let u0 =
            DiscreteFunction::constant(Arc::clone(&mesh), BasisFamily::A, &[-0.1, 0.1]).unwrap();
        let u1 = primal_step(&fac, &u0).unwrap();
        let grid = mesh.nodes(0);
        let frozen = [-0.1, 0.1];
        for i in 0..2 {
            let mut u = p.initial()[i];
            let other = 1 - i;
            for j in 1..grid.len() {
                let h = grid[j] - grid[j - 1];
                let y = p.forcing().eval_component(i, grid[j - 1]);
                u += h * (y - p.matrix()[(i, i)] * u - p.matrix()[(i, other)] * frozen[other]);
                assert!((u1.component(i)[j] - u).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn fixed_point_and_initial_value() {
        for scheme in [Scheme::ExplicitEuler, Scheme::CrankNicolson] {
            let (p, fac) = setup(scheme, SplittingScheme::Jacobi, 16);
            let mesh = Arc::clone(&fac.system().mesh);
            let mut u = DiscreteFunction::constant(mesh, scheme.trial(), &[-0.1, 0.1]).unwrap();
            for _ in 0..40 {
                u = primal_step(&fac, &u).unwrap();
                for i in 0..2 {
                    assert!((u.component(i)[0] - p.initial()[i]).abs() < 1e-13);
                }
            }
            let again = primal_step(&fac, &u).unwrap();
            let d = again.difference(&u).unwrap().max_abs();
            assert!(d < 1e-12, "{scheme:?}: {d}");
        }
    }

    #[test]
    fn unsplit_step_ignores_previous_iterate() {
        let (_, fac) = setup(Scheme::CrankNicolson, SplittingScheme::Full, 8);
        let mesh = Arc::clone(&fac.system().mesh);
        let a = DiscreteFunction::zeros(Arc::clone(&mesh), BasisFamily::C);
        let b = DiscreteFunction::constant(mesh, BasisFamily::C, &[3.0, -7.0]).unwrap();
        let ua = primal_step(&fac, &a).unwrap();
        let ub = primal_step(&fac, &b).unwrap();
        assert_eq!(ua.coefficients(), ub.coefficients());
    }

    #[test]
    fn shifted_duals_equal_reverse_recursion() {
        let (_, fac) = setup(Scheme::ExplicitEuler, SplittingScheme::Jacobi, 32);
        let sys = Arc::clone(fac.system());
        let mesh = Arc::clone(&sys.mesh);
        let mut state = IterationState::new(DiscreteFunction::zeros(mesh, BasisFamily::A));
        for _ in 0..3 {
            dual_solve(&fac, &mut state).unwrap();
        }
        let dense = sys.f_hat.to_dense().transpose();
        let check_t = sys.f_check.to_dense().transpose();
        let mut z = dense
            .clone()
            .lu()
            .solve(&DVector::from_vec(sys.h.clone()))
            .unwrap();
        for k in (0..3).rev() {
            let got = state.duals[k].coefficients();
            for (a, b) in got.iter().zip(z.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            z = dense.clone().lu().solve(&(-(&check_t * &z))).unwrap();
        }
        // terminal dual carries the weights at the last coefficient
        let last = &state.duals[2];
        assert!((last.component(0)[32] - 1.0).abs() < 1e-12);
        assert!((last.component(1)[32] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sup_error() {
        let mesh = Arc::new(MultiMesh::uniform(2, (0.0, 1.0), 3).unwrap());
        let a = DiscreteFunction::constant(Arc::clone(&mesh), BasisFamily::C, &[1.0, 2.0]).unwrap();
        let b = DiscreteFunction::constant(Arc::clone(&mesh), BasisFamily::C, &[4.0, 6.0]).unwrap();
        assert!((sup_initial_error(&b, &a).unwrap() - 5.0).abs() < 1e-15);
        assert_eq!(sup_initial_error(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let (p, q) = exp1();
        let s = build_splitting(p.matrix(), &SplittingScheme::Jacobi).unwrap();
        let mesh = Arc::new(MultiMesh::uniform(2, (0.0, 3.0), 2).unwrap());
        let mut sys = assemble(&p, &s, &q, &mesh, Scheme::ExplicitEuler).unwrap();
        let n = sys.dim();
        let triplets: Vec<_> = sys.f_hat.triplets().filter(|&(r, _, _)| r != 4).collect();
        sys.f_hat = sparse::CsrMatrix::from_triplets(n, n, triplets);
        let err = LevelFactorization::new(Arc::new(sys)).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }
}
