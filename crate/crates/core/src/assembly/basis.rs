//! The three basis families and functions expanded in them.
//!
//! On a component grid `t_0 < ... < t_n`:
//!
//! - family `A`: `phi_j = 1` on `[t_j, t_{j+1})`, with `phi_0` extended to
//!   the left and `phi_n = 1` on `[t_n, inf)`;
//! - family `B`: `phi_j = 1` on `(t_{j-1}, t_j]`, with `phi_0 = 1` on
//!   `(-inf, t_0]` and `phi_n` extended to the right;
//! - family `C`: continuous hats with `phi_j(t_k) = delta_jk`, zero outside
//!   `[t_0, t_n]`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::MultiMesh;
use crate::model::{Side, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisFamily {
    A,
    B,
    C,
}

impl BasisFamily {
    /// The one-sided limit matching the family's half-open cells.
    pub fn own_side(self) -> Side {
        match self {
            BasisFamily::A => Side::Right,
            BasisFamily::B => Side::Left,
            BasisFamily::C => Side::Right,
        }
    }

    pub fn is_piecewise_constant(self) -> bool {
        !matches!(self, BasisFamily::C)
    }
}

/// Index of the piecewise-constant basis function active at `t`.
#[inline]
pub(crate) fn constant_index(family: BasisFamily, grid: &[f64], t: f64, side: Side) -> usize {
    let n = grid.len() - 1;
    match (family, side) {
        (BasisFamily::A, Side::Right) => grid[1..].partition_point(|&x| x <= t),
        (BasisFamily::A, Side::Left) => grid[1..].partition_point(|&x| x < t),
        (BasisFamily::B, Side::Left) => grid.partition_point(|&x| x < t).min(n),
        (BasisFamily::B, Side::Right) => grid.partition_point(|&x| x <= t).min(n),
        (BasisFamily::C, _) => unreachable!("hat functions have no constant index"),
    }
}

/// Hat interpolation of nodal values; zero outside the grid.
#[inline]
pub(crate) fn hat_eval(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let n = grid.len() - 1;
    if t < grid[0] || t > grid[n] {
        return 0.0;
    }
    let k = grid.partition_point(|&x| x <= t);
    if k > n {
        return values[n];
    }
    if k == 0 {
        return values[0];
    }
    let (a, b) = (grid[k - 1], grid[k]);
    let s = (t - a) / (b - a);
    values[k - 1] + s * (values[k] - values[k - 1])
}

/// Value of basis function `j` of component `i` at `t`, using the family's
/// own half-open convention.
pub fn evaluate_basis(
    family: BasisFamily,
    mesh: &MultiMesh,
    i: usize,
    j: usize,
    t: f64,
) -> Result<f64> {
    if i >= mesh.dim() || j > mesh.n_cells(i) {
        return Err(Error::InvalidCell {
            component: i,
            cell: j,
        });
    }
    let grid = mesh.nodes(i);
    Ok(match family {
        BasisFamily::A | BasisFamily::B => {
            let k = constant_index(family, grid, t, family.own_side());
            if k == j {
                1.0
            } else {
                0.0
            }
        }
        BasisFamily::C => {
            let mut e = vec![0.0; grid.len()];
            e[j] = 1.0;
            hat_eval(grid, &e, t)
        }
    })
}

/// Coefficients over one basis family on a mesh, component-major with
/// `n_i + 1` entries per component.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunction {
    mesh: Arc<MultiMesh>,
    family: BasisFamily,
    offsets: Vec<usize>,
    coefficients: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(mesh: Arc<MultiMesh>, family: BasisFamily, coefficients: Vec<f64>) -> Result<Self> {
        let offsets = mesh.offsets();
        let expected = *offsets.last().unwrap();
        if coefficients.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "coefficients",
                expected,
                found: coefficients.len(),
            });
        }
        Ok(Self {
            mesh,
            family,
            offsets,
            coefficients,
        })
    }

    pub fn zeros(mesh: Arc<MultiMesh>, family: BasisFamily) -> Self {
        let n = mesh.total_dofs();
        Self::new(mesh, family, vec![0.0; n]).unwrap()
    }

    /// The constant function with value `values[i]` in component `i`.
    pub fn constant(mesh: Arc<MultiMesh>, family: BasisFamily, values: &[f64]) -> Result<Self> {
        if values.len() != mesh.dim() {
            return Err(Error::DimensionMismatch {
                what: "constant values",
                expected: mesh.dim(),
                found: values.len(),
            });
        }
        let coefficients = (0..mesh.dim())
            .flat_map(|i| std::iter::repeat_n(values[i], mesh.nodes(i).len()))
            .collect();
        Self::new(mesh, family, coefficients)
    }

    pub fn mesh(&self) -> &MultiMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<MultiMesh> {
        &self.mesh
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.coefficients[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Checks that `other` lives on the same mesh with the same family.
    pub fn check_compatible(&self, other: &DiscreteFunction) -> Result<()> {
        if self.family != other.family {
            return Err(Error::FamilyMismatch {
                expected: self.family,
                found: other.family,
            });
        }
        if !Arc::ptr_eq(&self.mesh, &other.mesh) && *self.mesh != *other.mesh {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    /// `self - other`.
    pub fn difference(&self, other: &DiscreteFunction) -> Result<DiscreteFunction> {
        self.check_compatible(other)?;
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a - b)
            .collect();
        DiscreteFunction::new(Arc::clone(&self.mesh), self.family, coefficients)
    }

    /// Hat-interpolated value of component `i` regardless of family.
    pub fn eval_hat(&self, i: usize, t: f64) -> f64 {
        hat_eval(self.mesh.nodes(i), self.component(i), t)
    }

    /// Value with the family's own one-sided convention.
    pub fn eval_own(&self, i: usize, t: f64) -> f64 {
        self.eval_component(i, t, self.family.own_side())
    }

    /// Time derivative of component `i` inside cell `j` (zero for the
    /// piecewise-constant families, whose derivatives are pure jumps).
    pub fn cell_slope(&self, i: usize, j: usize) -> f64 {
        match self.family {
            BasisFamily::C => {
                let (a, b) = self.mesh.cell(i, j);
                let u = self.component(i);
                (u[j] - u[j - 1]) / (b - a)
            }
            _ => 0.0,
        }
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.coefficients.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Waveform for DiscreteFunction {
    fn dim(&self) -> usize {
        self.mesh.dim()
    }

    fn eval_component(&self, i: usize, t: f64, side: Side) -> f64 {
        let grid = self.mesh.nodes(i);
        match self.family {
            BasisFamily::C => hat_eval(grid, self.component(i), t),
            family => self.component(i)[constant_index(family, grid, t, side)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> Arc<MultiMesh> {
        Arc::new(MultiMesh::new(vec![vec![0.0, 1.0, 3.0, 4.0]], 0).unwrap())
    }

    #[test]
    fn half_open_conventions() {
        let m = mesh();
        // a-family function 1 lives on [1, 3), b-family function 1 on (0, 1]
        assert_eq!(evaluate_basis(BasisFamily::A, &m, 0, 1, 3.0).unwrap(), 0.0);
        assert_eq!(evaluate_basis(BasisFamily::B, &m, 0, 2, 3.0).unwrap(), 1.0);
        assert_eq!(evaluate_basis(BasisFamily::A, &m, 0, 1, 1.0).unwrap(), 1.0);
        assert_eq!(evaluate_basis(BasisFamily::B, &m, 0, 1, 1.0).unwrap(), 1.0);
        assert_eq!(evaluate_basis(BasisFamily::A, &m, 0, 0, -5.0).unwrap(), 1.0);
        assert_eq!(evaluate_basis(BasisFamily::A, &m, 0, 3, 4.0).unwrap(), 1.0);
        assert_eq!(evaluate_basis(BasisFamily::B, &m, 0, 0, 0.0).unwrap(), 1.0);
        assert_eq!(evaluate_basis(BasisFamily::B, &m, 0, 3, 9.0).unwrap(), 1.0);
        assert!(evaluate_basis(BasisFamily::B, &m, 0, 4, 1.0).is_err());
    }

    #[test]
    fn hats() {
        let m = mesh();
        assert_eq!(evaluate_basis(BasisFamily::C, &m, 0, 2, 3.0).unwrap(), 1.0);
        assert_eq!(evaluate_basis(BasisFamily::C, &m, 0, 2, 2.0).unwrap(), 0.5);
        assert_eq!(evaluate_basis(BasisFamily::C, &m, 0, 2, 3.5).unwrap(), 0.5);
        assert_eq!(evaluate_basis(BasisFamily::C, &m, 0, 0, -0.5).unwrap(), 0.0);
    }

    #[test]
    fn partition_of_unity() {
        let m = mesh();
        for family in [BasisFamily::A, BasisFamily::B, BasisFamily::C] {
            for k in 0..=80 {
                let t = k as f64 * 0.05;
                let sum: f64 = (0..=3)
                    .map(|j| evaluate_basis(family, &m, 0, j, t).unwrap())
                    .sum();
                assert!((sum - 1.0).abs() < 1e-15, "{family:?} at {t}");
            }
        }
    }

    #[test]
    fn one_sided_limits() {
        let m = mesh();
        let a = DiscreteFunction::new(Arc::clone(&m), BasisFamily::A, vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        assert_eq!(a.eval_component(0, 1.0, Side::Left), 1.0);
        assert_eq!(a.eval_component(0, 1.0, Side::Right), 2.0);
        assert_eq!(a.eval_component(0, 4.0, Side::Left), 3.0);
        assert_eq!(a.eval_component(0, 4.0, Side::Right), 4.0);
        let b = DiscreteFunction::new(Arc::clone(&m), BasisFamily::B, vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        assert_eq!(b.eval_component(0, 0.0, Side::Left), 1.0);
        assert_eq!(b.eval_component(0, 0.0, Side::Right), 2.0);
        assert_eq!(b.eval_component(0, 3.0, Side::Left), 3.0);
        assert_eq!(b.eval_component(0, 3.0, Side::Right), 4.0);
        assert_eq!(b.eval_component(0, 4.0, Side::Right), 4.0);
    }

    #[test]
    fn compatibility() {
        let m = mesh();
        let a = DiscreteFunction::zeros(Arc::clone(&m), BasisFamily::A);
        let b = DiscreteFunction::zeros(Arc::clone(&m), BasisFamily::B);
        assert!(matches!(
            a.difference(&b),
            Err(Error::FamilyMismatch { .. })
        ));
        let other = Arc::new(MultiMesh::uniform(1, (0.0, 4.0), 3).unwrap());
        let c = DiscreteFunction::zeros(other, BasisFamily::A);
        assert!(matches!(a.difference(&c), Err(Error::MeshMismatch)));
        assert!(DiscreteFunction::new(m, BasisFamily::A, vec![0.0; 3]).is_err());
    }
}
