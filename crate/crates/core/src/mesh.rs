//! Per-component time grids, cell selection and bisection.

use std::sync::Arc;

use crate::assembly::{BasisFamily, DiscreteFunction};
use crate::error::{Error, Result};
use crate::model::{Problem, Qoi};

/// A cell `(t_{i,j-1}, t_{i,j}]` of component `i`.
///
/// `component` is zero-based and `cell` runs over `1..=n_i`, so that the
/// cell is bounded by the breakpoints `cell - 1` and `cell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId {
    pub component: usize,
    pub cell: usize,
}

impl CellId {
    pub fn new(component: usize, cell: usize) -> Self {
        Self { component, cell }
    }
}

/// One sorted breakpoint sequence per component, all sharing the endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiMesh {
    nodes: Vec<Vec<f64>>,
    level: usize,
}

impl MultiMesh {
    pub fn new(nodes: Vec<Vec<f64>>, level: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidMesh("no components".into()));
        }
        let t0 = nodes[0].first().copied();
        let tn = nodes[0].last().copied();
        for (i, grid) in nodes.iter().enumerate() {
            if grid.len() < 2 {
                return Err(Error::InvalidMesh(format!(
                    "component {i} needs at least two breakpoints"
                )));
            }
            if grid.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite("mesh breakpoints"));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidMesh(format!(
                    "breakpoints of component {i} are not strictly increasing"
                )));
            }
            if grid.first().copied() != t0 || grid.last().copied() != tn {
                return Err(Error::InvalidMesh(format!(
                    "component {i} does not share the global endpoints"
                )));
            }
        }
        Ok(Self { nodes, level })
    }

    /// `n` equal cells in every one of `m` components.
    pub fn uniform(m: usize, interval: (f64, f64), n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("need at least one cell".into()));
        }
        let grid = equidistant(interval.0, interval.1, n + 1);
        Self::new(vec![grid; m], 0)
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn t0(&self) -> f64 {
        self.nodes[0][0]
    }

    pub fn tn(&self) -> f64 {
        *self.nodes[0].last().unwrap()
    }

    /// Breakpoints `t_{i,0} < ... < t_{i,n_i}`.
    pub fn nodes(&self, i: usize) -> &[f64] {
        &self.nodes[i]
    }

    pub fn all_nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    /// Number of cells `n_i` of component `i`.
    pub fn n_cells(&self, i: usize) -> usize {
        self.nodes[i].len() - 1
    }

    /// Total cell count `N`.
    pub fn total_cells(&self) -> usize {
        self.nodes.iter().map(|g| g.len() - 1).sum()
    }

    /// Number of coefficients `sum_i (n_i + 1)`.
    pub fn total_dofs(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }

    /// Start of each component's block in component-major ordering.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.dim() + 1);
        let mut acc = 0;
        offsets.push(0);
        for grid in &self.nodes {
            acc += grid.len();
            offsets.push(acc);
        }
        offsets
    }

    pub fn check_cell(&self, id: CellId) -> Result<()> {
        if id.component >= self.dim() || id.cell == 0 || id.cell > self.n_cells(id.component) {
            return Err(Error::InvalidCell {
                component: id.component,
                cell: id.cell,
            });
        }
        Ok(())
    }

    /// Endpoints of cell `j` (1-based) of component `i`.
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> (f64, f64) {
        (self.nodes[i][j - 1], self.nodes[i][j])
    }

    pub fn cell_ids(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.dim()).flat_map(move |i| (1..=self.n_cells(i)).map(move |j| CellId::new(i, j)))
    }

    /// Sorted union of the breakpoints of the given components.
    pub fn merged_breakpoints(&self, components: &[usize]) -> Vec<f64> {
        let mut all: Vec<f64> = components
            .iter()
            .flat_map(|&i| self.nodes[i].iter().copied())
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// Breakpoints of every component merged.
    pub fn global_breakpoints(&self) -> Vec<f64> {
        let all: Vec<usize> = (0..self.dim()).collect();
        self.merged_breakpoints(&all)
    }

    /// True if every breakpoint of `coarse` is a breakpoint of `self`.
    pub fn refines(&self, coarse: &MultiMesh) -> bool {
        self.dim() == coarse.dim()
            && (0..self.dim()).all(|i| {
                let fine = &self.nodes[i];
                coarse.nodes[i]
                    .iter()
                    .all(|t| fine.binary_search_by(|x| x.total_cmp(t)).is_ok())
            })
    }

    /// Cells per unit time of component `i` on `[a, b]`, counting partially
    /// covered cells by the fraction of their length inside the window.
    pub fn cell_density(&self, i: usize, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let count: f64 = self.nodes[i]
            .windows(2)
            .map(|w| {
                let overlap = (w[1].min(b) - w[0].max(a)).max(0.0);
                overlap / (w[1] - w[0])
            })
            .sum();
        count / (b - a)
    }

    /// One line per component, whitespace-separated breakpoints.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for grid in &self.nodes {
            let line: Vec<String> = grid.iter().map(|t| format!("{t:.16e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn equidistant(t0: f64, tn: f64, points: usize) -> Vec<f64> {
    let n = points - 1;
    let h = (tn - t0) / n as f64;
    let mut grid: Vec<f64> = (0..points).map(|k| t0 + k as f64 * h).collect();
    grid[n] = tn;
    grid
}

/// `n_init` equidistant breakpoints per component with every QoI time
/// inserted. Nodes within `1e-12 (tn - t0)` of a QoI time are snapped to it.
pub fn init_mesh(problem: &Problem, qoi: &Qoi, n_init: usize) -> Result<MultiMesh> {
    if n_init < 2 {
        return Err(Error::InvalidMesh(format!(
            "need at least two initial points, got {n_init}"
        )));
    }
    let (t0, tn) = problem.interval();
    let tol = 1e-12 * (tn - t0);
    let mut grid = equidistant(t0, tn, n_init);
    for tau in qoi.times() {
        match grid.iter().position(|t| (t - tau).abs() <= tol) {
            Some(k) => grid[k] = tau,
            None => {
                let k = grid.partition_point(|&t| t < tau);
                grid.insert(k, tau);
            }
        }
    }
    MultiMesh::new(vec![grid; problem.dim()], 0)
}

/// `ceil(p n)`, with products within rounding distance of an integer
/// rounded to it instead.
pub fn refinement_count(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    let r = x.round();
    let count = if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    };
    (count as usize).min(n)
}

/// The `ceil(p N)` cells with the largest indicator, ties broken by
/// `(component, cell)`.
pub fn select_cells(local: &[(CellId, f64)], p: f64) -> Result<Vec<CellId>> {
    if local.is_empty() {
        return Err(Error::InvalidConfig("no cells to select from".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "refinement fraction {p} is not in (0, 1]"
        )));
    }
    let count = refinement_count(p, local.len());
    let mut ranked: Vec<(CellId, f64)> = local.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<CellId> = ranked[..count].iter().map(|(id, _)| *id).collect();
    chosen.sort();
    Ok(chosen)
}

/// Inserts the midpoint of every selected cell.
pub fn bisect_cells(mesh: &MultiMesh, cells: &[CellId]) -> Result<MultiMesh> {
    let mut marks: Vec<Vec<bool>> = (0..mesh.dim())
        .map(|i| vec![false; mesh.n_cells(i) + 1])
        .collect();
    for &id in cells {
        mesh.check_cell(id)?;
        marks[id.component][id.cell] = true;
    }
    let nodes = mesh
        .nodes
        .iter()
        .zip(&marks)
        .map(|(grid, marked)| {
            let mut out = Vec::with_capacity(grid.len() * 2);
            out.push(grid[0]);
            for j in 1..grid.len() {
                if marked[j] {
                    out.push(0.5 * (grid[j - 1] + grid[j]));
                }
                out.push(grid[j]);
            }
            out
        })
        .collect();
    MultiMesh::new(nodes, mesh.level + 1)
}

/// Re-represents `f` on a refinement of its mesh.
pub fn transfer_waveform(f: &DiscreteFunction, new: &Arc<MultiMesh>) -> Result<DiscreteFunction> {
    let old = f.mesh();
    if !new.refines(old) {
        return Err(Error::NotNested(
            "target mesh does not contain every old breakpoint".into(),
        ));
    }
    let family = f.family();
    let mut coefficients = Vec::with_capacity(new.total_dofs());
    for i in 0..new.dim() {
        let grid = new.nodes(i);
        let n = grid.len() - 1;
        let old_coeffs = f.component(i);
        let old_grid = old.nodes(i);
        match family {
            BasisFamily::C => {
                coefficients.extend(grid.iter().map(|&t| f.eval_hat(i, t)));
            }
            BasisFamily::A => {
                // coefficient j is the value on [t_j, t_{j+1})
                for j in 0..n {
                    let mid = 0.5 * (grid[j] + grid[j + 1]);
                    let k = old_grid.partition_point(|&t| t <= mid) - 1;
                    coefficients.push(old_coeffs[k]);
                }
                coefficients.push(old_coeffs[old_grid.len() - 1]);
            }
            BasisFamily::B => {
                // coefficient j is the value on (t_{j-1}, t_j]
                coefficients.push(old_coeffs[0]);
                for j in 1..=n {
                    let mid = 0.5 * (grid[j - 1] + grid[j]);
                    let k = old_grid.partition_point(|&t| t < mid);
                    coefficients.push(old_coeffs[k]);
                }
            }
        }
    }
    DiscreteFunction::new(Arc::clone(new), family, coefficients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Side, Signal, Waveform};
    use nalgebra::{DMatrix, DVector};

    fn problem(m: usize, tn: f64) -> Problem {
        Problem::new(
            DMatrix::identity(m, m),
            Signal::zero(m),
            DVector::zeros(m),
            (0.0, tn),
        )
        .unwrap()
    }

    #[test]
    fn init_mesh_inserts_qoi_times() {
        let p = problem(2, 3.0);
        let q = Qoi::from_pairs(&[(2.0, &[1.0, 0.0]), (3.0, &[1.0, 2.0])], &p).unwrap();
        let mesh = init_mesh(&p, &q, 32).unwrap();
        for i in 0..2 {
            assert_eq!(mesh.n_cells(i), 32);
            assert!(mesh.nodes(i).contains(&2.0));
            assert_eq!(*mesh.nodes(i).last().unwrap(), 3.0);
            assert!((mesh.nodes(i)[1] - 3.0 / 31.0).abs() < 1e-15);
        }
        assert_eq!(mesh.total_cells(), 64);
        assert_eq!(mesh.level(), 0);
    }

    #[test]
    fn init_mesh_minimal_and_dedup() {
        let p = problem(1, 1.0);
        let q = Qoi::from_pairs(&[(0.25, &[1.0])], &p).unwrap();
        let mesh = init_mesh(&p, &q, 2).unwrap();
        assert_eq!(mesh.nodes(0), &[0.0, 0.25, 1.0]);
        let q = Qoi::from_pairs(&[(0.5, &[1.0])], &p).unwrap();
        let mesh = init_mesh(&p, &q, 5).unwrap();
        assert_eq!(mesh.n_cells(0), 4);
        assert!(init_mesh(&p, &q, 1).is_err());
    }

    #[test]
    fn selection_counts_and_ties() {
        assert_eq!(refinement_count(0.4, 64), 26);
        assert_eq!(refinement_count(1.0, 64), 64);
        assert_eq!(refinement_count(0.1, 30), 3);
        let mesh = MultiMesh::uniform(2, (0.0, 1.0), 2).unwrap();
        let local: Vec<(CellId, f64)> = mesh.cell_ids().map(|id| (id, 1.0)).collect();
        let chosen = select_cells(&local, 0.5).unwrap();
        assert_eq!(chosen, vec![CellId::new(0, 1), CellId::new(0, 2)]);
        let local = vec![
            (CellId::new(0, 1), 0.1),
            (CellId::new(0, 2), 3.0),
            (CellId::new(1, 1), 2.0),
            (CellId::new(1, 2), 0.0),
        ];
        assert_eq!(
            select_cells(&local, 0.5).unwrap(),
            vec![CellId::new(0, 2), CellId::new(1, 1)]
        );
        assert!(select_cells(&[], 0.5).is_err());
        assert!(select_cells(&local, 0.0).is_err());
    }

    #[test]
    fn bisection() {
        let mesh = MultiMesh::uniform(1, (0.0, 1.0), 1).unwrap();
        let fine = bisect_cells(&mesh, &[CellId::new(0, 1)]).unwrap();
        assert_eq!(fine.nodes(0), &[0.0, 0.5, 1.0]);
        assert_eq!(fine.level(), 1);
        let same = bisect_cells(&mesh, &[]).unwrap();
        assert_eq!(same.nodes(0), mesh.nodes(0));
        assert_eq!(same.level(), 1);
        let mesh = MultiMesh::uniform(2, (0.0, 2.0), 4).unwrap();
        let all: Vec<CellId> = mesh.cell_ids().collect();
        let fine = bisect_cells(&mesh, &all).unwrap();
        let expected = MultiMesh::uniform(2, (0.0, 2.0), 8).unwrap();
        assert_eq!(fine.all_nodes(), expected.all_nodes());
        assert!(fine.refines(&mesh));
        assert!(!mesh.refines(&fine));
        assert!(matches!(
            bisect_cells(&mesh, &[CellId::new(0, 5)]),
            Err(Error::InvalidCell { .. })
        ));
        assert!(bisect_cells(&mesh, &[CellId::new(0, 0)]).is_err());
    }

    #[test]
    fn transfer_piecewise_constants_and_hats() {
        let coarse = Arc::new(MultiMesh::uniform(1, (0.0, 1.0), 1).unwrap());
        let fine = Arc::new(bisect_cells(&coarse, &[CellId::new(0, 1)]).unwrap());
        let b = DiscreteFunction::new(Arc::clone(&coarse), BasisFamily::B, vec![7.0, 3.0]).unwrap();
        let bt = transfer_waveform(&b, &fine).unwrap();
        assert_eq!(bt.component(0), &[7.0, 3.0, 3.0]);
        let a = DiscreteFunction::new(Arc::clone(&coarse), BasisFamily::A, vec![3.0, 5.0]).unwrap();
        let at = transfer_waveform(&a, &fine).unwrap();
        assert_eq!(at.component(0), &[3.0, 3.0, 5.0]);
        let c = DiscreteFunction::new(Arc::clone(&coarse), BasisFamily::C, vec![0.0, 1.0]).unwrap();
        let ct = transfer_waveform(&c, &fine).unwrap();
        assert_eq!(ct.component(0), &[0.0, 0.5, 1.0]);
        assert!(matches!(
            transfer_waveform(&ct, &coarse),
            Err(Error::NotNested(_))
        ));
        for t in [0.0, 0.1, 0.5, 0.7, 1.0] {
            for side in [Side::Left, Side::Right] {
                assert_eq!(a.eval_component(0, t, side), at.eval_component(0, t, side));
                assert_eq!(b.eval_component(0, t, side), bt.eval_component(0, t, side));
            }
        }
    }

    #[test]
    fn density_counts_fractional_cells() {
        let mesh = MultiMesh::new(vec![vec![0.0, 1.0, 1.5, 2.0, 4.0]], 0).unwrap();
        assert!((mesh.cell_density(0, 1.0, 2.0) - 2.0).abs() < 1e-15);
        assert!((mesh.cell_density(0, 2.0, 4.0) - 0.5).abs() < 1e-15);
        assert!((mesh.cell_density(0, 0.5, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_meshes() {
        assert!(MultiMesh::new(vec![], 0).is_err());
        assert!(MultiMesh::new(vec![vec![0.0]], 0).is_err());
        assert!(MultiMesh::new(vec![vec![0.0, 0.0, 1.0]], 0).is_err());
        assert!(MultiMesh::new(vec![vec![0.0, 1.0], vec![0.0, 2.0]], 0).is_err());
    }
}
