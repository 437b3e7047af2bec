//! Compressed sparse rows and a banded LU with partial pivoting.
//!
//! The space-time operators couple each unknown only to unknowns that are
//! close in time, so after a time-major symmetric reordering they are
//! banded with a bandwidth set by the coarsest cell relative to the finest.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries and drops exact zeros.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        let mut k = 0;
        while k < triplets.len() {
            let (r, c, _) = triplets[k];
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            let mut sum = 0.0;
            while k < triplets.len() && triplets[k].0 == r && triplets[k].1 == c {
                sum += triplets[k].2;
                k += 1;
            }
            if sum != 0.0 {
                rows.push(r);
                col_idx.push(c);
                values.push(sum);
            }
        }
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(k, _)| k == c).map_or(0.0, |(_, v)| v)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `y = A^T x`
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            if xr != 0.0 {
                for (c, v) in self.row(r) {
                    y[c] += v * xr;
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }
}

/// `P A Q = L U` for a square matrix that is banded under the symmetric
/// permutation `Q`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    /// Row-wise band: entry `(r, c)` lives at `r * width + c + kl - r`.
    band: Vec<f64>,
    /// Multipliers of step `k` for rows `k + 1 ..= k + kl`.
    lower: Vec<f64>,
    pivots: Vec<usize>,
    /// `order[new] = old`.
    order: Vec<usize>,
}

/// Relative threshold below which the diagonal is rejected as pivot.
const PIVOT_THRESHOLD: f64 = 0.1;

impl BandLu {
    /// Factorizes `a` permuted by `order` (`order[new] = old`). On failure
    /// returns the original index of the column without a usable pivot.
    pub fn factor(a: &CsrMatrix, order: &[usize]) -> Result<Self, usize> {
        let n = a.nrows();
        assert_eq!(a.ncols(), n, "LU needs a square matrix");
        assert_eq!(order.len(), n);
        let mut position = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let (mut kl, mut ku) = (0, 0);
        for (r, c, _) in a.triplets() {
            let (pr, pc) = (position[r], position[c]);
            if pr > pc {
                kl = kl.max(pr - pc);
            } else {
                ku = ku.max(pc - pr);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut band = vec![0.0; n * width];
        for (r, c, v) in a.triplets() {
            let (pr, pc) = (position[r], position[c]);
            band[pr * width + pc + kl - pr] += v;
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            band,
            lower: vec![0.0; n * kl],
            pivots: vec![0; n],
            order: order.to_vec(),
        };
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * self.width + c + self.kl - r
    }

    fn eliminate(&mut self) -> Result<(), usize> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut best = k;
            let mut best_abs = self.band[self.at(k, k)].abs();
            for r in k + 1..=last_row {
                let v = self.band[self.at(r, k)].abs();
                if v > best_abs {
                    best_abs = v;
                    best = r;
                }
            }
            let diag = self.band[self.at(k, k)].abs();
            let p = if diag >= PIVOT_THRESHOLD * best_abs && diag > 0.0 {
                k
            } else {
                best
            };
            if best_abs == 0.0 || !best_abs.is_finite() {
                return Err(self.order[k]);
            }
            self.pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let (ik, ip) = (self.at(k, c), self.at(p, c));
                    self.band.swap(ik, ip);
                }
            }
            let pivot = self.band[self.at(k, k)];
            for r in k + 1..=last_row {
                let irk = self.at(r, k);
                let factor = self.band[irk] / pivot;
                self.band[irk] = 0.0;
                self.lower[k * kl + (r - k - 1)] = factor;
                if factor != 0.0 {
                    for c in k + 1..=last_col {
                        let (ir, ik) = (self.at(r, c), self.at(k, c));
                        self.band[ir] -= factor * self.band[ik];
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.order.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            y.swap(k, self.pivots[k]);
            let yk = y[k];
            if yk != 0.0 {
                for r in k + 1..=(k + kl).min(n - 1) {
                    y[r] -= self.lower[k * kl + (r - k - 1)] * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for c in k + 1..=(k + kl + ku).min(n - 1) {
                s -= self.band[self.at(k, c)] * y[c];
            }
            y[k] = s / self.band[self.at(k, k)];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.order.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        let mut w: Vec<f64> = self.order.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            let mut s = w[k];
            for r in k.saturating_sub(kl + ku)..k {
                s -= self.band[self.at(r, k)] * w[r];
            }
            w[k] = s / self.band[self.at(k, k)];
        }
        for k in (0..n).rev() {
            let mut s = w[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                s -= self.lower[k * kl + (r - k - 1)] * w[r];
            }
            w[k] = s;
            w.swap(k, self.pivots[k]);
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.order.iter().enumerate() {
            x[old] = w[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                if rng.random_bool(0.7) || r == c {
                    t.push((r, c, rng.random_range(-1.0..1.0)));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    fn check(a: &CsrMatrix, order: &[usize], seed: u64) {
        let n = a.nrows();
        let lu = BandLu::factor(a, order).unwrap();
        let dense = a.to_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = dense
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_vec(b.clone()))
            .unwrap();
        let x = lu.solve(&b);
        let scale = oracle.amax().max(1.0);
        for k in 0..n {
            assert!((x[k] - oracle[k]).abs() < 1e-9 * scale, "solve {k}");
        }
        let oracle_t = dense
            .transpose()
            .lu()
            .solve(&nalgebra::DVector::from_vec(b.clone()))
            .unwrap();
        let xt = lu.solve_transpose(&b);
        let scale = oracle_t.amax().max(1.0);
        for k in 0..n {
            assert!((xt[k] - oracle_t[k]).abs() < 1e-9 * scale, "transpose {k}");
        }
    }

    #[test]
    fn matches_dense_lu() {
        for seed in 0..20 {
            let a = random_banded(40, 3, 2, seed);
            let identity: Vec<usize> = (0..40).collect();
            check(&a, &identity, seed + 100);
        }
    }

    #[test]
    fn permuted_ordering() {
        let n = 30;
        let a = random_banded(n, 2, 2, 7);
        let order: Vec<usize> = (0..n).rev().collect();
        check(&a, &order, 3);
        let mut shuffled: Vec<usize> = (0..n).collect();
        shuffled.swap(3, 17);
        shuffled.swap(0, 29);
        check(&a, &shuffled, 4);
    }

    #[test]
    fn needs_pivoting() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 1.0),
                (2, 2, 2.0),
                (2, 1, 1.0),
            ],
        );
        check(&a, &[0, 1, 2], 1);
    }

    #[test]
    fn singular_reports_column() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 0, 1.0), (2, 2, 1.0)]);
        assert_eq!(BandLu::factor(&a, &[0, 1, 2]).unwrap_err(), 1);
    }

    #[test]
    fn triplets_are_summed() {
        let a = CsrMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0), (1, 0, -1.0)],
        );
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.mul_vec(&[1.0, 5.0]), vec![3.0, 0.0]);
        assert_eq!(a.tr_mul_vec(&[1.0, 5.0]), vec![3.0, 0.0]);
    }
}
