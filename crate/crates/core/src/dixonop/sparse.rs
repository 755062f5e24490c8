use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Exact integer sparse matrix in compressed-column form. Zero entries are
/// never stored and each `(row, col)` appears at most once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntSparseOperator {
    dim: usize,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    values: Vec<i64>,
}

impl IntSparseOperator {
    pub fn zero(dim: usize) -> Self {
        IntSparseOperator {
            dim,
            col_ptr: vec![0; dim + 1],
            rows: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets. Repeated positions are an
    /// error; zero values are dropped.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, i64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::validation(format!(
                    "entry ({r}, {c}) outside a {dim}x{dim} operator"
                )));
            }
            if map.insert((c, r), v).is_some() {
                return Err(Error::validation(format!("duplicate entry at ({r}, {c})")));
            }
        }
        Ok(Self::from_column_map(dim, map))
    }

    fn from_column_map(dim: usize, map: BTreeMap<(usize, usize), i64>) -> Self {
        let mut col_ptr = vec![0; dim + 1];
        let mut rows = Vec::with_capacity(map.len());
        let mut values = Vec::with_capacity(map.len());
        for ((c, r), v) in map {
            if v != 0 {
                col_ptr[c + 1] += 1;
                rows.push(r);
                values.push(v);
            }
        }
        for c in 0..dim {
            col_ptr[c + 1] += col_ptr[c];
        }
        IntSparseOperator {
            dim,
            col_ptr,
            rows,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(row, value)` pairs of one column, rows ascending.
    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, i64)> + '_ {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        self.rows[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// All `(row, col, value)` entries, column-sorted.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, i64)> + '_ {
        (0..self.dim).flat_map(move |c| self.column(c).map(move |(r, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.column(c).find(|&(row, _)| row == r).map_or(0, |(_, v)| v)
    }

    /// Copy with entry `(r, c)` overwritten.
    pub fn with_entry(&self, r: usize, c: usize, v: i64) -> Self {
        let mut map: BTreeMap<(usize, usize), i64> =
            self.entries().map(|(row, col, val)| ((col, row), val)).collect();
        map.insert((c, r), v);
        Self::from_column_map(self.dim, map)
    }

    pub fn transpose(&self) -> Self {
        let map = self.entries().map(|(r, c, v)| ((r, c), v)).collect();
        Self::from_column_map(self.dim, map)
    }

    /// Exact product `self · other` with checked 64-bit arithmetic.
    pub fn matmul(&self, other: &IntSparseOperator) -> Result<Self> {
        self.check_same_dim(other)?;
        let mut acc = vec![0i64; self.dim];
        let mut touched = Vec::new();
        let mut col_ptr = vec![0; self.dim + 1];
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for c in 0..self.dim {
            for (k, b) in other.column(c) {
                for (r, a) in self.column(k) {
                    let prod = a.checked_mul(b).ok_or(Error::Overflow)?;
                    if acc[r] == 0 {
                        touched.push(r);
                    }
                    acc[r] = acc[r].checked_add(prod).ok_or(Error::Overflow)?;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            for &r in &touched {
                if acc[r] != 0 {
                    rows.push(r);
                    values.push(acc[r]);
                }
                acc[r] = 0;
            }
            touched.clear();
            col_ptr[c + 1] = rows.len();
        }
        Ok(IntSparseOperator {
            dim: self.dim,
            col_ptr,
            rows,
            values,
        })
    }

    /// Exact `Σ sign_i · A_i`.
    pub fn linear_combination<'a>(
        dim: usize,
        terms: impl IntoIterator<Item = (i64, &'a IntSparseOperator)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), i64> = BTreeMap::new();
        for (s, op) in terms {
            if op.dim != dim {
                return Err(Error::validation("dimension mismatch in linear combination"));
            }
            for (r, c, v) in op.entries() {
                let e = map.entry((c, r)).or_insert(0);
                *e = e
                    .checked_add(v.checked_mul(s).ok_or(Error::Overflow)?)
                    .ok_or(Error::Overflow)?;
            }
        }
        Ok(Self::from_column_map(dim, map))
    }

    pub fn matvec_exact(&self, x: &[i64]) -> Result<Vec<i64>> {
        self.check_vec(x.len())?;
        let mut y = vec![0i64; self.dim];
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0 {
                continue;
            }
            for (r, v) in self.column(c) {
                y[r] = y[r]
                    .checked_add(v.checked_mul(xc).ok_or(Error::Overflow)?)
                    .ok_or(Error::Overflow)?;
            }
        }
        Ok(y)
    }

    pub(crate) fn matvec_f64(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (c, &xc) in x.iter().enumerate() {
            if xc != 0.0 {
                for (r, v) in self.column(c) {
                    y[r] += v as f64 * xc;
                }
            }
        }
    }

    pub(crate) fn matvec_transpose_f64(&self, y: &[f64], x: &mut [f64]) {
        for (c, xc) in x.iter_mut().enumerate() {
            *xc = self.column(c).map(|(r, v)| v as f64 * y[r]).sum();
        }
    }

    /// Exact Gram matrix `AᵀA`.
    pub fn gram(&self) -> Result<Self> {
        self.transpose().matmul(self)
    }

    /// Largest squared Euclidean column norm.
    pub fn max_column_norm_sq(&self) -> i64 {
        (0..self.dim)
            .map(|c| self.column(c).map(|(_, v)| v * v).sum::<i64>())
            .max()
            .unwrap_or(0)
    }

    pub fn max_column_l1(&self) -> i64 {
        (0..self.dim)
            .map(|c| self.column(c).map(|(_, v)| v.abs()).sum::<i64>())
            .max()
            .unwrap_or(0)
    }

    pub fn max_row_l1(&self) -> i64 {
        let mut sums = vec![0i64; self.dim];
        for (r, _, v) in self.entries() {
            sums[r] += v.abs();
        }
        sums.into_iter().max().unwrap_or(0)
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::validation(format!(
                "operator dimensions differ: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    fn check_vec(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::validation(format!(
                "vector of length {len} for a {}-dimensional operator",
                self.dim
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(a: &IntSparseOperator) -> Vec<Vec<i64>> {
        let mut m = vec![vec![0; a.dim()]; a.dim()];
        for (r, c, v) in a.entries() {
            m[r][c] = v;
        }
        m
    }

    fn dense_mul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
        let n = a.len();
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
            .collect()
    }

    fn arb_op(dim: usize) -> impl Strategy<Value = IntSparseOperator> {
        proptest::collection::vec((0..dim, 0..dim, -3i64..=3), 0..3 * dim).prop_map(move |t| {
            let map: BTreeMap<(usize, usize), i64> = t.into_iter().map(|(r, c, v)| ((c, r), v)).collect();
            IntSparseOperator::from_column_map(dim, map)
        })
    }

    #[test]
    fn triplet_validation() {
        assert!(IntSparseOperator::from_triplets(2, [(0, 0, 1), (0, 0, -1)]).is_err());
        assert!(IntSparseOperator::from_triplets(2, [(2, 0, 1)]).is_err());
        let a = IntSparseOperator::from_triplets(3, [(1, 0, 1), (0, 2, -1), (2, 2, 0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 2), -1);
        assert_eq!(a.entries().collect::<Vec<_>>(), vec![(1, 0, 1), (0, 2, -1)]);
    }

    #[test]
    fn overflow_is_reported() {
        let a = IntSparseOperator::from_triplets(1, [(0, 0, i64::MAX)]).unwrap();
        assert!(matches!(a.matmul(&a), Err(Error::Overflow)));
    }

    #[test]
    fn norms_and_gram() {
        let a = IntSparseOperator::from_triplets(3, [(0, 0, 1), (0, 1, 1), (2, 1, -1)]).unwrap();
        assert_eq!(a.max_column_norm_sq(), 2);
        assert_eq!(a.max_row_l1(), 2);
        assert_eq!(a.max_column_l1(), 2);
        let g = a.gram().unwrap();
        assert_eq!(dense(&g), vec![vec![1, 1, 0], vec![1, 2, 0], vec![0, 0, 0]]);
    }

    proptest! {
        #[test]
        fn matmul_matches_dense((a, b) in (arb_op(6), arb_op(6))) {
            let p = a.matmul(&b).unwrap();
            prop_assert_eq!(dense(&p), dense_mul(&dense(&a), &dense(&b)));
            let x: Vec<i64> = (0..6).map(|i| i as i64 - 2).collect();
            let direct = a.matvec_exact(&b.matvec_exact(&x).unwrap()).unwrap();
            prop_assert_eq!(p.matvec_exact(&x).unwrap(), direct);
        }

        #[test]
        fn transpose_involution(a in arb_op(5)) {
            prop_assert_eq!(a.transpose().transpose(), a);
        }
    }
}
