//! The commuting operator tuple attached to a Steiner unimodular polynomial.
//!
//! The Hilbert space has the orthonormal basis
//! `e(j₁ ≤ … ≤ j_m)` for `0 ≤ m ≤ k−2` (with `e = e()`), `f_0 … f_{n−1}` and
//! `g`. Each `T_l` shifts `e`-vectors up one level, sends the top level to the
//! `f`-vectors through the polynomial's coefficients, sends `f_l` to `g` and
//! kills `g`. All matrices are exact integers; scalings are kept symbolically
//! in [`Scale`] and only applied to reported norms.

mod ivp;
mod power;
mod sparse;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::designs::binomial;
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::steinerpoly::SteinerPolynomial;

pub use ivp::{ivp_sup, IvpSettings};
pub use power::{operator_norm, DEFAULT_MAX_ITERS, DEFAULT_TOL};
pub use sparse::IntSparseOperator;

/// One vector of the canonical basis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum BasisVector {
    /// `e(j₁, …, j_m)` with nondecreasing indices; the empty tuple is `e`.
    E(Vec<usize>),
    F(usize),
    G,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HilbertBasis {
    n: usize,
    k: usize,
    vectors: Vec<BasisVector>,
    e_index: HashMap<Vec<usize>, usize>,
    f_offset: usize,
}

impl HilbertBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[BasisVector] {
        &self.vectors
    }

    pub fn index_of(&self, v: &BasisVector) -> Option<usize> {
        match v {
            BasisVector::E(idx) => self.e_index.get(idx).copied(),
            BasisVector::F(i) => (*i < self.n).then(|| self.f_offset + i),
            BasisVector::G => Some(self.g()),
        }
    }

    pub fn e(&self) -> usize {
        0
    }

    pub fn f(&self, i: usize) -> usize {
        self.f_offset + i
    }

    pub fn g(&self) -> usize {
        self.f_offset + self.n
    }

    /// Integer coordinate vector of a single basis element.
    pub fn unit(&self, index: usize) -> Vec<i64> {
        let mut v = vec![0; self.dim()];
        v[index] = 1;
        v
    }
}

/// `Σ_{m=0}^{k−2} C(n+m−1, m) + n + 1`.
pub fn basis_dimension(n: usize, k: usize) -> u128 {
    (0..=k.saturating_sub(2) as u64)
        .map(|m| if m == 0 { 1 } else { binomial(n as u64 + m - 1, m) })
        .sum::<u128>()
        + n as u128
        + 1
}

fn next_multiset(idx: &mut [usize], n: usize) -> bool {
    let Some(i) = idx.iter().rposition(|&x| x + 1 < n) else {
        return false;
    };
    let v = idx[i] + 1;
    idx[i..].iter_mut().for_each(|x| *x = v);
    true
}

/// Canonical basis: `e`, the `e`-levels by `(m, lexicographic indices)`,
/// then `f_0 … f_{n−1}`, then `g`.
///
/// `n < k` is accepted: such a space only carries the empty system.
pub fn build_basis(n: usize, k: usize) -> Result<HilbertBasis> {
    if k < 3 {
        return Err(Error::domain(format!("operator tuples need k >= 3, got k = {k}")));
    }
    if n == 0 {
        return Err(Error::domain("operator tuples need n >= 1"));
    }
    let dim = basis_dimension(n, k);
    if dim > 50_000_000 {
        return Err(Error::domain(format!("basis of dimension {dim} is too large")));
    }
    let mut vectors = Vec::with_capacity(dim as usize);
    let mut e_index = HashMap::new();
    for m in 0..=k - 2 {
        let mut idx = vec![0usize; m];
        loop {
            e_index.insert(idx.clone(), vectors.len());
            vectors.push(BasisVector::E(idx.clone()));
            if !next_multiset(&mut idx, n) {
                break;
            }
        }
    }
    let f_offset = vectors.len();
    vectors.extend((0..n).map(BasisVector::F));
    vectors.push(BasisVector::G);
    debug_assert_eq!(vectors.len() as u128, dim);
    Ok(HilbertBasis {
        n,
        k,
        vectors,
        e_index,
        f_offset,
    })
}

/// Positive scalar `factor · n^{−1/root}` (`root = ∞` means just `factor`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scale {
    pub factor: f64,
    pub root: Exponent,
}

impl Scale {
    pub const ONE: Scale = Scale {
        factor: 1.0,
        root: Exponent::INFINITY,
    };

    pub fn new(factor: f64, root: Exponent) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::domain(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Scale { factor, root })
    }

    pub fn value(&self, n: usize) -> f64 {
        self.factor * (n as f64).powf(-self.root.reciprocal())
    }
}

/// `(T_0, …, T_{n−1})` for a Steiner polynomial, exact at scale one.
#[derive(Debug, Clone)]
pub struct OperatorTuple {
    basis: HilbertBasis,
    ops: Vec<IntSparseOperator>,
    source: SteinerPolynomial,
    scale: Scale,
    normalized: bool,
}

impl OperatorTuple {
    pub fn basis(&self) -> &HilbertBasis {
        &self.basis
    }

    pub fn ops(&self) -> &[IntSparseOperator] {
        &self.ops
    }

    pub fn source(&self) -> &SteinerPolynomial {
        &self.source
    }

    pub fn n(&self) -> usize {
        self.basis.n
    }

    pub fn k(&self) -> usize {
        self.basis.k
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn scale_value(&self) -> f64 {
        self.scale.value(self.n())
    }

    /// Whether the scale includes a division by `max_l ‖T_l‖ > 1`.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.scale = scale;
        self
    }

    /// Replaces operator `l`; used to test that the checks catch corruption.
    pub fn with_op(mut self, l: usize, op: IntSparseOperator) -> Result<Self> {
        if l >= self.ops.len() || op.dim() != self.dim() {
            return Err(Error::validation(format!("cannot replace operator {l}")));
        }
        self.ops[l] = op;
        Ok(self)
    }

    /// Divides the scale by `max_l ‖T_l‖` when that exceeds one, and marks
    /// the tuple as normalized. Returns the unscaled maximum norm.
    ///
    /// Operators whose Gram matrix is diagonal with 0/1 entries get their norm
    /// exactly; the rest go through [`operator_norm`].
    pub fn normalize_to_contractions(&mut self) -> Result<f64> {
        let reports = gram_diagonal_check(self)?;
        let norms: Vec<f64> = self
            .ops
            .par_iter()
            .zip(reports.par_iter())
            .map(|(op, rep)| {
                if rep.is_diagonal_01 {
                    Ok((rep.max_column_norm_sq as f64).sqrt())
                } else {
                    operator_norm(op, DEFAULT_TOL, DEFAULT_MAX_ITERS)
                }
            })
            .collect::<Result<_>>()?;
        let max = norms.into_iter().fold(0.0, f64::max);
        if max > 1.0 + 1e-12 {
            self.scale.factor /= max;
            self.normalized = true;
        }
        Ok(max)
    }

    /// Writes `operators.txt` (header `dim n k factor root`, then
    /// `l row col value` lines) and `poly.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut out = String::new();
        writeln!(
            out,
            "{} {} {} {} {}",
            self.dim(),
            self.n(),
            self.k(),
            self.scale.factor,
            self.scale.root
        )
        .ok();
        for (l, op) in self.ops.iter().enumerate() {
            for (r, c, v) in op.entries() {
                writeln!(out, "{l} {r} {c} {v}").ok();
            }
        }
        fs::write(dir.join(OPERATORS_FILE), out)?;
        fs::write(dir.join(POLY_FILE), self.source.to_text())?;
        Ok(())
    }

    /// Reads a directory written by [`OperatorTuple::write_dir`]. The stored
    /// matrices are taken as they are, so corrupted files show up in the
    /// checks rather than being silently rebuilt.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let source = SteinerPolynomial::from_text(&fs::read_to_string(dir.join(POLY_FILE))?)?;
        let text = fs::read_to_string(dir.join(OPERATORS_FILE))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::validation("empty operator file"))?
            .split_whitespace()
            .collect();
        if header.len() != 5 {
            return Err(Error::validation("operator header must be `dim n k factor root`"));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::validation(format!("bad integer `{s}` in operator header")))
        };
        let (dim, n, k) = (parse_usize(header[0])?, parse_usize(header[1])?, parse_usize(header[2])?);
        let factor: f64 = header[3]
            .parse()
            .map_err(|_| Error::validation(format!("bad scale factor `{}`", header[3])))?;
        let root: Exponent = header[4].parse()?;
        let basis = build_basis(n, k)?;
        if basis.dim() != dim || source.n() != n || source.degree() != k {
            return Err(Error::validation(format!(
                "header (dim {dim}, n {n}, k {k}) does not match the polynomial"
            )));
        }
        let mut triplets: Vec<Vec<(usize, usize, i64)>> = vec![Vec::new(); n];
        for (lineno, line) in lines.enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::validation(format!("bad operator entry on line {}: `{line}`", lineno + 2));
            if f.len() != 4 {
                return Err(bad());
            }
            let l: usize = f[0].parse().map_err(|_| bad())?;
            let r: usize = f[1].parse().map_err(|_| bad())?;
            let c: usize = f[2].parse().map_err(|_| bad())?;
            let v: i64 = f[3].parse().map_err(|_| bad())?;
            if l >= n {
                return Err(bad());
            }
            triplets[l].push((r, c, v));
        }
        let ops = triplets
            .into_iter()
            .map(|t| IntSparseOperator::from_triplets(dim, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(OperatorTuple {
            basis,
            ops,
            source,
            scale: Scale::new(factor, root)?,
            normalized: factor < 1.0,
        })
    }
}

pub const OPERATORS_FILE: &str = "operators.txt";
pub const POLY_FILE: &str = "poly.txt";

/// Builds `(T_0, …, T_{n−1})` for `p` at scale one.
pub fn build_operators(p: &SteinerPolynomial) -> Result<OperatorTuple> {
    let (n, k) = (p.n(), p.degree());
    if k < 3 {
        return Err(Error::domain(format!("operator tuples need k >= 3, got k = {k}")));
    }
    let basis = build_basis(n, k)?;
    // (k−1)-subset of a block ↦ (the missing element, the block's sign)
    let mut owner: HashMap<Vec<usize>, (usize, i64)> = HashMap::new();
    for (block, sign) in p.terms() {
        for &x in block.elements() {
            let rest: Vec<usize> = block.elements().iter().copied().filter(|&y| y != x).collect();
            owner.insert(rest, (x, i64::from(sign)));
        }
    }
    let ops = (0..n)
        .into_par_iter()
        .map(|l| {
            let mut triplets = Vec::new();
            for (col, v) in basis.vectors.iter().enumerate() {
                match v {
                    BasisVector::E(idx) => {
                        let mut up = idx.clone();
                        let pos = up.partition_point(|&x| x <= l);
                        up.insert(pos, l);
                        if idx.len() < k - 2 {
                            triplets.push((basis.e_index[&up], col, 1));
                        } else if up.windows(2).all(|w| w[0] < w[1]) {
                            if let Some(&(i, c)) = owner.get(&up) {
                                triplets.push((basis.f(i), col, c));
                            }
                        }
                    }
                    BasisVector::F(i) if *i == l => triplets.push((basis.g(), col, 1)),
                    _ => {}
                }
            }
            IntSparseOperator::from_triplets(basis.dim(), triplets)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OperatorTuple {
        basis,
        ops,
        source: p.clone(),
        scale: Scale::ONE,
        normalized: false,
    })
}

/// First entry where `T_l T_m` and `T_m T_l` differ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommutationFailure {
    pub l: usize,
    pub m: usize,
    pub row: usize,
    pub col: usize,
    pub lm_value: i64,
    pub ml_value: i64,
}

fn first_difference(a: &IntSparseOperator, b: &IntSparseOperator) -> Option<(usize, usize, i64, i64)> {
    let mut map: BTreeMap<(usize, usize), (i64, i64)> = BTreeMap::new();
    for (r, c, v) in a.entries() {
        map.entry((c, r)).or_default().0 = v;
    }
    for (r, c, v) in b.entries() {
        map.entry((c, r)).or_default().1 = v;
    }
    map.into_iter()
        .find(|(_, (x, y))| x != y)
        .map(|((c, r), (x, y))| (r, c, x, y))
}

/// Exact check of `T_l T_m = T_m T_l` for all `l < m`. Returns the first
/// failing pair in lexicographic order, or `None` when all commute.
pub fn check_commuting(t: &OperatorTuple) -> Result<Option<CommutationFailure>> {
    let n = t.ops.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|l| (l + 1..n).map(move |m| (l, m))).collect();
    let results = pairs
        .par_iter()
        .map(|&(l, m)| {
            let lm = t.ops[l].matmul(&t.ops[m])?;
            let ml = t.ops[m].matmul(&t.ops[l])?;
            Ok(first_difference(&lm, &ml).map(|(row, col, lm_value, ml_value)| CommutationFailure {
                l,
                m,
                row,
                col,
                lm_value,
                ml_value,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().flatten().next())
}

/// Exact Gram matrix summary for one operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GramReport {
    pub l: usize,
    /// `T_l* T_l` is diagonal with entries in {0, 1}.
    pub is_diagonal_01: bool,
    /// Largest squared column norm, i.e. the largest Gram diagonal entry.
    pub max_column_norm_sq: i64,
    pub offdiag_count: usize,
}

pub fn gram_diagonal_check(t: &OperatorTuple) -> Result<Vec<GramReport>> {
    t.ops
        .par_iter()
        .enumerate()
        .map(|(l, op)| {
            let gram = op.gram()?;
            let mut offdiag_count = 0;
            let mut diag_ok = true;
            for (r, c, v) in gram.entries() {
                if r != c {
                    offdiag_count += 1;
                } else if v != 1 {
                    diag_ok = false;
                }
            }
            Ok(GramReport {
                l,
                is_diagonal_01: diag_ok && offdiag_count == 0,
                max_column_norm_sq: op.max_column_norm_sq(),
                offdiag_count,
            })
        })
        .collect()
}

fn check_compatible(t: &OperatorTuple, p: &SteinerPolynomial) -> Result<()> {
    if p.n() != t.n() || p.degree() != t.k() {
        return Err(Error::validation(format!(
            "polynomial (n = {}, k = {}) does not match the tuple (n = {}, k = {})",
            p.n(),
            p.degree(),
            t.n(),
            t.k()
        )));
    }
    Ok(())
}

/// `p(T_0, …, T_{n−1}) v` at scale one, exactly. Each monomial is applied
/// right to left as sparse matrix-vector products.
pub fn apply_polynomial(t: &OperatorTuple, p: &SteinerPolynomial, v: &[i64]) -> Result<Vec<i64>> {
    check_compatible(t, p)?;
    if v.len() != t.dim() {
        return Err(Error::validation(format!(
            "vector of length {} for a {}-dimensional space",
            v.len(),
            t.dim()
        )));
    }
    let mut acc = vec![0i64; t.dim()];
    for (block, sign) in p.terms() {
        let mut w = v.to_vec();
        for &j in block.elements().iter().rev() {
            w = t.ops[j].matvec_exact(&w)?;
        }
        for (a, x) in acc.iter_mut().zip(w) {
            *a = a
                .checked_add(x.checked_mul(i64::from(sign)).ok_or(Error::Overflow)?)
                .ok_or(Error::Overflow)?;
        }
    }
    Ok(acc)
}

/// [`apply_polynomial`] including the tuple's scale (`scaleᵏ · p(T) v`).
pub fn apply_polynomial_scaled(t: &OperatorTuple, p: &SteinerPolynomial, v: &[i64]) -> Result<Vec<f64>> {
    let s = t.scale_value().powi(t.k() as i32);
    Ok(apply_polynomial(t, p, v)?.into_iter().map(|x| x as f64 * s).collect())
}

/// The exact matrix `p(T_0, …, T_{n−1})` at scale one.
pub fn assemble_polynomial(t: &OperatorTuple, p: &SteinerPolynomial) -> Result<IntSparseOperator> {
    check_compatible(t, p)?;
    let products = p
        .terms()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(block, sign)| {
            let el = block.elements();
            let mut m = t.ops[el[0]].clone();
            for &j in &el[1..] {
                m = m.matmul(&t.ops[j])?;
            }
            Ok((i64::from(*sign), m))
        })
        .collect::<Result<Vec<_>>>()?;
    IntSparseOperator::linear_combination(t.dim(), products.iter().map(|(s, m)| (*s, m)))
}

/// `‖p(T)‖` of the scaled tuple, never below the `e ↦ |S| g` floor
/// `|S| · scaleᵏ`.
pub fn polynomial_operator_norm(t: &OperatorTuple, p: &SteinerPolynomial, tol: f64) -> Result<f64> {
    let m = assemble_polynomial(t, p)?;
    let s = t.scale_value().powi(t.k() as i32);
    let norm = operator_norm(&m, tol, DEFAULT_MAX_ITERS)?;
    Ok((norm * s).max(p.num_terms() as f64 * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{greedy_construct, skolem_construct, Block, PartialSteinerSystem};
    use crate::seed;
    use crate::steinerpoly::{random_signs, SignPattern};
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;

    fn poly(n: usize, k: usize, blocks: &[&[usize]], signs: &[i8]) -> SteinerPolynomial {
        let system =
            PartialSteinerSystem::new(n, k, k - 1, blocks.iter().map(|b| Block::from(*b)).collect())
                .unwrap();
        SteinerPolynomial::new(system, SignPattern::new(signs.to_vec()).unwrap()).unwrap()
    }

    fn sts7() -> SteinerPolynomial {
        let s = skolem_construct(7).unwrap();
        SteinerPolynomial::new(s.clone(), random_signs(&s, 11)).unwrap()
    }

    fn two_block_k4() -> SteinerPolynomial {
        poly(6, 4, &[&[0, 1, 2, 3], &[0, 1, 4, 5]], &[1, 1])
    }

    #[test]
    fn basis_dimensions() {
        assert_eq!(build_basis(7, 3).unwrap().dim(), 16);
        assert_eq!(build_basis(5, 4).unwrap().dim(), 27);
        assert_eq!(build_basis(3, 3).unwrap().dim(), 8);
        assert!(build_basis(5, 2).is_err());
        for n in 1..12 {
            for k in 3..6 {
                let b = build_basis(n, k).unwrap();
                assert_eq!(b.dim() as u128, basis_dimension(n, k));
                if k == 3 {
                    assert_eq!(b.dim(), 2 * n + 2);
                }
            }
        }
    }

    #[test]
    fn basis_order() {
        let b = build_basis(3, 4).unwrap();
        let e = |v: &[usize]| BasisVector::E(v.to_vec());
        assert_eq!(
            &b.vectors()[..10],
            &[
                e(&[]),
                e(&[0]),
                e(&[1]),
                e(&[2]),
                e(&[0, 0]),
                e(&[0, 1]),
                e(&[0, 2]),
                e(&[1, 1]),
                e(&[1, 2]),
                e(&[2, 2])
            ]
        );
        assert_eq!(b.vectors()[b.f(2)], BasisVector::F(2));
        assert_eq!(b.vectors()[b.g()], BasisVector::G);
        for (i, v) in b.vectors().iter().enumerate() {
            assert_eq!(b.index_of(v), Some(i));
        }
    }

    #[test]
    fn single_block_operators() {
        let p = poly(3, 3, &[&[0, 1, 2]], &[1]);
        let t = build_operators(&p).unwrap();
        let b = t.basis();
        let t0 = &t.ops()[0];
        let e1 = b.index_of(&BasisVector::E(vec![1])).unwrap();
        assert_eq!(t0.column(e1).collect::<Vec<_>>(), vec![(b.f(2), 1)]);
        assert_eq!(t0.column(b.g()).count(), 0);
        let e0 = b.index_of(&BasisVector::E(vec![0])).unwrap();
        assert_eq!(t0.column(b.e()).collect::<Vec<_>>(), vec![(e0, 1)]);
        // e(0) would need the repeated multiset {0, 0}
        assert_eq!(t0.column(e0).count(), 0);
        assert_eq!(t0.column(b.f(0)).collect::<Vec<_>>(), vec![(b.g(), 1)]);
        assert_eq!(t0.column(b.f(1)).count(), 0);
        for op in t.ops() {
            assert!(op.entries().all(|(_, _, v)| v == 1 || v == -1));
        }
    }

    #[test]
    fn negative_sign_propagates() {
        let p = poly(3, 3, &[&[0, 1, 2]], &[-1]);
        let t = build_operators(&p).unwrap();
        let b = t.basis();
        let e2 = b.index_of(&BasisVector::E(vec![2])).unwrap();
        assert_eq!(t.ops()[1].get(b.f(0), e2), -1);
        // the sign is picked up once by T_1 and once more as the coefficient
        let out = apply_polynomial(&t, &p, &b.unit(b.e())).unwrap();
        assert_eq!(out[b.g()], 1);
    }

    #[test]
    fn commutation_on_small_tuples() {
        assert_eq!(check_commuting(&build_operators(&sts7()).unwrap()).unwrap(), None);
        let single = build_operators(&poly(3, 3, &[&[0, 1, 2]], &[1])).unwrap();
        assert_eq!(check_commuting(&single).unwrap(), None);
        for seed in 0..3 {
            let s = greedy_construct(9, 4, seed).unwrap();
            let p = SteinerPolynomial::new(s.clone(), random_signs(&s, seed)).unwrap();
            assert_eq!(check_commuting(&build_operators(&p).unwrap()).unwrap(), None);
        }
    }

    #[test]
    fn commutation_detects_mutation() {
        let t = build_operators(&sts7()).unwrap();
        let (r, c, v) = t.ops()[0].entries().nth(3).unwrap();
        let flipped = t.ops()[0].with_entry(r, c, -v);
        let bad = t.clone().with_op(0, flipped).unwrap();
        let failure = check_commuting(&bad).unwrap().expect("mutation must be detected");
        assert_eq!(failure.l, 0);
        assert_ne!(failure.lm_value, failure.ml_value);
    }

    #[test]
    fn gram_certifies_contractions_at_k3() {
        let t = build_operators(&sts7()).unwrap();
        for rep in gram_diagonal_check(&t).unwrap() {
            assert!(rep.is_diagonal_01, "{rep:?}");
            assert_eq!(rep.max_column_norm_sq, 1);
        }
        for op in t.ops() {
            assert_relative_eq!(operator_norm(op, 1e-9, DEFAULT_MAX_ITERS).unwrap(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn gram_of_empty_system() {
        let p = SteinerPolynomial::new(
            PartialSteinerSystem::empty(4, 3).unwrap(),
            SignPattern::all_positive(0),
        )
        .unwrap();
        let t = build_operators(&p).unwrap();
        for (op, rep) in t.ops().iter().zip(gram_diagonal_check(&t).unwrap()) {
            assert!(rep.is_diagonal_01);
            assert_eq!(rep.offdiag_count, 0);
            assert_eq!(operator_norm(op, 1e-9, DEFAULT_MAX_ITERS).unwrap(), 1.0);
        }
    }

    #[test]
    fn k4_shared_pair_breaks_contractivity() {
        let p = two_block_k4();
        let mut t = build_operators(&p).unwrap();
        let reports = gram_diagonal_check(&t).unwrap();
        assert!(!reports[0].is_diagonal_01);
        assert!(reports[0].offdiag_count > 0);
        let b = t.basis();
        let e23 = b.index_of(&BasisVector::E(vec![2, 3])).unwrap();
        let e45 = b.index_of(&BasisVector::E(vec![4, 5])).unwrap();
        assert_eq!(t.ops()[0].get(b.f(1), e23), 1);
        assert_eq!(t.ops()[0].get(b.f(1), e45), 1);
        let norm = operator_norm(&t.ops()[0], 1e-9, DEFAULT_MAX_ITERS).unwrap();
        assert_relative_eq!(norm, 2f64.sqrt(), epsilon = 1e-9);
        assert_eq!(check_commuting(&t).unwrap(), None);
        let max = t.normalize_to_contractions().unwrap();
        assert_relative_eq!(max, 2f64.sqrt(), epsilon = 1e-9);
        assert!(t.is_normalized());
        assert_relative_eq!(t.scale_value(), 1.0 / 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn k3_normalization_is_a_no_op() {
        let mut t = build_operators(&sts7()).unwrap();
        assert_eq!(t.normalize_to_contractions().unwrap(), 1.0);
        assert!(!t.is_normalized());
        assert_eq!(t.scale(), Scale::ONE);
    }

    #[test]
    fn evaluation_identity() {
        let p = sts7();
        let t = build_operators(&p).unwrap();
        let b = t.basis();
        let out = apply_polynomial(&t, &p, &b.unit(b.e())).unwrap();
        let mut expected = vec![0; t.dim()];
        expected[b.g()] = 7;
        // all signs enter as c_J · c_J = 1 on the e → g path
        assert_eq!(out, expected);
        assert!(apply_polynomial(&t, &p, &b.unit(b.g())).unwrap().iter().all(|&x| x == 0));
        assert!(apply_polynomial(&t, &p, &[1, 2]).is_err());
    }

    #[test]
    fn assembled_matrix_matches_application() {
        let s = greedy_construct(8, 4, 2).unwrap();
        let p = SteinerPolynomial::new(s.clone(), random_signs(&s, 2)).unwrap();
        let t = build_operators(&p).unwrap();
        let m = assemble_polynomial(&t, &p).unwrap();
        for i in (0..t.dim()).step_by(7) {
            let u = t.basis().unit(i);
            assert_eq!(m.matvec_exact(&u).unwrap(), apply_polynomial(&t, &p, &u).unwrap());
        }
    }

    #[test]
    fn monomial_order_independence() {
        let p = sts7();
        let t = build_operators(&p).unwrap();
        let reference = assemble_polynomial(&t, &p).unwrap();
        let mut rng = seed::rng(99);
        for _ in 0..10 {
            let mut terms = Vec::new();
            for (block, sign) in p.terms() {
                let mut order = block.elements().to_vec();
                order.shuffle(&mut rng);
                let mut m = t.ops()[order[0]].clone();
                for &j in &order[1..] {
                    m = m.matmul(&t.ops()[j]).unwrap();
                }
                terms.push((i64::from(sign), m));
            }
            let alt =
                IntSparseOperator::linear_combination(t.dim(), terms.iter().map(|(s, m)| (*s, m))).unwrap();
            assert_eq!(alt, reference);
        }
    }

    #[test]
    fn polynomial_norm_floors() {
        let p = sts7();
        let t = build_operators(&p).unwrap();
        let v = polynomial_operator_norm(&t, &p, 1e-9).unwrap();
        assert!(v >= 7.0);
        // rank one at k = 3: p(T) = |S| g ⊗ e
        assert_relative_eq!(v, 7.0, epsilon = 1e-9);
        let single = poly(3, 3, &[&[0, 1, 2]], &[1]);
        let ts = build_operators(&single).unwrap();
        assert!(polynomial_operator_norm(&ts, &single, 1e-9).unwrap() >= 1.0);
        let scaled = t.with_scale(Scale::new(1.0, Exponent::TWO).unwrap());
        let floor = 7.0 * 7f64.powf(-1.5);
        assert_relative_eq!(scaled.scale_value().powi(3) * 7.0, floor, epsilon = 1e-12);
        assert!(polynomial_operator_norm(&scaled, &p, 1e-9).unwrap() >= floor - 1e-12);
    }

    #[test]
    fn operator_norm_envelope() {
        let s = greedy_construct(10, 4, 5).unwrap();
        let p = SteinerPolynomial::new(s.clone(), random_signs(&s, 5)).unwrap();
        let t = build_operators(&p).unwrap();
        for op in t.ops() {
            let v = operator_norm(op, 1e-9, DEFAULT_MAX_ITERS).unwrap();
            let lo = (op.max_column_norm_sq() as f64).sqrt();
            let hi = ((op.max_row_l1() * op.max_column_l1()) as f64).sqrt();
            assert!(v >= lo - 1e-12 && v <= hi + 1e-9, "{lo} <= {v} <= {hi}");
        }
    }

    #[test]
    fn directory_round_trip() {
        let p = two_block_k4();
        let mut t = build_operators(&p).unwrap();
        t.normalize_to_contractions().unwrap();
        let dir = tempfile::tempdir().unwrap();
        t.write_dir(dir.path()).unwrap();
        let back = OperatorTuple::read_dir(dir.path()).unwrap();
        assert_eq!(back.ops(), t.ops());
        assert_eq!(back.scale(), t.scale());
        assert!(back.is_normalized());
        assert_eq!(back.source(), &p);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn random_tuples_commute_and_evaluate(n in 4usize..12, k in 3usize..5, seed in proptest::prelude::any::<u64>()) {
            let system = greedy_construct(n, k, seed).unwrap();
            let signs = random_signs(&system, seed::derive_seed(seed, &[1]));
            let p = SteinerPolynomial::new(system, signs).unwrap();
            let t = build_operators(&p).unwrap();
            proptest::prop_assert_eq!(check_commuting(&t).unwrap(), None);
            let b = t.basis();
            let image = apply_polynomial(&t, &p, &b.unit(b.e())).unwrap();
            for (i, v) in image.into_iter().enumerate() {
                proptest::prop_assert_eq!(v, if i == b.g() { p.num_terms() as i64 } else { 0 });
            }
        }
    }
}
