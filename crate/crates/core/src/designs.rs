//! Partial Steiner systems `S_p(t, k, n)`: families of `k`-subsets of
//! `{0, …, n−1}` in which every `t`-subset lies in at most one block.
//!
//! Exact Steiner triple systems are produced by the classical Bose
//! (`n ≡ 3 mod 6`) and Skolem (`n ≡ 1 mod 6`) constructions; every other
//! `(n, k)` uses a seeded random greedy packing with `t = k − 1`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rand::seq::index;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed;

/// Above this many candidate `k`-subsets the greedy packing switches from
/// iterating a full permutation to streaming random draws.
pub const FULL_ENUMERATION_LIMIT: u128 = 100_000_000;

/// Default constant `c` in the near-optimal packing density target.
pub const DEFAULT_DENSITY_CONSTANT: f64 = 1.0;

/// `C(n, k)` in 128-bit arithmetic, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advance `idx` (a strictly increasing selection from `0..n`) to the next
/// combination in lexicographic order. Returns `false` after the last one.
pub fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let t = idx.len();
    if t == 0 {
        return false;
    }
    let mut i = t;
    while i > 0 {
        i -= 1;
        if idx[i] < n - t + i {
            idx[i] += 1;
            for j in i + 1..t {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Colexicographic rank of a strictly increasing subset.
fn colex_rank(elements: &[usize]) -> u128 {
    elements
        .iter()
        .enumerate()
        .map(|(i, &e)| binomial(e as u64, i as u64 + 1))
        .sum()
}

/// A block: strictly increasing 0-based variable indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Block(Vec<usize>);

impl Block {
    /// Builds a block from arbitrary-order indices, sorting them. Repeated
    /// indices are kept so that validation can report them.
    pub fn new(mut elements: Vec<usize>) -> Self {
        elements.sort_unstable();
        Block(elements)
    }

    pub fn elements(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.0.binary_search(&x).is_ok()
    }

    fn check(&self, index: usize, k: usize, n: usize) -> Result<()> {
        if self.0.len() != k {
            return Err(Error::validation(format!(
                "block {index} has {} elements, expected k = {k}",
                self.0.len()
            )));
        }
        if let Some(&e) = self.0.iter().find(|&&e| e >= n) {
            return Err(Error::validation(format!(
                "block {index} contains {e}, outside [0, {n})"
            )));
        }
        if self.0.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(format!(
                "block {index} is not strictly increasing (unsorted or repeated element): {:?}",
                self.0
            )));
        }
        Ok(())
    }
}

impl From<&[usize]> for Block {
    fn from(v: &[usize]) -> Self {
        Block::new(v.to_vec())
    }
}

/// A `t`-subset found in two blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub subset: Vec<usize>,
    pub first_block: usize,
    pub second_block: usize,
}

/// Checks the defining property of `S_p(t, k, n)`.
///
/// Returns `Ok(None)` when every `t`-subset lies in at most one block, and the
/// first offending subset (in block order) otherwise. Malformed blocks are a
/// validation error naming the block index.
pub fn verify_system(blocks: &[Block], t: usize, k: usize, n: usize) -> Result<Option<Violation>> {
    check_parameters(n, k, t)?;
    for (i, b) in blocks.iter().enumerate() {
        b.check(i, k, n)?;
    }
    let mut owner: HashMap<u128, usize> = HashMap::new();
    let mut pos: Vec<usize> = (0..t).collect();
    let mut subset = vec![0usize; t];
    for (bi, b) in blocks.iter().enumerate() {
        pos.iter_mut().enumerate().for_each(|(i, p)| *p = i);
        loop {
            for (s, &p) in subset.iter_mut().zip(&pos) {
                *s = b.0[p];
            }
            if let Some(&first) = owner.get(&colex_rank(&subset)) {
                return Ok(Some(Violation {
                    subset: subset.clone(),
                    first_block: first,
                    second_block: bi,
                }));
            }
            owner.insert(colex_rank(&subset), bi);
            if !next_combination(&mut pos, k) {
                break;
            }
        }
    }
    Ok(None)
}

fn check_parameters(n: usize, k: usize, t: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("ground set size n must be positive"));
    }
    if k < 2 {
        return Err(Error::domain(format!("block size k = {k} must be at least 2")));
    }
    if t == 0 || t >= k {
        return Err(Error::domain(format!("need 1 <= t < k, got t = {t}, k = {k}")));
    }
    Ok(())
}

/// Which construction produced a system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Greedy,
    Bose,
    Skolem,
    Given,
}

/// A verified partial Steiner system with blocks in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSteinerSystem {
    n: usize,
    k: usize,
    t: usize,
    blocks: Vec<Block>,
}

impl PartialSteinerSystem {
    /// Verifies and canonicalises (sorts) the given blocks.
    pub fn new(n: usize, k: usize, t: usize, mut blocks: Vec<Block>) -> Result<Self> {
        blocks.sort();
        if let Some(v) = verify_system(&blocks, t, k, n)? {
            return Err(Error::validation(format!(
                "{t}-subset {:?} lies in blocks {:?} and {:?}",
                v.subset, blocks[v.first_block].0, blocks[v.second_block].0
            )));
        }
        Ok(PartialSteinerSystem { n, k, t, blocks })
    }

    /// The empty system on `n` points.
    pub fn empty(n: usize, k: usize) -> Result<Self> {
        Self::new(n, k, k - 1, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Plain-text form: `n k t` then one block per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n, self.k, self.t);
        for b in &self.blocks {
            let line: Vec<String> = b.0.iter().map(|e| e.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    /// Parses the plain-text form. Extra trailing lines are left to the caller
    /// via [`parse_system_lines`].
    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let (system, used) = parse_system_lines(&lines)?;
        if used != lines.len() {
            return Err(Error::validation(format!(
                "unexpected trailing content at line {}",
                used + 1
            )));
        }
        Ok(system)
    }
}

/// Parses a system from non-empty lines, consuming blocks while lines have
/// exactly `k` non-negative integers. Returns the system and lines consumed.
pub fn parse_system_lines(lines: &[&str]) -> Result<(PartialSteinerSystem, usize)> {
    let header = lines
        .first()
        .ok_or_else(|| Error::validation("empty system file"))?;
    let nums = parse_usizes(header, 1)?;
    let [n, k, t] = nums[..] else {
        return Err(Error::validation("header must be `n k t`"));
    };
    let mut blocks = Vec::new();
    let mut used = 1;
    for (i, line) in lines.iter().enumerate().skip(1) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        // a sign line starts with +1 / -1
        if fields.iter().any(|f| f.starts_with('+') || f.starts_with('-')) {
            break;
        }
        let elems = parse_usizes(line, i + 1)?;
        if elems.len() != k {
            return Err(Error::validation(format!(
                "line {}: block has {} elements, expected {k}",
                i + 1,
                elems.len()
            )));
        }
        blocks.push(Block::new(elems));
        used += 1;
    }
    Ok((PartialSteinerSystem::new(n, k, t, blocks)?, used))
}

fn parse_usizes(line: &str, lineno: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|f| {
            f.parse::<usize>()
                .map_err(|_| Error::validation(format!("line {lineno}: cannot parse '{f}'")))
        })
        .collect()
}

/// Seeded bijection of `[0, len)` built from a balanced Feistel network with
/// cycle walking. Lets the greedy packing visit every candidate in random
/// order without materialising the permutation.
struct ImplicitPermutation {
    len: u128,
    half_bits: u32,
    keys: [u64; 4],
}

impl ImplicitPermutation {
    fn new(len: u128, seed: u64) -> Self {
        let bits = (128 - (len.max(2) - 1).leading_zeros()).max(2);
        let half_bits = bits.div_ceil(2);
        let keys = std::array::from_fn(|i| seed::derive_seed(seed, &[0x0FE1_57E1, i as u64]));
        ImplicitPermutation {
            len,
            half_bits,
            keys,
        }
    }

    fn round(&self, x: u128) -> u128 {
        let mask = (1u128 << self.half_bits) - 1;
        let (mut l, mut r) = (x >> self.half_bits, x & mask);
        for key in self.keys {
            let f = (seed::splitmix64(key ^ r as u64) as u128) & mask;
            (l, r) = (r, l ^ f);
        }
        (l << self.half_bits) | r
    }

    fn apply(&self, i: u128) -> u128 {
        let mut x = self.round(i);
        while x >= self.len {
            x = self.round(x);
        }
        x
    }
}

/// Lexicographic unranking of `k`-subsets of `{0, …, n−1}`.
fn unrank_lex(mut rank: u128, n: usize, k: usize, out: &mut Vec<usize>) {
    out.clear();
    let mut x = 0usize;
    for i in 0..k {
        loop {
            let count = binomial((n - 1 - x) as u64, (k - 1 - i) as u64);
            if rank < count {
                out.push(x);
                x += 1;
                break;
            }
            rank -= count;
            x += 1;
        }
    }
}

/// Set of used `(k−1)`-subsets keyed by colex rank.
enum UsedSet {
    Bits(Vec<u64>),
    Hash(HashSet<u128>),
}

impl UsedSet {
    fn new(capacity: u128) -> Self {
        if capacity <= 1 << 30 {
            UsedSet::Bits(vec![0; (capacity as usize).div_ceil(64).max(1)])
        } else {
            UsedSet::Hash(HashSet::new())
        }
    }

    fn contains(&self, key: u128) -> bool {
        match self {
            UsedSet::Bits(b) => b[(key / 64) as usize] >> (key % 64) & 1 == 1,
            UsedSet::Hash(h) => h.contains(&key),
        }
    }

    fn insert(&mut self, key: u128) {
        match self {
            UsedSet::Bits(b) => b[(key / 64) as usize] |= 1 << (key % 64),
            UsedSet::Hash(h) => {
                h.insert(key);
            }
        }
    }
}

struct GreedyPacker {
    used: UsedSet,
    blocks: Vec<Block>,
    facet: Vec<usize>,
}

impl GreedyPacker {
    fn facet_keys<'a>(&'a mut self, cand: &'a [usize]) -> impl Iterator<Item = u128> + 'a {
        (0..cand.len()).map(move |skip| {
            self.facet.clear();
            self.facet
                .extend(cand.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &e)| e));
            colex_rank(&self.facet)
        })
    }

    /// Accepts `cand` iff none of its `(k−1)`-subsets is used yet.
    fn offer(&mut self, cand: &[usize]) -> bool {
        let keys: Vec<u128> = self.facet_keys(cand).collect();
        if keys.iter().any(|&key| self.used.contains(key)) {
            return false;
        }
        keys.into_iter().for_each(|key| self.used.insert(key));
        self.blocks.push(Block(cand.to_vec()));
        true
    }
}

/// Random greedy packing with `t = k − 1`.
///
/// Candidates are visited in a seeded random order; a candidate is accepted
/// iff all its `(k−1)`-subsets are still unused. The result is maximal and
/// depends only on `(n, k, seed)`.
pub fn greedy_construct(n: usize, k: usize, seed: u64) -> Result<PartialSteinerSystem> {
    if k < 2 {
        return Err(Error::domain(format!("block size k = {k} must be at least 2")));
    }
    if k > n {
        return Err(Error::domain(format!("block size k = {k} exceeds n = {n}")));
    }
    let total = binomial(n as u64, k as u64);
    let mut packer = GreedyPacker {
        used: UsedSet::new(binomial(n as u64, k as u64 - 1)),
        blocks: Vec::new(),
        facet: Vec::with_capacity(k),
    };
    let mut cand = Vec::with_capacity(k);
    if total <= FULL_ENUMERATION_LIMIT {
        let perm = ImplicitPermutation::new(total, seed);
        for i in 0..total {
            unrank_lex(perm.apply(i), n, k, &mut cand);
            packer.offer(&cand);
        }
    } else {
        // Streaming phase: random draws until rejections dominate, then a
        // lexicographic completion pass to restore maximality.
        let mut rng = seed::rng(seed);
        let patience = 64 * n as u64;
        let mut misses = 0u64;
        while misses < patience {
            cand.clear();
            cand.extend(index::sample(&mut rng, n, k));
            cand.sort_unstable();
            if packer.offer(&cand) {
                misses = 0;
            } else {
                misses += 1;
            }
        }
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            packer.offer(&idx);
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    }
    PartialSteinerSystem::new(n, k, k - 1, packer.blocks)
}

/// Bose construction of a Steiner triple system on `n ≡ 3 (mod 6)` points.
///
/// Points are `(x, i)` with `x ∈ Z_v`, `v = n/3`, `i ∈ Z_3`, mapped to
/// `x + i·v`; the quasigroup is `x ∘ y = (x + y)/2 mod v`.
pub fn bose_construct(n: usize) -> Result<PartialSteinerSystem> {
    if n < 3 || n % 6 != 3 {
        return Err(Error::domain(format!(
            "Bose construction needs n = 3 (mod 6), got n = {n}; use skolem_construct for n = 1 (mod 6) or greedy_construct otherwise"
        )));
    }
    let v = n / 3;
    let half = v.div_ceil(2); // inverse of 2 modulo odd v
    let op = |x: usize, y: usize| (x + y) * half % v;
    let pt = |x: usize, i: usize| x + (i % 3) * v;
    let mut blocks = Vec::with_capacity(n * (n - 1) / 6);
    for x in 0..v {
        blocks.push(Block::new(vec![pt(x, 0), pt(x, 1), pt(x, 2)]));
    }
    for i in 0..3 {
        for x in 0..v {
            for y in x + 1..v {
                blocks.push(Block::new(vec![pt(x, i), pt(y, i), pt(op(x, y), i + 1)]));
            }
        }
    }
    PartialSteinerSystem::new(n, 3, 2, blocks)
}

/// Skolem construction of a Steiner triple system on `n ≡ 1 (mod 6)` points.
///
/// With `n = 6m + 1`, points are `(x, i)` for `x ∈ Z_{2m}`, `i ∈ Z_3`, mapped
/// to `x + i·2m`, plus `∞ = n − 1`. The half-idempotent commutative
/// quasigroup is `x ∘ y = σ((x + y) mod 2m)` with `σ(2j) = j`,
/// `σ(2j + 1) = m + j`.
pub fn skolem_construct(n: usize) -> Result<PartialSteinerSystem> {
    if n < 7 || n % 6 != 1 {
        return Err(Error::domain(format!(
            "Skolem construction needs n = 1 (mod 6) with n >= 7, got n = {n}"
        )));
    }
    let m = (n - 1) / 6;
    let order = 2 * m;
    let infinity = n - 1;
    let sigma = |s: usize| if s.is_multiple_of(2) { s / 2 } else { m + s / 2 };
    let op = |x: usize, y: usize| sigma((x + y) % order);
    let pt = |x: usize, i: usize| x + (i % 3) * order;
    let mut blocks = Vec::with_capacity(n * (n - 1) / 6);
    for x in 0..m {
        blocks.push(Block::new(vec![pt(x, 0), pt(x, 1), pt(x, 2)]));
        for i in 0..3 {
            blocks.push(Block::new(vec![infinity, pt(x + m, i), pt(x, i + 1)]));
        }
    }
    for i in 0..3 {
        for x in 0..order {
            for y in x + 1..order {
                blocks.push(Block::new(vec![pt(x, i), pt(y, i), pt(op(x, y), i + 1)]));
            }
        }
    }
    PartialSteinerSystem::new(n, 3, 2, blocks)
}

/// Exact triple system when one exists for `n`, otherwise `None`.
pub fn exact_triple_system(n: usize) -> Option<PartialSteinerSystem> {
    match n % 6 {
        3 => bose_construct(n).ok(),
        1 if n >= 7 => skolem_construct(n).ok(),
        _ => None,
    }
}

/// How full a system is relative to the counting ceiling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub cardinality: usize,
    /// `⌊C(n,t)/C(k,t)⌋`.
    pub ceiling: u128,
    /// Near-optimal packing size for the density constant used; reference only.
    pub psi_target: f64,
    pub fill_ratio: f64,
}

/// `ψ(k, n)`: the size of near-optimal `S_p(k−1, k, n)` packings for a given
/// constant `c`, clamped at zero for small `n`.
pub fn psi_target(k: usize, n: usize, c: f64) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    let full = binomial(n as u64, k as u64 - 1) as f64 / kf;
    let defect = if k == 3 {
        c * nf.ln().powf(1.5) / nf.powf(1.0 / (kf - 1.0))
    } else {
        c / nf.powf(1.0 / (kf - 1.0))
    };
    (full * (1.0 - defect)).max(0.0)
}

pub fn density_report(system: &PartialSteinerSystem, c: f64) -> DensityReport {
    let (n, k, t) = (system.n as u64, system.k as u64, system.t as u64);
    let ceiling = binomial(n, t) / binomial(k, t);
    let fill_ratio = if ceiling == 0 {
        1.0
    } else {
        system.len() as f64 / ceiling as f64
    };
    DensityReport {
        cardinality: system.len(),
        ceiling,
        psi_target: psi_target(system.k, system.n, c),
        fill_ratio,
    }
}
