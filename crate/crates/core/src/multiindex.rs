//! Multi-index combinatorics.
//!
//! A multi-index `i = (i_1, ..., i_d)` of non-negative integers addresses
//! both monomials `x^i = x_1^{i_1} ... x_d^{i_d}` and mixed derivatives
//! `D^i = d^{|i|} / dx_1^{i_1} ... dx_d^{i_d}`, with `|i| = i_1 + ... + i_d`
//! the total degree/order. The basis recurrence manipulates factorials
//! `i! = i_1! ... i_d!` and binomials `C(i, l) = i! / (l! (i-l)!)` of
//! multi-indices; these are kept in exact integer arithmetic (`u128`) and
//! only converted to floating point at the point of use.
//!
//! Two enumeration orders of `{ |i| <= p }` matter:
//!
//! * [`Order::GradedLex`], the canonical storage order for polynomial
//!   coefficients: increasing degree, and within a degree decreasing
//!   lexicographic, so `1, x1, x2, x1^2, x1 x2, x2^2, ...`;
//! * [`Order::AlgorithmDiagonal`], the order in which the quasi-Trefftz
//!   recurrence fills coefficients: increasing degree `r`, and within a
//!   degree increasing first entry, i.e. walking each diagonal
//!   `{ |i| = r }` from `(0, ..., r)` towards `(r, ..., 0)`.
//!
//! The count of multi-indices with `|i| <= p` in `d` variables is
//! `S(d, p) = C(p + d, d)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Multi-index of fixed dimension with non-negative entries.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct MultiIndex {
    entries: Vec<u32>,
}

impl MultiIndex {
    /// A multi-index from its entries. Dimension must be at least 1.
    pub fn new(entries: impl Into<Vec<u32>>) -> Self {
        let entries = entries.into();
        assert!(!entries.is_empty(), "multi-index dimension must be >= 1");
        Self { entries }
    }

    /// The zero multi-index of dimension `d`.
    pub fn zero(d: usize) -> Self {
        Self::new(vec![0; d])
    }

    /// The unit multi-index `e_axis` (0-based axis) of dimension `d`.
    pub fn unit(d: usize, axis: usize) -> Self {
        assert!(axis < d);
        let mut entries = vec![0; d];
        entries[axis] = 1;
        Self::new(entries)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn entry(&self, axis: usize) -> u32 {
        self.entries[axis]
    }

    /// Total degree `|i|`.
    pub fn total(&self) -> u32 {
        self.entries.iter().sum()
    }

    /// Exact factorial `i! = i_1! ... i_d!`.
    pub fn factorial(&self) -> u128 {
        self.entries.iter().map(|&e| factorial(e)).product()
    }

    /// Entry-wise partial order `self <= rhs`.
    pub fn leq(&self, rhs: &Self) -> bool {
        assert_eq!(self.dim(), rhs.dim());
        self.entries.iter().zip(&rhs.entries).all(|(a, b)| a <= b)
    }

    /// Entry-wise sum.
    pub fn plus(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim(), rhs.dim());
        Self::new(
            self.entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a + b)
                .collect::<Vec<_>>(),
        )
    }

    /// `self + e_axis`.
    pub fn plus_unit(&self, axis: usize) -> Self {
        let mut entries = self.entries.clone();
        entries[axis] += 1;
        Self::new(entries)
    }

    /// `self + n * e_axis`.
    pub fn plus_units(&self, axis: usize, n: u32) -> Self {
        let mut entries = self.entries.clone();
        entries[axis] += n;
        Self::new(entries)
    }

    /// Entry-wise difference, `None` unless `rhs <= self`.
    pub fn checked_sub(&self, rhs: &Self) -> Option<Self> {
        if !rhs.leq(self) {
            return None;
        }
        Some(Self::new(
            self.entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        ))
    }

    /// All multi-indices `l <= self` in graded order. Small helper for
    /// Leibniz-type sums; the iteration space is a box of side `i_q + 1`.
    pub fn sub_indices(&self) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex::zero(self.dim())];
        for axis in 0..self.dim() {
            let mut next = Vec::new();
            for base in &out {
                for e in 0..=self.entries[axis] {
                    let mut entries = base.entries.clone();
                    entries[axis] = e;
                    next.push(MultiIndex::new(entries));
                }
            }
            out = next;
        }
        out.sort_by_key(|k| (k.total(), k.entries.clone()));
        out
    }
}

/// Exact scalar factorial.
pub fn factorial(n: u32) -> u128 {
    (1..=n as u128).product()
}

/// Exact scalar binomial `C(n, k)`, 0 when `k > n`.
pub fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

/// Exact multi-index binomial `C(i, l)`, defined when `l <= i`.
///
/// Panics if `l` is not entry-wise below `i`; callers sum over `l <= i` only.
pub fn multi_binomial(i: &MultiIndex, l: &MultiIndex) -> u128 {
    assert!(l.leq(i), "multi-binomial requires l <= i");
    i.entries()
        .iter()
        .zip(l.entries())
        .map(|(&a, &b)| binomial(a, b))
        .product()
}

/// `a! / b!` as the exact entry-wise product `prod_q a_q! / b_q!`.
///
/// Panics if `b` is not entry-wise below `a`.
pub fn factorial_ratio(a: &MultiIndex, b: &MultiIndex) -> u128 {
    assert!(b.leq(a), "factorial ratio requires b <= a");
    a.entries()
        .iter()
        .zip(b.entries())
        .map(|(&x, &y)| factorial(x) / factorial(y))
        .product()
}

/// Number of multi-indices in `d` variables with total degree at most `p`:
/// the dimension of the full polynomial space `P^p_d`.
pub fn count_up_to(d: usize, p: u32) -> usize {
    binomial(p + d as u32, d as u32) as usize
}

/// Enumeration order for [`enumerate_up_to`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Order {
    /// Increasing degree, decreasing lexicographic within a degree.
    GradedLex,
    /// Increasing degree, increasing first entry within a degree; ties on
    /// the remaining entries broken like `GradedLex`. This is the order the
    /// quasi-Trefftz recurrence fills coefficients in.
    AlgorithmDiagonal,
}

/// All multi-indices of dimension `d` with `|i| <= p`, in the given order.
pub fn enumerate_up_to(d: usize, p: u32, order: Order) -> Vec<MultiIndex> {
    assert!(d >= 1);
    let mut all = Vec::with_capacity(count_up_to(d, p));
    let mut current = vec![0u32; d];
    gather(&mut all, &mut current, 0, p);
    match order {
        Order::GradedLex => {
            all.sort_by(|a, b| {
                (a.total(), b.entries()).cmp(&(b.total(), a.entries()))
            });
        }
        Order::AlgorithmDiagonal => {
            all.sort_by(|a, b| {
                (a.total(), a.entry(0), b.entries())
                    .cmp(&(b.total(), b.entry(0), a.entries()))
            });
        }
    }
    all
}

fn gather(out: &mut Vec<MultiIndex>, current: &mut Vec<u32>, axis: usize, left: u32) {
    if axis == current.len() {
        out.push(MultiIndex::new(current.clone()));
        return;
    }
    for e in 0..=left {
        current[axis] = e;
        gather(out, current, axis + 1, left - e);
    }
    current[axis] = 0;
}

/// A canonically ordered index set `{ |i| <= p }` with rank lookup. Ranks
/// are the storage positions of polynomial coefficients.
#[derive(Debug)]
pub struct IndexSet {
    pub dim: usize,
    pub degree: u32,
    indices: Vec<MultiIndex>,
    rank: HashMap<MultiIndex, usize>,
}

impl IndexSet {
    pub fn new(d: usize, p: u32) -> Self {
        let indices = enumerate_up_to(d, p, Order::GradedLex);
        let rank = indices
            .iter()
            .enumerate()
            .map(|(r, k)| (k.clone(), r))
            .collect();
        Self { dim: d, degree: p, indices, rank }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index(&self, rank: usize) -> &MultiIndex {
        &self.indices[rank]
    }

    /// Rank of `k` in canonical order, `None` when `|k| > p`.
    pub fn rank(&self, k: &MultiIndex) -> Option<usize> {
        self.rank.get(k).copied()
    }
}

/// Shared, cached index sets: the same `(d, p)` set is used by every element
/// of a mesh, so build it once.
pub fn index_set(d: usize, p: u32) -> Arc<IndexSet> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u32), Arc<IndexSet>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry((d, p))
        .or_insert_with(|| Arc::new(IndexSet::new(d, p)))
        .clone()
}
