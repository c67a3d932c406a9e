//! Sparse covariant tensors keyed by multi-index.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::exprs::Expr;
use crate::scalar::{Rational, Scalar};

pub type Index = Vec<u16>;

/// Values a [`SparseTensor`] can hold.
pub trait Entry: Clone + PartialEq + std::fmt::Debug {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
}

impl Entry for Expr {
    fn zero() -> Self {
        Expr::zero()
    }
    fn is_zero(&self) -> bool {
        Expr::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
}

impl Entry for Rational {
    fn zero() -> Self {
        <Rational as Zero>::zero()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
}

impl Entry for Scalar {
    fn zero() -> Self {
        Scalar::zero()
    }
    fn is_zero(&self) -> bool {
        Scalar::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
}

/// Covariant tensor of fixed rank on a `dim`-dimensional space; absent
/// entries are zero and zero values are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseTensor<T> {
    dim: usize,
    rank: usize,
    entries: BTreeMap<Index, T>,
}

impl<T: Entry> SparseTensor<T> {
    pub fn new(dim: usize, rank: usize) -> Self {
        SparseTensor {
            dim,
            rank,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: &[u16]) -> Option<&T> {
        self.entries.get(index)
    }

    pub fn value(&self, index: &[u16]) -> T {
        self.entries.get(index).cloned().unwrap_or_else(T::zero)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Index, &T)> {
        self.entries.iter()
    }

    /// Entries whose index starts with `prefix`.
    pub fn entries_with_prefix<'a>(
        &'a self,
        prefix: &'a [u16],
    ) -> impl Iterator<Item = (&'a Index, &'a T)> + 'a {
        self.entries
            .range(prefix.to_vec()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
    }

    fn check(&self, index: &[u16]) {
        debug_assert_eq!(index.len(), self.rank, "index rank mismatch");
        debug_assert!(
            index.iter().all(|&i| (i as usize) < self.dim),
            "index out of range"
        );
    }

    pub fn set(&mut self, index: Index, value: T) {
        self.check(&index);
        if value.is_zero() {
            self.entries.remove(&index);
        } else {
            self.entries.insert(index, value);
        }
    }

    pub fn accumulate(&mut self, index: Index, value: &T) {
        self.check(&index);
        if value.is_zero() {
            return;
        }
        match self.entries.entry(index) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(value.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().add(value);
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn map<U: Entry>(&self, mut f: impl FnMut(&T) -> U) -> SparseTensor<U> {
        let mut out = SparseTensor::new(self.dim, self.rank);
        for (k, v) in &self.entries {
            out.set(k.clone(), f(v));
        }
        out
    }

    /// Entries whose index lies in `0..sub_dim` in every slot.
    pub fn restrict(&self, sub_dim: usize) -> SparseTensor<T> {
        let mut out = SparseTensor::new(sub_dim, self.rank);
        for (k, v) in &self.entries {
            if k.iter().all(|&i| (i as usize) < sub_dim) {
                out.set(k.clone(), v.clone());
            }
        }
        out
    }

    /// First index (in sorted order over the union of supports) where the
    /// two tensors differ.
    pub fn first_difference(&self, other: &SparseTensor<T>) -> Option<(Index, T, T)> {
        let mut keys: Vec<&Index> = self.entries.keys().chain(other.entries.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter().find_map(|k| {
            let a = self.value(k);
            let b = other.value(k);
            (a != b).then(|| (k.clone(), a, b))
        })
    }

    /// Inserts the four entries a curvature-type tensor carries for one
    /// ξ-sequence `(ξ1, ξ2, rest...)`: (X,ξ1,ξ2,X;rest) = v, with the sign
    /// changes from the antisymmetry in each outer pair.
    pub fn insert_curvature_pattern(&mut self, x: u16, seq: &[u16], value: &T) {
        assert!(seq.len() >= 2 && seq.len() + 2 == self.rank);
        let (a, b, rest) = (seq[0], seq[1], &seq[2..]);
        let neg = value.neg();
        let mk = |head: [u16; 4]| -> Index {
            let mut idx = head.to_vec();
            idx.extend_from_slice(rest);
            idx
        };
        self.accumulate(mk([x, a, b, x]), value);
        self.accumulate(mk([a, x, b, x]), &neg);
        self.accumulate(mk([x, a, x, b]), &neg);
        self.accumulate(mk([a, x, x, b]), value);
    }
}

/// Every distinct ordering of `word`, in lexicographic order.
pub fn unique_permutations(word: &[u16]) -> Vec<Vec<u16>> {
    let mut cur = word.to_vec();
    cur.sort_unstable();
    let mut out = vec![cur.clone()];
    loop {
        // next lexicographic permutation
        let n = cur.len();
        if n < 2 {
            return out;
        }
        let mut i = n - 1;
        while i > 0 && cur[i - 1] >= cur[i] {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        let mut j = n - 1;
        while cur[j] <= cur[i - 1] {
            j -= 1;
        }
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Evaluates a tensor on the given vectors (dense coordinate columns).
pub fn evaluate_multilinear(t: &SparseTensor<Scalar>, vectors: &[&[Scalar]]) -> Scalar {
    assert_eq!(vectors.len(), t.rank());
    let mut acc = Scalar::zero();
    for (idx, v) in t.entries() {
        let mut term = v.clone();
        for (slot, &i) in idx.iter().enumerate() {
            let c = &vectors[slot][i as usize];
            if c.is_zero() {
                term = Scalar::zero();
                break;
            }
            term = &term * c;
        }
        if !term.is_zero() {
            acc = &acc + &term;
        }
    }
    acc
}
