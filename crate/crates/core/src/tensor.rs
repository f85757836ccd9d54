//! Dense tensors over R^m of rank at most four.
//!
//! Slots are numbered from 1 in every public operation that takes slot
//! labels (`permute`, `symmetrize`, `trace`). Entry access through
//! [`GenericTensor::get`] uses 0-based coordinate indices.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_RANK: usize = 4;

/// A bijection of `{1..k}`. `perm[a-1] = σ(a)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexPermutation {
    perm: Vec<usize>,
}

impl IndexPermutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let k = perm.len();
        let mut seen = vec![false; k];
        for &p in &perm {
            if p == 0 || p > k || seen[p - 1] {
                return Err(Error::BadIndex(format!("{perm:?} is not a permutation of 1..{k}")));
            }
            seen[p - 1] = true;
        }
        Ok(Self { perm })
    }

    pub fn identity(k: usize) -> Self {
        Self { perm: (1..=k).collect() }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    /// `self ∘ other`, i.e. `a ↦ self(other(a))`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::RankMismatch { expected: self.len(), got: other.len() });
        }
        Ok(Self { perm: other.perm.iter().map(|&a| self.perm[a - 1]).collect() })
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (a, &p) in self.perm.iter().enumerate() {
            inv[p - 1] = a + 1;
        }
        Self { perm: inv }
    }

    /// All permutations of `{1..k}` in lexicographic order.
    pub fn all(k: usize) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (1..=k).collect();
        permutations_rec(&mut cur, 0, &mut out);
        out.sort_by(|a, b| a.perm.cmp(&b.perm));
        out
    }
}

fn permutations_rec(cur: &mut Vec<usize>, start: usize, out: &mut Vec<IndexPermutation>) {
    if start == cur.len() {
        out.push(IndexPermutation { perm: cur.clone() });
        return;
    }
    for i in start..cur.len() {
        cur.swap(start, i);
        permutations_rec(cur, start + 1, out);
        cur.swap(start, i);
    }
}

#[derive(Deserialize)]
struct RawTensor<S> {
    dim: usize,
    rank: usize,
    entries: Vec<S>,
}

/// Dense row-major tensor with `dim^rank` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor<S>")]
#[serde(bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct GenericTensor<S> {
    dim: usize,
    rank: usize,
    entries: Vec<S>,
}

impl<S: Scalar> TryFrom<RawTensor<S>> for GenericTensor<S> {
    type Error = Error;
    fn try_from(raw: RawTensor<S>) -> Result<Self> {
        Self::from_entries(raw.dim, raw.rank, raw.entries)
    }
}

/// Decompose a flat offset into a multi-index.
#[inline]
pub(crate) fn unflatten(mut flat: usize, dim: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
}

#[inline]
pub(crate) fn flatten(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

impl<S: Scalar> GenericTensor<S> {
    pub fn zeros(dim: usize, rank: usize) -> Self {
        assert!(rank <= MAX_RANK, "rank {rank} > {MAX_RANK}");
        Self { dim, rank, entries: vec![S::zero(); dim.pow(rank as u32)] }
    }

    pub fn from_entries(dim: usize, rank: usize, entries: Vec<S>) -> Result<Self> {
        if rank > MAX_RANK {
            return Err(Error::Invalid(format!("rank {rank} exceeds {MAX_RANK}")));
        }
        if dim == 0 {
            return Err(Error::Invalid("dimension must be positive".into()));
        }
        let want = dim.pow(rank as u32);
        if entries.len() != want {
            return Err(Error::Invalid(format!("{} entries, expected {want}", entries.len())));
        }
        if !entries.iter().all(Scalar::is_finite) {
            return Err(Error::Invalid("non-finite entry".into()));
        }
        Ok(Self { dim, rank, entries })
    }

    /// Build from a closure of the 0-based multi-index.
    pub fn from_fn(dim: usize, rank: usize, mut f: impl FnMut(&[usize]) -> S) -> Self {
        assert!(rank <= MAX_RANK, "rank {rank} > {MAX_RANK}");
        let n = dim.pow(rank as u32);
        let mut idx = [0usize; MAX_RANK];
        let entries = (0..n)
            .map(|flat| {
                unflatten(flat, dim, &mut idx[..rank]);
                f(&idx[..rank])
            })
            .collect();
        Self { dim, rank, entries }
    }

    pub fn delta(dim: usize) -> Self {
        Self::from_fn(dim, 2, |i| if i[0] == i[1] { S::one() } else { S::zero() })
    }

    pub fn vector(values: Vec<S>) -> Self {
        let dim = values.len();
        Self { dim, rank: 1, entries: values }
    }

    pub fn scalar(dim: usize, value: S) -> Self {
        Self { dim, rank: 0, entries: vec![value] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn entries(&self) -> &[S] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<S> {
        self.entries
    }

    pub fn get(&self, idx: &[usize]) -> &S {
        debug_assert_eq!(idx.len(), self.rank);
        &self.entries[flatten(idx, self.dim)]
    }

    pub fn set(&mut self, idx: &[usize], v: S) {
        let f = flatten(idx, self.dim);
        self.entries[f] = v;
    }

    /// Value of a rank-0 tensor.
    pub fn value(&self) -> S {
        self.entries[0].clone()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(Scalar::is_finite)
    }

    /// `out[i_1..i_k] = self[i_{σ(1)}..i_{σ(k)}]`.
    pub fn permute(&self, sigma: &IndexPermutation) -> Result<Self> {
        if sigma.len() != self.rank {
            return Err(Error::RankMismatch { expected: self.rank, got: sigma.len() });
        }
        let p = sigma.as_slice();
        let mut src = [0usize; MAX_RANK];
        Ok(Self::from_fn(self.dim, self.rank, |i| {
            for a in 0..p.len() {
                src[a] = i[p[a] - 1];
            }
            self.get(&src[..p.len()]).clone()
        }))
    }

    /// Bracket shorthand: `t.permuted(&[2, 4, 1, 3])` is `[T_(2413)]`.
    ///
    /// Panics on an invalid slot list; meant for literal permutations.
    pub fn permuted(&self, slots: &[usize]) -> Self {
        let sigma = IndexPermutation::new(slots.to_vec()).expect("literal permutation");
        self.permute(&sigma).expect("literal permutation rank")
    }

    /// Average over all permutations of the listed (1-based) slots.
    pub fn symmetrize(&self, slots: &[usize]) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::BadIndex("empty slot set".into()));
        }
        let mut sorted = slots.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != slots.len() || sorted.iter().any(|&s| s == 0 || s > self.rank) {
            return Err(Error::BadIndex(format!("{slots:?} for rank {}", self.rank)));
        }
        let group = IndexPermutation::all(sorted.len());
        let mut acc = Self::zeros(self.dim, self.rank);
        for g in &group {
            let mut full: Vec<usize> = (1..=self.rank).collect();
            for (a, &s) in sorted.iter().enumerate() {
                full[s - 1] = sorted[g.as_slice()[a] - 1];
            }
            acc = &acc + &self.permuted(&full);
        }
        Ok(acc.scale(S::ratio(1, group.len() as i64)))
    }

    /// Contract slots `i` and `j` (1-based); rank drops by two.
    pub fn trace(&self, i: usize, j: usize) -> Result<Self> {
        if self.rank < 2 {
            return Err(Error::BadIndex(format!("trace of rank {} tensor", self.rank)));
        }
        if i == j || i == 0 || j == 0 || i > self.rank || j > self.rank {
            return Err(Error::BadIndex(format!("trace slots ({i},{j}) for rank {}", self.rank)));
        }
        let (a, b) = (i.min(j) - 1, i.max(j) - 1);
        let k = self.rank;
        let mut full = [0usize; MAX_RANK];
        Ok(Self::from_fn(self.dim, k - 2, |rest| {
            let mut r = 0;
            for s in 0..k {
                if s != a && s != b {
                    full[s] = rest[r];
                    r += 1;
                }
            }
            let mut sum = S::zero();
            for t in 0..self.dim {
                full[a] = t;
                full[b] = t;
                sum = sum + self.get(&full[..k]).clone();
            }
            sum
        }))
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: other.dim });
        }
        if self.rank != other.rank {
            return Err(Error::RankMismatch { expected: self.rank, got: other.rank });
        }
        Ok(())
    }

    /// Frobenius pairing.
    pub fn inner(&self, other: &Self) -> Result<S> {
        self.check_same_shape(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone()))
    }

    pub fn scale(&self, c: S) -> Self {
        self.map(|x| x.clone() * c.clone())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a.clone() + b.clone()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a.clone() - b.clone()))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&S, &S) -> S) -> Self {
        Self {
            dim: self.dim,
            rank: self.rank,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> GenericTensor<T> {
        GenericTensor { dim: self.dim, rank: self.rank, entries: self.entries.iter().map(f).collect() }
    }

    /// Tensor product; ranks must sum to at most four.
    pub fn outer(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: other.dim });
        }
        let rank = self.rank + other.rank;
        if rank > MAX_RANK {
            return Err(Error::Invalid(format!("outer product rank {rank}")));
        }
        let mut entries = Vec::with_capacity(self.entries.len() * other.entries.len());
        for a in &self.entries {
            for b in &other.entries {
                entries.push(a.clone() * b.clone());
            }
        }
        Ok(Self { dim: self.dim, rank, entries })
    }

    pub fn to_f64(&self) -> Tensor {
        self.map(|x| x.to_f64())
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|x| x.is_zero())
    }
}

impl<S: Scalar> Add for &GenericTensor<S> {
    type Output = GenericTensor<S>;
    fn add(self, rhs: Self) -> GenericTensor<S> {
        GenericTensor::add(self, rhs).expect("tensor shape mismatch in +")
    }
}

impl<S: Scalar> Sub for &GenericTensor<S> {
    type Output = GenericTensor<S>;
    fn sub(self, rhs: Self) -> GenericTensor<S> {
        GenericTensor::sub(self, rhs).expect("tensor shape mismatch in -")
    }
}

impl<S: Scalar> Neg for &GenericTensor<S> {
    type Output = GenericTensor<S>;
    fn neg(self) -> GenericTensor<S> {
        self.map(|x| -x.clone())
    }
}

impl<S: Scalar> Mul<S> for &GenericTensor<S> {
    type Output = GenericTensor<S>;
    fn mul(self, rhs: S) -> GenericTensor<S> {
        self.scale(rhs)
    }
}

pub type Tensor = GenericTensor<f64>;

impl Tensor {
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `‖self − other‖_F`; shapes must agree.
    pub fn dist(&self, other: &Self) -> f64 {
        (self - other).norm()
    }

    pub fn from_column(dim: usize, rank: usize, col: &[f64]) -> Self {
        Self::from_entries(dim, rank, col.to_vec()).expect("column length")
    }

    /// `out_{i..} = Q_{ia} Q_{jb} .. T_{ab..}`.
    pub fn rotate(&self, q: &DMatrix<f64>) -> Self {
        let m = self.dim;
        assert_eq!(q.nrows(), m);
        let mut cur = self.entries.clone();
        let mut idx = [0usize; MAX_RANK];
        let mut src = [0usize; MAX_RANK];
        for slot in 0..self.rank {
            let mut next = vec![0.0; cur.len()];
            for (flat, out) in next.iter_mut().enumerate() {
                unflatten(flat, m, &mut idx[..self.rank]);
                src[..self.rank].copy_from_slice(&idx[..self.rank]);
                let mut s = 0.0;
                for a in 0..m {
                    src[slot] = a;
                    s += q[(idx[slot], a)] * cur[flatten(&src[..self.rank], m)];
                }
                *out = s;
            }
            cur = next;
        }
        Self { dim: m, rank: self.rank, entries: cur }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tensor serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Invalid(e.to_string()))
    }

    /// Rank-2 tensor as a matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank, 2);
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn from_matrix(a: &DMatrix<f64>) -> Self {
        let m = a.nrows();
        Self::from_fn(m, 2, |i| a[(i[0], i[1])])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::BigRational;

    fn sample(m: usize, k: usize) -> Tensor {
        Tensor::from_fn(m, k, |i| i.iter().enumerate().map(|(a, &x)| ((a + 2) * (x + 1)) as f64).product::<f64>().sin())
    }

    #[test]
    fn identity_permutation() {
        let t = sample(3, 3);
        assert_eq!(t.permute(&IndexPermutation::identity(3)).unwrap(), t);
    }

    #[test]
    fn transposition_is_involution() {
        let t = sample(4, 4);
        assert_eq!(t.permuted(&[2, 1, 3, 4]).permuted(&[2, 1, 3, 4]), t);
    }

    #[test]
    fn composition_law() {
        let t = sample(3, 4);
        let s = IndexPermutation::new(vec![2, 1, 3, 4]).unwrap();
        let u = IndexPermutation::new(vec![1, 2, 4, 3]).unwrap();
        let lhs = t.permute(&s.compose(&u).unwrap()).unwrap();
        assert_eq!(lhs, t.permute(&u).unwrap().permute(&s).unwrap());
    }

    #[test]
    fn bracket_reads_the_right_entry() {
        let t = sample(3, 4);
        let p = t.permuted(&[2, 4, 1, 3]);
        assert_eq!(p.get(&[0, 1, 2, 0]), t.get(&[1, 0, 0, 2]));
    }

    #[test]
    fn bad_permutation() {
        assert!(IndexPermutation::new(vec![1, 1, 2]).is_err());
        let t = sample(3, 2);
        assert!(matches!(t.permute(&IndexPermutation::identity(3)), Err(Error::RankMismatch { .. })));
    }

    #[test]
    fn symmetrize_basis_element() {
        let e = |k| Tensor::vector((0..3).map(|i| if i == k { 1.0 } else { 0.0 }).collect());
        let t = e(0).outer(&e(1)).unwrap().outer(&e(2)).unwrap();
        let s = t.symmetrize(&[1, 2]).unwrap();
        assert_eq!(*s.get(&[0, 1, 2]), 0.5);
        assert_eq!(*s.get(&[1, 0, 2]), 0.5);
        assert_eq!(*s.get(&[2, 1, 0]), 0.0);
    }

    #[test]
    fn symmetrize_delta_delta_exact() {
        type Q = BigRational;
        let d = GenericTensor::<Q>::delta(4);
        let dd = d.outer(&d).unwrap();
        let got = dd.symmetrize(&[2, 3, 4]).unwrap();
        // by hand: the three pairings of {1,2,3,4} with weight 1/3 each
        let want = GenericTensor::<Q>::from_fn(4, 4, |i| {
            let p = |a: usize, b: usize, c: usize, d: usize| if i[a] == i[b] && i[c] == i[d] { Q::from_i64(1) } else { Q::from_i64(0) };
            (p(0, 1, 2, 3) + p(0, 2, 1, 3) + p(0, 3, 1, 2)) * Q::ratio(1, 3)
        });
        assert_eq!(got, want);
    }

    #[test]
    fn symmetrize_errors() {
        let t = sample(3, 2);
        assert!(t.symmetrize(&[]).is_err());
        assert!(t.symmetrize(&[1, 3]).is_err());
    }

    #[test]
    fn trace_of_delta_times_vector() {
        let m = 5;
        let b = Tensor::vector(vec![1.0, -2.0, 0.5, 3.0, 4.0]);
        let t = Tensor::delta(m).outer(&b).unwrap();
        assert!(t.trace(1, 2).unwrap().dist(&b.scale(m as f64)) < 1e-14);
        assert!(t.trace(1, 3).unwrap().dist(&b) < 1e-14);
    }

    #[test]
    fn trace_errors_and_zero() {
        let t = Tensor::zeros(3, 3);
        assert!(t.trace(1, 1).is_err());
        assert!(t.trace(1, 4).is_err());
        assert!(t.trace(2, 3).unwrap().is_zero());
    }

    #[test]
    fn delta_inner_and_entries() {
        let d = Tensor::delta(4);
        assert_eq!(d.inner(&d).unwrap(), 4.0);
        assert_eq!(*d.get(&[0, 0]), 1.0);
        assert_eq!(*d.get(&[0, 1]), 0.0);
        let t = sample(3, 3);
        assert!((&t + &t.scale(-1.0)).is_zero());
        assert!(t.inner(&Tensor::zeros(3, 2)).is_err());
    }

    #[test]
    fn json_round_trip_is_byte_exact() {
        let t = sample(4, 3).scale(1.0 / 3.0);
        let s = t.to_json();
        let back = Tensor::from_json(&s).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json(), s);
        assert!(Tensor::from_json(r#"{"dim":3,"rank":2,"entries":[1.0]}"#).is_err());
    }

    #[test]
    fn rotation_by_identity() {
        let t = sample(3, 4);
        let q = DMatrix::identity(3, 3);
        assert!(t.rotate(&q).dist(&t) < 1e-15);
    }
}
