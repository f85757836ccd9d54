//! Closed-form gauge maps on tensor spaces.
//!
//! All maps are generic over [`Scalar`] so that they can be evaluated in
//! exact rational arithmetic. Inputs are checked for the slot symmetries of
//! their declared domain; the check is exact for rationals and relative
//! `1e-10` for floats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::GenericTensor;
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GaugeMapId {
    R,
    Rtilde,
    S,
    Psi1,
    Psi2,
    Psi3,
    Psi4,
    B1,
    B2,
    Xi1,
    Xi2,
    Xi3,
    Xi4,
    Xi5,
}

impl GaugeMapId {
    pub const ALL: [GaugeMapId; 14] = [
        Self::R,
        Self::Rtilde,
        Self::S,
        Self::Psi1,
        Self::Psi2,
        Self::Psi3,
        Self::Psi4,
        Self::B1,
        Self::B2,
        Self::Xi1,
        Self::Xi2,
        Self::Xi3,
        Self::Xi4,
        Self::Xi5,
    ];
}

#[inline]
fn kd<S: Scalar>(a: usize, b: usize) -> S {
    if a == b {
        S::one()
    } else {
        S::zero()
    }
}

fn scale_of<S: Scalar>(t: &GenericTensor<S>) -> f64 {
    t.entries().iter().fold(1.0f64, |m, x| m.max(x.to_f64().abs()))
}

/// Largest entry of `t − t_(σ)`.
pub fn symmetry_defect<S: Scalar>(t: &GenericTensor<S>, slots: &[usize]) -> f64 {
    let p = t.permuted(slots);
    t.entries().iter().zip(p.entries()).fold(0.0f64, |m, (a, b)| m.max((a.clone() - b.clone()).to_f64().abs()))
}

/// Largest entry of `t + t_(σ)`.
pub fn antisymmetry_defect<S: Scalar>(t: &GenericTensor<S>, slots: &[usize]) -> f64 {
    let p = t.permuted(slots);
    t.entries().iter().zip(p.entries()).fold(0.0f64, |m, (a, b)| m.max((a.clone() + b.clone()).to_f64().abs()))
}

fn require_rank<S: Scalar>(t: &GenericTensor<S>, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::RankMismatch { expected: rank, got: t.rank() });
    }
    Ok(())
}

fn require_sym<S: Scalar>(t: &GenericTensor<S>, slots: &[usize], what: &str) -> Result<()> {
    let d = symmetry_defect(t, slots);
    if d > tol::EXACT * scale_of(t) {
        return Err(Error::Symmetry(format!("{what}: defect {d:e}")));
    }
    Ok(())
}

fn require_skew<S: Scalar>(t: &GenericTensor<S>, slots: &[usize], what: &str) -> Result<()> {
    let d = antisymmetry_defect(t, slots);
    if d > tol::EXACT * scale_of(t) {
        return Err(Error::Symmetry(format!("{what}: defect {d:e}")));
    }
    Ok(())
}

fn require_s2_s2<S: Scalar>(a: &GenericTensor<S>) -> Result<()> {
    require_rank(a, 4)?;
    require_sym(a, &[2, 1, 3, 4], "symmetric in (12)")?;
    require_sym(a, &[1, 2, 4, 3], "symmetric in (34)")
}

fn require_s2_rm<S: Scalar>(a: &GenericTensor<S>) -> Result<()> {
    require_rank(a, 3)?;
    require_sym(a, &[2, 1, 3], "symmetric in (12)")
}

fn require_trace_free<S: Scalar>(b: &GenericTensor<S>) -> Result<()> {
    let t = b.trace(1, 2)?.value().to_f64().abs();
    if t > tol::EXACT * scale_of(b) {
        return Err(Error::Symmetry(format!("trace {t:e} should vanish")));
    }
    Ok(())
}

/// Largest violation of the algebraic curvature symmetries and the first
/// Bianchi identity.
pub fn curvature_defect<S: Scalar>(r: &GenericTensor<S>) -> f64 {
    let cyc = &(&r.clone() + &r.permuted(&[2, 3, 1, 4])) + &r.permuted(&[3, 1, 2, 4]);
    let bianchi = cyc.entries().iter().fold(0.0f64, |m, x| m.max(x.to_f64().abs()));
    antisymmetry_defect(r, &[2, 1, 3, 4])
        .max(antisymmetry_defect(r, &[1, 2, 4, 3]))
        .max(symmetry_defect(r, &[3, 4, 1, 2]))
        .max(bianchi)
}

/// Curvature defect plus the size of the Ricci-type contraction.
pub fn weyl_defect<S: Scalar>(w: &GenericTensor<S>) -> f64 {
    let ric = w.trace(1, 4).expect("rank 4");
    let tr = ric.entries().iter().fold(0.0f64, |m, x| m.max(x.to_f64().abs()));
    curvature_defect(w).max(tr)
}

/// `s(R) = ½[R_(1342) + R_(1432)]`.
pub fn map_s<S: Scalar>(r: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_rank(r, 4)?;
    let d = curvature_defect(r);
    if d > tol::EXACT * scale_of(r) {
        return Err(Error::Symmetry(format!("not a curvature tensor: defect {d:e}")));
    }
    Ok(s_unchecked(r))
}

pub(crate) fn s_unchecked<S: Scalar>(r: &GenericTensor<S>) -> GenericTensor<S> {
    let half = S::ratio(1, 2);
    GenericTensor::from_fn(r.dim(), 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        (r.get(&[i, k, l, j]).clone() + r.get(&[i, l, k, j]).clone()) * half.clone()
    })
}

/// Curvature at the origin of `δ + A_ijkl x_k x_l`.
pub fn map_r<S: Scalar>(a: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_s2_s2(a)?;
    Ok(r_unchecked(a))
}

pub(crate) fn r_unchecked<S: Scalar>(a: &GenericTensor<S>) -> GenericTensor<S> {
    GenericTensor::from_fn(a.dim(), 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        a.get(&[j, l, i, k]).clone() - a.get(&[j, k, i, l]).clone() - a.get(&[i, l, j, k]).clone()
            + a.get(&[i, k, j, l]).clone()
    })
}

/// `−(1/6)[R(A)_(1342) + R(A)_(1432)]`.
pub fn map_rtilde<S: Scalar>(a: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_s2_s2(a)?;
    Ok(rtilde_unchecked(a))
}

pub(crate) fn rtilde_unchecked<S: Scalar>(a: &GenericTensor<S>) -> GenericTensor<S> {
    s_unchecked(&r_unchecked(a)).scale(S::ratio(-1, 3))
}

/// `−2[B_(312) + B_(321)]` on S²⊗R^m.
pub fn psi1<S: Scalar>(b: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_s2_rm(b)?;
    Ok(psi1_unchecked(b))
}

pub(crate) fn psi1_unchecked<S: Scalar>(b: &GenericTensor<S>) -> GenericTensor<S> {
    let two = S::from_i64(-2);
    GenericTensor::from_fn(b.dim(), 3, |x| {
        let (a, c, k) = (x[0], x[1], x[2]);
        (b.get(&[k, a, c]).clone() + b.get(&[k, c, a]).clone()) * two.clone()
    })
}

/// Inverse of Ψ₁: `B_ijl = −¼(A_jli + A_ilj − A_ijl)`.
pub fn psi1_inverse<S: Scalar>(a: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_s2_rm(a)?;
    let q = S::ratio(-1, 4);
    Ok(GenericTensor::from_fn(a.dim(), 3, |x| {
        let (i, j, l) = (x[0], x[1], x[2]);
        (a.get(&[j, l, i]).clone() + a.get(&[i, l, j]).clone() - a.get(&[i, j, l]).clone()) * q.clone()
    }))
}

/// `−3[B_(1234) + B_(2134)]` on R^m⊗S³.
pub fn psi2<S: Scalar>(b: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_rank(b, 4)?;
    require_sym(b, &[1, 3, 2, 4], "symmetric in (23)")?;
    require_sym(b, &[1, 2, 4, 3], "symmetric in (34)")?;
    Ok(psi2_unchecked(b))
}

pub(crate) fn psi2_unchecked<S: Scalar>(b: &GenericTensor<S>) -> GenericTensor<S> {
    (&b.clone() + &b.permuted(&[2, 1, 3, 4])).scale(S::from_i64(-3))
}

/// `−(m−2)[δ_(13)B_(2) + δ_(23)B_(1)]`.
pub fn psi3<S: Scalar>(v: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_rank(v, 1)?;
    let c = S::from_i64(2 - v.dim() as i64);
    Ok(GenericTensor::from_fn(v.dim(), 3, |x| {
        let (i, j, k) = (x[0], x[1], x[2]);
        (kd::<S>(i, k) * v.get(&[j]).clone() + kd::<S>(j, k) * v.get(&[i]).clone()) * c.clone()
    }))
}

/// Order −m coefficient change produced by `x + B x/|x|^m`.
pub fn psi4<S: Scalar>(b: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_rank(b, 2)?;
    let half_m = S::ratio(b.dim() as i64, 2);
    Ok(GenericTensor::from_fn(b.dim(), 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let g = |p: usize, q: usize| b.get(&[p, q]).clone();
        (g(i, j) + g(j, i)) * kd(k, l)
            - half_m.clone()
                * (g(i, k) * kd(j, l) + g(i, l) * kd(j, k) + g(j, k) * kd(i, l) + g(j, l) * kd(i, k))
    }))
}

/// Linearised Bianchi operator on the order −(m−1) coefficient.
pub fn bianchi1<S: Scalar>(a: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_s2_rm(a)?;
    Ok(bianchi1_unchecked(a))
}

pub(crate) fn bianchi1_unchecked<S: Scalar>(a: &GenericTensor<S>) -> GenericTensor<S> {
    let m = a.dim();
    let tail: Vec<S> = (0..m).map(|k| (0..m).fold(S::zero(), |s, t| s + a.get(&[k, t, t]).clone())).collect();
    let head: Vec<S> = (0..m).map(|k| (0..m).fold(S::zero(), |s, t| s + a.get(&[t, t, k]).clone())).collect();
    let mm = S::from_i64(m as i64);
    let half_m = S::ratio(m as i64, 2);
    GenericTensor::from_fn(m, 3, |x| {
        let (i, j, k) = (x[0], x[1], x[2]);
        S::from_i64(2) * tail[k].clone() * kd(i, j)
            - mm.clone() * (a.get(&[k, i, j]).clone() + a.get(&[k, j, i]).clone())
            - head[k].clone() * kd(i, j)
            + half_m.clone() * (head[j].clone() * kd(i, k) + head[i].clone() * kd(j, k))
    })
}

/// Linearised Bianchi operator on the order −m coefficient; lands in R^m⊗S³.
pub fn bianchi2<S: Scalar>(a: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_s2_s2(a)?;
    Ok(bianchi2_unchecked(a))
}

pub(crate) fn bianchi2_unchecked<S: Scalar>(a: &GenericTensor<S>) -> GenericTensor<S> {
    let m = a.dim();
    let mut cross = vec![S::zero(); m * m];
    let mut pair = vec![S::zero(); m * m];
    for p in 0..m {
        for q in 0..m {
            for t in 0..m {
                cross[p * m + q] = cross[p * m + q].clone() + a.get(&[t, p, t, q]).clone();
                pair[p * m + q] = pair[p * m + q].clone() + a.get(&[t, t, p, q]).clone();
            }
        }
    }
    let mp2 = S::from_i64(m as i64 + 2);
    let raw = GenericTensor::from_fn(m, 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        S::from_i64(4) * cross[i * m + l].clone() * kd(j, k)
            - S::from_i64(2) * mp2.clone() * a.get(&[k, i, j, l]).clone()
            - S::from_i64(2) * pair[i * m + l].clone() * kd(j, k)
            + mp2.clone() * pair[j * m + l].clone() * kd(i, k)
    });
    raw.symmetrize(&[2, 3, 4]).expect("rank 4")
}

fn xi_pairing<S: Scalar>(b: &GenericTensor<S>) -> GenericTensor<S> {
    GenericTensor::from_fn(b.dim(), 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let g = |p: usize, q: usize| b.get(&[p, q]).clone();
        g(j, k) * kd(i, l) + g(i, k) * kd(j, l) + g(j, l) * kd(i, k) + g(i, l) * kd(j, k)
    })
}

fn delta_b<S: Scalar>(b: &GenericTensor<S>) -> GenericTensor<S> {
    GenericTensor::<S>::delta(b.dim()).outer(b).expect("rank 4")
}

fn b_delta<S: Scalar>(b: &GenericTensor<S>) -> GenericTensor<S> {
    b.outer(&GenericTensor::<S>::delta(b.dim())).expect("rank 4")
}

/// Argument of the Ξ family.
#[derive(Clone, Debug)]
pub enum XiArg<S> {
    Matrix(GenericTensor<S>),
    Scalar { dim: usize, value: S },
}

/// `Ξ_k`; `k = 1, 2, 5` take a trace-free symmetric matrix, `k = 3` a skew
/// one and `k = 4` a scalar.
pub fn xi<S: Scalar>(k: usize, arg: &XiArg<S>) -> Result<GenericTensor<S>> {
    match (k, arg) {
        (4, XiArg::Scalar { dim, value }) => Ok(xi4(*dim, value.clone())),
        (1 | 2 | 5, XiArg::Matrix(b)) => {
            require_rank(b, 2)?;
            require_sym(b, &[2, 1], "symmetric")?;
            require_trace_free(b)?;
            Ok(match k {
                1 => xi1_unchecked(b),
                2 => xi2_unchecked(b),
                _ => xi5_unchecked(b),
            })
        }
        (3, XiArg::Matrix(b)) => {
            require_rank(b, 2)?;
            require_skew(b, &[2, 1], "skew")?;
            Ok(xi_pairing(b))
        }
        (1..=5, _) => Err(Error::Symmetry(format!("wrong argument class for Xi{k}"))),
        _ => Err(Error::BadIndex(format!("Xi index {k}"))),
    }
}

pub(crate) fn xi1_unchecked<S: Scalar>(b: &GenericTensor<S>) -> GenericTensor<S> {
    delta_b(b)
}

pub(crate) fn xi2_unchecked<S: Scalar>(b: &GenericTensor<S>) -> GenericTensor<S> {
    let c = S::ratio(-4, b.dim() as i64);
    &xi_pairing(b) + &(&b_delta(b) + &delta_b(b)).scale(c)
}

pub(crate) fn xi3_unchecked<S: Scalar>(b: &GenericTensor<S>) -> GenericTensor<S> {
    xi_pairing(b)
}

pub fn xi4<S: Scalar>(dim: usize, c: S) -> GenericTensor<S> {
    let two_over_m = S::ratio(2, dim as i64);
    GenericTensor::from_fn(dim, 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        c.clone() * (kd::<S>(i, k) * kd(j, l) + kd::<S>(i, l) * kd(j, k) - two_over_m.clone() * kd(i, j) * kd(k, l))
    })
}

pub(crate) fn xi5_unchecked<S: Scalar>(b: &GenericTensor<S>) -> GenericTensor<S> {
    &xi_pairing(b) + &b_delta(b).scale(S::ratio(-4, b.dim() as i64))
}

/// The R^m⊗S³ part of the curvature split of `A`.
pub fn split_b<S: Scalar>(a: &GenericTensor<S>) -> Result<GenericTensor<S>> {
    require_s2_s2(a)?;
    Ok(split_b_unchecked(a))
}

pub(crate) fn split_b_unchecked<S: Scalar>(a: &GenericTensor<S>) -> GenericTensor<S> {
    let two = S::from_i64(2);
    GenericTensor::from_fn(a.dim(), 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let g = |p: usize, q: usize, r: usize, s: usize| a.get(&[p, q, r, s]).clone();
        two.clone() * (g(i, j, k, l) + g(i, k, j, l) + g(i, l, j, k)) - g(k, l, i, j) - g(j, k, i, l) - g(j, l, i, k)
    })
    .scale(S::ratio(-1, 18))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use num::BigRational;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Q = BigRational;
    type QT = GenericTensor<Q>;

    fn rand_t(m: usize, k: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(m, k, |_| rng.gen_range(-1.0..1.0))
    }

    fn rand_q(m: usize, k: usize, seed: u64) -> QT {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QT::from_fn(m, k, |_| Q::ratio(rng.gen_range(-9..10), rng.gen_range(1..5)))
    }

    fn sym_pair(a: QT) -> QT {
        a.symmetrize(&[1, 2]).unwrap().symmetrize(&[3, 4]).unwrap()
    }

    #[test]
    fn zero_inputs_map_to_zero() {
        let z4 = Tensor::zeros(4, 4);
        assert!(map_r(&z4).unwrap().is_zero());
        assert!(map_rtilde(&z4).unwrap().is_zero());
        assert!(map_s(&z4).unwrap().is_zero());
        assert!(psi1(&Tensor::zeros(4, 3)).unwrap().is_zero());
        assert!(psi2(&z4).unwrap().is_zero());
        assert!(psi3(&Tensor::zeros(4, 1)).unwrap().is_zero());
        assert!(psi4(&Tensor::zeros(4, 2)).unwrap().is_zero());
        assert!(bianchi1(&Tensor::zeros(4, 3)).unwrap().is_zero());
        assert!(bianchi2(&z4).unwrap().is_zero());
        for k in [1, 2, 3, 5] {
            assert!(xi(k, &XiArg::Matrix(Tensor::zeros(4, 2))).unwrap().is_zero());
        }
        assert!(xi(4, &XiArg::Scalar { dim: 4, value: 0.0 }).unwrap().is_zero());
    }

    #[test]
    fn psi1_inverse_is_two_sided_exact() {
        for m in [3, 5] {
            let a = rand_q(m, 3, 7).symmetrize(&[1, 2]).unwrap();
            let b = psi1_inverse(&a).unwrap();
            assert_eq!(psi1(&b).unwrap(), a);
            assert_eq!(psi1_inverse(&psi1(&b).unwrap()).unwrap(), b);
        }
    }

    #[test]
    fn map_r_is_curvature_exactly() {
        let a = sym_pair(rand_q(4, 4, 1));
        let r = map_r(&a).unwrap();
        assert_eq!(curvature_defect(&r), 0.0);
        assert_eq!(r, -&r.permuted(&[2, 1, 3, 4]));
    }

    #[test]
    fn rtilde_plus_psi2_split_is_identity_exact() {
        for m in [3, 4, 5] {
            let a = sym_pair(rand_q(m, 4, m as u64));
            let sum = &map_rtilde(&a).unwrap() + &psi2(&split_b(&a).unwrap()).unwrap();
            assert_eq!(sum, a);
        }
    }

    #[test]
    fn split_b_lands_in_rm_s3() {
        let a = sym_pair(rand_q(4, 4, 7));
        let b = split_b(&a).unwrap();
        assert_eq!(b, b.symmetrize(&[2, 3, 4]).unwrap());
    }

    #[test]
    fn psi3_kernel_of_b1_exact() {
        for m in 3..=6 {
            let v = rand_q(m, 1, m as u64);
            assert!(bianchi1(&psi3(&v).unwrap()).unwrap().is_zero());
        }
    }

    #[test]
    fn psi3_entries_m4() {
        let e1 = Tensor::vector(vec![1.0, 0.0, 0.0, 0.0]);
        let p = psi3(&e1).unwrap();
        // −2[δ_ik δ_j0 + δ_jk δ_i0]
        assert_eq!(*p.get(&[1, 0, 1]), -2.0);
        assert_eq!(*p.get(&[0, 0, 0]), -4.0);
        assert_eq!(*p.get(&[1, 1, 0]), 0.0);
    }

    #[test]
    fn b1_on_y1_exact() {
        for m in 3..=6 {
            let v = rand_q(m, 1, 11 + m as u64);
            let y1 = QT::delta(m).outer(&v).unwrap();
            let mm = m as i64;
            let want = QT::from_fn(m, 3, |x| {
                let (i, j, k) = (x[0], x[1], x[2]);
                let b = |p: usize| v.get(&[p]).clone();
                (Q::ratio(mm, 2) * (b(j) * kd::<Q>(i, k) + b(i) * kd::<Q>(j, k)) - b(k) * kd::<Q>(i, j)) * Q::from_i64(mm - 2)
            });
            assert_eq!(bianchi1(&y1).unwrap(), want);
        }
    }

    #[test]
    fn psi4_of_delta() {
        let m = 5;
        let want = xi4(m, -(m as f64));
        assert!(psi4(&Tensor::delta(m)).unwrap().dist(&want) < 1e-12);
    }

    #[test]
    fn psi4_on_skew_is_xi3() {
        let b = rand_q(4, 2, 3);
        let skew = (&b - &b.permuted(&[2, 1])).scale(Q::ratio(1, 2));
        let lhs = psi4(&skew).unwrap();
        assert_eq!(lhs, xi3_unchecked(&skew).scale(Q::ratio(-4, 2)));
    }

    #[test]
    fn xi5_is_xi2_plus_xi1() {
        let m = 5;
        let b = rand_q(m, 2, 9).symmetrize(&[1, 2]).unwrap();
        let tr = b.trace(1, 2).unwrap().value();
        let b0 = &b - &QT::delta(m).scale(tr / Q::from_i64(m as i64));
        let arg = XiArg::Matrix(b0);
        let lhs = xi(5, &arg).unwrap();
        let rhs = &xi(2, &arg).unwrap() + &xi(1, &arg).unwrap().scale(Q::ratio(4, m as i64));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn xi2_trace_constant() {
        let m = 4;
        let b = rand_q(m, 2, 2).symmetrize(&[1, 2]).unwrap();
        let tr = b.trace(1, 2).unwrap().value();
        let b0 = &b - &QT::delta(m).scale(tr / Q::from_i64(m as i64));
        let t = xi2_unchecked(&b0).trace(2, 3).unwrap();
        assert_eq!(t, b0.scale(Q::ratio(m as i64 * m as i64 + 2 * m as i64 - 8, m as i64)));
    }

    #[test]
    fn xi_rejects_wrong_class() {
        let sym = Tensor::delta(3);
        assert!(xi(3, &XiArg::Matrix(sym.clone())).is_err());
        assert!(xi(1, &XiArg::Matrix(sym)).is_err());
        assert!(xi(4, &XiArg::Matrix(Tensor::zeros(3, 2))).is_err());
        assert!(xi(6, &XiArg::Matrix(Tensor::zeros(3, 2))).is_err());
    }

    #[test]
    fn symmetry_preconditions() {
        let a = rand_t(3, 4, 5);
        assert!(matches!(map_r(&a), Err(Error::Symmetry(_))));
        assert!(matches!(psi1(&rand_t(3, 3, 1)), Err(Error::Symmetry(_))));
        assert!(matches!(map_s(&a), Err(Error::Symmetry(_))));
    }
}
