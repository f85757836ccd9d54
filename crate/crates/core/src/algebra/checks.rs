//! The algebra verification suite run by `verify-algebra` and the acceptance
//! target: ranks, kernel/image equalities and closed-form identities.

use num::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::decompose::{project_full, split_curvature};
use super::maps::{self, XiArg};
use super::spaces::{Algebra, SpaceId};
use crate::linalg::{exact_rank, Subspace};
use crate::scalar::Scalar;
use crate::tensor::{GenericTensor, Tensor};
use crate::tol;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub m: usize,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    pub(crate) fn le(name: &str, m: usize, measured: f64, threshold: f64, detail: String) -> Self {
        Self { name: name.into(), m, passed: measured <= threshold, measured, threshold, detail }
    }

    pub(crate) fn eq(name: &str, m: usize, got: usize, want: usize, detail: String) -> Self {
        Self { name: name.into(), m, passed: got == want, measured: got as f64, threshold: want as f64, detail }
    }
}

type Q = BigRational;
type QT = GenericTensor<Q>;

fn q_unit(m: usize, k: usize) -> QT {
    QT::vector((0..m).map(|i| if i == k { Q::from_i64(1) } else { Q::from_i64(0) }).collect())
}

fn q_sym2(m: usize) -> Vec<QT> {
    let mut out = Vec::new();
    for i in 0..m {
        for j in i..m {
            let a = q_unit(m, i).outer(&q_unit(m, j)).unwrap();
            out.push(&a + &a.permuted(&[2, 1]));
        }
    }
    out
}

fn q_sym2_0(m: usize) -> Vec<QT> {
    let mut out = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let a = q_unit(m, i).outer(&q_unit(m, j)).unwrap();
            out.push(&a + &a.permuted(&[2, 1]));
        }
    }
    for i in 0..m - 1 {
        let a = q_unit(m, i).outer(&q_unit(m, i)).unwrap();
        let b = q_unit(m, i + 1).outer(&q_unit(m, i + 1)).unwrap();
        out.push(&a - &b);
    }
    out
}

fn q_rows(images: &[QT]) -> Vec<Vec<Q>> {
    // rank of the column matrix equals rank of its transpose
    images.iter().map(|t| t.entries().to_vec()).collect()
}

/// Exact rank of Ψ₁ on S²⊗R^m.
pub fn psi1_exact_rank(m: usize) -> usize {
    let mut imgs = Vec::new();
    for s in q_sym2(m) {
        for k in 0..m {
            imgs.push(maps::psi1_unchecked(&s.outer(&q_unit(m, k)).unwrap()));
        }
    }
    exact_rank(q_rows(&imgs))
}

/// Exact dimension of H₂,₂ ∩ ker B₂: kernel of (T12, T13, B2) on S²⊗S²₀.
pub fn harmonic_bianchi_kernel_exact_dim(m: usize) -> usize {
    let mut rows_per_basis = Vec::new();
    for s in q_sym2(m) {
        for t in q_sym2_0(m) {
            let a = s.outer(&t).unwrap();
            let mut v = a.trace(1, 2).unwrap().into_entries();
            v.extend(a.trace(1, 3).unwrap().into_entries());
            v.extend(maps::bianchi2_unchecked(&a).into_entries());
            rows_per_basis.push(v);
        }
    }
    let n = rows_per_basis.len();
    n - exact_rank(rows_per_basis)
}

fn rand_in(alg: &Algebra, id: SpaceId, rng: &mut ChaCha8Rng) -> Tensor {
    let sp = alg.space(id);
    sp.basis().iter().fold(Tensor::zeros(alg.m(), sp.rank()), |acc, b| &acc + &b.scale(rng.gen_range(-1.0..1.0)))
}

fn sub_of(alg: &Algebra, ids: &[SpaceId]) -> Subspace {
    ids.iter().skip(1).fold(alg.space(ids[0]).subspace().clone(), |acc, &id| acc.sum(alg.space(id).subspace()))
}

/// Compare two subspaces: containments both ways and dimensions.
fn same_space(name: &str, m: usize, got: &Subspace, want: &Subspace) -> Check {
    let gap = got.containment_gap(want).max(want.containment_gap(got));
    let ok = got.dim() == want.dim() && gap <= 1e-8;
    Check {
        name: name.into(),
        m,
        passed: ok,
        measured: got.dim() as f64,
        threshold: want.dim() as f64,
        detail: format!("dim {} vs {}, containment gap {gap:.2e}", got.dim(), want.dim()),
    }
}

/// Run every algebra check at dimension `m`.
pub fn verify_algebra(m: usize, seed: u64, trials: usize) -> Vec<Check> {
    let alg = Algebra::new(m).expect("m in range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (m as u64) << 32);
    let mut out = Vec::new();

    let want = m * m * (m + 1) / 2;
    out.push(Check::eq("psi1_rank", m, psi1_exact_rank(m), want, format!("exact rank, want {want}")));

    for id in SpaceId::ALL {
        let d = alg.space(id).dim();
        out.push(Check::eq(&format!("dim_{}", id.name()), m, d, id.expected_dim(m), String::new()));
    }

    // curvature split: C̃ ⊕ Ψ₂(R^m⊗S³) = S²⊗S²
    let ct = alg.space(SpaceId::Ctilde).subspace().clone();
    let im2 = alg.image(SpaceId::RmS3, maps::psi2_unchecked);
    let total = ct.sum(&im2).dim();
    let s2s2 = alg.space(SpaceId::S2S2).dim();
    out.push(Check {
        name: "psi2_direct_sum".into(),
        m,
        passed: ct.dim() + im2.dim() == s2s2 && total == s2s2,
        measured: total as f64,
        threshold: s2s2 as f64,
        detail: format!("dim Ctilde {} + dim Im psi2 {} ; dim sum {total}", ct.dim(), im2.dim()),
    });
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let a = rand_in(&alg, SpaceId::S2S2, &mut rng);
        let (c, b) = split_curvature(&a).expect("S2xS2 input");
        worst = worst.max((&c + &maps::psi2_unchecked(&b)).dist(&a));
        worst = worst.max(alg.space(SpaceId::Ctilde).distance(&c));
    }
    out.push(Check::le("psi2_round_trip", m, worst, tol::EXACT, String::new()));

    // first Bianchi on C̃
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let a = rand_in(&alg, SpaceId::Ctilde, &mut rng);
        worst = worst.max((&(&a + &a.permuted(&[1, 3, 4, 2])) + &a.permuted(&[1, 4, 2, 3])).max_abs());
    }
    out.push(Check::le("ctilde_first_bianchi", m, worst, tol::EXACT, String::new()));

    let ker_b1 = alg.kernel(SpaceId::S2Rm, maps::bianchi1_unchecked);
    out.push(same_space("ker_b1_eq_im_psi3", m, &ker_b1, alg.space(SpaceId::Y2).subspace()));

    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let a = rand_in(&alg, SpaceId::S2S2_0, &mut rng);
        let d = project_full(&a).expect("S2xS2_0 input");
        worst = worst.max(d.sum().dist(&a));
        let ids = [SpaceId::Z1, SpaceId::Z2, SpaceId::Z3, SpaceId::Z4, SpaceId::H22];
        for (p, id) in d.parts().iter().zip(ids) {
            worst = worst.max(alg.space(id).distance(p));
        }
    }
    out.push(Check::le("five_way_split_round_trip", m, worst, tol::EXACT, String::new()));

    let z14 = sub_of(&alg, &[SpaceId::Z1, SpaceId::Z2, SpaceId::Z3, SpaceId::Z4]);
    let ker_z = z14.restrict_coords(&map_on(&z14, m, maps::bianchi2_unchecked));
    out.push(same_space("bianchi2_kernel_on_z1_z4_eq_z3_z5", m, &ker_z, &sub_of(&alg, &[SpaceId::Z3, SpaceId::Z5])));

    let ker_s = alg.kernel(SpaceId::S2S2_0, maps::bianchi2_unchecked);
    let want = sub_of(&alg, &[SpaceId::Z3, SpaceId::Z5, SpaceId::Wtilde]);
    out.push(same_space("bianchi2_kernel_eq_z3_z5_wtilde", m, &ker_s, &want));

    let h22 = alg.space(SpaceId::H22).subspace();
    let ker_h = h22.restrict_coords(&map_on(h22, m, maps::bianchi2_unchecked));
    out.push(same_space("harmonic_ker_bianchi2_eq_weyl_image", m, &ker_h, alg.space(SpaceId::Wtilde).subspace()));

    let (mut e1, mut e2, mut e3): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mf = m as f64;
    let d = Tensor::delta(m);
    for _ in 0..trials {
        let b = rand_in(&alg, SpaceId::S2_0, &mut rng);
        let k = rand_in(&alg, SpaceId::Lambda2, &mut rng);
        let bd = b.outer(&d).unwrap();
        let db = d.outer(&b).unwrap();
        let lhs = maps::bianchi2_unchecked(&maps::xi(1, &XiArg::Matrix(b.clone())).unwrap());
        let rhs = (&bd.scale(4.0 - 2.0 * mf) + &db.scale(mf * mf - 4.0)).symmetrize(&[2, 3, 4]).unwrap();
        e1 = e1.max(lhs.dist(&rhs));
        let lhs = maps::bianchi2_unchecked(&maps::xi(2, &XiArg::Matrix(b.clone())).unwrap());
        let rhs = (&bd.scale(8.0 * (mf - 2.0) / mf) + &db.scale(4.0 * (4.0 - mf * mf) / mf)).symmetrize(&[2, 3, 4]).unwrap();
        e2 = e2.max(lhs.dist(&rhs));
        e3 = e3.max(maps::bianchi2_unchecked(&maps::xi(3, &XiArg::Matrix(k)).unwrap()).max_abs());
    }
    let dd = d.outer(&d).unwrap().symmetrize(&[2, 3, 4]).unwrap();
    let lhs = maps::bianchi2_unchecked(&maps::xi4(m, 1.0));
    let e4 = lhs.dist(&dd.scale(8.0 / mf - 4.0));
    out.push(Check::le("bianchi2_xi1_identity", m, e1, tol::EXACT, String::new()));
    out.push(Check::le("bianchi2_xi2_identity", m, e2, tol::EXACT, String::new()));
    out.push(Check::le("bianchi2_xi3_vanishes", m, e3, tol::EXACT, String::new()));
    out.push(Check::le("bianchi2_xi4_identity", m, e4, tol::EXACT, format!("|B2(Xi4(1))| = {:.3e}", lhs.norm())));

    if m == 4 {
        let exact = harmonic_bianchi_kernel_exact_dim(m);
        out.push(Check::eq("dim_Wtilde_exact_m4", m, exact, 10, "exact kernel of (T12, T13, B2) on S2xS2_0".into()));
    }
    out
}

/// Matrix of a rank-4 map on the basis of `sub`.
fn map_on(sub: &Subspace, m: usize, f: impl Fn(&Tensor) -> Tensor) -> nalgebra::DMatrix<f64> {
    let imgs: Vec<Tensor> = sub.basis().column_iter().map(|c| f(&Tensor::from_column(m, 4, c.as_slice()))).collect();
    let n = imgs.first().map_or(0, |t| t.entries().len());
    crate::linalg::columns(n, &imgs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi1_is_invertible_m3() {
        assert_eq!(psi1_exact_rank(3), 18);
    }

    #[test]
    fn exact_harmonic_kernel_m4() {
        assert_eq!(harmonic_bianchi_kernel_exact_dim(4), 10);
    }

    #[test]
    fn suite_runs_m3() {
        let checks = verify_algebra(3, 1, 2);
        let get = |n: &str| checks.iter().find(|c| c.name == n).unwrap().passed;
        assert!(get("psi1_rank"));
        assert!(get("psi2_round_trip"));
        assert!(get("ker_b1_eq_im_psi3"));
        assert!(get("five_way_split_round_trip"));
        assert!(get("bianchi2_xi1_identity") && get("bianchi2_xi2_identity") && get("bianchi2_xi3_vanishes"));
    }
}
