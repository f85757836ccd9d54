//! Constructive decompositions: Y₁⊕Y₂⊕H₂,₁, the curvature split, the five-way
//! split of S²⊗S²₀ and the reduction of an order −m coefficient to Weyl form.

use serde::Serialize;

use super::maps::{self, XiArg};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tol;

/// `A = [δ_(12) b_(3)] + [δ_(13) b'_(2) + δ_(23) b'_(1)] + h`.
#[derive(Clone, Debug, Serialize)]
pub struct Decomp21 {
    pub b: Tensor,
    pub b_prime: Tensor,
    pub h: Tensor,
}

/// Trace coefficients of the Y₁ and Y₂ generators; row `r` holds
/// `(T_(12), T_(13))` of generator `r`.
pub fn trace_system_matrix(m: usize) -> [[f64; 2]; 2] {
    let m = m as f64;
    [[m, 1.0], [2.0, m + 1.0]]
}

pub fn y1(b: &Tensor) -> Tensor {
    Tensor::delta(b.dim()).outer(b).expect("rank 3")
}

pub fn y2(b: &Tensor) -> Tensor {
    Tensor::from_fn(b.dim(), 3, |x| {
        let (i, j, k) = (x[0], x[1], x[2]);
        (if i == k { b.get(&[j]) } else { &0.0 }) + (if j == k { b.get(&[i]) } else { &0.0 })
    })
}

pub fn project_21(a: &Tensor) -> Result<Decomp21> {
    if a.rank() != 3 {
        return Err(Error::RankMismatch { expected: 3, got: a.rank() });
    }
    if maps::symmetry_defect(a, &[2, 1, 3]) > tol::EXACT * a.max_abs().max(1.0) {
        return Err(Error::Symmetry("symmetric in (12)".into()));
    }
    let t12 = a.trace(1, 2)?;
    let t13 = a.trace(1, 3)?;
    let [[p, q], [r, s]] = trace_system_matrix(a.dim());
    // T12 = p·b + r·b', T13 = q·b + s·b'
    let det = p * s - r * q;
    let b = (&t12.scale(s) - &t13.scale(r)).scale(1.0 / det);
    let b_prime = (&t13.scale(p) - &t12.scale(q)).scale(1.0 / det);
    let h = &(a - &y1(&b)) - &y2(&b_prime);
    Ok(Decomp21 { b, b_prime, h })
}

/// `A = R̃(A) + Ψ₂(B)`.
pub fn split_curvature(a: &Tensor) -> Result<(Tensor, Tensor)> {
    let ct = maps::map_rtilde(a)?;
    let b = maps::split_b(a)?;
    Ok((ct, b))
}

/// Parameters and pieces of the split of S²⊗S²₀ into Z₁..Z₄ and H₂,₂.
#[derive(Clone, Debug, Serialize)]
pub struct FullDecomp {
    /// Ξ₁ argument (trace-free symmetric).
    pub b1: Tensor,
    /// Ξ₂ argument (trace-free symmetric).
    pub b2: Tensor,
    /// Ξ₃ argument (skew).
    pub b3: Tensor,
    /// Ξ₄ argument.
    pub c: f64,
    pub z1: Tensor,
    pub z2: Tensor,
    pub z3: Tensor,
    pub z4: Tensor,
    pub h22: Tensor,
}

impl FullDecomp {
    pub fn parts(&self) -> [&Tensor; 5] {
        [&self.z1, &self.z2, &self.z3, &self.z4, &self.h22]
    }

    pub fn sum(&self) -> Tensor {
        let mut acc = self.z1.clone();
        for p in &self.parts()[1..] {
            acc = &acc + p;
        }
        acc
    }
}

fn check_s2_s2_0(a: &Tensor) -> Result<f64> {
    if a.rank() != 4 {
        return Err(Error::RankMismatch { expected: 4, got: a.rank() });
    }
    let scale = a.max_abs().max(1.0);
    if maps::symmetry_defect(a, &[2, 1, 3, 4]) > tol::EXACT * scale || maps::symmetry_defect(a, &[1, 2, 4, 3]) > tol::EXACT * scale {
        return Err(Error::Symmetry("symmetric in (12) and (34)".into()));
    }
    Ok(a.trace(3, 4)?.max_abs())
}

pub fn project_full(a: &Tensor) -> Result<FullDecomp> {
    let tr34 = check_s2_s2_0(a)?;
    if tr34 > tol::EXACT * a.max_abs().max(1.0) {
        return Err(Error::Constraint(format!("trace over (34) is {tr34:e}")));
    }
    let m = a.dim();
    let mf = m as f64;
    let b1 = a.trace(1, 2)?.scale(1.0 / mf);
    let z1 = maps::xi1_unchecked(&b1);
    let rest = a - &z1;
    let n = rest.trace(2, 3)?;
    let sym = n.symmetrize(&[1, 2])?;
    let skew = &n - &sym;
    let trace = sym.trace(1, 2)?.value() / mf;
    let sym0 = &sym - &Tensor::delta(m).scale(trace);
    let b2 = sym0.scale(1.0 / (mf + 2.0 - 8.0 / mf));
    let b3 = skew.scale(1.0 / (mf + 2.0));
    let c = trace / (mf + 1.0 - 2.0 / mf);
    let z2 = maps::xi2_unchecked(&b2);
    let z3 = maps::xi3_unchecked(&b3);
    let z4 = maps::xi4(m, c);
    let h22 = &(&(&rest - &z2) - &z3) - &z4;
    Ok(FullDecomp { b1, b2, b3, c, z1, z2, z3, z4, h22 })
}

/// Result of reducing an order −m coefficient in Z to W̃.
#[derive(Clone, Debug, Serialize)]
pub struct WeylReduction {
    /// `A + Ψ₄(b) = wt`.
    pub b: Tensor,
    pub wt: Tensor,
    pub trace_b: f64,
}

/// Residuals of the two constraints defining Z.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ZResiduals {
    pub trace34: f64,
    pub bianchi2: f64,
}

pub fn z_residuals(a: &Tensor) -> Result<ZResiduals> {
    let trace34 = check_s2_s2_0(a)?;
    let bianchi2 = maps::bianchi2_unchecked(a).max_abs();
    Ok(ZResiduals { trace34, bianchi2 })
}

/// Find `B` with `A + Ψ₄(B) ∈ W̃`, via the Z-components of `A`.
pub fn weyl_reduce(a: &Tensor) -> Result<WeylReduction> {
    weyl_reduce_tol(a, tol::EXACT)
}

/// As [`weyl_reduce`] with a relative tolerance on the Z constraints.
pub fn weyl_reduce_tol(a: &Tensor, rel_tol: f64) -> Result<WeylReduction> {
    let scale = a.max_abs().max(1.0);
    let res = z_residuals(a)?;
    if res.trace34 > rel_tol * scale {
        return Err(Error::Constraint(format!("trace over (34) is {:e}", res.trace34)));
    }
    if res.bianchi2 > rel_tol * scale {
        return Err(Error::Constraint(format!("B2 residual is {:e}", res.bianchi2)));
    }
    // remove the tiny trace defect so that project_full accepts fitted input
    let tr = a.trace(3, 4)?;
    let a0 = a - &tr.outer(&Tensor::delta(a.dim()))?.scale(1.0 / a.dim() as f64);
    let parts = project_full(&a0)?;
    let m = a.dim() as f64;
    let b = &(&parts.b2 + &parts.b3).scale(2.0 / m) + &Tensor::delta(a.dim()).scale(parts.c / m);
    let wt = &a0 + &maps::psi4(&b)?;
    Ok(WeylReduction { trace_b: b.trace(1, 2)?.value(), b, wt })
}

/// `W = −(2/3)W̃_(1234) − (4/3)W̃_(1324)`.
pub fn weyl_from_stilde(wt: &Tensor) -> Result<Tensor> {
    weyl_from_stilde_tol(wt, tol::EXACT)
}

pub fn weyl_from_stilde_tol(wt: &Tensor, rel_tol: f64) -> Result<Tensor> {
    let scale = wt.max_abs().max(1.0);
    let res = z_residuals(wt)?;
    let tr12 = wt.trace(1, 2)?.max_abs();
    let tr13 = wt.trace(1, 3)?.max_abs();
    let traces = res.trace34.max(tr12).max(tr13);
    if traces > rel_tol * scale {
        return Err(Error::Constraint(format!("not harmonic: trace {traces:e}")));
    }
    if res.bianchi2 > rel_tol * scale {
        return Err(Error::Constraint(format!("B2 residual is {:e}", res.bianchi2)));
    }
    Ok(&wt.scale(-2.0 / 3.0) + &wt.permuted(&[1, 3, 2, 4]).scale(-4.0 / 3.0))
}

/// Convenience wrapper for the Ξ maps on floats.
pub fn xi_f64(k: usize, b: &Tensor) -> Result<Tensor> {
    maps::xi(k, &XiArg::Matrix(b.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::spaces::{Algebra, SpaceId};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_in(alg: &Algebra, id: SpaceId, seed: u64) -> Tensor {
        let sp = alg.space(id);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sp.basis().iter().fold(Tensor::zeros(alg.m(), sp.rank()), |acc, b| &acc + &b.scale(rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn pure_y1_input() {
        let c = Tensor::vector(vec![1.0, 2.0, -1.0, 0.5]);
        let d = project_21(&y1(&c)).unwrap();
        assert!(d.b.dist(&c) < 1e-14);
        assert!(d.b_prime.max_abs() < 1e-14 && d.h.max_abs() < 1e-14);
    }

    #[test]
    fn trace_system_invertible() {
        for m in 3..=10 {
            let [[p, q], [r, s]] = trace_system_matrix(m);
            assert!((p * s - q * r).abs() > 1.0);
        }
    }

    #[test]
    fn random_21_round_trip() {
        let alg = Algebra::new(5).unwrap();
        let a = rand_in(&alg, SpaceId::S2Rm, 3);
        let d = project_21(&a).unwrap();
        let back = &(&y1(&d.b) + &y2(&d.b_prime)) + &d.h;
        assert!(back.dist(&a) < 1e-12);
        assert!(alg.space(SpaceId::H21).is_member(&d.h, 1e-10));
    }

    #[test]
    fn curvature_split_of_psi2_image() {
        let alg = Algebra::new(4).unwrap();
        let b0 = rand_in(&alg, SpaceId::RmS3, 5);
        let a = maps::psi2(&b0).unwrap();
        let (ct, b) = split_curvature(&a).unwrap();
        assert!(ct.max_abs() < 1e-12);
        assert!(b.dist(&b0) < 1e-12);
    }

    #[test]
    fn curvature_split_of_ctilde_member() {
        let alg = Algebra::new(4).unwrap();
        let a = rand_in(&alg, SpaceId::Ctilde, 6);
        let (ct, b) = split_curvature(&a).unwrap();
        assert!(ct.dist(&a) < 1e-12 && b.max_abs() < 1e-12);
    }

    #[test]
    fn full_decomposition_round_trip() {
        let alg = Algebra::new(4).unwrap();
        let a = rand_in(&alg, SpaceId::S2S2_0, 8);
        let d = project_full(&a).unwrap();
        assert!(d.sum().dist(&a) < 1e-12);
        let ids = [SpaceId::Z1, SpaceId::Z2, SpaceId::Z3, SpaceId::Z4, SpaceId::H22];
        for (p, id) in d.parts().iter().zip(ids) {
            assert!(alg.space(id).is_member(p, 1e-10), "{id}");
        }
    }

    #[test]
    fn xi1_input_has_only_z1_part() {
        let b = Tensor::from_fn(3, 2, |x| if x[0] == x[1] { [1.0, -2.0, 1.0][x[0]] } else { 0.5 });
        let d = project_full(&xi_f64(1, &b).unwrap()).unwrap();
        assert!(d.z1.dist(&xi_f64(1, &b).unwrap()) < 1e-13);
        for p in &d.parts()[1..] {
            assert!(p.max_abs() < 1e-13);
        }
    }

    #[test]
    fn xi4_trace_constant() {
        let m = 6;
        let t = maps::xi4(m, 1.0).trace(2, 3).unwrap();
        let want = Tensor::delta(m).scale(m as f64 + 1.0 - 2.0 / m as f64);
        assert!(t.dist(&want) < 1e-12);
    }

    #[test]
    fn weyl_reduce_of_wtilde_member_is_trivial() {
        let alg = Algebra::new(4).unwrap();
        let wt = rand_in(&alg, SpaceId::Wtilde, 2);
        let r = weyl_reduce(&wt).unwrap();
        assert!(r.b.max_abs() < 1e-12);
        assert!(r.wt.dist(&wt) < 1e-12);
    }

    #[test]
    fn weyl_reduce_inverts_psi4() {
        let alg = Algebra::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b0 = Tensor::from_fn(5, 2, |_| rng.gen_range(-1.0..1.0));
        let b0 = &b0 - &Tensor::delta(5).scale(b0.trace(1, 2).unwrap().value() / 5.0);
        let r = weyl_reduce(&maps::psi4(&b0).unwrap()).unwrap();
        assert!(r.b.dist(&b0.scale(-1.0)) < 1e-12);
        assert!(r.wt.max_abs() < 1e-12);
        assert!(alg.space(SpaceId::Wtilde).dim() > 0);
    }

    #[test]
    fn weyl_reduce_in_three_dimensions_returns_zero() {
        let m = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b0 = Tensor::from_fn(m, 2, |_| rng.gen_range(-1.0..1.0));
        let r = weyl_reduce(&maps::psi4(&b0).unwrap()).unwrap();
        assert!(r.wt.max_abs() < 1e-12);
    }

    #[test]
    fn weyl_reduce_reports_failed_constraint() {
        let a = maps::xi1_unchecked(&Tensor::from_fn(4, 2, |x| if x == [0, 1] || x == [1, 0] { 1.0 } else { 0.0 }));
        match weyl_reduce(&a) {
            Err(Error::Constraint(msg)) => assert!(msg.contains("B2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weyl_from_stilde_round_trip() {
        let alg = Algebra::new(4).unwrap();
        let wt = rand_in(&alg, SpaceId::Wtilde, 12);
        let w = weyl_from_stilde(&wt).unwrap();
        assert!(maps::weyl_defect(&w) < 1e-12);
        assert!(maps::map_s(&w).unwrap().dist(&wt) < 1e-12);
        assert!(weyl_from_stilde(&Tensor::zeros(4, 4)).unwrap().is_zero());
    }
}
