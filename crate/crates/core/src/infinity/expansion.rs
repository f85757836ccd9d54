use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::decompose::{weyl_from_stilde_tol, weyl_reduce_tol, z_residuals};
use crate::algebra::maps;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    Harmonic,
    Bianchi,
    Unknown,
}

/// `g = δ + A3_ijk x_k/|x|^m + A4_ijkl x_k x_l/|x|^{m+2} + O(|x|^{−τ})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfinityExpansion {
    pub m: usize,
    pub a3: Tensor,
    pub a4: Tensor,
    pub remainder_order: f64,
    pub gauge: Gauge,
}

impl InfinityExpansion {
    pub fn new(a3: Tensor, a4: Tensor, remainder_order: f64, gauge: Gauge) -> Result<Self> {
        let e = Self { m: a4.dim(), a3, a4, remainder_order, gauge };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m;
        if self.a3.dim() != m || self.a3.rank() != 3 {
            return Err(Error::Invalid("A3 must be rank 3 over R^m".into()));
        }
        if self.a4.rank() != 4 {
            return Err(Error::RankMismatch { expected: 4, got: self.a4.rank() });
        }
        let s = self.a4.max_abs().max(self.a3.max_abs()).max(1.0) * tol::EXACT;
        if maps::symmetry_defect(&self.a3, &[2, 1, 3]) > s {
            return Err(Error::Symmetry("A3 symmetric in (12)".into()));
        }
        if maps::symmetry_defect(&self.a4, &[2, 1, 3, 4]) > s || maps::symmetry_defect(&self.a4, &[1, 2, 4, 3]) > s {
            return Err(Error::Symmetry("A4 symmetric in (12) and (34)".into()));
        }
        if !(self.remainder_order > m as f64) {
            return Err(Error::Invalid(format!("remainder order {} must exceed m", self.remainder_order)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("expansion serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(s).map_err(|e| Error::Invalid(e.to_string()))?;
        e.validate()?;
        Ok(e)
    }

    /// Conjugate by `x = Q y`: `A' = Qᵀ·A`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Self {
        let qt = q.transpose();
        Self { a3: self.a3.rotate(&qt), a4: self.a4.rotate(&qt), ..self.clone() }
    }
}

/// `φ(x) = Q(D(x) + c)` with `D(x) = x + b_vec/|x|^{m−2} + b_mat·x/|x|^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayingChange {
    pub translation: Tensor,
    pub rotation: Tensor,
    pub b_vec: Tensor,
    pub b_mat: Tensor,
}

impl DecayingChange {
    pub fn identity(m: usize) -> Self {
        Self { translation: Tensor::zeros(m, 1), rotation: Tensor::delta(m), b_vec: Tensor::zeros(m, 1), b_mat: Tensor::zeros(m, 2) }
    }

    pub fn with_b_vec(m: usize, b: Tensor) -> Self {
        Self { b_vec: b, ..Self::identity(m) }
    }

    pub fn with_b_mat(m: usize, b: Tensor) -> Self {
        Self { b_mat: b, ..Self::identity(m) }
    }

    /// Random rotation, translation and decaying terms of size `scale`.
    pub fn random<R: Rng>(m: usize, scale: f64, rng: &mut R) -> Self {
        let mut g = |_: usize| -> f64 { rng.sample(StandardNormal) };
        let q = random_orthogonal(m, &mut g);
        Self {
            translation: Tensor::from_fn(m, 1, |x| scale * g(x[0])),
            rotation: Tensor::from_matrix(&q),
            b_vec: Tensor::from_fn(m, 1, |x| scale * g(x[0])),
            b_mat: Tensor::from_fn(m, 2, |x| scale * g(x[0])),
        }
    }

    pub fn dim(&self) -> usize {
        self.rotation.dim()
    }

    pub fn rotation_matrix(&self) -> DMatrix<f64> {
        self.rotation.to_matrix()
    }

    pub fn translation_norm(&self) -> f64 {
        self.translation.norm()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        for (t, k) in [(&self.translation, 1), (&self.b_vec, 1), (&self.b_mat, 2), (&self.rotation, 2)] {
            if t.dim() != m || t.rank() != k {
                return Err(Error::Invalid("change fields have inconsistent shapes".into()));
            }
            if !t.is_finite() {
                return Err(Error::Invalid("change fields must be finite".into()));
            }
        }
        let q = self.rotation_matrix();
        let defect = (q.transpose() * &q - DMatrix::identity(m, m)).amax();
        if defect > 1e-12 {
            return Err(Error::Invalid(format!("rotation not orthogonal ({defect:.2e})")));
        }
        Ok(())
    }

    /// `D(x) − x`.
    pub fn core_displacement(&self, x: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mf = m as f64;
        let rv = r.powf(2.0 - mf);
        let rm = r.powf(-mf);
        (0..m).map(|i| self.b_vec.get(&[i]) * rv + (0..m).map(|j| self.b_mat.get(&[i, j]) * x[j]).sum::<f64>() * rm).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let u = self.core_displacement(x);
        let q = self.rotation_matrix();
        (0..m).map(|i| (0..m).map(|a| q[(i, a)] * (x[a] + u[a] + self.translation.get(&[a]))).sum()).collect()
    }

    /// `U_ip = ∂_p u_i` and `H[(i m + p) m + k] = ∂_k∂_p u_i` for `u = D − id`.
    pub fn core_derivatives(&self, x: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
        let m = self.dim();
        let mf = m as f64;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let rm = r.powf(-mf);
        let rm2 = rm / r2;
        let rm4 = rm2 / r2;
        let bv = |i: usize| *self.b_vec.get(&[i]);
        let bm = |i: usize, j: usize| *self.b_mat.get(&[i, j]);
        let bx: Vec<f64> = (0..m).map(|i| (0..m).map(|j| bm(i, j) * x[j]).sum()).collect();
        let kd = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let u = DMatrix::from_fn(m, m, |i, p| (2.0 - mf) * bv(i) * x[p] * rm + bm(i, p) * rm - mf * bx[i] * x[p] * rm2);
        let mut h = vec![0.0; m * m * m];
        for i in 0..m {
            for p in 0..m {
                for k in 0..m {
                    h[(i * m + p) * m + k] = (2.0 - mf) * bv(i) * (kd(p, k) * rm - mf * x[p] * x[k] * rm2) - mf * bm(i, p) * x[k] * rm2
                        - mf * (bm(i, k) * x[p] + bx[i] * kd(p, k)) * rm2
                        + mf * (mf + 2.0) * bx[i] * x[p] * x[k] * rm4;
                }
            }
        }
        (u, h)
    }
}

pub(crate) fn random_orthogonal(m: usize, g: &mut impl FnMut(usize) -> f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |i, _| g(i));
    let qr = a.qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column signs so the distribution is uniform
    let signs = DMatrix::from_diagonal(&r.diagonal().map(|d| if d < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

/// `B₁(A3)`; zero iff the order −(m−1) term is compatible with harmonic coordinates.
pub fn harmonic_constraint_check(e: &InfinityExpansion) -> Result<Tensor> {
    maps::bianchi1(&e.a3)
}

/// Trace over (34) and `B₂` of A4.
pub fn bianchi_constraint_check(e: &InfinityExpansion) -> Result<(Tensor, Tensor)> {
    Ok((e.a4.trace(3, 4)?, maps::bianchi2(&e.a4)?))
}

/// Coefficient update under `φ = Q(D + c)`: rotate, then translate, then apply the
/// decaying part. Terms of order beyond m are dropped.
pub fn pullback_expansion(e: &InfinityExpansion, change: &DecayingChange) -> Result<InfinityExpansion> {
    change.validate()?;
    if change.dim() != e.m {
        return Err(Error::DimMismatch { expected: e.m, got: change.dim() });
    }
    let m = e.m;
    let mf = m as f64;
    let rot = e.rotated(&change.rotation_matrix());
    let c = &change.translation;
    // A3_ijk (x+c)_k/|x+c|^m contributes A3_ijk c_k δ_ab − m A3_ija c_b at order m
    let shift = Tensor::from_fn(m, 4, |x| {
        let (i, j, a, b) = (x[0], x[1], x[2], x[3]);
        let dc: f64 = (0..m).map(|k| rot.a3.get(&[i, j, k]) * c.get(&[k])).sum();
        (if a == b { dc } else { 0.0 }) - mf * 0.5 * (rot.a3.get(&[i, j, a]) * c.get(&[b]) + rot.a3.get(&[i, j, b]) * c.get(&[a]))
    });
    let a3 = &rot.a3 + &maps::psi3(&change.b_vec)?;
    let a4 = &(&rot.a4 + &shift) + &maps::psi4(&change.b_mat)?;
    Ok(InfinityExpansion { a3, a4, ..e.clone() })
}

/// Solve `Ψ₃(B) = −A3` and remove the order −(m−1) term.
pub fn kill_order_m_minus_1(e: &InfinityExpansion) -> Result<(DecayingChange, InfinityExpansion)> {
    kill_order_m_minus_1_tol(e, tol::EXACT)
}

pub fn kill_order_m_minus_1_tol(e: &InfinityExpansion, rel_tol: f64) -> Result<(DecayingChange, InfinityExpansion)> {
    let m = e.m;
    let scale = e.a3.max_abs().max(1.0);
    let b1 = maps::bianchi1(&e.a3)?.max_abs();
    if b1 > rel_tol * scale {
        return Err(Error::Constraint(format!("B1(A3) = {b1:.3e}; coordinates cannot be harmonic at this order")));
    }
    // T_(12) Ψ₃(v) = −2(m−2)v
    let v = e.a3.trace(1, 2)?.scale(1.0 / (2.0 * (m as f64 - 2.0)));
    let resid = (&maps::psi3(&v)? + &e.a3).max_abs();
    if resid > rel_tol * scale {
        return Err(Error::Constraint(format!("A3 not in the image of Psi3: projection residual {resid:.3e}")));
    }
    let change = DecayingChange::with_b_vec(m, v);
    let mut out = pullback_expansion(e, &change)?;
    out.a3 = Tensor::zeros(m, 3);
    Ok((change, out))
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylResult {
    pub change: DecayingChange,
    pub expansion: InfinityExpansion,
    pub weyl: Tensor,
    pub trace_b: f64,
}

pub fn reduce_to_weyl(e: &InfinityExpansion) -> Result<WeylResult> {
    reduce_to_weyl_tol(e, tol::EXACT)
}

/// `A4 + Ψ₄(B) = s(W)`; returns the change, the reduced expansion and `W`.
pub fn reduce_to_weyl_tol(e: &InfinityExpansion, rel_tol: f64) -> Result<WeylResult> {
    let res = z_residuals(&e.a4)?;
    let scale = e.a4.max_abs().max(1.0);
    if res.trace34.max(res.bianchi2) > rel_tol * scale {
        return Err(Error::Constraint(format!("A4 outside Z: trace {:.3e}, B2 {:.3e}", res.trace34, res.bianchi2)));
    }
    let red = weyl_reduce_tol(&e.a4, rel_tol)?;
    let weyl = weyl_from_stilde_tol(&red.wt, rel_tol.max(tol::EXACT))?;
    let change = DecayingChange::with_b_mat(e.m, red.b.clone());
    let expansion = InfinityExpansion { a4: red.wt, gauge: Gauge::Bianchi, ..e.clone() };
    Ok(WeylResult { change, expansion, weyl, trace_b: red.trace_b })
}
