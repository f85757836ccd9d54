use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::poly::Poly;
use crate::algebra::maps;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tol;

/// `g_ij = a_ij + b_ijk x_k + c_ijkl x_k x_l`, truncated at order two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricJet {
    pub m: usize,
    pub a: Tensor,
    pub b: Tensor,
    pub c: Tensor,
}

fn rel(t: &Tensor) -> f64 {
    tol::EXACT * t.max_abs().max(1.0)
}

fn expect_shape(t: &Tensor, m: usize, rank: usize) -> Result<()> {
    if t.dim() != m {
        return Err(Error::DimMismatch { expected: m, got: t.dim() });
    }
    if t.rank() != rank {
        return Err(Error::RankMismatch { expected: rank, got: t.rank() });
    }
    Ok(())
}

fn symmetric_in(t: &Tensor, slots: &[usize], what: &str) -> Result<()> {
    if maps::symmetry_defect(t, slots) > rel(t) {
        return Err(Error::Symmetry(what.into()));
    }
    Ok(())
}

impl MetricJet {
    pub fn new(a: Tensor, b: Tensor, c: Tensor) -> Result<Self> {
        let jet = Self { m: a.dim(), a, b, c };
        jet.validate()?;
        Ok(jet)
    }

    pub fn flat(m: usize) -> Self {
        Self { m, a: Tensor::delta(m), b: Tensor::zeros(m, 3), c: Tensor::zeros(m, 4) }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m;
        expect_shape(&self.a, m, 2)?;
        expect_shape(&self.b, m, 3)?;
        expect_shape(&self.c, m, 4)?;
        symmetric_in(&self.a, &[2, 1], "a symmetric")?;
        symmetric_in(&self.b, &[2, 1, 3], "b symmetric in (12)")?;
        symmetric_in(&self.c, &[2, 1, 3, 4], "c symmetric in (12)")?;
        symmetric_in(&self.c, &[1, 2, 4, 3], "c symmetric in (34)")?;
        let ev = self.a.to_matrix().symmetric_eigenvalues();
        if ev.iter().any(|&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(())
    }

    /// `g_ij` as a polynomial.
    pub fn component(&self, i: usize, j: usize) -> Poly {
        let m = self.m;
        Poly::constant(m, *self.a.get(&[i, j]))
            .with_part(Tensor::from_fn(m, 1, |x| *self.b.get(&[i, j, x[0]])))
            .with_part(Tensor::from_fn(m, 2, |x| *self.c.get(&[i, j, x[0], x[1]])))
    }

    /// The truncated metric evaluated at `x`.
    pub fn metric_at(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.m;
        DMatrix::from_fn(m, m, |i, j| {
            let mut g = *self.a.get(&[i, j]);
            for k in 0..m {
                g += self.b.get(&[i, j, k]) * x[k];
                for l in 0..m {
                    g += self.c.get(&[i, j, k, l]) * x[k] * x[l];
                }
            }
            g
        })
    }

    fn from_components(m: usize, g: &[Vec<Poly>]) -> Self {
        let a = Tensor::from_fn(m, 2, |x| g[x[0]][x[1]].part(0).value());
        let b = Tensor::from_fn(m, 3, |x| *g[x[0]][x[1]].part(1).get(&[x[2]]));
        let c = Tensor::from_fn(m, 4, |x| *g[x[0]][x[1]].part(2).get(&[x[2], x[3]]));
        // remove rounding asymmetry between g_ij and g_ji
        Self {
            m,
            a: a.symmetrize(&[1, 2]).expect("rank 2"),
            b: b.symmetrize(&[1, 2]).expect("rank 3"),
            c: c.symmetrize(&[1, 2]).expect("rank 4"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("jet serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let jet: Self = serde_json::from_str(s).map_err(|e| Error::Invalid(e.to_string()))?;
        jet.validate()?;
        Ok(jet)
    }
}

/// `φ(x)_i = L_ia x_a + Q_jki x_j x_k + C_jkli x_j x_k x_l`; the last slot of
/// `quad` and `cubic` is the output index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialChange {
    pub linear: Tensor,
    pub quad: Tensor,
    pub cubic: Tensor,
}

impl PolynomialChange {
    pub fn identity(m: usize) -> Self {
        Self { linear: Tensor::delta(m), quad: Tensor::zeros(m, 3), cubic: Tensor::zeros(m, 4) }
    }

    pub fn linear(l: &DMatrix<f64>) -> Self {
        let m = l.nrows();
        Self { linear: Tensor::from_matrix(l), ..Self::identity(m) }
    }

    /// `x_k + B_ijk x_i x_j`.
    pub fn quadratic(b: Tensor) -> Self {
        let m = b.dim();
        Self { quad: b, ..Self::identity(m) }
    }

    /// `x_i + B_ijkl x_j x_k x_l` for `B` in R^m⊗S³ (output slot first).
    pub fn cubic_from_first_slot(b: &Tensor) -> Self {
        let m = b.dim();
        Self { cubic: b.permuted(&[4, 1, 2, 3]), ..Self::identity(m) }
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    pub fn linear_matrix(&self) -> DMatrix<f64> {
        self.linear.to_matrix()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        expect_shape(&self.linear, m, 2)?;
        expect_shape(&self.quad, m, 3)?;
        expect_shape(&self.cubic, m, 4)?;
        symmetric_in(&self.quad, &[2, 1, 3], "quad symmetric in (12)")?;
        symmetric_in(&self.cubic, &[2, 1, 3, 4], "cubic symmetric in (123)")?;
        symmetric_in(&self.cubic, &[1, 3, 2, 4], "cubic symmetric in (123)")?;
        let sv = self.linear_matrix().singular_values();
        let smax = sv.max();
        if smax == 0.0 || sv.min() <= 1e-12 * smax {
            return Err(Error::Singular);
        }
        Ok(())
    }

    pub fn components(&self) -> Vec<Poly> {
        let m = self.dim();
        (0..m)
            .map(|i| {
                Poly::zero(m)
                    .with_part(Tensor::from_fn(m, 1, |x| *self.linear.get(&[i, x[0]])))
                    .with_part(Tensor::from_fn(m, 2, |x| *self.quad.get(&[x[0], x[1], i])))
                    .with_part(Tensor::from_fn(m, 3, |x| *self.cubic.get(&[x[0], x[1], x[2], i])))
            })
            .collect()
    }

    fn from_components(phi: &[Poly]) -> Self {
        let m = phi.len();
        Self {
            linear: Tensor::from_fn(m, 2, |x| *phi[x[0]].part(1).get(&[x[1]])),
            quad: Tensor::from_fn(m, 3, |x| *phi[x[2]].part(2).get(&[x[0], x[1]])),
            cubic: Tensor::from_fn(m, 4, |x| *phi[x[3]].part(3).get(&[x[0], x[1], x[2]])),
        }
    }

    /// `self ∘ inner`, truncated at degree three.
    pub fn compose(&self, inner: &Self) -> Self {
        let q = inner.components();
        Self::from_components(&self.components().iter().map(|p| p.compose(&q)).collect::<Vec<_>>())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.components().iter().map(|p| p.eval(x)).collect()
    }
}

/// Exact order-two jet of `φ*g`.
pub fn pullback_jet(jet: &MetricJet, change: &PolynomialChange) -> Result<MetricJet> {
    jet.validate()?;
    change.validate()?;
    let m = jet.m;
    if change.dim() != m {
        return Err(Error::DimMismatch { expected: m, got: change.dim() });
    }
    let phi = change.components();
    let dphi: Vec<Vec<Poly>> = phi.iter().map(|p| (0..m).map(|k| p.deriv(k)).collect()).collect();
    let g_at_phi: Vec<Vec<Poly>> = (0..m).map(|i| (0..m).map(|j| jet.component(i, j).compose(&phi)).collect()).collect();
    // t_iq = g_ij(φ) ∂_q φ_j, then out_pq = ∂_p φ_i t_iq
    let t: Vec<Vec<Poly>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|q| (0..m).fold(Poly::zero(m), |acc, j| acc.add(&g_at_phi[i][j].mul(&dphi[j][q]))))
                .collect()
        })
        .collect();
    let out: Vec<Vec<Poly>> = (0..m)
        .map(|p| (0..m).map(|q| (0..m).fold(Poly::zero(m), |acc, i| acc.add(&dphi[i][p].mul(&t[i][q])))).collect())
        .collect();
    Ok(MetricJet::from_components(m, &out))
}

fn require_identity_constant(jet: &MetricJet) -> Result<()> {
    let d = jet.a.dist(&Tensor::delta(jet.m));
    if d > tol::EXACT * (jet.m as f64) {
        return Err(Error::Constraint(format!("constant term differs from identity by {d:.3e}")));
    }
    Ok(())
}

/// Linear change `a^{-1/2}` making the constant term the identity.
pub fn rotate_to_identity(jet: &MetricJet) -> Result<(PolynomialChange, MetricJet)> {
    jet.validate()?;
    let eig = jet.a.to_matrix().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let l = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    let l = (&l + l.transpose()) * 0.5;
    let change = PolynomialChange::linear(&l);
    let mut out = pullback_jet(jet, &change)?;
    out.a = Tensor::delta(jet.m);
    Ok((change, out))
}

/// Quadratic change removing the linear term.
pub fn kill_linear(jet: &MetricJet) -> Result<(PolynomialChange, MetricJet)> {
    jet.validate()?;
    require_identity_constant(jet)?;
    if jet.b.is_zero() {
        return Ok((PolynomialChange::identity(jet.m), jet.clone()));
    }
    let change = PolynomialChange::quadratic(maps::psi1_inverse(&jet.b)?);
    let mut out = pullback_jet(jet, &change)?;
    out.a = Tensor::delta(jet.m);
    out.b = Tensor::zeros(jet.m, 3);
    Ok((change, out))
}

/// Cubic change bringing the quadratic term into C̃; returns the curvature.
pub fn curvature_normalize(jet: &MetricJet) -> Result<(PolynomialChange, MetricJet, Tensor)> {
    jet.validate()?;
    require_identity_constant(jet)?;
    if jet.b.max_abs() > rel(&jet.b) {
        return Err(Error::Constraint(format!("linear term present ({:.3e})", jet.b.max_abs())));
    }
    let change = PolynomialChange::cubic_from_first_slot(&maps::split_b(&jet.c)?);
    let mut out = pullback_jet(jet, &change)?;
    out.a = Tensor::delta(jet.m);
    out.b = Tensor::zeros(jet.m, 3);
    let r = maps::map_r(&out.c)?;
    Ok((change, out, r))
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalForm {
    pub change: PolynomialChange,
    pub jet: MetricJet,
    pub curvature: Tensor,
}

/// Composite `φ₁∘φ₂∘φ₃` of the three normalizing steps.
pub fn normal_form(jet: &MetricJet) -> Result<NormalForm> {
    let (c1, j1) = rotate_to_identity(jet)?;
    let (c2, j2) = kill_linear(&j1)?;
    let (c3, j3, r) = curvature_normalize(&j2)?;
    Ok(NormalForm { change: c1.compose(&c2).compose(&c3), jet: j3, curvature: r })
}

#[derive(Clone, Debug, Serialize)]
pub struct RicciReport {
    pub ricci: Tensor,
    /// `∂_l Γ^i_aa` at the origin, indexed `(l, i)`.
    pub dgamma_trace: Tensor,
    /// `‖∂Γ-trace − (2/3)Ric‖`.
    pub defect: f64,
}

/// Ricci tensor `Σ_a R_aija` of a normal-form jet.
pub fn ricci_at_origin(jet: &MetricJet) -> Result<RicciReport> {
    jet.validate()?;
    require_identity_constant(jet)?;
    if jet.b.max_abs() > rel(&jet.b) {
        return Err(Error::Constraint("jet not in normal form: linear term present".into()));
    }
    let off = maps::map_rtilde(&jet.c)?.dist(&jet.c);
    if off > tol::FITTED * jet.c.norm().max(1.0) {
        return Err(Error::Constraint(format!("jet not in normal form: quadratic term off C~ by {off:.3e}")));
    }
    let m = jet.m;
    let ricci = maps::map_r(&jet.c)?.trace(1, 4)?;
    let c = &jet.c;
    let dgamma_trace = Tensor::from_fn(m, 2, |x| {
        let (l, i) = (x[0], x[1]);
        (0..m).map(|a| 2.0 * c.get(&[i, a, a, l]) - c.get(&[a, a, i, l])).sum()
    });
    let defect = dgamma_trace.dist(&ricci.scale(2.0 / 3.0));
    Ok(RicciReport { ricci, dgamma_trace, defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_jet(m: usize, seed: u64) -> MetricJet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-0.3..0.3));
        let a = DMatrix::identity(m, m) + &n * n.transpose();
        let b = Tensor::from_fn(m, 3, |_| rng.gen_range(-1.0..1.0)).symmetrize(&[1, 2]).unwrap();
        let c = Tensor::from_fn(m, 4, |_| rng.gen_range(-1.0..1.0)).symmetrize(&[1, 2]).unwrap().symmetrize(&[3, 4]).unwrap();
        MetricJet::new(Tensor::from_matrix(&a), b, c).unwrap()
    }

    fn sphere_jet(m: usize) -> MetricJet {
        let d = Tensor::delta(m);
        MetricJet::new(d.scale(4.0), Tensor::zeros(m, 3), d.outer(&d).unwrap().scale(-8.0)).unwrap()
    }

    #[test]
    fn identity_change_is_neutral() {
        let jet = random_jet(3, 1);
        let back = pullback_jet(&jet, &PolynomialChange::identity(3)).unwrap();
        assert!(back.a.dist(&jet.a) + back.b.dist(&jet.b) + back.c.dist(&jet.c) < 1e-13);
    }

    #[test]
    fn diagonal_square_root() {
        let m = 4;
        let mut a = Tensor::delta(m);
        a.set(&[0, 0], 4.0);
        let jet = MetricJet::new(a, Tensor::zeros(m, 3), Tensor::zeros(m, 4)).unwrap();
        let (ch, out) = rotate_to_identity(&jet).unwrap();
        assert!((ch.linear.get(&[0, 0]) - 0.5).abs() < 1e-15);
        assert!((ch.linear.get(&[1, 1]) - 1.0).abs() < 1e-15);
        assert!(out.a.dist(&Tensor::delta(m)) < 1e-15);
    }

    #[test]
    fn kill_linear_leaves_no_linear_term() {
        let (_, j1) = rotate_to_identity(&random_jet(4, 2)).unwrap();
        let (ch, _) = kill_linear(&j1).unwrap();
        assert!(pullback_jet(&j1, &ch).unwrap().b.max_abs() < 1e-12);
    }

    #[test]
    fn normal_form_lands_in_ctilde() {
        let nf = normal_form(&random_jet(4, 3)).unwrap();
        assert!(maps::map_rtilde(&nf.jet.c).unwrap().dist(&nf.jet.c) < 1e-10);
        assert!(maps::curvature_defect(&nf.curvature) < 1e-10);
        let rep = ricci_at_origin(&nf.jet).unwrap();
        assert!(rep.defect < 1e-10);
    }

    #[test]
    fn sphere_curvature_and_ricci() {
        for m in [3, 4] {
            let nf = normal_form(&sphere_jet(m)).unwrap();
            let want = Tensor::from_fn(m, 4, |x| {
                let kd = |a: usize, b: usize| if x[a] == x[b] { 1.0 } else { 0.0 };
                kd(0, 3) * kd(1, 2) - kd(0, 2) * kd(1, 3)
            });
            assert!(nf.curvature.dist(&want) < 1e-12, "m={m}");
            let rep = ricci_at_origin(&nf.jet).unwrap();
            assert!(rep.ricci.dist(&Tensor::delta(m).scale((m - 1) as f64)) < 1e-12);
        }
    }

    #[test]
    fn composite_change_reproduces_final_jet() {
        let jet = random_jet(3, 9);
        let nf = normal_form(&jet).unwrap();
        let direct = pullback_jet(&jet, &nf.change).unwrap();
        assert!(direct.a.dist(&nf.jet.a) < 1e-10);
        assert!(direct.b.max_abs() < 1e-10);
        assert!(direct.c.dist(&nf.jet.c) < 1e-9);
    }

    #[test]
    fn not_in_normal_form_is_rejected() {
        assert!(ricci_at_origin(&random_jet(3, 4)).is_err());
        assert!(kill_linear(&random_jet(3, 4)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let jet = random_jet(3, 5);
        assert_eq!(MetricJet::from_json(&jet.to_json()).unwrap(), jet);
    }
}
