//! Metric catalog: closed-form metrics on exterior domains with analytic
//! first derivatives.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::maps;
use crate::error::{Error, Result};
use crate::infinity::DecayingChange;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Flat,
    FlatQuotient,
    SyntheticWeyl,
    PulledBack,
    EguchiHanson,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "flat" => Ok(Self::Flat),
            "flat_quotient" => Ok(Self::FlatQuotient),
            "synthetic_weyl" | "synthetic" => Ok(Self::SyntheticWeyl),
            "pulled_back" => Ok(Self::PulledBack),
            "eguchi_hanson" => Ok(Self::EguchiHanson),
            other => Err(Error::Config(format!("unknown model kind {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Flat => "flat",
            Self::FlatQuotient => "flat_quotient",
            Self::SyntheticWeyl => "synthetic_weyl",
            Self::PulledBack => "pulled_back",
            Self::EguchiHanson => "eguchi_hanson",
        }
    }
}

/// `h = χ(r)[A3_ijk x_k/r^m + A4_ijkl x_k x_l/r^{m+2} + T_ij/r^{m+1}]`, with
/// `χ` a C² step from 0 at `cap` to 1 at `2·cap`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Synthetic {
    pub a3: Tensor,
    pub a4: Tensor,
    pub tail: Tensor,
    pub cap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Source {
    Flat,
    Synthetic(Synthetic),
    EguchiHanson { a: f64 },
    PulledBack { base: Box<MetricModel>, change: DecayingChange },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricModel {
    pub m: usize,
    pub kind: ModelKind,
    pub group_order: usize,
    source: Source,
}

/// Perturbation `h = g − δ` and its first derivatives `∂_k h`.
pub struct Jet1 {
    pub h: DMatrix<f64>,
    pub dh: Vec<DMatrix<f64>>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// C² smooth step on [0, 1] and its derivative.
fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        let v = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        let d = 30.0 * t * t * (1.0 - t) * (1.0 - t);
        (v, d)
    }
}

/// Volume of the unit ball in R^m.
pub fn unit_ball_volume(m: usize) -> f64 {
    sphere_area(m) / m as f64
}

/// `|S^{m−1}| = 2π^{m/2}/Γ(m/2)`.
pub fn sphere_area(m: usize) -> f64 {
    2.0 * PI.powf(m as f64 / 2.0) / half_gamma(m)
}

/// `Γ(n/2)` for positive integers `n`.
pub fn half_gamma(n: usize) -> f64 {
    let (mut g, mut k) = if n % 2 == 0 { (1.0, 2) } else { (PI.sqrt(), 1) };
    while k + 2 <= n {
        g *= k as f64 / 2.0;
        k += 2;
    }
    g
}

fn eh_complex(x: &[f64]) -> [f64; 4] {
    [-x[1], x[0], -x[3], x[2]]
}

/// `J` with `k = Jx` as in [`eh_complex`].
fn eh_j(i: usize, a: usize) -> f64 {
    match (i, a) {
        (0, 1) | (2, 3) => -1.0,
        (1, 0) | (3, 2) => 1.0,
        _ => 0.0,
    }
}

impl MetricModel {
    pub fn flat(m: usize) -> Self {
        Self { m, kind: ModelKind::Flat, group_order: 1, source: Source::Flat }
    }

    pub fn flat_quotient(m: usize, group_order: usize) -> Result<Self> {
        if group_order == 0 {
            return Err(Error::Config("group order must be positive".into()));
        }
        Ok(Self { m, kind: ModelKind::FlatQuotient, group_order, source: Source::Flat })
    }

    pub fn synthetic(syn: Synthetic) -> Result<Self> {
        let m = syn.a4.dim();
        if syn.a3.rank() != 3 || syn.a4.rank() != 4 || syn.tail.rank() != 2 {
            return Err(Error::Config("synthetic model needs A3 (rank 3), A4 (rank 4), tail (rank 2)".into()));
        }
        if syn.a3.dim() != m || syn.tail.dim() != m {
            return Err(Error::DimMismatch { expected: m, got: syn.a3.dim() });
        }
        let scale = syn.a4.max_abs().max(syn.a3.max_abs()).max(1.0);
        if maps::symmetry_defect(&syn.a3, &[2, 1, 3]) > 1e-12 * scale
            || maps::symmetry_defect(&syn.a4, &[2, 1, 3, 4]) > 1e-12 * scale
            || maps::symmetry_defect(&syn.a4, &[1, 2, 4, 3]) > 1e-12 * scale
            || maps::symmetry_defect(&syn.tail, &[2, 1]) > 1e-12 * scale
        {
            return Err(Error::Symmetry("synthetic coefficients must be symmetric in (12) and A4 in (34)".into()));
        }
        if !(syn.cap > 0.0) {
            return Err(Error::Config("cap radius must be positive".into()));
        }
        Ok(Self { m, kind: ModelKind::SyntheticWeyl, group_order: 1, source: Source::Synthetic(syn) })
    }

    /// `δ + s(W)_ijkl x_k x_l/r^{m+2}` (optionally plus a tail) outside a cap.
    pub fn synthetic_weyl(w: &Tensor, tail: Option<Tensor>, cap: f64) -> Result<Self> {
        let m = w.dim();
        if maps::weyl_defect(w) > 1e-10 * w.max_abs().max(1.0) {
            return Err(Error::Constraint("parameter is not a Weyl tensor".into()));
        }
        Self::synthetic(Synthetic {
            a3: Tensor::zeros(m, 3),
            a4: maps::map_s(w)?,
            tail: tail.unwrap_or_else(|| Tensor::zeros(m, 2)),
            cap,
        })
    }

    pub fn eguchi_hanson(a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::Config("Eguchi-Hanson scale must be positive".into()));
        }
        Ok(Self { m: 4, kind: ModelKind::EguchiHanson, group_order: 2, source: Source::EguchiHanson { a } })
    }

    /// `φ*g` for `φ = Q(D(x) + c)`.
    pub fn pulled_back(base: MetricModel, change: DecayingChange) -> Result<Self> {
        change.validate()?;
        if change.dim() != base.m {
            return Err(Error::DimMismatch { expected: base.m, got: change.dim() });
        }
        Ok(Self { m: base.m, kind: ModelKind::PulledBack, group_order: base.group_order, source: Source::PulledBack { base: Box::new(base), change } })
    }

    /// Radius inside which the model is not evaluated (the cap or the bolt).
    pub fn inner_radius(&self) -> f64 {
        match &self.source {
            Source::Flat => 0.0,
            Source::Synthetic(s) => 2.0 * s.cap,
            Source::EguchiHanson { a } => *a,
            Source::PulledBack { base, change } => {
                // keep |∂u| ≤ 1/4 so the change is a diffeomorphism onto its image
                let mf = self.m as f64;
                let rv = (4.0 * (mf - 1.0) * change.b_vec.norm()).powf(1.0 / (mf - 1.0));
                let rm = (4.0 * (mf + 1.0) * change.b_mat.norm()).powf(1.0 / mf);
                (base.inner_radius() + change.translation_norm()).max(rv).max(rm) + 1.0
            }
        }
    }

    /// `∫_{|x|<r0}(√det g − 1)dx` on the cover for `r0 = inner_radius()`, when known in
    /// closed form.
    pub fn interior_volume_defect(&self) -> Option<f64> {
        match &self.source {
            Source::Flat => Some(0.0),
            // the cap region is flat up to r = cap; the step shell is integrated numerically
            Source::Synthetic(_) => None,
            // √det g = 1 on r > a; the region r < a is not part of the manifold
            Source::EguchiHanson { a } => Some(-unit_ball_volume(4) * a.powi(4)),
            Source::PulledBack { .. } => None,
        }
    }

    /// Radius below which the perturbation vanishes identically (synthetic caps).
    pub fn flat_core(&self) -> Option<f64> {
        match &self.source {
            Source::Flat => Some(f64::INFINITY),
            Source::Synthetic(s) => Some(s.cap),
            _ => None,
        }
    }

    /// A radius `ρ0` with the cover defect `∫_{|x|<ρ0}(√det g − 1)dx` known exactly.
    pub fn volume_anchor(&self) -> Option<(f64, f64)> {
        match &self.source {
            Source::Flat => Some((0.0, 0.0)),
            Source::Synthetic(s) => Some((s.cap, 0.0)),
            Source::EguchiHanson { a } => Some((*a, -unit_ball_volume(4) * a.powi(4))),
            Source::PulledBack { .. } => None,
        }
    }

    /// Radii where the evaluator is only finitely smooth; radial quadrature splits there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.source {
            Source::Synthetic(s) => vec![s.cap, 2.0 * s.cap],
            _ => vec![],
        }
    }

    pub fn pulled_back_parts(&self) -> Option<(&MetricModel, &DecayingChange)> {
        match &self.source {
            Source::PulledBack { base, change } => Some((base, change)),
            _ => None,
        }
    }

    pub fn synthetic_params(&self) -> Option<&Synthetic> {
        match &self.source {
            Source::Synthetic(s) => Some(s),
            _ => None,
        }
    }

    pub fn eh_scale(&self) -> Option<f64> {
        match &self.source {
            Source::EguchiHanson { a } => Some(*a),
            _ => None,
        }
    }

    pub fn perturbation(&self, x: &[f64]) -> DMatrix<f64> {
        self.jet1_impl(x, false).h
    }

    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        self.perturbation(x) + DMatrix::identity(self.m, self.m)
    }

    pub fn jet1(&self, x: &[f64]) -> Jet1 {
        self.jet1_impl(x, true)
    }

    fn jet1_impl(&self, x: &[f64], derivs: bool) -> Jet1 {
        let m = self.m;
        match &self.source {
            Source::Flat => Jet1 { h: DMatrix::zeros(m, m), dh: if derivs { vec![DMatrix::zeros(m, m); m] } else { vec![] } },
            Source::Synthetic(s) => synthetic_jet(s, x, derivs),
            Source::EguchiHanson { a } => eh_jet(*a, x, derivs),
            Source::PulledBack { base, change } => pulled_back_jet(base, change, x, derivs),
        }
    }

    /// `√det g`.
    pub fn volume_density(&self, x: &[f64]) -> f64 {
        self.metric(x).determinant().sqrt()
    }

    /// `√det g − 1`, computed without cancellation for small perturbations.
    pub fn volume_density_defect(&self, x: &[f64]) -> f64 {
        let h = self.perturbation(x);
        let ev = h.symmetric_eigenvalues();
        let log_det: f64 = ev.iter().map(|l| l.ln_1p()).sum();
        (0.5 * log_det).exp_m1()
    }

    /// `Γ^i_jk` at `x`, indexed `[i][j][k]` flattened row-major.
    pub fn christoffel(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m;
        let j = self.jet1(x);
        let ginv = (DMatrix::identity(m, m) + &j.h).try_inverse().expect("metric invertible");
        let mut low = vec![0.0; m * m * m];
        for l in 0..m {
            for a in 0..m {
                for b in 0..m {
                    low[(l * m + a) * m + b] = 0.5 * (j.dh[a][(l, b)] + j.dh[b][(l, a)] - j.dh[l][(a, b)]);
                }
            }
        }
        let mut out = vec![0.0; m * m * m];
        for i in 0..m {
            for a in 0..m {
                for b in 0..m {
                    out[(i * m + a) * m + b] = (0..m).map(|l| ginv[(i, l)] * low[(l * m + a) * m + b]).sum();
                }
            }
        }
        out
    }

    /// `Σ_a Γ^i_aa`: the Euclidean trace entering the harmonic-map equation.
    pub fn gamma_trace(&self, x: &[f64]) -> DVector<f64> {
        let m = self.m;
        let g = self.christoffel(x);
        DVector::from_fn(m, |i, _| (0..m).map(|a| g[(i * m + a) * m + a]).sum())
    }

    /// `−∂_j g_ij + ½∂_i g_jj`.
    pub fn bianchi_residual(&self, x: &[f64]) -> DVector<f64> {
        let m = self.m;
        let j = self.jet1(x);
        DVector::from_fn(m, |i, _| (0..m).map(|a| -j.dh[a][(i, a)] + 0.5 * j.dh[i][(a, a)]).sum())
    }

    pub fn validate_at(&self, x: &[f64]) -> Result<()> {
        let g = self.metric(x);
        if (&g - g.transpose()).amax() > 1e-12 * g.amax() {
            return Err(Error::Invalid("metric not symmetric".into()));
        }
        if g.symmetric_eigenvalues().iter().any(|&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(())
    }
}

fn synthetic_jet(s: &Synthetic, x: &[f64], derivs: bool) -> Jet1 {
    let m = s.a4.dim();
    let r = norm(x);
    let zero = || Jet1 { h: DMatrix::zeros(m, m), dh: if derivs { vec![DMatrix::zeros(m, m); m] } else { vec![] } };
    if r <= s.cap {
        return zero();
    }
    let (chi, dchi) = smoothstep((r - s.cap) / s.cap);
    let dchi = dchi / s.cap;
    let mf = m as f64;
    let rm = r.powf(-mf);
    let rm2 = rm / (r * r);
    let rt = r.powf(-(mf + 1.0));
    let mut core = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut v = 0.0;
            for k in 0..m {
                v += s.a3.get(&[i, j, k]) * x[k] * rm;
                for l in 0..m {
                    v += s.a4.get(&[i, j, k, l]) * x[k] * x[l] * rm2;
                }
            }
            core[(i, j)] = v + s.tail.get(&[i, j]) * rt;
        }
    }
    let h = &core * chi;
    if !derivs {
        return Jet1 { h, dh: vec![] };
    }
    let rm4 = rm2 / (r * r);
    let rt2 = rt / (r * r);
    let mut dh = Vec::with_capacity(m);
    for p in 0..m {
        let mut d = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut v = 0.0;
                let mut a3x = 0.0;
                let mut a4xx = 0.0;
                let mut a4px = 0.0;
                for k in 0..m {
                    a3x += s.a3.get(&[i, j, k]) * x[k];
                    a4px += s.a4.get(&[i, j, p, k]) * x[k];
                    for l in 0..m {
                        a4xx += s.a4.get(&[i, j, k, l]) * x[k] * x[l];
                    }
                }
                v += s.a3.get(&[i, j, p]) * rm - mf * a3x * x[p] * rm2;
                v += 2.0 * a4px * rm2 - (mf + 2.0) * a4xx * x[p] * rm4;
                v += -(mf + 1.0) * s.tail.get(&[i, j]) * x[p] * rt2;
                d[(i, j)] = chi * v + dchi * x[p] / r * core[(i, j)];
            }
        }
        dh.push(d);
    }
    Jet1 { h, dh }
}

fn eh_jet(a: f64, x: &[f64], derivs: bool) -> Jet1 {
    let m = 4;
    let r = norm(x);
    let a4 = a.powi(4);
    let r2 = r * r;
    let q = r2 * r2 - a4;
    // h = α(r) x xᵀ + γ(r) k kᵀ with k = Jx
    let alpha = a4 / (r2 * q);
    let gamma = -a4 / (r2 * r2 * r2);
    let k = eh_complex(x);
    let h = DMatrix::from_fn(m, m, |i, j| alpha * x[i] * x[j] + gamma * k[i] * k[j]);
    if !derivs {
        return Jet1 { h, dh: vec![] };
    }
    let dalpha = a4 * (-2.0 / (r2 * r * q) - 4.0 * r / (q * q));
    let dgamma = 6.0 * a4 / (r2 * r2 * r2 * r);
    let dh = (0..m)
        .map(|p| {
            DMatrix::from_fn(m, m, |i, j| {
                let dx = |s: usize| if s == p { 1.0 } else { 0.0 };
                dalpha * x[p] / r * x[i] * x[j]
                    + alpha * (dx(i) * x[j] + x[i] * dx(j))
                    + dgamma * x[p] / r * k[i] * k[j]
                    + gamma * (eh_j(i, p) * k[j] + k[i] * eh_j(j, p))
            })
        })
        .collect();
    Jet1 { h, dh }
}

fn pulled_back_jet(base: &MetricModel, ch: &DecayingChange, x: &[f64], derivs: bool) -> Jet1 {
    let m = base.m;
    let y = ch.apply(x);
    let q = ch.rotation_matrix();
    let (u_jac, hess) = ch.core_derivatives(x);
    let n = DMatrix::identity(m, m) + &u_jac;
    let bj = base.jet1_impl(&y, derivs);
    let hr = q.transpose() * &bj.h * &q;
    // NᵀN − I without cancellation
    let ntn_minus = &u_jac + u_jac.transpose() + u_jac.transpose() * &u_jac;
    let h = n.transpose() * &hr * &n + ntn_minus;
    if !derivs {
        return Jet1 { h, dh: vec![] };
    }
    let jac = &q * &n;
    let mut dh = Vec::with_capacity(m);
    for k in 0..m {
        let dn = DMatrix::from_fn(m, m, |i, p| hess[(i * m + p) * m + k]);
        let mut dbase = DMatrix::zeros(m, m);
        for l in 0..m {
            dbase += &bj.dh[l] * jac[(l, k)];
        }
        let dhr = q.transpose() * dbase * &q;
        let term = dn.transpose() * &hr * &n + n.transpose() * dhr * &n + n.transpose() * &hr * &dn;
        let dntn = dn.transpose() * &n + n.transpose() * &dn;
        dh.push(term + dntn);
    }
    Jet1 { h, dh }
}
