//! Exterior Poisson solver by harmonic projection and radial power sums, and
//! the decaying-harmonic tail fit.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{weighted_norm, AnnulusGrid, WeightedField};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tol;

/// `c · r^a (ln r)^s · Y(ω)` with `s ∈ {0, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialTerm {
    pub a: f64,
    pub log: bool,
    pub c: f64,
}

/// Field given mode by mode as sums of radial terms; component `c`, mode `k`
/// stored at `terms[c][k]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModalField {
    pub m: usize,
    pub ncomp: usize,
    pub mode_l: Vec<usize>,
    pub terms: Vec<Vec<Vec<RadialTerm>>>,
}

impl ModalField {
    pub fn zero(grid: &AnnulusGrid, ncomp: usize) -> Self {
        let mode_l = grid.basis.modes.iter().map(|p| p.l).collect::<Vec<_>>();
        Self { m: grid.m, ncomp, terms: vec![vec![Vec::new(); mode_l.len()]; ncomp], mode_l }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().flatten().flatten().all(|t| t.c == 0.0)
    }

    /// Values (and gradients if asked) at every grid point.
    /// Gradients are stored `[((ri * nodes + n) * ncomp + c) * m + d]`.
    pub fn on_grid(&self, grid: &Arc<AnnulusGrid>, alpha: f64, beta: f64, with_grad: bool) -> (WeightedField, Vec<f64>) {
        let m = self.m;
        let nodes = grid.nodes();
        let nm = self.mode_l.len();
        let nc = self.ncomp;
        let per_radius: Vec<(Vec<f64>, Vec<f64>)> = grid
            .radii
            .par_iter()
            .map(|&r| {
                let lr = r.ln();
                // radial factors per component and mode
                let mut val = vec![0.0; nc * nm];
                let mut g1 = vec![0.0; nc * nm];
                let mut g2 = vec![0.0; nc * nm];
                for c in 0..nc {
                    for k in 0..nm {
                        let l = self.mode_l[k] as f64;
                        for t in &self.terms[c][k] {
                            let (lg, s) = if t.log { (lr, 1.0) } else { (1.0, 0.0) };
                            let ra = r.powf(t.a);
                            val[c * nm + k] += t.c * ra * lg;
                            g1[c * nm + k] += t.c * ra / r * ((t.a - l) * lg + s);
                            g2[c * nm + k] += t.c * ra / r * lg;
                        }
                    }
                }
                let mut v = vec![0.0; nodes * nc];
                let mut gr = if with_grad { vec![0.0; nodes * nc * m] } else { Vec::new() };
                for n in 0..nodes {
                    let w = &grid.quad.nodes[n];
                    for c in 0..nc {
                        let mut acc = 0.0;
                        for k in 0..nm {
                            let f = val[c * nm + k];
                            let (a1, a2) = (g1[c * nm + k], g2[c * nm + k]);
                            if f == 0.0 && a1 == 0.0 && a2 == 0.0 {
                                continue;
                            }
                            let y = grid.y(n, k);
                            acc += f * y;
                            if with_grad {
                                let dy = grid.ygrad(n, k);
                                for d in 0..m {
                                    gr[(n * nc + c) * m + d] += a1 * w[d] * y + a2 * dy[d];
                                }
                            }
                        }
                        v[n * nc + c] = acc;
                    }
                }
                (v, gr)
            })
            .collect();
        let mut field = WeightedField::zeros(grid.clone(), nc, alpha, beta);
        let mut grads = Vec::with_capacity(if with_grad { field.values.len() * m } else { 0 });
        for (ri, (v, g)) in per_radius.into_iter().enumerate() {
            field.values[ri * nodes * nc..(ri + 1) * nodes * nc].copy_from_slice(&v);
            grads.extend(g);
        }
        (field, grads)
    }

    /// Value at an arbitrary point, using the grid's harmonic basis.
    pub fn eval(&self, grid: &AnnulusGrid, x: &[f64]) -> Vec<f64> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let w: Vec<f64> = x.iter().map(|v| v / r).collect();
        let ys: Vec<f64> = (0..self.mode_l.len()).map(|k| grid.basis.eval(k, &w)).collect();
        (0..self.ncomp)
            .map(|c| {
                self.terms[c]
                    .iter()
                    .zip(&ys)
                    .map(|(ts, y)| ts.iter().map(|t| t.c * r.powf(t.a) * if t.log { r.ln() } else { 1.0 }).sum::<f64>() * y)
                    .sum()
            })
            .collect()
    }

    /// `self − other`, keeping both term lists.
    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (c, comp) in other.terms.iter().enumerate() {
            for (k, ts) in comp.iter().enumerate() {
                out.terms[c][k].extend(ts.iter().map(|t| RadialTerm { c: -t.c, ..*t }));
            }
        }
        out
    }

    /// `Δ` applied mode by mode; exact on the representation.
    pub fn laplacian(&self) -> Self {
        let m = self.m as f64;
        let mut out = self.clone();
        for c in 0..self.ncomp {
            for (k, ts) in self.terms[c].iter().enumerate() {
                let l = self.mode_l[k] as f64;
                let mut nt = Vec::new();
                for t in ts {
                    let d = t.a * (t.a + m - 2.0) - l * (l + m - 2.0);
                    if d != 0.0 {
                        nt.push(RadialTerm { a: t.a - 2.0, log: t.log, c: t.c * d });
                    }
                    if t.log {
                        nt.push(RadialTerm { a: t.a - 2.0, log: false, c: t.c * (2.0 * t.a + m - 2.0) });
                    }
                }
                out.terms[c][k] = nt;
            }
        }
        out
    }
}

/// Mode coefficients of a sampled field, `[ri][c][k]`.
pub fn project_field(f: &WeightedField) -> (Vec<Vec<Vec<f64>>>, f64) {
    let g = &f.grid;
    let nm = g.modes();
    let per: Vec<(Vec<Vec<f64>>, f64)> = (0..g.radii.len())
        .into_par_iter()
        .map(|ri| {
            let coef: Vec<Vec<f64>> = (0..f.ncomp).map(|c| g.project(|n| f.component(ri, n, c))).collect();
            // relative L² energy not captured by the modes
            let mut total = 0.0;
            let mut lost = 0.0;
            for (n, w) in g.quad.weights.iter().enumerate() {
                for c in 0..f.ncomp {
                    let v = f.component(ri, n, c);
                    let rec: f64 = (0..nm).map(|k| coef[c][k] * g.y(n, k)).sum();
                    total += w * v * v;
                    lost += w * (v - rec) * (v - rec);
                }
            }
            (coef, if total > 0.0 { (lost / total).sqrt() } else { 0.0 })
        })
        .collect();
    let trunc = per.iter().map(|p| p.1).fold(0.0, f64::max);
    (per.into_iter().map(|p| p.0).collect(), trunc)
}

/// Least-squares fit `v(r_i) ≈ Σ_k c_k r_i^{e_k}` for fixed exponents.
pub struct RadialFit {
    exps: Vec<f64>,
    pinv: DMatrix<f64>,
    /// Column-scaled `(r/r0)^e`.
    design: DMatrix<f64>,
    scale: Vec<f64>,
    pub condition: f64,
}

impl RadialFit {
    pub fn new(radii: &[f64], exps: Vec<f64>) -> Result<Self> {
        if exps.len() > radii.len() {
            return Err(Error::UnderResolved(format!("{} radial terms on {} radii", exps.len(), radii.len())));
        }
        let r0 = radii[0];
        let mut a: DMatrix<f64> = DMatrix::from_fn(radii.len(), exps.len(), |i, k| (radii[i] / r0).powf(exps[k]));
        let scale: Vec<f64> = (0..exps.len()).map(|k| a.column(k).norm()).collect();
        for (k, s) in scale.iter().enumerate() {
            a.column_mut(k).unscale_mut(*s);
        }
        let svd = a.clone().svd(true, true);
        let condition = svd.singular_values.max() / svd.singular_values.min();
        let pinv = svd.pseudo_inverse(0.0).map_err(|e| Error::Fit(e.to_string()))?;
        let scale = exps.iter().zip(&scale).map(|(e, s)| r0.powf(-e) / s).collect();
        Ok(Self { exps, pinv, design: a, scale, condition })
    }

    /// Coefficients of `r^{e_k}` and the max residual.
    pub fn fit(&self, v: &[f64]) -> (Vec<f64>, f64) {
        let y = DVector::from_column_slice(v);
        let c = &self.pinv * &y;
        let resid = (&self.design * &c - &y).amax();
        (c.iter().enumerate().map(|(k, x)| x * self.scale[k]).collect(), resid)
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exps
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonConfig {
    /// Leading decay of the right-hand side; defaults to its weight exponent.
    pub p0: Option<f64>,
    /// Number of radial powers `r^{−p0−k}`; defaults to `annuli + 1`.
    pub radial_terms: Option<usize>,
    /// Reject right-hand sides with more relative angular energy beyond `L_max`.
    pub max_truncation: Option<f64>,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        Self { p0: None, radial_terms: None, max_truncation: Some(1e-6) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonSolution {
    pub u: ModalField,
    #[serde(skip)]
    pub field: WeightedField,
    /// The fitted right-hand side, `Δu` exactly.
    pub rhs: ModalField,
    /// Weighted sup of `Πf − Δu` relative to that of `Πf`.
    pub residual: f64,
    pub truncation: f64,
    pub operator_norm: f64,
    pub per_mode_residual: Vec<f64>,
}

/// Reject weights at the exponent `m − 2 + l` of a decaying mode.
pub fn check_resonance(m: usize, l_max: usize, beta: f64) -> Result<()> {
    for l in 0..=l_max {
        let exponent = (m + l) as f64 - 2.0;
        let gap = (beta - exponent).abs();
        if gap < tol::RESONANCE_GAP {
            return Err(Error::Resonant { beta, exponent, gap });
        }
    }
    Ok(())
}

/// Fit the projected right-hand side mode by mode.
pub fn fit_rhs(f: &WeightedField, p0: f64, nterms: usize) -> Result<(ModalField, f64, Vec<f64>, f64)> {
    let g = &f.grid;
    let (proj, trunc) = project_field(f);
    let exps: Vec<f64> = (0..nterms).map(|k| -(p0 + k as f64)).collect();
    let fit = RadialFit::new(&g.radii, exps.clone())?;
    let mut rhs = ModalField::zero(g, f.ncomp);
    let nm = g.modes();
    let mut per_mode = vec![0.0f64; nm];
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for c in 0..f.ncomp {
        for k in 0..nm {
            let v: Vec<f64> = (0..g.radii.len()).map(|ri| proj[ri][c][k]).collect();
            let wv: Vec<f64> = v.iter().zip(&g.radii).map(|(x, r)| (x * r.powf(f.beta)).abs()).collect();
            scale = scale.max(wv.iter().cloned().fold(0.0, f64::max));
            let (coef, _) = fit.fit(&v);
            let res = (0..g.radii.len())
                .map(|ri| {
                    let r = g.radii[ri];
                    let model: f64 = coef.iter().zip(&exps).map(|(c, e)| c * r.powf(*e)).sum();
                    (model - v[ri]).abs() * r.powf(f.beta)
                })
                .fold(0.0, f64::max);
            per_mode[k] = per_mode[k].max(res);
            worst = worst.max(res);
            rhs.terms[c][k] = coef.iter().zip(&exps).filter(|(c, _)| **c != 0.0).map(|(c, e)| RadialTerm { a: *e, log: false, c: *c }).collect();
        }
    }
    let rel = if scale > 0.0 { worst / scale } else { 0.0 };
    Ok((rhs, rel, per_mode, trunc))
}

/// Invert `Δ` term by term; resonant powers produce `r^a ln r`.
pub fn invert_laplacian(rhs: &ModalField) -> ModalField {
    let m = rhs.m as f64;
    let mut u = rhs.clone();
    for c in 0..rhs.ncomp {
        for (k, ts) in rhs.terms[c].iter().enumerate() {
            let l = rhs.mode_l[k] as f64;
            u.terms[c][k] = ts
                .iter()
                .map(|t| {
                    let a = t.a + 2.0;
                    let d = a * (a + m - 2.0) - l * (l + m - 2.0);
                    if (a - l).abs() < 1e-9 || (a + l + m - 2.0).abs() < 1e-9 {
                        RadialTerm { a, log: true, c: t.c / (2.0 * a + m - 2.0) }
                    } else {
                        RadialTerm { a, log: false, c: t.c / d }
                    }
                })
                .collect();
        }
    }
    u
}

/// Solve `Δu = f` on the exterior grid with `u = O(r^{−β})`, `β = f.beta − 2`.
pub fn solve_poisson_exterior(f: &WeightedField, cfg: &PoissonConfig) -> Result<PoissonSolution> {
    let g = &f.grid;
    let beta = f.beta - 2.0;
    if !(beta > 0.0) {
        return Err(Error::Invalid(format!("weight exponent β = {beta} must be positive")));
    }
    check_resonance(g.m, g.l_max(), beta)?;
    let nterms = cfg.radial_terms.unwrap_or(g.annuli + 1);
    let (rhs, residual, per_mode_residual, truncation) = fit_rhs(f, cfg.p0.unwrap_or(f.beta), nterms)?;
    if let Some(max) = cfg.max_truncation {
        if truncation > max {
            return Err(Error::UnderResolved(format!("angular energy beyond L_max = {} is {truncation:.2e}", g.l_max())));
        }
    }
    let u = invert_laplacian(&rhs);
    let (field, _) = u.on_grid(g, f.alpha, beta, false);
    let nf = weighted_norm(f)?;
    let nu = weighted_norm(&field)?;
    let operator_norm = if nf > 0.0 { nu / nf } else { 0.0 };
    Ok(PoissonSolution { u, field, rhs, residual, truncation, operator_norm, per_mode_residual })
}

/// Coefficients of `r^{2−m−l} Y_k` per component and mode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicTail {
    pub m: usize,
    pub l_max: usize,
    pub ncomp: usize,
    pub mode_l: Vec<usize>,
    pub coeffs: Vec<Vec<f64>>,
    /// Coordinate form of each degree-one mode.
    pub linear: Vec<Option<Vec<f64>>>,
    pub residual: f64,
    pub growing: f64,
}

impl HarmonicTail {
    /// For a field with `m²` components `(i, j)`: `A_ijk` with `h_ij ≈ A_ijk x_k/|x|^m`.
    pub fn a3(&self) -> Result<Tensor> {
        let m = self.m;
        if self.ncomp != m * m {
            return Err(Error::Invalid(format!("tail has {} components, expected {}", self.ncomp, m * m)));
        }
        let mut a = Tensor::zeros(m, 3);
        for (k, lin) in self.linear.iter().enumerate() {
            if let Some(v) = lin {
                for i in 0..m {
                    for j in 0..m {
                        for d in 0..m {
                            let cur = *a.get(&[i, j, d]);
                            a.set(&[i, j, d], cur + self.coeffs[i * m + j][k] * v[d]);
                        }
                    }
                }
            }
        }
        Ok(a)
    }

    /// Coefficient of `x_k/|x|^m` in a scalar tail.
    pub fn linear_coefficients(&self, comp: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (k, lin) in self.linear.iter().enumerate() {
            if let Some(v) = lin {
                for d in 0..self.m {
                    out[d] += self.coeffs[comp][k] * v[d];
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.iter().flatten().all(|c| *c == 0.0)
    }
}

/// Fit a harmonic field by its decaying modes, flagging growing components.
pub fn harmonic_tail_fit(h: &WeightedField, growth_tol: f64) -> Result<HarmonicTail> {
    let g = &h.grid;
    let m = g.m;
    let (proj, _) = project_field(h);
    let nm = g.modes();
    let scale = h.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let rmax = *g.radii.last().expect("radii");
    let mut coeffs = vec![vec![0.0; nm]; h.ncomp];
    let mut residual = 0.0f64;
    let mut growing = 0.0f64;
    let fits: Vec<(usize, RadialFit)> = (0..=g.l_max())
        .map(|l| Ok((l, RadialFit::new(&g.radii, vec![2.0 - (m + l) as f64, l as f64])?)))
        .collect::<Result<_>>()?;
    for c in 0..h.ncomp {
        for k in 0..nm {
            let l = g.basis.modes[k].l;
            let fit = &fits[l].1;
            let v: Vec<f64> = (0..g.radii.len()).map(|ri| proj[ri][c][k]).collect();
            let (coef, res) = fit.fit(&v);
            coeffs[c][k] = coef[0];
            residual = residual.max(res / scale);
            growing = growing.max((coef[1] * rmax.powi(l as i32)).abs() / scale);
        }
    }
    if growing > growth_tol {
        return Err(Error::Fit(format!("non-decaying component of relative size {growing:.3e}")));
    }
    let linear = (0..nm).map(|k| g.basis.linear_coords(k)).collect();
    Ok(HarmonicTail { m, l_max: g.l_max(), ncomp: h.ncomp, mode_l: g.basis.modes.iter().map(|p| p.l).collect(), coeffs, linear, residual, growing })
}
