//! Bianchi residuals of sampled metrics and the Picard iteration for the
//! harmonic map `x + u` into the model.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{decay_slope, weighted_norm, AnnulusGrid, GridConfig, WeightedField};
use super::poisson::{check_resonance, fit_rhs, invert_laplacian, ModalField};
use crate::error::{Error, Result};
use crate::geometry::MetricModel;
use crate::tol;

#[derive(Clone, Debug, Serialize)]
pub struct BianchiReport {
    /// `−∂_j g_ij + ½∂_i g_jj`.
    #[serde(skip)]
    pub residual: WeightedField,
    /// `Σ_a Γ^i_aa`.
    #[serde(skip)]
    pub gamma_trace: WeightedField,
    pub radii: Vec<f64>,
    pub residual_sup: Vec<f64>,
    pub gamma_sup: Vec<f64>,
    pub slope: f64,
    pub gamma_slope: f64,
    /// Roundoff level per radius: a small multiple of `ε sup|∂g|`.
    pub floor: Vec<f64>,
    /// Whether at least two radii of each sup lie above the floor; the slopes
    /// are fitted over those radii only.
    pub residual_resolved: bool,
    pub gamma_resolved: bool,
}

/// Relative size of the roundoff floor on first derivatives of the metric.
const DERIVATIVE_ROUNDOFF: f64 = 1e-13;

pub fn bianchi_residual(model: &MetricModel, grid: &Arc<AnnulusGrid>) -> Result<BianchiReport> {
    if model.m != grid.m {
        return Err(Error::DimMismatch { expected: model.m, got: grid.m });
    }
    if grid.r_inner <= model.inner_radius() {
        return Err(Error::Invalid(format!("grid radius {} inside the model's inner radius", grid.r_inner)));
    }
    let m = model.m;
    let all = WeightedField::sample(grid.clone(), 2 * m + 1, 0.5, 0.0, |x| {
        let mut v: Vec<f64> = model.bianchi_residual(x).iter().copied().collect();
        v.extend(model.gamma_trace(x).iter());
        v.push(model.jet1(x).dh.iter().fold(0.0, |a, d| a.max(d.amax())));
        v
    });
    let split = |off: usize, len: usize| {
        let mut f = WeightedField::zeros(grid.clone(), len, 0.5, 0.0);
        for (i, chunk) in all.values.chunks(2 * m + 1).enumerate() {
            f.values[i * len..(i + 1) * len].copy_from_slice(&chunk[off..off + len]);
        }
        f
    };
    let residual = split(0, m);
    let gamma_trace = split(m, m);
    let floor: Vec<f64> = split(2 * m, 1).sphere_sup().iter().map(|d| DERIVATIVE_ROUNDOFF * d).collect();
    let residual_sup = residual.sphere_sup();
    let gamma_sup = gamma_trace.sphere_sup();
    let fit = |sup: &[f64]| {
        let (r, v): (Vec<f64>, Vec<f64>) =
            grid.radii.iter().zip(sup).zip(&floor).filter(|((_, v), f)| **v > **f).map(|((r, v), _)| (*r, *v)).unzip();
        if r.len() >= 2 {
            (decay_slope(&r, &v), true)
        } else {
            (decay_slope(&grid.radii, sup), false)
        }
    };
    let (slope, residual_resolved) = fit(&residual_sup);
    let (gamma_slope, gamma_resolved) = fit(&gamma_sup);
    Ok(BianchiReport {
        radii: grid.radii.clone(),
        residual,
        gamma_trace,
        residual_sup,
        gamma_sup,
        slope,
        gamma_slope,
        floor,
        residual_resolved,
        gamma_resolved,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct HarmonicMapConfig {
    pub grid: GridConfig,
    /// First inner radius tried; defaults to `max(4 r_model, 4)`.
    pub r_start: Option<f64>,
    pub epsilon: f64,
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub max_doublings: usize,
    pub target_contraction: f64,
}

impl Default for HarmonicMapConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            r_start: None,
            epsilon: tol::DEFAULT_EPSILON,
            alpha: 0.5,
            max_iter: tol::PICARD_MAX_ITER,
            tol: tol::PICARD_RESIDUAL,
            max_doublings: 6,
            target_contraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Attempt {
    pub r_prime: f64,
    pub contraction: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HarmonicMapReport {
    pub r_prime: f64,
    pub n_tilde: f64,
    /// Weight exponent of `u`: `ñ − 2 − ε`.
    pub beta: f64,
    pub attempts: Vec<Attempt>,
    /// Relative discrete residual per iteration.
    pub residuals: Vec<f64>,
    pub contraction: f64,
    pub iterations: usize,
    pub u: ModalField,
    #[serde(skip)]
    pub grid: Option<Arc<AnnulusGrid>>,
    pub u_norm: f64,
    /// Weighted sup of the tension `Δφ + Γ(φ)∂φ∂φ` for `φ = id` and `φ = id + u`.
    pub tension_before: f64,
    pub tension_after: f64,
    /// Angular energy of the final right-hand side beyond `L_max`.
    pub truncation: f64,
    /// Radial fit error of the final right-hand side.
    pub fit_error: f64,
}

/// `F[u]_i = −Γ^i_jk(x + u)(δ_ja + ∂_a u_j)(δ_ka + ∂_a u_k)` on the grid.
fn nonlinearity(model: &MetricModel, grid: &Arc<AnnulusGrid>, u: &ModalField, beta_f: f64) -> Result<WeightedField> {
    let m = model.m;
    let nodes = grid.nodes();
    let (uf, du) = u.on_grid(grid, 0.5, 0.0, true);
    let r_min = model.inner_radius();
    let out: Vec<Option<Vec<f64>>> = (0..grid.radii.len() * nodes)
        .into_par_iter()
        .map(|p| {
            let x = grid.point(p / nodes, p % nodes);
            let y: Vec<f64> = x.iter().zip(&uf.values[p * m..(p + 1) * m]).map(|(a, b)| a + b).collect();
            if y.iter().map(|v| v * v).sum::<f64>().sqrt() <= r_min {
                return None;
            }
            let gam = model.christoffel(&y);
            let jac = |j: usize, a: usize| (if j == a { 1.0 } else { 0.0 }) + du[(p * m + j) * m + a];
            Some(
                (0..m)
                    .map(|i| {
                        let mut s = 0.0;
                        for j in 0..m {
                            for k in 0..m {
                                let g = gam[(i * m + j) * m + k];
                                if g != 0.0 {
                                    s += g * (0..m).map(|a| jac(j, a) * jac(k, a)).sum::<f64>();
                                }
                            }
                        }
                        -s
                    })
                    .collect(),
            )
        })
        .collect();
    let mut f = WeightedField::zeros(grid.clone(), m, 0.5, beta_f);
    for (p, v) in out.into_iter().enumerate() {
        let v = v.ok_or(Error::Diverged { iterations: 0, residual: f64::INFINITY })?;
        f.values[p * m..(p + 1) * m].copy_from_slice(&v);
    }
    Ok(f)
}

struct Run {
    u: ModalField,
    rhs_prev: ModalField,
    residuals: Vec<f64>,
    contraction: f64,
    converged: bool,
    truncation: f64,
    fit_error: f64,
}

fn picard(model: &MetricModel, grid: &Arc<AnnulusGrid>, n_tilde: f64, cfg: &HarmonicMapConfig) -> Result<Run> {
    let m = model.m;
    let beta_f = n_tilde - cfg.epsilon;
    let nterms = grid.annuli + 1;
    let mut u = ModalField::zero(grid, m);
    let mut rhs_prev = ModalField::zero(grid, m);
    let mut residuals = Vec::new();
    let mut scale = 0.0;
    let mut contraction = 0.0f64;
    let (mut truncation, mut fit_error) = (0.0, 0.0);
    for it in 0..=cfg.max_iter {
        let f = nonlinearity(model, grid, &u, beta_f)?;
        let (rhs, fit_rel, _, trunc) = fit_rhs(&f, n_tilde, nterms)?;
        truncation = trunc;
        fit_error = fit_rel;
        let (d, _) = rhs.sub(&rhs_prev).on_grid(grid, cfg.alpha, beta_f, false);
        let diff = d.weighted_sup();
        if it == 0 {
            scale = diff;
            if scale == 0.0 {
                return Ok(Run { u, rhs_prev: rhs, residuals: vec![0.0], contraction: 0.0, converged: true, truncation, fit_error });
            }
        }
        let res = diff / scale;
        if let Some(&prev) = residuals.last() {
            // ratios below the rounding floor carry no information
            if prev > 1e-13 {
                contraction = contraction.max(res / prev);
            }
        }
        residuals.push(res);
        if res <= cfg.tol {
            return Ok(Run { u, rhs_prev, residuals, contraction, converged: true, truncation, fit_error });
        }
        if !res.is_finite() || res > 1e3 || contraction >= 1.0 {
            return Ok(Run { u, rhs_prev, residuals, contraction: contraction.max(1.0), converged: false, truncation, fit_error });
        }
        u = invert_laplacian(&rhs);
        rhs_prev = rhs;
    }
    Ok(Run { u, rhs_prev, residuals, contraction, converged: false, truncation, fit_error })
}

/// Solve `Δu = F[u]` by Picard iteration, doubling the inner radius until the
/// measured contraction drops below the target.
pub fn harmonic_map_correction(model: &MetricModel, n_tilde: f64, cfg: &HarmonicMapConfig) -> Result<HarmonicMapReport> {
    let m = model.m;
    if !(n_tilde > 2.0) {
        return Err(Error::Invalid(format!("decay exponent ñ = {n_tilde} must exceed 2")));
    }
    let beta = n_tilde - 2.0 - cfg.epsilon;
    let r0 = cfg.r_start.unwrap_or_else(|| (4.0 * model.inner_radius()).max(4.0));
    let base = Arc::new(AnnulusGrid::new(m, &GridConfig { r_inner: r0, ..cfg.grid })?);
    check_resonance(m, base.l_max(), beta)?;

    // the Γ-trace must decay at least like r^{−ñ}
    let pre = bianchi_residual(model, &base)?;
    if pre.gamma_resolved && pre.gamma_slope > -n_tilde + 0.25 {
        return Err(Error::Constraint(format!("measured Γ-trace decay {:.3} is slower than ñ = {n_tilde}", -pre.gamma_slope)));
    }

    let mut attempts = Vec::new();
    for s in 0..=cfg.max_doublings {
        let r = r0 * 2f64.powi(s as i32);
        let grid = Arc::new(base.with_inner_radius(r));
        let run = match picard(model, &grid, n_tilde, cfg) {
            Ok(run) => run,
            Err(Error::Diverged { .. }) => {
                attempts.push(Attempt { r_prime: r, contraction: f64::INFINITY, converged: false });
                continue;
            }
            Err(e) => return Err(e),
        };
        attempts.push(Attempt { r_prime: r, contraction: run.contraction, converged: run.converged });
        if !(run.converged && run.contraction < cfg.target_contraction) {
            continue;
        }
        let (uf, _) = run.u.on_grid(&grid, cfg.alpha, beta, false);
        let u_norm = weighted_norm(&uf)?;
        let f0 = nonlinearity(model, &grid, &ModalField::zero(&grid, m), n_tilde - cfg.epsilon)?;
        let f1 = nonlinearity(model, &grid, &run.u, n_tilde - cfg.epsilon)?;
        let (lap, _) = run.rhs_prev.on_grid(&grid, cfg.alpha, n_tilde - cfg.epsilon, false);
        let mut tension = f1.clone();
        for (t, l) in tension.values.iter_mut().zip(&lap.values) {
            *t = l - *t;
        }
        return Ok(HarmonicMapReport {
            r_prime: r,
            n_tilde,
            beta,
            attempts,
            iterations: run.residuals.len() - 1,
            residuals: run.residuals,
            contraction: run.contraction,
            u: run.u,
            grid: Some(grid),
            u_norm,
            tension_before: f0.weighted_sup(),
            tension_after: tension.weighted_sup(),
            truncation: run.truncation,
            fit_error: run.fit_error,
        });
    }
    let worst = attempts.iter().map(|a| a.contraction).fold(f64::INFINITY, f64::min);
    if attempts.iter().any(|a| a.contraction < 1.0) {
        let last = attempts.last().expect("attempt");
        return Err(Error::Diverged { iterations: cfg.max_iter, residual: last.contraction });
    }
    Err(Error::NoContraction { factor: worst })
}

#[derive(Clone, Debug, Serialize)]
pub struct CompositionReport {
    pub norm_f: f64,
    pub norm_composed: f64,
    pub ratio: f64,
    /// `sup |u|/|x|`.
    pub u_proxy: f64,
    pub bound: f64,
    pub flagged: bool,
}

/// Compare `‖f∘(id + u)‖` with `‖f‖` at weight `l`; flags ratios above `2^l`
/// or points where `|x + u| < |x|/2`.
pub fn composition_bound_check(
    grid: &Arc<AnnulusGrid>,
    l: f64,
    alpha: f64,
    f: impl Fn(&[f64]) -> f64 + Sync,
    u: impl Fn(&[f64]) -> Vec<f64> + Sync,
) -> Result<CompositionReport> {
    let plain = WeightedField::sample(grid.clone(), 1, alpha, l, |x| vec![f(x)]);
    let shifted = WeightedField::sample(grid.clone(), 2, alpha, l, |x| {
        let d = u(x);
        let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ry = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let du = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        vec![if ry > 0.0 { f(&y) } else { f64::INFINITY }, (du / r).max(if ry < 0.5 * r { f64::INFINITY } else { 0.0 })]
    });
    let mut composed = WeightedField::zeros(grid.clone(), 1, alpha, l);
    let mut u_proxy = 0.0f64;
    for (i, pair) in shifted.values.chunks(2).enumerate() {
        composed.values[i] = pair[0];
        u_proxy = u_proxy.max(pair[1]);
    }
    let norm_f = weighted_norm(&plain)?;
    let norm_composed = if composed.values.iter().all(|v| v.is_finite()) { weighted_norm(&composed)? } else { f64::INFINITY };
    let ratio = if norm_f > 0.0 { norm_composed / norm_f } else if norm_composed == 0.0 { 1.0 } else { f64::INFINITY };
    let bound = 2f64.powf(l);
    Ok(CompositionReport { norm_f, norm_composed, ratio, u_proxy, bound, flagged: !(ratio <= bound) || !u_proxy.is_finite() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::spaces::{Algebra, SpaceId};
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_grid(m: usize, r: f64) -> Arc<AnnulusGrid> {
        Arc::new(AnnulusGrid::new(m, &GridConfig { r_inner: r, annuli: 4, sub: 2, l_max: Some(2) }).unwrap())
    }

    #[test]
    fn flat_needs_no_correction() {
        let cfg = HarmonicMapConfig { grid: GridConfig { l_max: Some(2), annuli: 4, ..Default::default() }, ..Default::default() };
        let rep = harmonic_map_correction(&MetricModel::flat(3), 5.0, &cfg).unwrap();
        assert!(rep.u.is_zero());
        assert_eq!(rep.tension_after, 0.0);
    }

    #[test]
    fn y1_term_decays_slower() {
        let m = 3;
        let b = Tensor::vector(vec![0.2, -0.1, 0.3]);
        let a3 = Tensor::delta(m).outer(&b).unwrap();
        let model = MetricModel::synthetic(crate::geometry::Synthetic {
            a3,
            a4: Tensor::zeros(m, 4),
            tail: Tensor::zeros(m, 2),
            cap: 1.0,
        })
        .unwrap();
        let rep = bianchi_residual(&model, &small_grid(m, 4.0)).unwrap();
        assert!((rep.slope + m as f64).abs() < 0.05, "{}", rep.slope);
    }

    #[test]
    fn tail_model_decays_at_m_plus_2() {
        let m = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Algebra::new(m).unwrap().space(SpaceId::W).basis().iter().fold(Tensor::zeros(m, 4), |acc, b| &acc + &b.scale(rng.gen_range(-1.0..1.0)));
        let tail = Tensor::from_fn(m, 2, |x| if x[0] == x[1] { 0.3 } else { 0.1 });
        let model = MetricModel::synthetic_weyl(&w, Some(tail), 1.0).unwrap();
        let rep = bianchi_residual(&model, &small_grid(m, 4.0)).unwrap();
        assert!(rep.slope <= -(m as f64 + 2.0) + 0.2, "{}", rep.slope);
    }

    #[test]
    fn pure_weyl_residual_sits_at_roundoff() {
        let m = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Algebra::new(m).unwrap().space(SpaceId::W).basis().iter().fold(Tensor::zeros(m, 4), |acc, b| &acc + &b.scale(rng.gen_range(-1.0..1.0)));
        let model = MetricModel::synthetic_weyl(&w, None, 1.0).unwrap();
        let rep = bianchi_residual(&model, &small_grid(m, 4.0)).unwrap();
        assert!(!rep.residual_resolved && !rep.gamma_resolved);
        assert!(rep.residual_sup.iter().zip(&rep.floor).all(|(v, f)| v <= f));
    }

    #[test]
    fn composition_identity_and_blowup() {
        let g = small_grid(3, 1.0);
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().powf(-1.0);
        let same = composition_bound_check(&g, 2.0, 0.5, f, |_| vec![0.0; 3]).unwrap();
        assert!((same.ratio - 1.0).abs() < 1e-14 && !same.flagged);
        let small = composition_bound_check(&g, 2.0, 0.5, f, |x| vec![0.1 * x[1], 0.05, 0.0]).unwrap();
        assert!(!small.flagged && small.ratio <= 4.0);
        let bad = composition_bound_check(&g, 2.0, 0.5, f, |x| x.iter().map(|v| -0.9 * v).collect()).unwrap();
        assert!(bad.flagged);
    }
}
