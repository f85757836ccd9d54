//! Dyadic annulus grids, sampled fields and the weighted Hölder norm proxy.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::harmonics::HarmonicBasis;
use super::quadrature::SphereQuadrature;
use crate::error::{Error, Result};
use crate::tol;

/// Spheres of radius `R·2^{s/sub}`, `s = 0..J·sub`, each carrying the same
/// product quadrature.
#[derive(Clone, Debug, Serialize)]
pub struct AnnulusGrid {
    pub m: usize,
    pub r_inner: f64,
    pub annuli: usize,
    pub sub: usize,
    pub radii: Vec<f64>,
    pub quad: SphereQuadrature,
    #[serde(skip)]
    pub basis: HarmonicBasis,
    #[serde(skip)]
    neighbors: Vec<Vec<usize>>,
    /// `P_k(ω_n)` at `[n * modes + k]`.
    #[serde(skip)]
    ylm: Vec<f64>,
    /// `∂_d P_k(ω_n)` at `[(n * modes + k) * m + d]`.
    #[serde(skip)]
    ygrad: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub r_inner: f64,
    pub annuli: usize,
    pub sub: usize,
    /// Defaults to 8 for m = 3, 4 and 2 above.
    pub l_max: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { r_inner: 1.0, annuli: 6, sub: 2, l_max: None }
    }
}

pub fn default_l_max(m: usize) -> usize {
    if m <= 4 {
        tol::DEFAULT_L_MAX
    } else {
        tol::HIGH_DIM_L_MAX
    }
}

impl AnnulusGrid {
    pub fn new(m: usize, cfg: &GridConfig) -> Result<Self> {
        if !(cfg.r_inner > 0.0) || !cfg.r_inner.is_finite() {
            return Err(Error::Invalid(format!("inner radius {} must be positive", cfg.r_inner)));
        }
        if cfg.annuli < 3 {
            return Err(Error::UnderResolved(format!("need at least 3 annuli, got {}", cfg.annuli)));
        }
        if cfg.sub == 0 {
            return Err(Error::Invalid("sub must be positive".into()));
        }
        let l_max = cfg.l_max.unwrap_or_else(|| default_l_max(m));
        // products of two band-limited fields stay exactly integrable
        let quad = SphereQuadrature::new(m, 2 * l_max + 4)?;
        let basis = HarmonicBasis::new(m, l_max, &quad)?;
        let radii = (0..=cfg.annuli * cfg.sub).map(|s| cfg.r_inner * 2f64.powf(s as f64 / cfg.sub as f64)).collect();
        let neighbors = nearest(&quad.nodes, 2 * (m - 1));
        let nm = basis.len();
        let (vals, grads) = basis.eval_points(&quad.nodes);
        let mut ylm = vec![0.0; quad.len() * nm];
        let mut ygrad = vec![0.0; quad.len() * nm * m];
        for n in 0..quad.len() {
            for k in 0..nm {
                ylm[n * nm + k] = vals[(n, k)];
                for d in 0..m {
                    ygrad[(n * nm + k) * m + d] = grads[d][(n, k)];
                }
            }
        }
        Ok(Self { m, r_inner: cfg.r_inner, annuli: cfg.annuli, sub: cfg.sub, radii, quad, basis, neighbors, ylm, ygrad })
    }

    /// Same angular data on the radii `r·2^{s/sub}`.
    pub fn with_inner_radius(&self, r: f64) -> Self {
        let mut g = self.clone();
        g.radii = self.radii.iter().map(|x| x / self.r_inner * r).collect();
        g.r_inner = r;
        g
    }

    pub fn nodes(&self) -> usize {
        self.quad.len()
    }

    pub fn modes(&self) -> usize {
        self.basis.len()
    }

    pub fn l_max(&self) -> usize {
        self.basis.l_max
    }

    pub fn point(&self, ri: usize, n: usize) -> Vec<f64> {
        self.quad.nodes[n].iter().map(|v| v * self.radii[ri]).collect()
    }

    pub fn y(&self, n: usize, k: usize) -> f64 {
        self.ylm[n * self.modes() + k]
    }

    pub fn ygrad(&self, n: usize, k: usize) -> &[f64] {
        let i = (n * self.modes() + k) * self.m;
        &self.ygrad[i..i + self.m]
    }

    /// Radius indices belonging to dyadic annulus `j`.
    pub fn annulus(&self, j: usize) -> std::ops::RangeInclusive<usize> {
        j * self.sub..=(j + 1) * self.sub
    }

    /// Quadrature projection of samples `f[n]` on one sphere onto the harmonics.
    pub fn project(&self, f: impl Fn(usize) -> f64) -> Vec<f64> {
        let nm = self.modes();
        let mut c = vec![0.0; nm];
        for (n, w) in self.quad.weights.iter().enumerate() {
            let v = w * f(n);
            if v != 0.0 {
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck += v * self.ylm[n * nm + k];
                }
            }
        }
        c
    }
}

fn nearest(nodes: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    nodes
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<(f64, usize)> = nodes
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, q)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0));
            // coincident nodes at the poles carry no angular information
            d.into_iter().filter(|(dist, _)| *dist > 1e-24).take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Samples of a scalar or vector field on a grid, tagged with the Hölder
/// exponent `α` and weight exponent `β` of the space it is measured in.
#[derive(Clone, Debug, Serialize)]
pub struct WeightedField {
    #[serde(skip)]
    pub grid: Arc<AnnulusGrid>,
    pub ncomp: usize,
    pub alpha: f64,
    pub beta: f64,
    pub radii: Vec<f64>,
    /// `[(ri * nodes + n) * ncomp + c]`.
    pub values: Vec<f64>,
}

impl WeightedField {
    pub fn zeros(grid: Arc<AnnulusGrid>, ncomp: usize, alpha: f64, beta: f64) -> Self {
        let len = grid.radii.len() * grid.nodes() * ncomp;
        Self { radii: grid.radii.clone(), grid, ncomp, alpha, beta, values: vec![0.0; len] }
    }

    pub fn sample(grid: Arc<AnnulusGrid>, ncomp: usize, alpha: f64, beta: f64, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Self {
        let nodes = grid.nodes();
        let values: Vec<f64> = (0..grid.radii.len() * nodes)
            .into_par_iter()
            .flat_map_iter(|p| {
                let v = f(&grid.point(p / nodes, p % nodes));
                assert_eq!(v.len(), ncomp, "field component count");
                v
            })
            .collect();
        Self { radii: grid.radii.clone(), grid, ncomp, alpha, beta, values }
    }

    pub fn at(&self, ri: usize, n: usize) -> &[f64] {
        let i = (ri * self.grid.nodes() + n) * self.ncomp;
        &self.values[i..i + self.ncomp]
    }

    pub fn component(&self, ri: usize, n: usize, c: usize) -> f64 {
        self.values[(ri * self.grid.nodes() + n) * self.ncomp + c]
    }

    pub fn with_exponents(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    /// Pointwise product of a scalar field with another field.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.ncomp != 1 || !Arc::ptr_eq(&self.grid, &other.grid) {
            return Err(Error::Invalid("product needs a scalar field on the same grid".into()));
        }
        let nc = other.ncomp;
        let values = other.values.iter().enumerate().map(|(i, v)| v * self.values[i / nc]).collect();
        Ok(Self { values, beta: self.beta + other.beta, alpha: self.alpha.min(other.alpha), ..other.clone() })
    }

    /// Largest `r^β |f|` over each dyadic annulus.
    pub fn weighted_sup(&self) -> f64 {
        let nodes = self.grid.nodes();
        (0..self.radii.len())
            .map(|ri| {
                let w = self.radii[ri].powf(self.beta);
                (0..nodes).map(|n| norm(self.at(ri, n))).fold(0.0, f64::max) * w
            })
            .fold(0.0, f64::max)
    }

    /// Max over spheres of `|f|`, one entry per radius.
    pub fn sphere_sup(&self) -> Vec<f64> {
        let nodes = self.grid.nodes();
        (0..self.radii.len()).map(|ri| (0..nodes).map(|n| norm(self.at(ri, n))).fold(0.0, f64::max)).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub norm: f64,
    /// `r_j^β · ‖f∘S_{r_j}‖` per dyadic annulus.
    pub per_annulus: Vec<f64>,
}

/// Discrete proxy for `sup_r r^β ‖f∘S_r‖_{C^α(B₂∖B₁)}`: sup norm, radial
/// divided differences up to order ⌊α⌋, angular first differences and a Hölder
/// quotient of order α − ⌊α⌋ on grid pairs.
pub fn weighted_norm(f: &WeightedField) -> Result<f64> {
    weighted_norm_report(f).map(|r| r.norm)
}

pub fn weighted_norm_report(f: &WeightedField) -> Result<NormReport> {
    let g = &f.grid;
    let alpha = f.alpha;
    if !(alpha > 0.0) || alpha.fract() == 0.0 {
        return Err(Error::Invalid(format!("Hölder exponent {alpha} must be positive and non-integer")));
    }
    let q = alpha.floor() as usize;
    let gamma = alpha - q as f64;
    if g.sub < q + 1 {
        return Err(Error::UnderResolved(format!("{} radial nodes per annulus cannot resolve α = {alpha}", g.sub + 1)));
    }
    let nodes = g.nodes();
    let per_annulus: Vec<f64> = (0..g.annuli)
        .into_par_iter()
        .map(|j| {
            let rj = g.radii[j * g.sub];
            let idx: Vec<usize> = g.annulus(j).collect();
            let t: Vec<f64> = idx.iter().map(|&ri| g.radii[ri] / rj).collect();
            let mut c0 = 0.0f64;
            let mut ang = 0.0f64;
            let mut ders = vec![0.0f64; q + 1];
            let mut hold = 0.0f64;
            for n in 0..nodes {
                for (s, &ri) in idx.iter().enumerate() {
                    let v = f.at(ri, n);
                    c0 = c0.max(norm(v));
                    for &nb in &g.neighbors[n] {
                        let d = t[s] * diff_nodes(&g.quad.nodes[n], &g.quad.nodes[nb]);
                        let dv = diff(v, f.at(ri, nb));
                        if q == 0 {
                            hold = hold.max(dv / d.powf(gamma));
                        } else {
                            ang = ang.max(dv / d);
                        }
                    }
                }
                // radial divided differences, scaled by k! to approximate derivatives
                let mut dd: Vec<Vec<f64>> = idx.iter().map(|&ri| f.at(ri, n).to_vec()).collect();
                let mut fact = 1.0;
                let mut centers: Vec<f64> = t.clone();
                for k in 1..=q {
                    fact *= k as f64;
                    dd = (0..dd.len() - 1)
                        .map(|i| dd[i + 1].iter().zip(&dd[i]).map(|(a, b)| (a - b) / (t[i + k] - t[i])).collect())
                        .collect();
                    centers = (0..centers.len() - 1).map(|i| 0.5 * (centers[i] + centers[i + 1])).collect();
                    for v in &dd {
                        ders[k] = ders[k].max(fact * norm(v));
                    }
                }
                let top: Vec<Vec<f64>> = if q == 0 { dd.clone() } else { dd.iter().map(|v| v.iter().map(|x| x * fact).collect()).collect() };
                for i in 0..top.len().saturating_sub(1) {
                    let d = (centers[i + 1] - centers[i]).abs();
                    hold = hold.max(diff(&top[i + 1], &top[i]) / d.powf(gamma));
                }
            }
            rj.powf(f.beta) * (c0 + ang + ders.iter().sum::<f64>() + hold)
        })
        .collect();
    let norm = per_annulus.iter().cloned().fold(0.0, f64::max);
    Ok(NormReport { norm, per_annulus })
}

fn diff_nodes(a: &[f64], b: &[f64]) -> f64 {
    diff(a, b)
}

/// Least-squares slope of `log sup|f|` against `log r` over the spheres.
pub fn decay_slope(radii: &[f64], sups: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = radii.iter().zip(sups).filter(|(_, s)| **s > 0.0).map(|(r, s)| (r.ln(), s.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NEG_INFINITY;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize, annuli: usize) -> Arc<AnnulusGrid> {
        Arc::new(AnnulusGrid::new(m, &GridConfig { r_inner: 1.0, annuli, sub: 2, l_max: Some(2) }).unwrap())
    }

    fn radial(grid: &Arc<AnnulusGrid>, p: f64, beta: f64) -> WeightedField {
        WeightedField::sample(grid.clone(), 1, 0.5, beta, |x| vec![x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(p)])
    }

    #[test]
    fn grid_radii_and_weights() {
        let g = grid(4, 3);
        assert_eq!(g.radii.len(), 7);
        assert!(g.radii.windows(2).all(|w| w[1] > w[0]));
        assert!((g.quad.weights.iter().sum::<f64>() - crate::geometry::sphere_area(4)).abs() < 1e-10);
    }

    #[test]
    fn decaying_power_has_bounded_norm() {
        let a = weighted_norm(&radial(&grid(3, 3), -1.5, 1.5)).unwrap();
        let b = weighted_norm(&radial(&grid(3, 6), -1.5, 1.5)).unwrap();
        assert!(a >= 1.0 && (a - b).abs() < 1e-9 * a);
    }

    #[test]
    fn slower_power_diverges_geometrically() {
        let rep = weighted_norm_report(&radial(&grid(3, 6), -0.5, 1.5)).unwrap();
        let p = &rep.per_annulus;
        assert!((p[5] / p[4] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let g = grid(3, 3);
        assert_eq!(weighted_norm(&WeightedField::zeros(g, 3, 0.5, 2.0)).unwrap(), 0.0);
    }

    #[test]
    fn integer_alpha_rejected_and_high_alpha_needs_nodes() {
        let g = grid(3, 3);
        assert!(weighted_norm(&radial(&g, -1.0, 1.0).with_exponents(1.0, 1.0)).is_err());
        assert!(matches!(weighted_norm(&radial(&g, -1.0, 1.0).with_exponents(2.5, 1.0)), Err(Error::UnderResolved(_))));
    }
}
