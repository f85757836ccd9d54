//! Least-squares fit of the order m−1 and m coefficients of `g − δ` on dyadic
//! annuli, with decaying nuisance terms absorbing the next few orders.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::expansion::{Gauge, InfinityExpansion};
use crate::error::{Error, Result};
use crate::geometry::MetricModel;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Inner radius of the first annulus; defaults to `max(16 r_model, 8)`.
    pub r0: Option<f64>,
    pub annuli: usize,
    /// Orders m+1 ..= m+K are modeled as nuisance terms.
    pub nuisance_orders: usize,
    /// Angular degree of the nuisance terms; a translation puts degree k+2 at order m+k.
    pub nuisance_degree: usize,
    pub samples_per_annulus: Option<usize>,
    pub seed: u64,
    pub gauge: Gauge,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { r0: None, annuli: 3, nuisance_orders: 4, nuisance_degree: 6, samples_per_annulus: None, seed: 0, gauge: Gauge::Unknown }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub expansion: InfinityExpansion,
    pub r0: f64,
    /// Max residual of each annulus, scaled by `r^m`.
    pub annulus_residuals: Vec<f64>,
    /// Decay order of the unmodeled remainder; `None` when at the noise floor.
    pub empirical_order: Option<f64>,
    pub condition: f64,
    pub samples: usize,
}

/// Sorted index tuples of length `d` (monomials of degree `d`).
fn monomials(m: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(d);
    fn rec(m: usize, d: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for k in start..m {
            cur.push(k);
            rec(m, d, k, cur, out);
            cur.pop();
        }
    }
    rec(m, d, 0, &mut cur, &mut out);
    out
}

struct Basis {
    m: usize,
    /// (monomial, radial power) for every column; the first m are the order m−1
    /// block, the next m(m+1)/2 the order m block.
    cols: Vec<(Vec<usize>, i32)>,
}

impl Basis {
    fn new(m: usize, k: usize, deg: usize) -> Self {
        let mi = m as i32;
        let mut cols: Vec<(Vec<usize>, i32)> = monomials(m, 1).into_iter().map(|mon| (mon, mi)).collect();
        cols.extend(monomials(m, 2).into_iter().map(|mon| (mon, mi + 2)));
        for n in (mi + 1)..=(mi + k as i32) {
            for d in [deg.saturating_sub(1), deg] {
                cols.extend(monomials(m, d).into_iter().map(|mon| (mon, n + d as i32)));
            }
        }
        Self { m, cols }
    }

    fn row(&self, x: &[f64]) -> Vec<f64> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.cols.iter().map(|(mon, p)| mon.iter().map(|&k| x[k]).product::<f64>() * r.powi(-p)).collect()
    }

    fn n_a3(&self) -> usize {
        self.m
    }
}

fn sample_annulus(m: usize, r: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let dir: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rad = r * 2f64.powf(rng.gen_range(0.0..1.0));
            dir.iter().map(|v| v * rad / len).collect()
        })
        .collect()
}

/// Fit `A3`, `A4` from samples of `g − δ` on the annuli `[r, 2r], [2r, 4r], ..`.
pub fn fit_expansion(model: &MetricModel, cfg: &FitConfig) -> Result<FitReport> {
    let m = model.m;
    if cfg.annuli < 3 {
        return Err(Error::Fit(format!("need at least 3 annuli, got {}", cfg.annuli)));
    }
    let r0 = cfg.r0.unwrap_or_else(|| (16.0 * model.inner_radius()).max(8.0));
    if !(r0 > model.inner_radius()) {
        return Err(Error::Fit(format!("first annulus r = {r0} is inside the model's inner radius")));
    }
    let basis = Basis::new(m, cfg.nuisance_orders, cfg.nuisance_degree);
    let p = basis.cols.len();
    let per = cfg.samples_per_annulus.unwrap_or(0).max((2 * m) * (2 * m)).max(2 * p);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points: Vec<(usize, Vec<f64>)> = (0..cfg.annuli)
        .flat_map(|j| sample_annulus(m, r0 * 2f64.powi(j as i32), per, &mut rng).into_iter().map(move |x| (j, x)))
        .collect();
    let comps: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = points
        .par_iter()
        .map(|(_, x)| {
            let h = model.perturbation(x);
            (basis.row(x), comps.iter().map(|&(i, j)| h[(i, j)]).collect())
        })
        .collect();
    let n = rows.len();
    let mut a = DMatrix::from_fn(n, p, |r, c| rows[r].0[c]);
    let rhs = DMatrix::from_fn(n, comps.len(), |r, c| rows[r].1[c]);
    let scales: Vec<f64> = (0..p).map(|c| a.column(c).norm().max(f64::MIN_POSITIVE)).collect();
    for (c, s) in scales.iter().enumerate() {
        a.column_mut(c).unscale_mut(*s);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin;
    if !condition.is_finite() || condition > 1e13 {
        return Err(Error::Fit(format!("design matrix condition {condition:.3e}")));
    }
    let mut coef = svd.solve(&rhs, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    for (c, s) in scales.iter().enumerate() {
        coef.row_mut(c).unscale_mut(*s);
        a.column_mut(c).scale_mut(*s);
    }
    let resid = &a * &coef - &rhs;
    let mut annulus_residuals = vec![0.0f64; cfg.annuli];
    for (row, (j, x)) in points.iter().enumerate() {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e = resid.row(row).amax() * r.powi(m as i32);
        annulus_residuals[*j] = annulus_residuals[*j].max(e);
    }

    let na3 = basis.n_a3();
    let pair = |c: usize, i: usize, j: usize| {
        let (a, b) = (i.min(j), i.max(j));
        let k = comps.iter().position(|&q| q == (a, b)).expect("component");
        coef[(c, k)]
    };
    let a3 = Tensor::from_fn(m, 3, |x| pair(x[2], x[0], x[1]));
    let quad = monomials(m, 2);
    let a4 = Tensor::from_fn(m, 4, |x| {
        let (k, l) = (x[2].min(x[3]), x[2].max(x[3]));
        let c = na3 + quad.iter().position(|q| q[0] == k && q[1] == l).expect("monomial");
        let v = pair(c, x[0], x[1]);
        if k == l {
            v
        } else {
            0.5 * v
        }
    });

    // remainder decay between the first and last annulus
    let signal = rhs.amax() * r0.powi(m as i32);
    let floor = 1e-11 * signal.max(f64::MIN_POSITIVE);
    let modeled = (m + cfg.nuisance_orders + 1) as f64;
    let (first, last) = (annulus_residuals[0], annulus_residuals[cfg.annuli - 1]);
    let empirical_order = if last > floor && first > floor {
        Some(m as f64 + (first / last).log2() / (cfg.annuli - 1) as f64)
    } else {
        None
    };
    let remainder_order = empirical_order.map_or(modeled, |t| t.clamp(m as f64 + 1e-3, modeled));
    let expansion = InfinityExpansion { m, a3, a4, remainder_order, gauge: cfg.gauge };
    Ok(FitReport { expansion, r0, annulus_residuals, empirical_order, condition, samples: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::maps;
    use crate::geometry::Synthetic;
    use crate::infinity::DecayingChange;

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(4, 2).len(), 10);
        assert_eq!(monomials(3, 4).len(), 15);
        assert_eq!(monomials(5, 0).len(), 1);
    }

    #[test]
    fn flat_fits_to_zero() {
        let rep = fit_expansion(&MetricModel::flat(3), &FitConfig::default()).unwrap();
        assert!(rep.expansion.a3.is_zero() && rep.expansion.a4.is_zero());
    }

    #[test]
    fn synthetic_coefficients_recovered() {
        let m = 3;
        let b = Tensor::vector(vec![0.3, -0.1, 0.2]);
        let a3 = maps::psi3(&b).unwrap();
        let bm = Tensor::from_fn(m, 2, |x| (x[0] * 2 + x[1]) as f64 * 0.1 - 0.3);
        let a4 = maps::psi4(&bm).unwrap();
        let tail = Tensor::from_fn(m, 2, |x| if x[0] == x[1] { 0.2 } else { 0.05 });
        let model = MetricModel::synthetic(Synthetic { a3: a3.clone(), a4: a4.clone(), tail, cap: 1.0 }).unwrap();
        let rep = fit_expansion(&model, &FitConfig::default()).unwrap();
        assert!(rep.expansion.a3.dist(&a3) < 1e-8, "{}", rep.expansion.a3.dist(&a3));
        assert!(rep.expansion.a4.dist(&a4) < 1e-8, "{}", rep.expansion.a4.dist(&a4));
    }

    #[test]
    fn pulled_back_flat_fits_psi4() {
        let m = 4;
        let bm = Tensor::from_fn(m, 2, |x| ((x[0] + 2 * x[1]) % 3) as f64 * 0.2 - 0.2);
        let model = MetricModel::pulled_back(MetricModel::flat(m), DecayingChange::with_b_mat(m, bm.clone())).unwrap();
        let rep = fit_expansion(&model, &FitConfig::default()).unwrap();
        let want = maps::psi4(&bm).unwrap();
        assert!(rep.expansion.a4.dist(&want) < 1e-8, "{}", rep.expansion.a4.dist(&want));
        assert!(rep.expansion.a3.max_abs() < 1e-8);
    }
}
