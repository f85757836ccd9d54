//! Renormalized volume of an end, mean curvature of coordinate spheres and the
//! Ros gap `∫(1/H)dA − m·V`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{unit_ball_volume, MetricModel};
use crate::error::{Error, Result};
use crate::exterior::{decay_slope, gauss_gegenbauer, SphereQuadrature};
use crate::infinity::DecayingChange;

/// Cauchy constants below this are treated as exact zeros.
const CAUCHY_FLOOR: f64 = 1e-9;

/// Pointwise deviations below this are roundoff and left out of slope fits.
const DEVIATION_FLOOR: f64 = 1e-14;

/// Log-log slope over the values above the roundoff floor; `−∞` when fewer
/// than two remain (the quantity is below resolution).
fn resolved_slope(radii: &[f64], vals: &[f64]) -> f64 {
    let (r, v): (Vec<f64>, Vec<f64>) = radii.iter().zip(vals).filter(|(_, v)| **v > DEVIATION_FLOOR).map(|(r, v)| (*r, *v)).unzip();
    decay_slope(&r, &v)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct VolumeConfig {
    /// Explicit radii (increasing); otherwise `count` dyadic radii from `r_min`.
    pub radii: Option<Vec<f64>>,
    pub r_min: Option<f64>,
    pub count: usize,
    /// Exactness degree of the sphere rule; chosen from `m` when absent.
    pub angular_degree: Option<usize>,
    /// Gauss nodes per radial piece (pieces never span more than a factor 2).
    pub radial_nodes: usize,
    /// Number of largest radii used in the extrapolation.
    pub fit_points: usize,
    /// Also fit a `c'/r²` term.
    pub quadratic_term: bool,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        Self { radii: None, r_min: None, count: 7, angular_degree: None, radial_nodes: 16, fit_points: 4, quadratic_term: false }
    }
}

impl VolumeConfig {
    pub fn radii_for(&self, model: &MetricModel) -> Result<Vec<f64>> {
        let radii = match &self.radii {
            Some(r) => r.clone(),
            None => {
                let r0 = self.r_min.unwrap_or_else(|| (4.0 * model.inner_radius()).max(4.0));
                (0..self.count).map(|k| r0 * 2f64.powi(k as i32)).collect()
            }
        };
        if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > model.inner_radius()) {
            return Err(Error::Config(format!("radii must increase and exceed the inner radius {}", model.inner_radius())));
        }
        Ok(radii)
    }

    pub fn quadrature(&self, m: usize) -> Result<SphereQuadrature> {
        let deg = self.angular_degree.unwrap_or(match m {
            0..=3 => 32,
            4 => 24,
            5 => 12,
            _ => 8,
        });
        SphereQuadrature::new(m, deg)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureProfile {
    pub radii: Vec<f64>,
    /// `max |rH − 1|` over each sphere.
    pub max_deviation: Vec<f64>,
    /// Area average of `rH − 1`.
    pub mean_deviation: Vec<f64>,
    pub min_h: Vec<f64>,
    /// Slope of `log max|rH − 1|` against `log r`, over radii above roundoff.
    pub slope: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RosTable {
    pub radii: Vec<f64>,
    /// `∫(1/H)dA_g` on the quotient sphere.
    pub inverse_h_integral: Vec<f64>,
    pub m_volume: Vec<f64>,
    pub gap: Vec<f64>,
    /// False when `H ≤ 0` somewhere; the inequality then says nothing.
    pub applicable: bool,
    pub monotone: bool,
    /// Gap extrapolated to `r → ∞` by `G + c/r` over the largest radii.
    pub limit: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VolumeReport {
    pub m: usize,
    pub group_order: usize,
    pub radii: Vec<f64>,
    pub v_g: Vec<f64>,
    pub v_e: Vec<f64>,
    /// `D(r) = V_g(B_r) − V_e(B̃_r)`.
    pub defects: Vec<f64>,
    /// Radius where the exact interior bookkeeping hands over to shell quadrature.
    pub start_radius: f64,
    pub start_defect: f64,
    /// Extrapolated renormalized volume; absent when `D(r)` does not settle.
    pub value: Option<f64>,
    pub error: f64,
    pub fit_residual: f64,
    /// `|D(r_{k+1}) − D(r_k)| / (1/r_k − 1/r_{k+1})`.
    pub cauchy: Vec<f64>,
    pub cauchy_constant: f64,
    pub cauchy_stable: bool,
    pub converged: bool,
    pub profile: CurvatureProfile,
    pub ros: RosTable,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Split `[a, b]` at the break radii and into pieces of ratio at most 2.
fn radial_pieces(a: f64, b: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    pts.push(b);
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let n = if p > 0.0 { (q / p).log2().ceil().max(1.0) as usize } else { 1 };
        let ratio = if p > 0.0 { (q / p).powf(1.0 / n as f64) } else { 1.0 };
        let mut lo = p;
        for k in 0..n {
            let hi = if k + 1 == n { q } else { lo * ratio };
            out.push((lo, hi));
            lo = hi;
        }
    }
    out
}

/// `∫_{a<|x|<b} (√det g − 1) dx` on the cover.
fn shell_defect(model: &MetricModel, a: f64, b: f64, quad: &SphereQuadrature, nr: usize) -> f64 {
    let (z, wz) = gauss_gegenbauer(nr, 0.0);
    let m = model.m as i32;
    let nodes: Vec<(f64, f64)> = radial_pieces(a, b, &model.breakpoints())
        .into_iter()
        .flat_map(|(lo, hi)| {
            let half = 0.5 * (hi - lo);
            z.iter().zip(&wz).map(move |(t, w)| (lo + half * (t + 1.0), half * w)).collect::<Vec<_>>()
        })
        .collect();
    nodes
        .par_iter()
        .map(|&(t, wt)| {
            let s: f64 = quad
                .nodes
                .iter()
                .zip(&quad.weights)
                .map(|(th, w)| {
                    let x: Vec<f64> = th.iter().map(|v| v * t).collect();
                    w * model.volume_density_defect(&x)
                })
                .sum();
            wt * t.powi(m - 1) * s
        })
        .collect::<Vec<f64>>()
        .iter()
        // fixed summation order keeps reports byte-identical across runs
        .sum()
}

/// Solve `φ(y) = x` by Newton's method from the rigid-motion guess.
fn invert_change(ch: &DecayingChange, x: &[f64]) -> Option<Vec<f64>> {
    let m = x.len();
    let q = ch.rotation_matrix();
    let xv = DVector::from_column_slice(x);
    let c = DVector::from_iterator(m, (0..m).map(|i| *ch.translation.get(&[i])));
    let mut y = q.transpose() * xv - c;
    let scale = norm(x).max(1.0);
    for _ in 0..60 {
        let fy = DVector::from_vec(ch.apply(y.as_slice())) - DVector::from_column_slice(x);
        if fy.amax() < 1e-14 * scale {
            return Some(y.as_slice().to_vec());
        }
        let (uj, _) = ch.core_derivatives(y.as_slice());
        let jac = &q * (DMatrix::identity(m, m) + uj);
        y -= jac.lu().solve(&fy)?;
    }
    None
}

/// Cover value of `D` at `|y| = r_s` for a pulled-back model: the region
/// bounded by `φ({|y| = r_s})` is measured in base coordinates, ray by ray.
fn pulled_back_interior(base: &MetricModel, ch: &DecayingChange, r_s: f64, quad: &SphereQuadrature, nr: usize) -> Result<f64> {
    let (rho0, d0) = base
        .volume_anchor()
        .ok_or_else(|| Error::Config("pulled-back base model needs a closed-form interior".into()))?;
    let m = base.m;
    let (z, wz) = gauss_gegenbauer(nr, 0.0);
    let breaks = base.breakpoints();
    let rays: Vec<Result<(f64, f64)>> = quad
        .nodes
        .par_iter()
        .map(|th| {
            // |φ^{-1}(Rθ)| = r_s, Newton in R from the rigid-motion root
            let qc = ch.rotation_matrix() * DVector::from_iterator(m, (0..m).map(|i| *ch.translation.get(&[i])));
            let tc: f64 = th.iter().zip(qc.iter()).map(|(a, b)| a * b).sum();
            let mut rr = tc + (tc * tc + r_s * r_s - qc.norm_squared()).max(0.0).sqrt();
            let mut done = false;
            for _ in 0..50 {
                let x: Vec<f64> = th.iter().map(|v| v * rr).collect();
                let y = invert_change(ch, &x).ok_or(Error::Diverged { iterations: 60, residual: f64::NAN })?;
                let ny = norm(&y);
                let gap = ny - r_s;
                if gap.abs() < 1e-13 * r_s {
                    done = true;
                    break;
                }
                let (uj, _) = ch.core_derivatives(&y);
                let jac = ch.rotation_matrix() * (DMatrix::identity(m, m) + uj);
                let dy = jac.lu().solve(&DVector::from_column_slice(th)).ok_or(Error::Singular)?;
                let slope: f64 = y.iter().zip(dy.iter()).map(|(a, b)| a * b).sum::<f64>() / ny;
                let step = gap / slope;
                rr = if rr - step > 0.0 { rr - step } else { 0.5 * rr };
            }
            if !done {
                return Err(Error::Diverged { iterations: 50, residual: f64::NAN });
            }
            if rr <= rho0 || rr <= base.inner_radius() {
                return Err(Error::Config(format!("image of the inner sphere reaches the base interior (R = {rr})")));
            }
            let mut defect = 0.0;
            for (lo, hi) in radial_pieces(rho0, rr, &breaks) {
                let half = 0.5 * (hi - lo);
                for (t, w) in z.iter().zip(&wz) {
                    let t = lo + half * (t + 1.0);
                    let x: Vec<f64> = th.iter().map(|v| v * t).collect();
                    defect += half * w * t.powi(m as i32 - 1) * base.volume_density_defect(&x);
                }
            }
            Ok((rr, defect))
        })
        .collect();
    let mut euclid = 0.0;
    let mut defect = d0;
    for (w, ray) in quad.weights.iter().zip(rays) {
        let (rr, d) = ray?;
        euclid += w * rr.powi(m as i32) / m as f64;
        defect += w * d;
    }
    Ok(euclid + defect - unit_ball_volume(m) * r_s.powi(m as i32))
}

/// `D(r)` on the quotient at each radius, with the start radius and its value.
pub fn volume_defects(model: &MetricModel, radii: &[f64], cfg: &VolumeConfig) -> Result<(f64, f64, Vec<f64>)> {
    let quad = cfg.quadrature(model.m)?;
    let nr = cfg.radial_nodes.max(2);
    let (start, cover0) = match (model.volume_anchor(), model.pulled_back_parts()) {
        (Some(a), _) => a,
        (None, Some((base, ch))) => {
            let r_s = model.inner_radius();
            (r_s, pulled_back_interior(base, ch, r_s, &quad, nr)?)
        }
        (None, None) => return Err(Error::Config("model has no interior bookkeeping".into())),
    };
    if radii.first().is_some_and(|r| *r <= start) {
        return Err(Error::Config(format!("radii must exceed the start radius {start}")));
    }
    let mut edges = vec![start];
    edges.extend_from_slice(radii);
    let shells: Vec<f64> = edges.par_windows(2).map(|w| shell_defect(model, w[0], w[1], &quad, nr)).collect();
    let k = model.group_order as f64;
    let mut acc = cover0;
    let defects = shells
        .iter()
        .map(|s| {
            acc += s;
            acc / k
        })
        .collect();
    Ok((start, cover0 / k, defects))
}

/// Least-squares fit of `D(r) = V + c/r (+ c'/r²)`; returns `(V, max residual)`.
fn extrapolate(radii: &[f64], d: &[f64], quadratic: bool) -> Option<(f64, f64)> {
    let cols = if quadratic { 3 } else { 2 };
    if radii.len() < cols {
        return None;
    }
    let a = DMatrix::from_fn(radii.len(), cols, |i, j| radii[i].powi(-(j as i32)));
    let b = DVector::from_column_slice(d);
    let sol = a.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let res = (&a * &sol - &b).amax();
    Some((sol[0], res))
}

/// Mean curvature and area element of the coordinate sphere through a point,
/// with the deviations from the flat values formed without cancellation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpherePoint {
    pub h: f64,
    /// `H − 1/r`.
    pub h_dev: f64,
    /// `dA_g/dA_e − 1`.
    pub area_dev: f64,
}

pub fn sphere_geometry(model: &MetricModel, x: &[f64]) -> Result<SpherePoint> {
    let m = model.m;
    let mf = m as f64;
    let jet = model.jet1(x);
    let g = &jet.h + DMatrix::identity(m, m);
    let ginv = g.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let r = norm(x);
    let n = DVector::from_iterator(m, x.iter().map(|v| v / r));
    // unit normal ν = w/s, w = g⁻¹n = n + e
    let ginv_minus = -(&ginv * &jet.h);
    let e = &ginv_minus * &n;
    let w = &n + &e;
    let sigma = n.dot(&e);
    if !(sigma > -1.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let s = (1.0 + sigma).sqrt();
    let s_minus = sigma / (1.0 + s);
    let dn = (DMatrix::identity(m, m) - &n * n.transpose()) / r;
    // div ν − (m−1)/r, using Σ ∂_k n_k = (m−1)/r
    let mut div_dev = -(mf - 1.0) / r * s_minus / s;
    for k in 0..m {
        let dginv = -(&ginv * &jet.dh[k] * &ginv);
        let dnk = dn.column(k);
        let de = &dginv * &n + &ginv_minus * dnk;
        // n·∂_k n = 0 exactly; keeping it would leave roundoff of size 1/r
        let ds = (n.dot(&(&dginv * &n)) + 2.0 * e.dot(&dnk)) / (2.0 * s);
        div_dev += de[k] / s - w[k] * ds / (s * s);
        div_dev += 0.5 * (&ginv * &jet.dh[k]).trace() * w[k] / s;
    }
    let h_dev = div_dev / (mf - 1.0);
    let log_det: f64 = jet.h.clone().symmetric_eigenvalues().iter().map(|l| l.ln_1p()).sum();
    let area_dev = (0.5 * (log_det + sigma.ln_1p())).exp_m1();
    Ok(SpherePoint { h: 1.0 / r + h_dev, h_dev, area_dev })
}

fn sphere_samples(model: &MetricModel, r: f64, quad: &SphereQuadrature) -> Result<Vec<SpherePoint>> {
    quad.nodes
        .par_iter()
        .map(|th| {
            let x: Vec<f64> = th.iter().map(|v| v * r).collect();
            sphere_geometry(model, &x)
        })
        .collect()
}

pub fn mean_curvature_profile(model: &MetricModel, radii: &[f64], quad: &SphereQuadrature) -> Result<CurvatureProfile> {
    let mut prof = CurvatureProfile { radii: radii.to_vec(), max_deviation: vec![], mean_deviation: vec![], min_h: vec![], slope: 0.0 };
    for &r in radii {
        let samples = sphere_samples(model, r, quad)?;
        let mut max_dev = 0f64;
        let mut num = 0.0;
        let mut area = 0.0;
        let mut min_h = f64::INFINITY;
        for (p, w) in samples.iter().zip(&quad.weights) {
            let dev = r * p.h_dev;
            max_dev = max_dev.max(dev.abs());
            num += w * (1.0 + p.area_dev) * dev;
            area += w * (1.0 + p.area_dev);
            min_h = min_h.min(p.h);
        }
        prof.max_deviation.push(max_dev);
        prof.mean_deviation.push(num / area);
        prof.min_h.push(min_h);
    }
    prof.slope = resolved_slope(radii, &prof.max_deviation);
    Ok(prof)
}

/// Ros gap at each radius, given `D` there.
fn ros_from_defects(model: &MetricModel, radii: &[f64], defects: &[f64], quad: &SphereQuadrature) -> Result<RosTable> {
    let m = model.m;
    let k = model.group_order as f64;
    let mut t = RosTable { radii: radii.to_vec(), inverse_h_integral: vec![], m_volume: vec![], gap: vec![], applicable: true, monotone: true, limit: None };
    for (&r, d) in radii.iter().zip(defects) {
        let samples = sphere_samples(model, r, quad)?;
        if samples.iter().any(|p| p.h <= 0.0) {
            t.applicable = false;
        }
        // gap = ∫(1/H − r)dA_g + r(A_g − A_e) − m·D, each term small
        let (inv_dev, area_dev) = samples.iter().zip(&quad.weights).fold((0.0, 0.0), |(a, b), (p, w)| {
            (a + w * (1.0 + p.area_dev) * (-r * p.h_dev / p.h), b + w * p.area_dev)
        });
        let rm1 = r.powi(m as i32 - 1) / k;
        let gap = (inv_dev + r * area_dev) * rm1 - m as f64 * d;
        let mv = m as f64 * (unit_ball_volume(m) * r.powi(m as i32) / k + d);
        let integral = mv + gap;
        t.inverse_h_integral.push(integral);
        t.m_volume.push(mv);
        t.gap.push(gap);
    }
    let inc = t.gap.windows(2).all(|w| w[1] >= w[0]);
    let dec = t.gap.windows(2).all(|w| w[1] <= w[0]);
    t.monotone = inc || dec;
    let n0 = radii.len().saturating_sub(4);
    t.limit = extrapolate(&radii[n0..], &t.gap[n0..], false).map(|(g, _)| g);
    Ok(t)
}

pub fn ros_check(model: &MetricModel, radii: &[f64], cfg: &VolumeConfig) -> Result<RosTable> {
    let (_, _, defects) = volume_defects(model, radii, cfg)?;
    ros_from_defects(model, radii, &defects, &cfg.quadrature(model.m)?)
}

/// `max |√det g − 1|` on each sphere and its decay slope.
pub fn volume_element_decay(model: &MetricModel, radii: &[f64], quad: &SphereQuadrature) -> (Vec<f64>, f64) {
    let sups: Vec<f64> = radii
        .iter()
        .map(|&r| {
            quad.nodes
                .par_iter()
                .map(|th| {
                    let x: Vec<f64> = th.iter().map(|v| v * r).collect();
                    model.volume_density_defect(&x).abs()
                })
                .reduce(|| 0.0, f64::max)
        })
        .collect();
    let slope = resolved_slope(radii, &sups);
    (sups, slope)
}

pub fn renormalized_volume(model: &MetricModel, cfg: &VolumeConfig) -> Result<VolumeReport> {
    let m = model.m;
    let radii = cfg.radii_for(model)?;
    let quad = cfg.quadrature(m)?;
    let (start, start_defect, defects) = volume_defects(model, &radii, cfg)?;
    let k = model.group_order as f64;
    let v_e: Vec<f64> = radii.iter().map(|r| unit_ball_volume(m) * r.powi(m as i32) / k).collect();
    let v_g: Vec<f64> = v_e.iter().zip(&defects).map(|(e, d)| e + d).collect();

    let cauchy: Vec<f64> = radii
        .windows(2)
        .zip(defects.windows(2))
        .map(|(r, d)| (d[1] - d[0]).abs() / (1.0 / r[0] - 1.0 / r[1]))
        .collect();
    let (cauchy_constant, cauchy_stable, converged) = match cauchy.len() {
        0 => (0.0, false, false),
        1 => (cauchy[0], false, true),
        n => {
            let (a, b) = (cauchy[n - 2], cauchy[n - 1]);
            let both_zero = a < CAUCHY_FLOOR && b < CAUCHY_FLOOR;
            // one constant must cover every later pair; a shrinking C (decay
            // faster than 1/r) is stable, a growing one is not
            let settles = both_zero || b <= 2.0 * a + CAUCHY_FLOOR;
            let stable = settles && cauchy.windows(2).all(|w| w[1] <= 2.0 * w[0] + CAUCHY_FLOOR);
            (a.max(b), stable, settles)
        }
    };

    let nfit = cfg.fit_points.clamp(2, radii.len());
    let tail = radii.len() - nfit;
    let (mut value, mut error, mut fit_residual) = (None, f64::INFINITY, f64::INFINITY);
    if converged {
        if let Some((v, res)) = extrapolate(&radii[tail..], &defects[tail..], cfg.quadratic_term) {
            // window shifted one radius inward measures the model error
            let shift = (tail > 0)
                .then(|| extrapolate(&radii[tail - 1..radii.len() - 1], &defects[tail - 1..defects.len() - 1], cfg.quadratic_term))
                .flatten()
                .map_or(0.0, |(v2, _)| (v - v2).abs());
            let floor = 1e-13 * defects.iter().fold(0f64, |a, d| a.max(d.abs()));
            value = Some(v);
            fit_residual = res;
            error = shift.max(res).max(floor);
        }
    }

    let profile = mean_curvature_profile(model, &radii, &quad)?;
    let ros = ros_from_defects(model, &radii, &defects, &quad)?;
    Ok(VolumeReport {
        m,
        group_order: model.group_order,
        radii,
        v_g,
        v_e,
        defects,
        start_radius: start,
        start_defect,
        value,
        error,
        fit_residual,
        cauchy,
        cauchy_constant,
        cauchy_stable,
        converged,
        profile,
        ros,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{random_element, SpaceId};
    use crate::tensor::Tensor;
    use rand::SeedableRng;

    fn small_cfg() -> VolumeConfig {
        VolumeConfig { angular_degree: Some(12), radial_nodes: 10, count: 5, ..Default::default() }
    }

    #[test]
    fn flat_is_zero() {
        let r = renormalized_volume(&MetricModel::flat(5), &small_cfg()).unwrap();
        assert_eq!(r.value, Some(0.0));
        assert!(r.profile.max_deviation.iter().all(|d| *d < 1e-13));
        assert!(r.ros.gap.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn eguchi_hanson_closed_form() {
        let a: f64 = 1.3;
        let model = MetricModel::eguchi_hanson(a).unwrap();
        let r = renormalized_volume(&model, &small_cfg()).unwrap();
        let exact = -std::f64::consts::PI.powi(2) * a.powi(4) / 4.0;
        assert!((r.value.unwrap() - exact).abs() < 1e-10, "{:?}", r.value);
        assert!(r.ros.applicable);
    }

    #[test]
    fn eh_mean_curvature_matches_closed_form() {
        // first variation of area: H = (1/(m−1)) d log A/ds
        let model = MetricModel::eguchi_hanson(1.0).unwrap();
        let quad = SphereQuadrature::new(4, 10).unwrap();
        let area = |r: f64| -> f64 {
            sphere_samples(&model, r, &quad).unwrap().iter().zip(&quad.weights).map(|(p, w)| w * (1.0 + p.area_dev)).sum::<f64>() * r.powi(3)
        };
        let r = 2.0;
        let x = [r, 0.0, 0.0, 0.0];
        let h = sphere_geometry(&model, &x).unwrap().h;
        // radial unit speed: ds = dr / √(g_rr) with g_rr = 1 + α r² constant on the sphere
        let g = model.metric(&x);
        let step = 1e-5;
        let dlog = (area(r + step).ln() - area(r - step).ln()) / (2.0 * step);
        assert!((h - dlog / (3.0 * g[(0, 0)].sqrt())).abs() < 1e-8);
    }

    #[test]
    fn pulled_back_flat_shifts_by_flux_of_change() {
        // the order r^{1−m} part of the change carries flux ω tr(B) through large spheres
        let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let ch = DecayingChange::random(4, 0.3, &mut g);
        let flux = unit_ball_volume(4) * (0..4).map(|i| *ch.b_mat.get(&[i, i])).sum::<f64>();
        let model = MetricModel::pulled_back(MetricModel::flat(4), ch).unwrap();
        let r = renormalized_volume(&model, &small_cfg()).unwrap();
        let v = r.value.unwrap();
        assert!(flux.abs() > 0.1);
        assert!((v - flux).abs() < r.error, "{v} vs {flux} ± {}", r.error);
    }

    #[test]
    fn trace_free_change_keeps_zero_volume() {
        let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut ch = DecayingChange::random(3, 0.3, &mut g);
        let b = ch.b_mat.clone();
        ch.b_mat = &b - &b.permuted(&[2, 1]);
        let model = MetricModel::pulled_back(MetricModel::flat(3), ch).unwrap();
        let r = renormalized_volume(&model, &small_cfg()).unwrap();
        assert!(r.value.unwrap().abs() < r.error.max(1e-9), "{:?} ± {}", r.value, r.error);
    }

    #[test]
    fn weyl_model_volume_element_decays_fast() {
        let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let w = random_element(SpaceId::W, 4, &mut g).unwrap();
        let model = MetricModel::synthetic_weyl(&(&w * 0.5), Some(Tensor::delta(4).scale(0.2)), 1.0).unwrap();
        let quad = SphereQuadrature::new(4, 8).unwrap();
        let radii = [8.0, 16.0, 32.0, 64.0];
        let (_, slope) = volume_element_decay(&model, &radii, &quad);
        assert!(slope <= -4.9, "{slope}");
    }

    #[test]
    fn weyl_model_gap_tends_to_minus_m_volume() {
        let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let w = random_element(SpaceId::W, 4, &mut g).unwrap();
        let tail = Tensor::from_fn(4, 2, |i| if i[0] == i[1] { 0.3 } else { 0.0 });
        let model = MetricModel::synthetic_weyl(&w, Some(tail), 1.0).unwrap();
        let r = renormalized_volume(&model, &VolumeConfig { angular_degree: Some(12), ..Default::default() }).unwrap();
        let v = r.value.unwrap();
        assert!(v > 0.0 && r.cauchy_stable);
        assert!((r.ros.limit.unwrap() + 4.0 * v).abs() < 1e-3 * v, "{:?} vs {}", r.ros.limit, -4.0 * v);
        assert!(r.profile.slope <= -4.99, "{}", r.profile.slope);
    }

    #[test]
    fn pieces_respect_breaks() {
        let p = radial_pieces(1.0, 9.0, &[1.5, 3.0]);
        assert_eq!(p.first().unwrap().0, 1.0);
        assert_eq!(p.last().unwrap().1, 9.0);
        assert!(p.iter().all(|(a, b)| b / a <= 2.0 + 1e-12));
        assert!(p.iter().any(|(_, b)| *b == 1.5));
    }
}
