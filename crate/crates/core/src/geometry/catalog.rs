//! Building catalog models from JSON parameters, plus the validators run on
//! them: the leading-term conditions of a Weyl model, decay rates and a
//! finite-difference Ricci spot check.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{MetricModel, ModelKind, Synthetic};
use crate::algebra::checks::Check;
use crate::algebra::{random_element, SpaceId};
use crate::error::{Error, Result};
use crate::exterior::SphereQuadrature;
use crate::infinity::DecayingChange;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Eguchi–Hanson scale.
    pub a: f64,
    /// Explicit Weyl tensor; drawn from the seed when absent.
    pub weyl: Option<Tensor>,
    pub weyl_scale: f64,
    /// Coefficient of the `δ_ij/r^{m+1}` tail added to Weyl models.
    pub tail: f64,
    pub cap: f64,
    /// Base of a pulled-back model (defaults to a Weyl model).
    pub base: Option<Box<ModelSpec>>,
    pub change_scale: f64,
    /// Keep the `B x/r^m` part of the change trace-free (volume preserving).
    pub trace_free_change: bool,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            weyl: None,
            weyl_scale: 1.0,
            tail: 0.0,
            cap: 1.0,
            base: None,
            change_scale: 0.1,
            trace_free_change: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub m: usize,
    pub group_order: Option<usize>,
    pub params: ModelParams,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { kind: ModelKind::SyntheticWeyl, m: 4, group_order: None, params: ModelParams::default() }
    }
}

/// A random change with a trace-free order `r^{1−m}` part when requested.
pub fn seeded_change(m: usize, scale: f64, trace_free: bool, seed: u64) -> DecayingChange {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let mut ch = DecayingChange::random(m, scale, &mut g);
    if trace_free {
        let tr = (0..m).map(|i| *ch.b_mat.get(&[i, i])).sum::<f64>() / m as f64;
        ch.b_mat = &ch.b_mat - &Tensor::delta(m).scale(tr);
    }
    ch
}

pub fn seeded_weyl(m: usize, scale: f64, seed: u64) -> Result<Tensor> {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    Ok(random_element(SpaceId::W, m, &mut g)?.scale(scale))
}

pub fn catalog_build(spec: &ModelSpec, seed: u64) -> Result<MetricModel> {
    let p = &spec.params;
    let m = spec.m;
    if m < 3 {
        return Err(Error::Config(format!("dimension {m} < 3")));
    }
    let model = match spec.kind {
        ModelKind::Flat => MetricModel::flat(m),
        ModelKind::FlatQuotient => MetricModel::flat_quotient(m, spec.group_order.unwrap_or(2))?,
        ModelKind::EguchiHanson => {
            if m != 4 {
                return Err(Error::Config("Eguchi-Hanson lives in dimension 4".into()));
            }
            MetricModel::eguchi_hanson(p.a)?
        }
        ModelKind::SyntheticWeyl => {
            let w = planted_weyl(spec, seed)?;
            let tail = (p.tail != 0.0).then(|| Tensor::delta(m).scale(p.tail));
            let model = MetricModel::synthetic_weyl(&w, tail, p.cap)?;
            let failed: Vec<String> =
                validate_leading_term(&model, seed)?.into_iter().filter(|c| !c.passed).map(|c| c.name).collect();
            if !failed.is_empty() {
                return Err(Error::Constraint(format!("leading term fails {}", failed.join(", "))));
            }
            model
        }
        ModelKind::PulledBack => {
            let base_spec = p.base.as_deref().cloned().unwrap_or(ModelSpec { kind: ModelKind::SyntheticWeyl, m, ..Default::default() });
            if base_spec.kind == ModelKind::PulledBack {
                return Err(Error::Config("nested pulled-back models are not supported".into()));
            }
            let base = catalog_build(&base_spec, seed)?;
            MetricModel::pulled_back(base, seeded_change(m, p.change_scale, p.trace_free_change, seed.wrapping_add(1)))?
        }
    };
    if let Some(k) = spec.group_order {
        if k != model.group_order {
            return Err(Error::Config(format!("{} has group order {}, not {k}", spec.kind.name(), model.group_order)));
        }
    }
    Ok(model)
}

/// The Weyl tensor a synthetic spec builds with.
pub fn planted_weyl(spec: &ModelSpec, seed: u64) -> Result<Tensor> {
    let p = &spec.params;
    let w = match &p.weyl {
        Some(w) => w.scale(p.weyl_scale),
        None => seeded_weyl(spec.m, p.weyl_scale, seed)?,
    };
    if w.dim() != spec.m {
        return Err(Error::DimMismatch { expected: spec.m, got: w.dim() });
    }
    Ok(w)
}

/// Conditions on the leading term `h₀` of a Weyl model, checked at sample
/// points outside the cap: homogeneity `x·∂h₀ = −m h₀`, `x ⌟ h₀ = 0`,
/// `tr h₀ = 0`, `div h₀ = 0` and `Δh₀ = 0` (the last by central differences).
pub fn validate_leading_term(model: &MetricModel, seed: u64) -> Result<Vec<Check>> {
    let syn = model.synthetic_params().ok_or_else(|| Error::Config("not a synthetic model".into()))?;
    let m = model.m;
    let leading =
        MetricModel::synthetic(Synthetic { a3: syn.a3.clone(), a4: syn.a4.clone(), tail: Tensor::zeros(m, 2), cap: syn.cap })?;
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0f64; 5];
    let mut scale = 0f64;
    for _ in 0..8 {
        let dir: Vec<f64> = (0..m).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut g)).collect();
        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = 4.0 * syn.cap * (1.0 + rand::Rng::gen::<f64>(&mut g));
        let x: Vec<f64> = dir.iter().map(|v| v * r / n).collect();
        let jet = leading.jet1(&x);
        let hn = jet.h.amax();
        scale = scale.max(hn);
        let euler = (0..m).fold(jet.h.clone() * m as f64, |acc, p| acc + &jet.dh[p] * x[p]);
        let radial = &jet.h * nalgebra::DVector::from_column_slice(&x) / r;
        let div = nalgebra::DVector::from_fn(m, |j, _| (0..m).map(|i| jet.dh[i][(i, j)]).sum::<f64>());
        let step = 1e-5 * r;
        let mut lap = DMatrix::zeros(m, m);
        for p in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[p] += step;
            xm[p] -= step;
            lap += (&leading.jet1(&xp).dh[p] - &leading.jet1(&xm).dh[p]) / (2.0 * step);
        }
        let rel = |v: f64, s: f64| if s > 0.0 { v / s } else { v };
        worst[0] = worst[0].max(rel(euler.amax(), hn));
        worst[1] = worst[1].max(rel(radial.amax(), hn));
        worst[2] = worst[2].max(rel(jet.h.trace().abs(), hn));
        worst[3] = worst[3].max(rel(div.amax() * r, hn));
        worst[4] = worst[4].max(rel(lap.amax() * r * r, hn));
    }
    let names = ["h0_homogeneity", "h0_radial", "h0_trace", "h0_divergence", "h0_harmonic"];
    let tols = [1e-12, 1e-12, 1e-12, 1e-12, 1e-6];
    Ok(names
        .iter()
        .zip(tols)
        .zip(worst)
        .map(|((n, t), w)| Check::le(n, m, w, t, format!("relative to max|h0| = {scale:.3e}")))
        .collect())
}

/// `max |h|` over spheres and its log-log slope.
pub fn metric_decay_rate(model: &MetricModel, radii: &[f64], quad: &SphereQuadrature) -> (Vec<f64>, f64) {
    let sups: Vec<f64> = radii
        .iter()
        .map(|&r| {
            quad.nodes
                .iter()
                .map(|th| {
                    let x: Vec<f64> = th.iter().map(|v| v * r).collect();
                    model.perturbation(&x).amax()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let slope = crate::exterior::decay_slope(radii, &sups);
    (sups, slope)
}

/// `Ric_jk` at `x` from central differences of the analytic Christoffel symbols.
pub fn ricci_fd(model: &MetricModel, x: &[f64], step: f64) -> DMatrix<f64> {
    let m = model.m;
    let gam = model.christoffel(x);
    let at = |i: usize, j: usize, k: usize| gam[(i * m + j) * m + k];
    // dgam[l][(i, j, k)] = ∂_l Γ^i_jk
    let dgam: Vec<Vec<f64>> = (0..m)
        .map(|l| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[l] += step;
            xm[l] -= step;
            let (gp, gm) = (model.christoffel(&xp), model.christoffel(&xm));
            gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * step)).collect()
        })
        .collect();
    DMatrix::from_fn(m, m, |j, k| {
        let mut v = 0.0;
        for i in 0..m {
            v += dgam[i][(i * m + j) * m + k] - dgam[k][(i * m + i) * m + j];
            for p in 0..m {
                v += at(i, i, p) * at(p, j, k) - at(i, k, p) * at(p, i, j);
            }
        }
        v
    })
}
