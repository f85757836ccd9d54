//! Acceptance criteria, one PASS/FAIL line each. Tolerances are pinned here;
//! closed forms and finite-difference curvature are computed in this file.

use std::sync::Arc;
use std::time::Instant;

use ale_gauge::algebra::checks::verify_algebra;
use ale_gauge::algebra::{maps, Algebra, SpaceId};
use ale_gauge::exterior::{
    bianchi_residual, harmonic_map_correction, solve_poisson_exterior, AnnulusGrid, GridConfig, HarmonicMapConfig, PoissonConfig,
    WeightedField,
};
use ale_gauge::geometry::{
    catalog_build, renormalized_volume, seeded_change, seeded_weyl, volume_element_decay, MetricModel, ModelKind, ModelParams,
    ModelSpec, VolumeConfig,
};
use ale_gauge::infinity::{
    compare_weyl_tol, fit_expansion, kill_order_m_minus_1_tol, pullback_expansion, reduce_to_weyl_tol, FitConfig, Gauge,
    InfinityExpansion,
};
use ale_gauge::jet::{normal_form, pullback_jet, MetricJet, PolynomialChange};
use ale_gauge::Tensor;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALGEBRA_DIMS: [usize; 4] = [3, 4, 5, 6];
const ALGEBRA_BUDGET_SECS: f64 = 60.0;

const FLAT_PULLBACK_CURVATURE: f64 = 1e-8;
const QUADRATIC_CURVATURE: f64 = 1e-10;
const FD_CURVATURE: f64 = 1e-6;
const FD_STEP: f64 = 1e-4;
const SPACE_FORM: f64 = 1e-8;

const FIT_RECOVERY: f64 = 1e-8;
const KILL_RESIDUAL: f64 = 1e-8;
const WEYL_RESIDUAL: f64 = 1e-7;
const WEYL_MATCH: f64 = 1e-6;

const POISSON_REL: f64 = 1e-6;
const POISSON_L_MAX: usize = 8;
const POISSON_ANNULI: usize = 6;
const OPERATOR_NORM_DRIFT: f64 = 0.2;
const PICARD_CONTRACTION: f64 = 0.5;
const PICARD_RESIDUAL: f64 = 1e-8;
const BIANCHI_SLOPE_MARGIN: f64 = 0.2;

const VOLUME_ZERO: f64 = 1e-6;
const EH_RESOLUTION: f64 = 10.0;
const ROS_GAP: f64 = -1e-6;
const SUITE_BUDGET_SECS: f64 = 600.0;

type Suite = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { passed: true, lines: vec![] }
    }

    fn le(&mut self, what: &str, got: f64, max: f64) {
        let ok = got <= max;
        self.passed &= ok;
        self.lines.push(format!("{} {what}: {got:.3e} <= {max:.1e}", if ok { "ok  " } else { "FAIL" }));
    }

    fn holds(&mut self, what: &str, ok: bool, detail: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {what}: {detail}", if ok { "ok  " } else { "FAIL" }));
    }
}

fn report(n: usize, title: &str, o: &Outcome, secs: f64) {
    println!("criterion {n} {title}: {} ({secs:.1}s)", if o.passed { "PASS" } else { "FAIL" });
    for l in &o.lines {
        println!("    {l}");
    }
}

// ---------------------------------------------------------------- algebra

fn algebra_suite() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    for m in ALGEBRA_DIMS {
        for c in verify_algebra(m, 7, 3) {
            if c.passed {
                o.lines.push(format!("ok   {} (m={m}): {:.3e} vs {:.1e}", c.name, c.measured, c.threshold));
            } else {
                o.holds(&format!("{} (m={m})", c.name), false, format!("{:.3e} vs {:.1e}; {}", c.measured, c.threshold, c.detail));
            }
        }
    }
    o.le("runtime seconds", t.elapsed().as_secs_f64(), ALGEBRA_BUDGET_SECS);
    o
}

// ---------------------------------------------------------------- jets

/// `g_ij(x)` of a jet, with first derivatives by central differences (exact
/// for the quadratic part up to roundoff).
fn christoffel(jet: &MetricJet, x: &[f64], h: f64) -> Vec<Vec<Vec<f64>>> {
    let m = x.len();
    let g = jet.metric_at(x);
    let ginv = g.try_inverse().expect("metric invertible");
    let dg: Vec<DMatrix<f64>> = (0..m)
        .map(|k| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            (jet.metric_at(&xp) - jet.metric_at(&xm)) / (2.0 * h)
        })
        .collect();
    // Γ^a_bc
    (0..m)
        .map(|a| {
            (0..m)
                .map(|b| {
                    (0..m)
                        .map(|c| (0..m).map(|d| 0.5 * ginv[(a, d)] * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)])).sum())
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `R_ijkl = g(R(∂_i, ∂_j)∂_k, ∂_l)` at the origin by nested differences.
fn fd_curvature(jet: &MetricJet, h: f64) -> Tensor {
    let m = jet.m;
    let zero = vec![0.0; m];
    let gam = christoffel(jet, &zero, h);
    let dgam: Vec<Vec<Vec<Vec<f64>>>> = (0..m)
        .map(|k| {
            let mut xp = zero.clone();
            let mut xm = zero.clone();
            xp[k] += h;
            xm[k] -= h;
            let (p, q) = (christoffel(jet, &xp, h), christoffel(jet, &xm, h));
            (0..m)
                .map(|a| (0..m).map(|b| (0..m).map(|c| (p[a][b][c] - q[a][b][c]) / (2.0 * h)).collect()).collect())
                .collect()
        })
        .collect();
    let g = jet.metric_at(&zero);
    // R^a_bcd for R(∂_c, ∂_d)∂_b
    let riem = |a: usize, b: usize, c: usize, d: usize| -> f64 {
        let v = dgam[c][a][d][b] - dgam[d][a][c][b];
        v + (0..m).map(|e| gam[a][c][e] * gam[e][d][b] - gam[a][d][e] * gam[e][c][b]).sum::<f64>()
    };
    Tensor::from_fn(m, 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        (0..m).map(|a| g[(l, a)] * riem(a, k, i, j)).sum()
    })
}

/// `T_ijkl ↦ T_abcd L_ai L_bj L_ck L_dl`.
fn pull_rank4(t: &Tensor, l: &DMatrix<f64>) -> Tensor {
    t.rotate(&l.transpose())
}

fn random_jet(m: usize, rng: &mut ChaCha8Rng) -> MetricJet {
    let n = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-0.3..0.3));
    let a = DMatrix::identity(m, m) + &n * n.transpose();
    let b = Tensor::from_fn(m, 3, |_| rng.gen_range(-1.0..1.0)).symmetrize(&[1, 2]).unwrap();
    let c = Tensor::from_fn(m, 4, |_| rng.gen_range(-1.0..1.0)).symmetrize(&[1, 2]).unwrap().symmetrize(&[3, 4]).unwrap();
    MetricJet::new(Tensor::from_matrix(&a), b, c).unwrap()
}

fn random_change(m: usize, rng: &mut ChaCha8Rng) -> PolynomialChange {
    let l = DMatrix::identity(m, m) + DMatrix::from_fn(m, m, |_, _| rng.gen_range(-0.3..0.3));
    PolynomialChange {
        linear: Tensor::from_matrix(&l),
        quad: Tensor::from_fn(m, 3, |_| rng.gen_range(-0.5..0.5)).symmetrize(&[1, 2]).unwrap(),
        cubic: Tensor::from_fn(m, 4, |_| rng.gen_range(-0.5..0.5)).symmetrize(&[1, 2, 3]).unwrap(),
    }
}

/// Constant curvature `k` in the convention `R_ijji = k`.
fn space_form(m: usize, k: f64) -> Tensor {
    Tensor::from_fn(m, 4, |x| {
        let d = |a: usize, b: usize| if x[a] == x[b] { 1.0 } else { 0.0 };
        k * (d(0, 3) * d(1, 2) - d(0, 2) * d(1, 3))
    })
}

fn jet_suite() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in [3, 4, 5] {
        let (mut flat, mut quad, mut fd) = (0f64, 0f64, 0f64);
        for _ in 0..3 {
            let pulled = pullback_jet(&MetricJet::flat(m), &random_change(m, &mut rng)).unwrap();
            flat = flat.max(normal_form(&pulled).unwrap().curvature.norm());

            let a = Tensor::from_fn(m, 4, |_| rng.gen_range(-1.0..1.0)).symmetrize(&[1, 2]).unwrap().symmetrize(&[3, 4]).unwrap();
            let qjet = MetricJet::new(Tensor::delta(m), Tensor::zeros(m, 3), a.clone()).unwrap();
            let r = normal_form(&qjet).unwrap().curvature;
            quad = quad.max(r.dist(&maps::map_r(&a).unwrap()));

            let jet = random_jet(m, &mut rng);
            let nf = normal_form(&jet).unwrap();
            let want = pull_rank4(&fd_curvature(&jet, FD_STEP), &nf.change.linear_matrix());
            fd = fd.max(want.dist(&nf.curvature) / nf.curvature.norm().max(1.0));
        }
        o.le(&format!("flat pullback |R| (m={m})"), flat, FLAT_PULLBACK_CURVATURE);
        o.le(&format!("quadratic metric |R - map_R(A)| (m={m})"), quad, QUADRATIC_CURVATURE);
        o.le(&format!("finite-difference curvature (m={m})"), fd, FD_CURVATURE);

        // 4|dx|²/(1 ± |x|²)²: second-order coefficient ∓8 δ_ij δ_kl
        let d = Tensor::delta(m);
        for (name, k) in [("sphere", 1.0), ("hyperbolic", -1.0)] {
            let jet = MetricJet::new(d.scale(4.0), Tensor::zeros(m, 3), d.outer(&d).unwrap().scale(-8.0 * k)).unwrap();
            let nf = normal_form(&jet).unwrap();
            o.le(&format!("{name} (m={m})"), nf.curvature.dist(&space_form(m, k)), SPACE_FORM);
            let fd = pull_rank4(&fd_curvature(&jet, FD_STEP), &nf.change.linear_matrix());
            o.le(&format!("{name} finite-difference convention (m={m})"), fd.dist(&space_form(m, k)), FD_CURVATURE);
        }
    }
    o
}

// ---------------------------------------------------------------- infinity

fn gauge_suite() -> Outcome {
    let mut o = Outcome::new();
    for (m, seed) in [(3, 1), (4, 2), (4, 3)] {
        let w = seeded_weyl(m, 1.0, seed).unwrap();
        let base = MetricModel::synthetic_weyl(&w, None, 1.0).unwrap();
        let syn = base.synthetic_params().unwrap().clone();
        let change = seeded_change(m, 0.1, true, seed + 100);
        let model = MetricModel::pulled_back(base, change.clone()).unwrap();

        let planted =
            pullback_expansion(&InfinityExpansion::new(syn.a3.clone(), syn.a4.clone(), m as f64 + 1.0, Gauge::Unknown).unwrap(), &change)
                .unwrap();
        let fitted = fit_expansion(&model, &FitConfig::default()).unwrap().expansion;
        let scale = planted.a3.max_abs().max(planted.a4.max_abs()).max(1.0);
        o.le(&format!("fit recovers planted A3, A4 (m={m}, seed {seed})"), fitted.a3.dist(&planted.a3).max(fitted.a4.dist(&planted.a4)) / scale, FIT_RECOVERY);

        let (_, killed) = kill_order_m_minus_1_tol(&fitted, FIT_RECOVERY).unwrap();
        o.le(&format!("order m-1 after kill (m={m})"), killed.a3.max_abs() / scale, KILL_RESIDUAL);
        let red = reduce_to_weyl_tol(&killed, WEYL_RESIDUAL).unwrap();
        let wt = Algebra::new(m).unwrap().space(SpaceId::Wtilde).clone();
        o.le(&format!("A4 off W~ after reduction (m={m})"), red.expansion.a4.dist(&wt.project(&red.expansion.a4)) / scale, WEYL_RESIDUAL);

        // y ↦ Q(y + …): the leading Weyl tensor pulls back by Q
        let q = change.rotation_matrix();
        let want = Tensor::from_fn(m, 4, |x| {
            let mut s = 0.0;
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        for d in 0..m {
                            s += w.get(&[a, b, c, d]) * q[(a, x[0])] * q[(b, x[1])] * q[(c, x[2])] * q[(d, x[3])];
                        }
                    }
                }
            }
            s
        });
        let wn = if w.norm() > 0.0 { w.norm() } else { 1.0 };
        o.le(&format!("Weyl tensors match under the known rotation (m={m})"), red.weyl.dist(&want) / wn, WEYL_MATCH);
        if w.norm() > 0.0 {
            let found = compare_weyl_tol(&red.weyl, &w, WEYL_MATCH, seed);
            o.holds(&format!("rotation search (m={m})"), found.matched(), format!("{:?}, residual {:.3e}", found.status, found.residual / wn));
        }
    }
    o
}

// ---------------------------------------------------------------- exterior

fn radius(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn poisson_grid(m: usize, r: f64) -> Arc<AnnulusGrid> {
    Arc::new(AnnulusGrid::new(m, &GridConfig { r_inner: r, annuli: POISSON_ANNULI, sub: 2, l_max: Some(POISSON_L_MAX) }).unwrap())
}

fn solver_suite() -> Outcome {
    let mut o = Outcome::new();

    // Δ r^{−β} = β(β + 2 − m) r^{−β−2}
    for (m, beta) in [(3, 1.5), (4, 2.5)] {
        let g = poisson_grid(m, 2.0);
        let c = beta * (beta + 2.0 - m as f64);
        let f = WeightedField::sample(g.clone(), 1, 0.5, beta + 2.0, |x| vec![c * radius(x).powf(-beta - 2.0)]);
        let sol = solve_poisson_exterior(&f, &PoissonConfig::default()).unwrap();
        let want = WeightedField::sample(g, 1, 0.5, beta, |x| vec![radius(x).powf(-beta)]);
        let err = sol.field.values.iter().zip(&want.values).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
        o.le(&format!("radial Poisson (m={m}, beta={beta})"), err, POISSON_REL);
    }

    // Δ(r^a Y_l) = [a(a + m − 2) − l(l + m − 2)] r^{a−2} Y_l
    for (m, beta, k) in [(3, 1.5, 5), (4, 2.5, 20)] {
        let g = poisson_grid(m, 2.0);
        let l = g.basis.modes[k].l as f64;
        let a = -beta;
        let d = a * (a + m as f64 - 2.0) - l * (l + m as f64 - 2.0);
        let y = |x: &[f64]| {
            let r = radius(x);
            g.basis.eval(k, &x.iter().map(|v| v / r).collect::<Vec<_>>())
        };
        let f = WeightedField::sample(g.clone(), 1, 0.5, beta + 2.0, |x| vec![radius(x).powf(-beta - 2.0) * y(x)]);
        let sol = solve_poisson_exterior(&f, &PoissonConfig::default()).unwrap();
        let want = WeightedField::sample(g.clone(), 1, 0.5, beta, |x| vec![radius(x).powf(-beta) * y(x) / d]);
        let scale = want.values.iter().fold(0f64, |s, v| s.max(v.abs()));
        let err = sol.field.values.iter().zip(&want.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        o.le(&format!("Y_l Poisson (m={m}, l={l})"), err, POISSON_REL);
    }

    // operator norm on R and 2R for a mixed right-hand side
    for m in [3, 4] {
        let beta = 1.5;
        let norm_at = |r: f64| {
            let g = poisson_grid(m, r);
            let f = WeightedField::sample(g, 1, 0.5, beta + 2.0, |x| {
                let rr = radius(x);
                vec![rr.powf(-beta - 2.0) * (1.0 + 0.5 * x[0] / rr) + 0.3 * rr.powf(-beta - 3.0) * x[1] * x[m - 1] / (rr * rr)]
            });
            solve_poisson_exterior(&f, &PoissonConfig::default()).unwrap().operator_norm
        };
        let (a, b) = (norm_at(2.0), norm_at(4.0));
        o.le(&format!("operator norm drift R -> 2R (m={m}, {a:.4} vs {b:.4})"), (b / a - 1.0).abs(), OPERATOR_NORM_DRIFT);
    }

    // Weyl-leading model with an order m+1 tail
    let m = 4;
    let w = seeded_weyl(m, 1.0, 5).unwrap();
    let model = MetricModel::synthetic_weyl(&w, Some(Tensor::delta(m).scale(0.3)), 1.0).unwrap();
    let cfg = HarmonicMapConfig { grid: GridConfig { l_max: Some(POISSON_L_MAX), annuli: POISSON_ANNULI, ..Default::default() }, ..Default::default() };
    let hm = harmonic_map_correction(&model, m as f64 + 2.0, &cfg).unwrap();
    o.le(&format!("Picard contraction at R' = {}", hm.r_prime), hm.contraction, PICARD_CONTRACTION);
    o.le("Picard final residual", *hm.residuals.last().unwrap(), PICARD_RESIDUAL);
    let grid = Arc::new(AnnulusGrid::new(m, &GridConfig { r_inner: 4.0, annuli: POISSON_ANNULI, sub: 2, l_max: Some(2) }).unwrap());
    let br = bianchi_residual(&model, &grid).unwrap();
    o.holds("Bianchi residual above roundoff", br.residual_resolved, format!("sup at r = 4: {:.3e}", br.residual_sup[0]));
    o.le("Bianchi residual slope", br.slope, -(m as f64 + 2.0) + BIANCHI_SLOPE_MARGIN);
    o
}

// ---------------------------------------------------------------- volume

fn spec(kind: ModelKind, m: usize) -> ModelSpec {
    ModelSpec { kind, m, group_order: None, params: ModelParams::default() }
}

fn volume_suite() -> Outcome {
    let mut o = Outcome::new();
    let cfg = VolumeConfig::default();
    let models = [
        ("flat", spec(ModelKind::Flat, 4)),
        ("flat", spec(ModelKind::Flat, 5)),
        ("flat quotient |G|=2", spec(ModelKind::FlatQuotient, 4)),
        ("flat quotient |G|=3", ModelSpec { group_order: Some(3), ..spec(ModelKind::FlatQuotient, 3) }),
        ("Eguchi-Hanson", spec(ModelKind::EguchiHanson, 4)),
    ];
    for (name, s) in &models {
        let model = catalog_build(s, 0).unwrap();
        let vr = renormalized_volume(&model, &cfg).unwrap();
        let m = model.m;
        let v = vr.value.unwrap_or(f64::NAN);
        if model.kind == ModelKind::EguchiHanson {
            o.holds(&format!("{name} volume negative"), v < 0.0, format!("V = {v:.10e} +- {:.1e}", vr.error));
            o.holds(&format!("{name} resolved"), v.abs() > EH_RESOLUTION * vr.error, format!("|V|/error = {:.3e}", v.abs() / vr.error));
        } else {
            o.le(&format!("{name} |V| (m={m})"), v.abs(), VOLUME_ZERO);
        }
        let worst = vr.ros.gap.iter().fold(f64::INFINITY, |a, g| a.min(*g));
        o.holds(&format!("{name} Ros gap at every radius (m={m})"), vr.ros.applicable && worst >= ROS_GAP, format!("min {worst:.3e}"));
        o.holds(&format!("{name} Cauchy constant stable (m={m})"), vr.cauchy_stable, format!("C = {:.3e}", vr.cauchy_constant));
    }

    // the same Weyl end in two coordinate systems
    for m in [3, 4, 5] {
        let w = seeded_weyl(m, 1.0, 9).unwrap();
        let tail = Tensor::from_fn(m, 2, |x| if x[0] == x[1] { 0.3 } else { 0.1 });
        let base = MetricModel::synthetic_weyl(&w, Some(tail), 1.0).unwrap();
        let change = seeded_change(m, 0.1, true, 10);
        let pulled = MetricModel::pulled_back(base.clone(), change).unwrap();
        let (vx, vy) = (renormalized_volume(&base, &cfg).unwrap(), renormalized_volume(&pulled, &cfg).unwrap());
        match (vx.value, vy.value) {
            (Some(a), Some(b)) => {
                o.holds(
                    &format!("coordinate independence (m={m})"),
                    (a - b).abs() <= vx.error + vy.error,
                    format!("{a:.10} vs {b:.10}, |diff| {:.2e} <= {:.2e}", (a - b).abs(), vx.error + vy.error),
                );
            }
            _ => o.holds(&format!("coordinate independence (m={m})"), false, "volume did not converge".into()),
        }
        o.holds(&format!("Cauchy constant stable, both charts (m={m})"), vx.cauchy_stable && vy.cauchy_stable, format!("{:?} / {:?}", vx.cauchy, vy.cauchy));
        let quad = cfg.quadrature(m).unwrap();
        let (_, slope) = volume_element_decay(&base, &vx.radii, &quad);
        o.lines.push(format!("info volume element slope (m={m}, with tail): {slope:.3}"));
    }
    o
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let suites: [Suite; 5] = [
        ("algebra suite", algebra_suite),
        ("jet suite", jet_suite),
        ("gauge at infinity", gauge_suite),
        ("exterior solver", solver_suite),
        ("renormalized volume", volume_suite),
    ];
    let mut failed = vec![];
    for (n, (title, run)) in suites.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        report(n + 1, title, &o, t.elapsed().as_secs_f64());
        if !o.passed {
            failed.push(n + 1);
        }
    }
    let total = start.elapsed().as_secs_f64();
    println!("suite runtime {total:.1}s (budget {SUITE_BUDGET_SECS}s)");
    assert!(total <= SUITE_BUDGET_SECS, "suite took {total:.1}s");
    assert!(failed.is_empty(), "criteria failing: {failed:?}");
}
