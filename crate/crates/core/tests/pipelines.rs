use ale_gauge::geometry::{
    catalog_build, mean_curvature_profile, metric_decay_rate, renormalized_volume, seeded_weyl, MetricModel, ModelKind, VolumeConfig,
};
use ale_gauge::infinity::DecayingChange;
use ale_gauge::pipeline::{run, Command, Config};
use ale_gauge::Tensor;

fn config(json: &str) -> Config {
    Config::from_json(json).unwrap()
}

#[test]
fn reports_are_byte_identical_for_a_seed() {
    let cfg = config(r#"{"model": {"kind": "pulled_back", "m": 3}, "seed": 17, "pipeline": {"volume": {"count": 5}}}"#);
    let a = run(Command::RenormVolume, &cfg).unwrap();
    let b = run(Command::RenormVolume, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.tables[0].to_csv(), b.tables[0].to_csv());
}

#[test]
fn gauge_pipeline_recovers_weyl() {
    let rep = run(Command::GaugeInfinity, &config(r#"{"model": {"m": 4}, "seed": 4}"#)).unwrap();
    assert!(rep.passed, "{:#?}", rep.checks);
    assert!(rep.data["known_rotation_residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn grid_keys_follow_the_documented_names() {
    let cfg = config(r#"{"model": {"kind": "synthetic_weyl", "m": 4, "params": {"tail": 0.3}}, "grid": {"R": 8.0, "J": 5, "angular": 4}}"#);
    assert_eq!(cfg.grid.r, Some(8.0));
    assert_eq!(cfg.grid.j, Some(5));
    let rep = run(Command::BianchiSolve, &cfg).unwrap();
    assert!(rep.passed, "{:#?}", rep.checks);
}

#[test]
fn eguchi_hanson_volume_is_minus_quarter_pi_squared_a4() {
    // V_g(B_r) = ω₄(r⁴ − a⁴)/2 against ω₄ r⁴/2, with ω₄ = π²/2
    for a in [0.5f64, 1.0, 2.0] {
        let spec = config(&format!(r#"{{"model": {{"kind": "eguchi_hanson", "m": 4, "params": {{"a": {a}}}}}}}"#)).model;
        let vr = renormalized_volume(&catalog_build(&spec, 0).unwrap(), &VolumeConfig::default()).unwrap();
        let want = -std::f64::consts::PI.powi(2) * a.powi(4) / 4.0;
        assert!((vr.value.unwrap() - want).abs() < 1e-10 * want.abs(), "a={a}: {:?}", vr.value);
    }
}

#[test]
fn eguchi_hanson_decays_at_rate_four() {
    let model = MetricModel::eguchi_hanson(1.0).unwrap();
    let cfg = VolumeConfig::default();
    let radii = cfg.radii_for(&model).unwrap();
    let (_, slope) = metric_decay_rate(&model, &radii, &cfg.quadrature(4).unwrap());
    assert!((slope + 4.0).abs() < 0.05, "{slope}");
}

#[test]
fn weyl_model_mean_curvature_decays_past_m_plus_one() {
    for m in [4, 5] {
        let model = MetricModel::synthetic_weyl(&seeded_weyl(m, 1.0, 3).unwrap(), None, 1.0).unwrap();
        let cfg = VolumeConfig::default();
        let prof = mean_curvature_profile(&model, &cfg.radii_for(&model).unwrap(), &cfg.quadrature(m).unwrap()).unwrap();
        assert!(prof.slope <= -(m as f64 + 1.0), "m={m}: {}", prof.slope);
    }
}

#[test]
fn pulled_back_flat_mean_curvature_follows_the_change() {
    // u = B x/r^m perturbs the metric at order r^{−m}
    let m = 4;
    let b = Tensor::from_fn(m, 2, |x| if x[0] == x[1] { [0.4, -0.1, -0.2, -0.1][x[0]] } else { 0.05 });
    let model = MetricModel::pulled_back(MetricModel::flat(m), DecayingChange::with_b_mat(m, b)).unwrap();
    let cfg = VolumeConfig::default();
    let prof = mean_curvature_profile(&model, &cfg.radii_for(&model).unwrap(), &cfg.quadrature(m).unwrap()).unwrap();
    assert!((prof.slope + m as f64).abs() < 0.05, "{}", prof.slope);
}

#[test]
fn bad_configs_are_rejected() {
    assert!(Config::from_json(r#"{"model": {"kind": "eguchi_hanson", "m": 5}}"#)
        .map(|c| catalog_build(&c.model, 0))
        .unwrap()
        .is_err());
    assert!(Config::from_json(r#"{"model": {"kind": "flat_quotient", "group_order": 0}}"#)
        .map(|c| catalog_build(&c.model, 0))
        .unwrap()
        .is_err());
    assert!(Config::from_json("[1, 2]").is_err());
    let spec = config(r#"{"model": {"kind": "synthetic_weyl", "m": 4}}"#).model;
    assert_eq!(catalog_build(&spec, 1).unwrap().kind, ModelKind::SyntheticWeyl);
}
