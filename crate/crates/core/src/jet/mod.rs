//! Order-two jets of a metric at a point and the polynomial coordinate
//! changes that bring them to curvature normal form.

mod normal;
pub mod poly;

pub use normal::{
    curvature_normalize, kill_linear, normal_form, pullback_jet, ricci_at_origin, rotate_to_identity, MetricJet,
    NormalForm, PolynomialChange, RicciReport,
};
pub use poly::Poly;
