//! Metric models on the end of an ALE space and the geometric quantities
//! computed from them.

pub mod catalog;
pub mod model;
pub mod volume;

pub use model::{sphere_area, unit_ball_volume, Jet1, MetricModel, ModelKind, Synthetic};
pub use volume::{
    mean_curvature_profile, renormalized_volume, ros_check, sphere_geometry, volume_defects, volume_element_decay,
    CurvatureProfile, RosTable, SpherePoint, VolumeConfig, VolumeReport,
};
pub use catalog::{
    planted_weyl,
    catalog_build, metric_decay_rate, ricci_fd, seeded_change, seeded_weyl, validate_leading_term, ModelParams, ModelSpec,
};
