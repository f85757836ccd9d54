//! Gauge maps, named subspaces and decomposition solvers.

pub mod checks;
pub mod decompose;
pub mod maps;
pub mod spaces;

pub use decompose::{
    project_21, project_full, split_curvature, weyl_from_stilde, weyl_reduce, Decomp21, FullDecomp, WeylReduction,
};
pub use maps::{bianchi1, bianchi2, map_r, map_rtilde, map_s, psi1, psi1_inverse, psi2, psi3, psi4, split_b, xi, xi4, GaugeMapId, XiArg};
pub use spaces::{random_element, space_basis, Algebra, SpaceId, TensorSpace};
