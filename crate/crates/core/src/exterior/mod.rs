//! Exterior-domain analysis: sphere quadrature, harmonic projections, weighted
//! norms, the Poisson solver and the harmonic-map correction.

pub mod grid;
pub mod harmonic_map;
pub mod harmonics;
pub mod poisson;
pub mod quadrature;

pub use grid::{decay_slope, weighted_norm, weighted_norm_report, AnnulusGrid, GridConfig, NormReport, WeightedField};
pub use harmonic_map::{
    bianchi_residual, composition_bound_check, harmonic_map_correction, Attempt, BianchiReport, CompositionReport,
    HarmonicMapConfig, HarmonicMapReport,
};
pub use harmonics::HarmonicBasis;
pub use poisson::{
    harmonic_tail_fit, solve_poisson_exterior, HarmonicTail, ModalField, PoissonConfig, PoissonSolution, RadialTerm,
};
pub use quadrature::{gauss_gegenbauer, SphereQuadrature};
