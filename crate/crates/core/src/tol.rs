//! Fixed numerical tolerances.

/// Absolute tolerance for identities on exact (constructed) inputs.
pub const EXACT: f64 = 1e-10;

/// Relative tolerance for checks on least-squares fitted data.
pub const FITTED: f64 = 1e-8;

/// Agreement of finite-difference curvature with closed forms.
pub const FD_CURVATURE: f64 = 1e-6;

/// Step for central differences of the metric.
pub const FD_STEP: f64 = 1e-4;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_REL_TOL: f64 = 1e-8;

/// A weight exponent this close to a mode exponent is rejected.
pub const RESONANCE_GAP: f64 = 1e-3;

/// Default exponent loss in the harmonic-map correction.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Default angular truncation for m = 3, 4.
pub const DEFAULT_L_MAX: usize = 8;

/// Angular truncation used for m > 4.
pub const HIGH_DIM_L_MAX: usize = 2;

/// Random starts in the orthogonal-group search.
pub const ROTATION_STARTS: usize = 24;

/// Picard iteration cap.
pub const PICARD_MAX_ITER: usize = 100;

/// Target residual of the harmonic-map equation.
pub const PICARD_RESIDUAL: f64 = 1e-8;

/// Weyl tensors are compared up to rotation at this residual.
pub const WEYL_MATCH: f64 = 1e-6;
