//! Expansions of a metric at infinity, the decaying coordinate changes acting
//! on them, coefficient fits from sampled metrics and Weyl comparison.

mod compare;
mod expansion;
mod fit;

pub use compare::{compare_weyl_tol, compare_weyl_up_to_rotation, weyl_invariants, MatchStatus, WeylMatch};
pub use expansion::{
    bianchi_constraint_check, harmonic_constraint_check, kill_order_m_minus_1, kill_order_m_minus_1_tol,
    pullback_expansion, reduce_to_weyl, reduce_to_weyl_tol, DecayingChange, Gauge, InfinityExpansion, WeylResult,
};
pub use fit::{fit_expansion, FitConfig, FitReport};
