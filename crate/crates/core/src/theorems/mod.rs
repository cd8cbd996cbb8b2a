//! Numerical checks of the boundedness, invariance and descent statements
//! about the training dynamics.

mod bn;
mod ce_lemma;
mod compact;
mod invariance;
mod smaller_step;
mod verdict;

pub use bn::{bn_bounds, check_bn_bounds, BnConfig, BnReport, SCALE_TOL};
pub use ce_lemma::{check_ce_lemma, CeLemmaConfig, CeLemmaReport};
pub use compact::{
    check_compact_domain, compact_domain_bounds, CompactDomainConfig, CompactDomainReport, CompactTracePoint,
    CE_LIPSCHITZ, CONTAINMENT_TOL,
};
pub use invariance::{
    detect_invariance, detect_invariance_in_series, InvarianceDetection, InvarianceTolerance, QUIET_WINDOWS,
};
pub use smaller_step::{
    check_smaller_step, SmallerStepConfig, SmallerStepReport, SmallerStepRow, DEFAULT_C_GRID, MIN_ATOMS,
    STATIONARY_EPS,
};
pub use verdict::{Report, Verdict};
