//! Constructive procedures: support stripping, phase averaging, isometric
//! encoding extraction and derandomization of forward classical
//! communication.

mod isometry;
mod phase;
mod stripping;

pub use isometry::{
    check_fcc, check_isometry_extraction, derandomize_fcc, extract_isometry, FccResult,
    IsometryExtractionResult,
};
pub use phase::{check_three_halves_theorem, cross_term_identity, phase_average_fidelity, PhaseAverage, PhaseSet};
pub use stripping::{
    rate_accounting, strip_support, strip_support_with, RateAccounting, Stripping,
    StrippingEnsemble, StrippingStep,
};
