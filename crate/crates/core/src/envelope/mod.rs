//! Contraction constants, the Chebyshev envelope and period scans.

mod bounds;
mod constants;
mod lemmas;

pub use bounds::{
    cell_bounds, default_x0s, envelope_at, envelope_compact, envelope_curve, max_x0, scan_period,
    scan_periods, subsequence_containment, tail_mass, weight, ContainmentReport, ContainmentRow,
    EnvelopeResult, PeriodScanResult, Rounding, ScanOptions, CONTAINMENT_SLACK,
};
pub use constants::{
    contraction_constants, generalized_constants_search, induction_step, k_threshold,
    ContractionConstants, DEFAULT_K,
};
pub use lemmas::{
    chebyshev_check, expectation_bound_check, expectation_bound_check_with, lemma_sweep,
    variance_bound_check, variance_bound_check_with, ChebyshevRow, LemmaReport, LemmaRow,
};
