//! Centralized tolerances and floors.
//!
//! Every cutoff the engine applies lives here with its justification, so that
//! no module carries ad-hoc magic numbers.

/// Zero test for the h-statistic on the exact backend.
///
/// Exact-backend h values are quadrature results with error well below 1e-9;
/// true nonzero index gaps on realistic grids produce |h| of 1e-4 or more, so
/// 1e-6 cleanly separates "zero" from "nonzero".
pub const H_ZERO_TOL_EXACT: f64 = 1e-6;

/// Zero test for the h-statistic on counting backends, as a multiple of the
/// combined standard error of the two (or four) cells involved.
pub const H_ZERO_SE_MULT: f64 = 3.0;

/// Instrument-relevance gap floor for population backends.
///
/// Separates numerical noise from true irrelevance; population propensity
/// gaps in supported models are two orders of magnitude larger.
pub const RELEVANCE_TOL_POP: f64 = 1e-3;

/// Instrument-relevance floor for the empirical backend, as a multiple of the
/// combined standard error of the two propensities compared.
pub const RELEVANCE_SE_MULT: f64 = 2.0;

/// When several grid values solve the matching equation, the engine computes
/// with the minimal-residual one and records the spread of the identified
/// value across the alternatives; a spread larger than this multiple of the
/// zero tolerance is an inconsistency and fails the query.
pub const MATCH_SPREAD_FACTOR: f64 = 10.0;

/// Minimum conditioning-cell count for the simulated-population backend.
///
/// Downstream recursions multiply many conditionals; a noisy cell must fail
/// loudly instead of propagating.
pub const MC_CELL_FLOOR: u64 = 200;

/// Minimum conditioning-cell count for the empirical backend (configurable on
/// the evaluator; this is the default).
pub const EMPIRICAL_CELL_FLOOR: u64 = 30;

/// Denominator floor for transition-specific ratios.
pub const TRANSITION_DENOM_FLOOR: f64 = 1e-3;

/// Branch weights at a recursion node must sum to one within this tolerance
/// on the exact backend.
pub const WEIGHT_SUM_TOL_EXACT: f64 = 1e-10;

/// Probabilities over a full outcome/treatment alphabet must sum to one
/// within this tolerance on the exact backend (counting backends partition
/// counts and sum exactly).
pub const ALPHABET_SUM_TOL_EXACT: f64 = 1e-12;

/// A forced-regime oracle ratio is degenerate when the denominator estimate
/// falls below this many expected hits.
pub const ORACLE_DENOM_MIN_HITS: f64 = 10.0;

/// Default quadrature order per dimension for the exact backend; order 16 on
/// the transformed (smooth) integrand is stable to ~1e-9 for thresholds
/// within |3.5| on the normal scale.
pub const DEFAULT_QUAD_ORDER: usize = 16;

/// Bootstrap replicates are reported as failed-too-often above this fraction.
pub const BOOTSTRAP_MAX_FAILURE_FRAC: f64 = 0.20;

/// Cells with conditioning mass below this are treated as unreachable by the
/// exact backend (the recursion skips zero-weight branches instead).
pub const EXACT_MASS_FLOOR: f64 = 1e-12;
