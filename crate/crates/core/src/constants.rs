//! Physical constants compiled into the models.

/// Faraday constant [C/mol].
pub const FARADAY: f64 = 96485.33212;

/// Universal gas constant [J/(mol K)].
pub const GAS_CONSTANT: f64 = 8.314462618;

/// Apparent transfer coefficient; the kinetics assume a symmetric reaction
/// (alpha = 1 - alpha = 1/2).
pub const ALPHA: f64 = 0.5;

/// Stoichiometry guard: open-circuit potentials and exchange currents are
/// evaluated on [EPS_STOICH, 1 - EPS_STOICH].
pub const EPS_STOICH: f64 = 1e-6;

/// Floor on the normalized exchange current; hitting it is surfaced as a
/// cutoff event rather than a silent clamp.
pub const EXCHANGE_CURRENT_FLOOR: f64 = 1e-12;
