//! Normalized pseudo-two-dimensional (P2D) lithium-ion cell models and a
//! staged grouped-parameter identification toolkit.
//!
//! The crate simulates a cell at three levels of fidelity — a pseudo-equilibrium
//! single-particle model (`SPM_eq`), a single-particle model with solid
//! diffusion and kinetics (`SPM`), and the full normalized P2D model with an
//! optional Arrhenius temperature coupling (`P2DT`) — all driven by the same
//! grouped-parameter set. On top of the forward models it provides:
//!
//! * the grouping map from as-made physical parameters to grouped parameters
//!   and the scaling families that leave the grouped set invariant ([`params`]),
//! * an exact-rational exponent-matrix identifiability analysis ([`params::ident`]),
//! * CCCV protocol driving with a PID constant-voltage controller ([`protocol`]),
//! * staged nonlinear least-squares identification of the grouped parameters
//!   from cycling data, with cross-model warm starting ([`fit`]).
//!
//! The `p2dfit` binary exposes `simulate`, `identify`, `identifiability` and
//! `synth` subcommands over a TOML configuration file.

pub mod config;
pub mod constants;
pub mod error;
pub mod fit;
pub mod ocp;
pub mod p2d;
pub mod params;
pub mod protocol;
pub mod spm;

mod radial;

pub use error::Error;
