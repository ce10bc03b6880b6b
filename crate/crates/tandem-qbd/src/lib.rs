//! Spectral analysis of the two-node tandem queue viewed as a
//! quasi-birth-and-death (QBD) process.
//!
//! The crate computes, and cross-validates against brute-force oracles:
//!
//! - generator blocks, characteristic matrices and the scalar spectral
//!   functions of the network ([`model`]);
//! - the R-matrix fixed point, matrix-geometric stationary distributions and
//!   dense spectra ([`qbd`]);
//! - the orthogonal-polynomial machinery behind the truncation decay rates,
//!   including the root `zhat` that equals `sp(R_m)` ([`orthopoly`]);
//! - invariant measures `w` with `w R = z w` in closed form, with their l1
//!   and positivity classification ([`invariant`]);
//! - level-0 boundary redesigns that force an arbitrary feasible decay rate
//!   ([`control`]);
//! - first-passage ladders `H_k`, their fixed point and the decay of hitting
//!   probabilities ([`hitting`]);
//! - direct truncated-chain solves and seeded Monte Carlo simulation used as
//!   independent oracles ([`oracle`]);
//! - the end-to-end validation suite wired into both `cargo test` and the
//!   CLI ([`validate`]).

// `!(v > 0.0)` style guards are used on purpose: they reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod hitting;
pub mod invariant;
pub mod model;
pub mod oracle;
pub mod orthopoly;
pub mod qbd;
pub mod tridiag;
pub mod validate;

pub use error::{Error, Result};
pub use model::{
    build_blocks, chi, chi1, compute_eta, compute_z1, sigma, spectral_report, stability_check, tau,
    Capacity, CharacteristicKind, CharacteristicMatrix, QbdBlocks, Regime, SpectralReport,
    StabilityReport, TandemParams,
};
