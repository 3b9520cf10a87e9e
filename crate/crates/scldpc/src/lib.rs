//! Analysis toolkit for spatially coupled LDPC code ensembles whose channel
//! is a single random burst of erasures on top of an optional uniform
//! background erasure rate.
//!
//! The crate covers the full pipeline from ensemble definition to
//! finite-length simulation:
//!
//! * [`ensemble`] — the `(dv, dc, w, L, M)` coupled ensemble: parameter
//!   validation, graph sampling, and edge-list serialization.
//! * [`burst`] — burst geometry: per-position erased-bit counts, continuous
//!   erasure profiles for density evolution, and random burst patterns for
//!   simulation.
//! * [`de_scalar`] — erasure-channel density evolution over the coupled
//!   chain, recoverable-burst-length search, and BP thresholds.
//! * [`de_density`] — quantized log-likelihood-ratio density evolution for
//!   the binary-input AWGN channel with burst erasures, plus channel
//!   capacity utilities.
//! * [`stopping_sets`] — exact size-2 stopping-set statistics and the
//!   error-floor estimate they induce.
//! * [`peeling`] — linear-time peeling decoder and Monte Carlo
//!   block-error-rate sweeps with reproducible stopping rules.

pub mod burst;
pub mod de_density;
pub mod de_scalar;
pub mod ensemble;
mod error;
pub mod peeling;
mod seeds;
pub mod stopping_sets;

pub use error::{Error, Result};
