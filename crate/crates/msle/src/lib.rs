//! Numerical toolkit for chordal multiple SLE in the upper half-plane.
//!
//! The library discretises Loewner chains as compositions of vertical-slit
//! maps, drives several curves at once through interacting SDEs for their
//! boundary positions, and provides the machinery needed to check the
//! classical identities of the subject at desk scale: half-plane capacity
//! bookkeeping, null-vector partition functions, generator commutation,
//! Möbius covariance, and Girsanov-type reweighting between curve ensembles.
//!
//! Most capabilities have a runnable demonstration under `examples/`; the
//! `msle` binary exposes the same functionality as `simulate`, `verify` and
//! `plot` subcommands.

pub mod cli;
pub mod conformal;
pub mod decomposition;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod partition;
pub mod rng;
pub mod weights;

pub use error::{Error, Result};
