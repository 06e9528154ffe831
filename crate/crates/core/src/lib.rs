//! CHSH-Bell violation for unsymmetrical micro-macro polarization singlets.
//!
//! The multi-photon half of the singlet is the output of a phase-covariant
//! amplifier seeded by one photon. It is decomposed into fixed-photon-number
//! sectors (2k+1 photons each), optionally passed through a diagonal POVM
//! preselection filter, and measured with a coarse-grained binary observable
//! that only reports the sign of the polarization population difference.
//!
//! Module map:
//!
//! - [`fockspace`]: sector states, gain weights, photon statistics.
//! - [`polarization`]: basis rotations in a fixed-photon-number sector and the
//!   micro/macro observables.
//! - [`preselect`]: diagonal preselection filters, filtered norms and weights.
//! - [`bell`]: visibility, antivisibility, correlations, CHSH parameter.
//! - [`optimize`]: analyzer-angle optimization and gain sweeps.
//! - [`losses`]: pure-loss channels and the loss study of the corner-filtered
//!   state.
//! - `oracle` (feature `oracle`): exact-rational reference evaluators.
//! - [`cli`]: the command-line front end.

#![forbid(unsafe_code)]

pub mod bell;
pub mod cli;
pub mod error;
pub mod fockspace;
pub mod losses;
pub mod numeric;
pub mod optimize;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod polarization;
pub mod preselect;

pub use error::{Error, Result};
