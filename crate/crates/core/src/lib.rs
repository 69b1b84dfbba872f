//! Budget-constrained divisible-resource allocation.
//!
//! The crate models mechanisms that split a single divisible resource among
//! players who each submit a scalar signal, and measures how much liquid
//! welfare is lost at pure Nash equilibria when players have hard budgets.
//!
//! * [`mechanisms`]: allocation and payment rules (Kelly, SH, E2-PYS, E2-SR,
//!   SHR, Maheswaran-Basar) with exact derivatives and the constants β, γ, φ.
//! * [`games`]: valuations, budgets, utilities and the welfare functionals.
//! * [`equilibrium`]: best responses, equilibrium search and verification.
//! * [`lpoa`]: affinized games, the master ratio and its supremum scans.
//! * [`constructions`]: explicit lower-bound game pairs.

pub mod constructions;
pub mod equilibrium;
mod error;
pub mod games;
pub mod lpoa;
pub mod mechanisms;
pub mod numeric;

pub use error::{Error, Result};
