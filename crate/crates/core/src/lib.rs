//! Population dynamics of thermostatically controlled loads.
//!
//! The crate has two views of the same population: an agent view
//! (`population`), where every load is a first-order thermal model with a
//! deadband thermostat and random forced switching, and a field view (`fpe`),
//! where the ON/OFF temperature distributions evolve under a pair of coupled
//! advection-diffusion equations on the normalized band coordinate
//! z = (x - x_lower) / width. `control` implements the aggregate-power
//! tracking law that actuates both views by moving the deadband,
//! `trajectory` supplies smooth set-point references, and `diagnostics`
//! verifies the conservation and stability identities the field model obeys.
//!
//! The crate is `no_std` (alloc only); all floating-point math goes through
//! `libm`. IO, configuration and the CLI live in the companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod control;
pub mod diagnostics;
pub mod error;
pub mod fpe;
pub mod population;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};
pub use fpe::{DistributionField, NormalizedSystem, Species};
pub use population::{Deadband, Mode, TclAgent, TclParameters};
