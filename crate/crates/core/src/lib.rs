//! Stiction friction oscillator: an exact event-driven model of the
//! discontinuous system, its smooth slow-fast regularization, and a
//! periodic-orbit engine for symmetric slip-stick orbits and canards.
//!
//! ```
//! use stiction::model::{Params, State};
//! use stiction::pws::{integrate_stiction, BranchPolicy, StictionOptions};
//!
//! let p = Params::reference(2.0);
//! let run = integrate_stiction(
//!     &State::new(0.0, 0.0, 0.0),
//!     12.566,
//!     BranchPolicy::StickFirst,
//!     &p,
//!     &StictionOptions::default(),
//! )
//! .unwrap();
//! assert!(run.primary().events.is_empty());
//! ```

pub mod error;
pub mod export;
pub mod model;
pub mod ode;
pub mod orbits;
pub mod par;
pub mod pws;
pub mod regularization;
pub mod stats;

pub use error::{Error, Result};
