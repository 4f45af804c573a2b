//! Slip-stick periodic orbits: construction, Floquet analysis and continuation.

pub mod arclength;
pub mod branch;
pub mod floquet;
pub mod pws;
pub mod regularized;
pub mod shooting;
pub mod transversality;

pub use branch::*;
pub use floquet::*;
pub use pws::*;
pub use regularized::*;
pub use shooting::*;
pub use transversality::*;
