//! Slow-fast regularization of the stiction model.

pub mod canard;
pub mod field;
pub mod phi;
pub mod stiff;

pub use canard::*;
pub use field::*;
pub use phi::*;
pub use stiff::*;
