//! Harmonic load limiting workbench: a periodic rotor surrogate, harmonic
//! LTI assembly, singular-perturbation reduction, receding-horizon control
//! margins, a dynamic-inversion flight controller and simulation harness.

pub mod error;
pub mod fcs;
pub mod harmonic;
pub mod harness;
pub mod linalg;
pub mod llc;
pub mod plant;
pub mod reduction;
pub mod statespace;

pub use error::{Error, Result};
pub use statespace::StateSpace;
