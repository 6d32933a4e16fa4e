//! Spectral simulation of cubic and quintic Gross-Pitaevskii hierarchies on a
//! periodic torus, with an independent NLS oracle and numerical checks of the
//! operator and norm estimates that drive the local well-posedness theory.

pub mod budget;
pub mod error;
pub mod kernels;
pub mod nls;
pub mod norms;
pub mod operators;
pub mod solver;
pub mod spectral;
pub mod sum;
pub mod verify;

pub use error::{Error, Result};
pub use spectral::{GridSpec, MomentumPoint, C64};
