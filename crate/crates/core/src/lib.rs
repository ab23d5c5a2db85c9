//! Twisted states on rings of nonlocally coupled phase oscillators with
//! pairwise, triplet and quadruplet interactions.
//!
//! * [`kernel`]: the indicator kernel, its Fourier coefficients and the
//!   linearization coefficients built from them.
//! * [`spectrum`]: twisted-state spectra, certified suprema and threshold radii.
//! * [`bifurcation`]: pitchfork coefficients, branch approximations and
//!   stability maps.
//! * [`ring`]: finite rings: right-hand sides, Jacobians, time integration and
//!   Newton refinement.

pub mod bifurcation;
pub mod error;
pub mod kernel;
pub mod ring;
pub mod roots;
pub mod spectrum;

pub use error::{Result, TwistError};
pub use kernel::{Params, Sign};
