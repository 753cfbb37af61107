//! Four levels of the quintic derivative NLS on the circle: the resonant
//! frequency cluster, the planar reduced flow, the four-mode toy ODE and the
//! pseudospectral PDE, plus the harness that compares them.

pub mod error;
pub mod harness;
pub mod ode;
pub mod par;
pub mod reduced;
pub mod resonance;
pub mod spectral;
pub mod toy;
pub mod verify;

pub use error::{LabError, Result};
pub use par::Execution;
