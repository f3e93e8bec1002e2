//! Semi-Lagrangian solver for the ellipsoidal statistical BGK model on a
//! periodic 1D spatial domain with 3D velocities.
//!
//! Each step transports along characteristics with linear interpolation and
//! then relaxes towards the anisotropic Gaussian built from the transported
//! moments. The relaxation is explicit in the moments and implicit in `f`, so
//! the step is stable for any Knudsen number `κ > 0`.

pub mod diagnostics;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod harness;
pub mod initcond;
pub mod moments;
pub mod stepper;
pub mod tensor;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{make_grids, DistributionGrid, SpatialGrid, VelocityGrid};
pub use initcond::InitialCondition;
pub use moments::MacroFields;
pub use stepper::{SchemeParams, Stepper};
pub use tensor::SymTensor3;
