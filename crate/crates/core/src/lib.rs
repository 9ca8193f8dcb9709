//! Pseudo-spectral simulator and verification toolkit for the compressible
//! power-law Oldroyd-B model with stress diffusion on a periodic box.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: pointwise calculus of small symmetric matrices.
//! - [`constitutive`]: pressure laws, polymer laws, divergence barrier, viscous stress.
//! - [`fields`]: periodic grid fields with spectral differentiation and dealiasing.
//! - [`dynamics`]: right-hand sides and the fixed-point time stepper.
//! - [`diagnostics`]: energy ledger, relative entropy, convexity and positivity checks.
//! - [`io`]: run configuration, scenario presets, driver and artifact formats.

pub mod constitutive;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod io;
pub mod manufactured;
pub mod tensor;

pub use constitutive::ModelParams;
pub use dynamics::{State, StepConfig, StepReport};
pub use error::{Error, Result};
pub use fields::{Grid, ScalarField, SymTensorField, VectorField};
pub use tensor::{SpectralDecomp, SquareMat, SymMat};
