//! Simulation of two-component nonlinear liquid chromatography with a Bi-Langmuir
//! isotherm, synthetic training-data generation, and two estimators of the eight
//! isotherm parameters: a feed-forward neural network trained on simulated
//! injections and a first-moment regularized least-squares fit.

pub mod column;
pub mod datagen;
pub mod error;
pub mod fnn;
pub mod interp;
pub mod isotherm;
pub mod pipeline;
pub mod rng;
pub mod variational;

pub use column::{
    boundary_value, simulate, total_response, Chromatogram, ColumnConfig, DetectorSpec,
    InjectionProfile, Outlet,
};
pub use error::{Error, Result};
pub use isotherm::{Concentration2, IsothermParams};
