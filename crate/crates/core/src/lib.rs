//! Weight enumerators, ML decoding bounds, spatially coupled construction and
//! Monte Carlo simulation for turbo-like code ensembles (parallel, serial,
//! braided and hybrid concatenations of systematic recursive convolutional
//! encoders).

pub mod bounds;
pub mod coupling;
pub mod ensembles;
mod error;
pub mod extfloat;
pub mod gf2;
pub mod hpfloat;
pub mod sim;
pub mod trellis;
pub mod wef;

pub use error::{Error, Result};
