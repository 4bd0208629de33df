pub mod bsm;
pub mod calibrate;
pub mod error;
pub mod experiments;
pub mod fvc;
pub mod gridgen;
pub mod neuralnet;
pub mod noarb;
pub mod params;
pub mod quad;
pub mod rbergomi;
pub mod rheston;

pub use error::{Error, Result};
