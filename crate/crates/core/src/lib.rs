//! Simulator and estimation/learning stack for catching a thrown object
//! with a camera + radar equipped arm.

pub mod ballistics;
pub mod baseline;
pub mod controller;
pub mod error;
pub mod harness;
pub mod models;
pub mod nn;
pub mod sensors;
pub mod util;

pub use error::{Error, Result};
