pub mod accel;
pub mod diff;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod image;
pub mod io;
pub mod primitive;
pub mod real;
pub mod renderer;

pub use error::{Error, Result};
pub use real::Real;
