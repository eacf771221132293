//! Library half of the `advscene` binary: configuration resolution, the
//! experiment drivers, and SVG rendering. The binary is a thin argument
//! parser over these.

pub mod config;
pub mod render;
pub mod runner;
