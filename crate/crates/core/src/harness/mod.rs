//! File formats, generators and experiment grids.

pub mod experiment;
pub mod gen;
pub mod io;
