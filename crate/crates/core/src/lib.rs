//! Synthesis and validation of physically feasible 3D human poses in
//! voxelized indoor scenes.

pub mod camera;
pub mod constraint;
pub mod correlate;
pub mod depthmap;
pub mod error;
pub mod heatmap;
pub mod io;
pub mod pipeline;
pub mod pose;
pub mod skeleton;
pub mod support;
pub mod voxel;

pub use error::{Error, Result};
