//! Synthetic floor-plan benchmark for topology preservation in image-to-image models.

pub mod cli;
pub mod extract;
pub mod fixtures;
pub mod metrics;
pub mod plangen;
pub mod qualify;
pub mod raster;
pub mod topology;
