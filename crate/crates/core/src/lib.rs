//! Data curation, dynamic-resolution planning, zoom-in chain synthesis and
//! confidence-free evaluation for remote-sensing vision-language pipelines.

pub mod codec;
pub mod data_engine;
pub mod geometry;
pub mod metrics;
pub mod resolution;
pub mod tiling;
pub mod zoomchain;
