pub mod convert;
pub mod eval;
pub mod sample;
pub mod tile;
pub mod zoomgen;
