pub mod bench;
pub mod classifier;
pub mod decompose;
pub mod detectors;
pub mod matrix;
pub mod sample;
pub mod stats;
pub mod streams;
pub mod theory;

pub use matrix::{SampleMatrix, ShapeError};
pub use sample::TimedSample;
pub use streams::{Dataset, LabeledStream, StreamSpec};
