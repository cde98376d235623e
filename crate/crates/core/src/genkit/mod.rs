//! Deterministic generators: key choosers, value payloads, operation-type
//! sampling and histogram-driven field lengths.
//!
//! Every generator is seeded from a [`StreamSeed`], so a run is a pure
//! function of the configuration, the root seed and the trial index.

mod chooser;
mod length;
mod mix;
mod rng;
mod value;

pub use chooser::{IndexPermutation, KeyChooser};
pub use length::HistogramLengthSampler;
pub use mix::OperationMixSampler;
pub use rng::{GenRng, Stream, StreamSeed};
pub use value::ValueGenerator;
