//! The four subcommands. Each takes plain arguments, writes its artifacts
//! atomically and returns what it produced so tests can inspect it.

mod evaluate;
mod interpolate;
mod sample;
mod train;

pub use evaluate::{evaluate, EvaluateArgs, FeatureChoice};
pub use interpolate::{interpolate, InterpolateArgs, InterpolateSummary};
pub use sample::{sample, SampleArgs};
pub use train::{build_model, train, RunManifest, TrainOutcome};

/// Version tag carried by every JSON artifact.
pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;
