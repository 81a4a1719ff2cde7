//! Sum-rate evaluation, Monte-Carlo sweeps over the study axes, and their
//! CSV and raw-dump artifacts.

mod config;
mod csv;
mod harness;
mod rate;
mod scheme;

pub use config::{Axis, ExperimentConfig, RHO};
pub use csv::{emit_csv, parse_csv, read_raw_dump, write_csv, write_raw_dump, ParsedCsv, RawRecord};
pub use harness::{
    mean_and_se, ConstellationOutcome, Experiment, ModelEntry, PointParams, PreparedPoint, SweepMetadata, SweepResult,
};
pub use rate::sum_rate;
pub use scheme::{PrecoderKind, Scheme};
