//! Single-process streaming ML-based NIDS: session assembly, host-feature
//! extraction, classifiers, a staged concurrent pipeline, and the
//! throughput/latency/F1 benchmark harness.

pub mod assembler;
pub mod classifiers;
pub mod error;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod seeding;
pub mod selection;
pub mod synth;

pub use error::ConfigError;
pub use model::{ClassLabel, ConnState, Direction, FiveTuple, Protocol, ServiceType, SessionRecord};
