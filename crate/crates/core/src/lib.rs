//! Availability-conditioned multi-modal image synthesis.
//!
//! A pair of generators maps any non-empty subset of n input modalities to
//! one target modality and back, trained with least-squares adversarial
//! losses and a multi-modal cycle-consistency loss.

pub mod conditioning;
pub mod dataio;
pub mod error;
pub mod evalmetrics;
pub mod losses;
pub mod nets;
pub mod synthesis;
pub mod training;
mod fsutil;
mod seeding;

pub use error::{Error, Result};
pub use fsutil::{read_json, write_atomic, write_json_pretty};
pub use seeding::{mix64, name_id, stream_rng};
