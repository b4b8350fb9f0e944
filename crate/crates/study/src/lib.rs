//! Blinded visual-rating study: randomized paired-trial planning, an HTTP
//! rating service with durable storage, and per-condition aggregation.

mod aggregate;
mod error;
mod plan;
mod server;
mod store;

pub use aggregate::{aggregate_ratings, quantile, BoxStats, ConditionSummary, StudyReport};
pub use error::{Result, StudyError};
pub use plan::{
    plan_study, validate_rater_id, ImagePair, ImagePools, StudyPlan, TrialRecord, DEFAULT_PER_CONDITION, DEFAULT_REAL,
    REAL_CONDITION,
};
pub use server::{bind, check_images, render_png, router, serve, RatingAck, StudyExport, StudyState, TrialView};
pub use store::{read_ratings, RatingRecord, RatingStore, RATINGS_FILE};
