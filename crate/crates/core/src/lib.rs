//! Real-time data labelling with independent one-vs-all binary heads.
//!
//! Samples arrive as precomputed feature vectors ([`feature_store`]). Each
//! class gets its own small binary network ([`classifier`]). A
//! [`session::Session`] runs the labelling loop: the user labels a random
//! bootstrap set, the heads pre-label batches which the user accepts or
//! corrects, mistakes accumulate in a buffer, and either a full buffer or a
//! bad batch triggers retraining. [`metrics`] records how much of the work
//! the models did, and [`oracle_sim`] replays the loop against ground truth.

pub mod classifier;
pub mod error;
pub mod feature_store;
pub mod metrics;
pub mod oracle_sim;
pub mod rng;
pub mod session;

pub use error::{Error, Result};
pub use feature_store::{Dataset, Sample};
pub use metrics::Report;
pub use session::{Phase, Session, SessionConfig};
