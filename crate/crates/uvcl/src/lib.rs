//! Continual, non-parametric clustering for streams of feature-vector
//! tasks.
//!
//! The pipeline maintains a kernel-density cluster model across a task
//! sequence: mean-shift mode seeking over memory plus new data, pseudo-
//! labeled clusters with FIFO replay buffers, distance and confidence
//! novelty detection, an expandable linear head trained with focal loss,
//! and Hungarian-matched continual-learning metrics.

pub mod cli;
pub mod engine;
pub mod error;
pub mod head;
pub mod ingest;
pub mod kde;
pub mod metrics;
pub mod registry;

pub use error::{Result, UvclError};
