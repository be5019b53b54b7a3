//! Simulator for collaborative fraud detection over locally differentially
//! private account embeddings.
//!
//! Banks encode account transaction histories into bounded embeddings,
//! release them through a Laplace mechanism, and an external scorer consumes
//! the releases. Two distributed training protocols (peer-to-peer transfer
//! learning and orchestrated end-to-end training) and three inference-time
//! attacks measure the utility/privacy trade-off across privacy budgets.

pub mod error;
pub mod kernel;
pub mod rng;

pub use error::{Error, Result};
pub mod data;
pub mod ldp;
pub mod metrics;
pub mod encoder;
pub mod federation;
pub mod attacks;
pub mod pipeline;
