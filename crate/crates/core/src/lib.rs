//! Budgeted computation allocation for multi-stage cascade ranking systems.
//!
//! Requests are served by an *action chain*: one `(model, item scale)` choice
//! per cascade stage. A learned reward model scores every chain for every
//! request and a dual-price allocator picks one chain per request so that the
//! total FLOPs of a period stay within budget.

pub mod allocator;
pub mod chain;
pub mod error;
pub mod pfec;
pub mod pipeline;
pub mod reward;
pub mod scenario;
pub mod simulator;

pub use error::{Error, Result};
