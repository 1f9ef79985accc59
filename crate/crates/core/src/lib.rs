//! Iterative prompt-mask cycle for task-generic promptable segmentation.
//!
//! A single task-level prompt ("camouflaged animal", "polyp", ...) is turned
//! into per-image object names and boxes by querying a multimodal language
//! model on several image patches, filtering its guesses with contrastive
//! scoring against an inpainted copy of the image, and feeding the winner to
//! a promptable segmenter. The resulting mask steers the next iteration.
//!
//! All model access goes through the traits in [`backends`]; deterministic
//! mocks live in [`backends::mock`] and [`backends::scene`].

pub mod backends;
pub mod engine;
pub mod error;
pub mod harness;
pub mod maskgen;
pub mod metrics;
pub mod patching;
pub mod promptgen;
pub mod types;

pub use engine::{reweight_image, run_batch, run_cycle, select_final, CycleError, IterationRecord, Trace};
pub use error::{BackendError, Error, Result};
pub use types::*;
