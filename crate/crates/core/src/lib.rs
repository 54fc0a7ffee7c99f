//! Three-phase adaptive design-of-experiments engine: modified definitive
//! screening, adaptive augmentation, and Gaussian-process optimization with
//! variance-guided refinement runs.

pub mod api;
pub mod augment;
pub mod bench;
pub mod design;
pub mod error;
pub mod numkit;
pub mod optimize;
pub mod screening;
pub mod session;
pub mod surrogate;

pub use error::{Error, Result};
