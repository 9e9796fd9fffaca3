//! Document authoring and peer review as two services joined by a signed
//! message bridge.

pub mod bridge;
pub mod canonical;
pub mod clock;
pub mod docs;
pub mod error;
pub mod ids;
pub mod model;
pub mod permissions;
pub mod review;

pub use error::{Error, Result};
