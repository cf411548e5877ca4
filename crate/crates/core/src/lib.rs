//! Weak second-order sampling schemes, Hermite transition-density expansions
//! and contrast estimators for elliptic and hypo-elliptic diffusions.

pub mod augment;
pub mod error;
pub mod estimate;
pub mod expansion;
pub mod gauss;
pub mod hermite;
pub mod linalg;
pub mod model;
pub mod par;
pub mod real;
pub mod scheme;
pub mod variates;

pub use error::{Error, Result};
