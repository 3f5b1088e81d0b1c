#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;

pub mod bath;
pub mod constants;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod generators;
pub mod linalg;
pub mod parallel;
pub mod pipeline;
pub mod spin;

pub use error::{Error, Result};
