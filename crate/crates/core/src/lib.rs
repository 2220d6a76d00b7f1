#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;

pub mod counter;
pub mod engine;
pub mod error;
pub mod freq;
pub mod hard_instances;
pub mod rational;
pub mod rng;
pub mod single_site;
pub mod stream;
pub mod variability;

pub use error::{Error, Result};
pub use rational::{Eps, Q};
