//! Visual knowledge memory network for visual question answering.
//!
//! Modules, bottom-up: [`numeric`] kernels, the [`kb`] triple store,
//! knowledge [`spotting`], entry [`embedding`]s (TransE and bag-of-words),
//! the memory network [`model`], [`train`]ing and evaluation, binary
//! [`checkpoint`]s and a seeded [`synth`]etic task.

pub mod checkpoint;
pub mod embedding;
pub mod error;
pub mod kb;
pub mod model;
pub mod numeric;
pub mod spotting;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
