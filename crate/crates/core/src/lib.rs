//! Computational tools for conditionally negative definite kernels, Mazur
//! maps and proper affine isometric group actions on discretized `L_p`
//! spaces.

pub mod error;
pub mod group;
pub mod action;
pub mod cli;
pub mod construction;
pub mod embedding;
pub mod kernel;
pub mod measure;
pub mod suite;

pub use error::{Error, Result};
