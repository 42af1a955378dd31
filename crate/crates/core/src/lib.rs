//! Matrix cross-entropy (MCE) between PSD relation matrices, the matrix
//! analysis it rests on, and a small RelationMatch-style semi-supervised
//! trainer that uses it as a relational consistency term.

pub mod config;
pub mod datagen;
pub mod density;
pub mod divergence;
pub mod error;
pub mod matrix;
pub mod model;
pub mod relation;
pub mod spectral;
pub mod trainer;

pub use error::{MceError, Result};
pub use matrix::{Matrix, SymMatrix};
