//! Reductive Lie Neurons: adjoint-equivariant layers on matrix Lie algebras.
//!
//! Features are algebra elements stored in basis coordinates. Every layer
//! commutes with the adjoint action `X ↦ g X g⁻¹`, and scalar readouts go
//! through a non-degenerate Ad-invariant bilinear form, so models built from
//! these pieces are exactly invariant up to floating-point round-off.

pub mod audit;
pub mod error;
pub mod forms;
pub mod geomaps;
pub mod layers;
pub mod liealg;
pub mod linalg;
pub mod rng;
pub mod tasks;
pub mod train;

pub mod cli;

pub use error::{RelnError, Result};
