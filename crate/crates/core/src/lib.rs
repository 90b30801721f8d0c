//! Finite-dimensional models of ideal (von Neumann) measurements.
//!
//! The crate builds a measurement interaction between a system `S` of
//! dimension `M` and an apparatus `O` of dimension `M + 1`, evolves states
//! and operators in both pictures, and checks whether branch ("Everett copy")
//! decompositions are unique.
//!
//! Indexing: system basis states `|S:i⟩` for `i = 1..=M` are stored at
//! zero-based position `i − 1`; apparatus states `|O:i⟩` for `i = 0..=M` are
//! stored at position `i`, with `|O:0⟩` the ready state. Branch lists are
//! zero-based, so branch `j` pairs `|S:j+1⟩` with `|O:j+1⟩`.

pub mod ambiguity;
pub mod error;
pub mod heisenberg;
pub mod measurement;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ComplexOperator, ComplexVector, Space, ToleranceProfile, C64};
