//! Cardinality-constrained quadratic optimization by hybrid pruning.
//!
//! The crate splits a problem of the form
//!
//! ```text
//! minimize  wᵀΣw − 2wᵀg + ε₀   subject to  ‖w‖₀ = d,  Σw = 1,  w ≥ 0
//! ```
//!
//! into a convex weight-assignment stage ([`convex_qp`]) and a binary
//! variable-selection stage ([`qubo_encode`]) that can be handed to an exact
//! enumerator, simulated annealing, or a simulated variational quantum circuit
//! ([`classical_opt`], [`qvsim`]). The [`pruner`] module alternates both stages,
//! shrinking the universe step by step, and [`bench`] reproduces the method
//! comparisons on index-tracking instances built by [`track_model`].
//!
//! Bitstrings are exchanged between modules with variable 0 as the most
//! significant bit of the integer basis index.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod classical_opt;
pub mod convex_qp;
pub mod error;
pub mod pruner;
pub mod qubo_encode;
pub mod qvsim;
pub mod seed;
pub mod track_model;

pub use error::{Error, Result};
