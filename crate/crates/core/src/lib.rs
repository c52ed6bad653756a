//! Momentum-covariant quantum channels and Lindblad dynamics on a periodic box.

// comparisons are often written `!(x > 0.0)` so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod lindblad;
pub mod random;
pub mod states;
pub mod unraveling;

pub use error::{Error, Result};
pub use lattice::{BoxLattice, MomentumIndex};
pub use states::{DensityMatrix, PureState};
