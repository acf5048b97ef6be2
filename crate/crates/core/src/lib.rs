//! SVD-NO: a neural operator whose kernel integral layers are parameterized
//! by a learnable truncated singular value decomposition, together with
//! classical PDE data generators and a training harness.

pub mod alloc_meter;
pub mod error;
pub mod grid;
pub mod model;
pub mod objectives;
pub mod par;
pub mod pde;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use grid::Grid;
pub use tensor::{Tape, Tensor, Var};
