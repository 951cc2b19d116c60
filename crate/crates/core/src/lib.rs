pub mod acquisition;
pub mod aloq_loop;
pub mod error;
pub mod gp;
pub mod harness;
pub mod linalg;
pub mod quadrature;
pub mod sampler;
pub mod tasks;

pub use error::{AloqError, Result};
