//! Matrix-free spectral-element solver for incompressible MHD in axially
//! periodic rectangular ducts, with a reduced-equation reference solver and
//! transient modal analysis.

pub mod cases;
pub mod error;
pub mod field;
pub mod gll;
pub mod history;
pub mod io;
pub mod krylov;
pub mod mesh;
pub mod operators;
pub mod oracle;
pub mod stepper;
pub mod study;
pub mod tensor;
pub mod transient;

pub use error::{MhdError, Result};
