#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod floquet;
pub mod fourier;
pub mod integrator;
pub mod model;
pub mod noise_ops;
pub mod oracle;
pub mod pss;
pub mod spectra;

pub use error::{Error, Result};
pub use num_complex::Complex64;
