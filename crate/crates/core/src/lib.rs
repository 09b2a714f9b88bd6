//! Low-rank recovery of N-way tensors through the tensor N-tubal rank.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense column-major storage, mode-k matricization and the
//!   mode-k1k2 unfolding into three-way tensors.
//! * [`tsvd`]: the three-way t-product / t-SVD algebra, TNN and t-SVT.
//! * [`nrank`]: N-tubal rank estimation, the weighted sum of TNNs (WSTNN)
//!   and weight selection.
//! * [`solvers`]: ADMM solvers for completion and robust PCA.
//! * [`synth`]: synthetic low-rank data and the phase-transition harness.
//! * [`io`] and [`metrics`]: the binary tensor format, PSNR and RSE.

pub mod error;
pub mod io;
pub mod metrics;
pub mod nrank;
pub mod solvers;
pub mod synth;
pub mod tensor;
pub mod tsvd;

pub use error::{Error, Result};
pub use tensor::{ModePair, Tensor};
