//! Hand-written f64 network stack: a flat parameter store, dense layers, the
//! cosine-Gaussian kernel head, MSE loss, Adam, and finite-difference
//! gradient checking. No autograd; every backward pass is explicit and every
//! formula is covered by a central-difference oracle test.

mod adam;
mod dense;
mod gradcheck;
mod init;
mod kernel;
mod loss;
mod tensor;

pub use adam::Adam;
pub use dense::{Activation, DenseLayer};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use init::{init_dense, InitKind};
pub use kernel::{KernelCombiner, KernelInit};
pub use loss::{mse, mse_grad};
pub use tensor::{ParamId, ParamStore};
