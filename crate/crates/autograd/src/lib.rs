//! Dense CPU tensors with reverse-mode automatic differentiation.
//!
//! The crate is deliberately small: NCHW convolutions (stride, padding,
//! dilation, and their adjoints), broadcasting arithmetic, a handful of
//! pointwise functions, and reductions. Backward rules are built from the
//! same differentiable operations, so gradients can be differentiated again.
//!
//! ```
//! use ocogan_autograd::{backward, Tensor, Var};
//!
//! let x = Var::leaf(Tensor::<f64>::from_f64(&[3], &[1.0, 2.0, 3.0]));
//! let y = x.square().sum_all();
//! let g = backward(&y, false);
//! assert_eq!(g.get(&x).unwrap().value().data(), &[2.0, 4.0, 6.0]);
//! ```

mod conv;
mod element;
pub mod gradcheck;
pub mod nn;
mod ops;
mod tensor;
mod var;

pub use conv::ConvGeom;
pub use element::{gemm, gemm_new, DType, Element, MatLayout};
pub use nn::{Adam, AdamSlot, ParamId, ParamKind, ParamStore, Path};
pub use tensor::{broadcast_shapes, Tensor};
pub use var::{backward, backward_with, is_grad_enabled, no_grad, with_grad_mode, Backward, Gradients, Var};
