//! Dense linear algebra, parameters, optimizer, dropout, randomness and
//! gradient checking.

mod dropout;
pub mod dd;
pub mod gradcheck;
mod matrix;
mod optim;
mod param;
mod rng;

pub use dropout::{apply_dropout, check_rate, DropoutMask};
pub use gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport};
pub use matrix::{argmax, dot, log_sum_exp, sigmoid, softmax, Matrix};
pub use optim::RmsProp;
pub use param::{Gradients, ParamId, ParamStore, ParamTensor};
pub use rng::Rng;
